#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "matxfer/common/errors.hpp"

namespace matxfer {

/// Interleaved three-channel raster, row-major, channel fastest.
/// Used for both sRGB in [0,1] and CIELAB values.
class ColorImage {
 public:
  ColorImage() = default;
  ColorImage(int height, int width, std::array<double, 3> fill = {0.0, 0.0, 0.0})
      : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width * 3) {
    require(height >= 0 && width >= 0, "image dimensions must be nonnegative");
    for (std::size_t i = 0; i < pixel_count(); ++i)
      for (int c = 0; c < 3; ++c) data_[i * 3 + c] = fill[c];
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const { return pixel_count() == 0; }

  double& at(int y, int x, int c) { return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }
  double at(int y, int x, int c) const { return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }

  std::array<double, 3> pixel(std::size_t i) const { return {data_[i * 3], data_[i * 3 + 1], data_[i * 3 + 2]}; }
  void set_pixel(std::size_t i, const std::array<double, 3>& v) {
    data_[i * 3] = v[0];
    data_[i * 3 + 1] = v[1];
    data_[i * 3 + 2] = v[2];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const ColorImage&, const ColorImage&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Integer label raster. For segmentations 0 is background.
class LabelImage {
 public:
  LabelImage() = default;
  LabelImage(int height, int width, int fill = 0)
      : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width, fill) {
    require(height >= 0 && width >= 0, "image dimensions must be nonnegative");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixel_count() const { return data_.size(); }

  int& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  int at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  int& operator[](std::size_t i) { return data_[i]; }
  int operator[](std::size_t i) const { return data_[i]; }

  std::vector<int>& data() { return data_; }
  const std::vector<int>& data() const { return data_; }

  friend bool operator==(const LabelImage&, const LabelImage&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<int> data_;
};

template <typename A, typename B>
bool same_size(const A& a, const B& b) {
  return a.height() == b.height() && a.width() == b.width();
}

/// A (color, part-label) pair on the same pixel grid.
struct SegmentedImage {
  ColorImage color;  // CIELAB
  LabelImage labels;

  friend bool operator==(const SegmentedImage&, const SegmentedImage&) = default;
};

/// Sorted distinct nonzero labels of a raster.
std::vector<int> present_labels(const LabelImage& labels);

/// Boolean mask (0/1) of pixels equal to `label`.
std::vector<unsigned char> label_mask(const LabelImage& labels, int label);

std::size_t mask_area(const std::vector<unsigned char>& mask);

}  // namespace matxfer
