#include "matxfer/common/image.hpp"

#include <algorithm>
#include <numeric>

namespace matxfer {

std::vector<int> present_labels(const LabelImage& labels) {
  std::vector<int> out;
  for (int v : labels.data())
    if (v != 0) out.push_back(v);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<unsigned char> label_mask(const LabelImage& labels, int label) {
  std::vector<unsigned char> mask(labels.pixel_count());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = labels[i] == label ? 1 : 0;
  return mask;
}

std::size_t mask_area(const std::vector<unsigned char>& mask) {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

}  // namespace matxfer
