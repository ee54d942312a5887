#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "matxfer/common/image.hpp"

namespace matxfer {

/// Largest part vocabulary the chair-like templates provide.
inline constexpr int kMaxVocabulary = 8;

/// Name of a semantic label in the shared vocabulary (1-based; 0 is background).
std::string_view part_name(int label);

/// Axis-aligned box or ellipse in canonical shape coordinates ([-1,1]^2, y down).
struct Primitive {
  bool ellipse = false;
  double cx = 0, cy = 0, hw = 0, hh = 0;

  friend bool operator==(const Primitive&, const Primitive&) = default;
};

struct ShapePart {
  int label = 1;
  std::vector<Primitive> primitives;

  friend bool operator==(const ShapePart&, const ShapePart&) = default;
};

/// Parametric 2D stand-in for a segmented 3D shape. Parts are stored in
/// paint order: later parts cover earlier ones, which keeps masks disjoint.
struct ToyShape {
  int id = 0;
  int resolution = 32;
  std::vector<ShapePart> parts;
  std::vector<int> views;

  std::vector<int> labels() const;  // sorted
  bool has_view(int view) const;
  friend bool operator==(const ToyShape&, const ToyShape&) = default;
};

struct ShapeSpec {
  int count = 16;
  int min_parts = 2;
  int max_parts = 5;
  int vocabulary = 6;
  int views = 5;
  int resolution = 32;
  double jitter = 0.08;       // relative perturbation of template boxes
  int min_part_pixels = 6;    // every part must be at least this visible in every view
  int max_attempts = 200;

  void validate() const;
};

/// View-count presets for the three furniture classes (chair, table, bed).
int view_preset(std::string_view furniture);

std::vector<ToyShape> generate_shapes(const ShapeSpec& spec, std::uint64_t seed);

/// Part-label raster of `shape` seen from `view`; 0 outside all parts.
LabelImage rasterize_labels(const ToyShape& shape, int view);

}  // namespace matxfer
