#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "matxfer/common/image.hpp"

namespace matxfer {

enum class Category { leathers = 0, fabrics, woods, metals, plastics };
inline constexpr std::size_t kCategoryCount = 5;

std::string_view to_string(Category c);
Category parse_category(std::string_view name);
Category category_from_index(std::size_t i);
inline std::size_t index_of(Category c) { return static_cast<std::size_t>(c); }

/// One library entry. The patch is a CIELAB raster.
struct Material {
  int id = 0;
  std::string label;
  Category category = Category::leathers;
  ColorImage patch;

  friend bool operator==(const Material&, const Material&) = default;
};

/// Checks ids are dense 0..n-1 in order and patches share one size.
void validate_materials(const std::vector<Material>& materials);

// sRGB (D65, channels in [0,1]) to CIELAB and back.
std::array<double, 3> srgb_to_lab(const std::array<double, 3>& rgb);
std::array<double, 3> lab_to_srgb(const std::array<double, 3>& lab);  // clamped to [0,1]
ColorImage rgb_to_lab(const ColorImage& rgb);
ColorImage lab_to_rgb(const ColorImage& lab);

/// Root-mean-square per-pixel Lab difference: ||a - b||_2 / sqrt(pixels).
double lab_distance(const ColorImage& a, const ColorImage& b);

/// Dense symmetric n x n table of lab_distance between material patches.
struct DistanceMatrix {
  std::size_t n = 0;
  std::vector<double> values;  // row-major

  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t size) : n(size), values(size * size, 0.0) {}
  DistanceMatrix(std::size_t size, std::vector<double> v);

  double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * n + j]; }
  std::vector<double> column(std::size_t j) const;

  friend bool operator==(const DistanceMatrix&, const DistanceMatrix&) = default;
};

DistanceMatrix build_distance_matrix(const std::vector<Material>& materials);

/// Zero diagonal, symmetric, nonnegative and finite. Throws ValidationError otherwise.
void validate_distance_matrix(const DistanceMatrix& d);

struct DiversityReport {
  // Mean distance over unordered same-category pairs; empty when the
  // category has fewer than two members.
  std::array<std::optional<double>, kCategoryCount> intra;
  // Mean over unordered cross-category pairs; empty with a single category.
  std::optional<double> inter;
};

DiversityReport diversity_stats(const std::vector<Material>& materials, const DistanceMatrix& d);

/// Procedural library: each material is a base Lab color inside its
/// category's region plus a seeded texture (stripes + per-pixel noise).
struct SyntheticLibrarySpec {
  std::array<int, kCategoryCount> per_category{6, 6, 6, 6, 6};
  int patch_size = 8;
  double spread = 1.0;            // scales each category's color region; larger overlaps neighbors
  double texture_amplitude = 3.0; // L amplitude of stripes and noise
  double min_distance = 4.0;      // curation threshold on D between any two kept materials
  int max_attempts = 2000;

  void validate() const;
};

std::vector<Material> generate_library(const SyntheticLibrarySpec& spec, std::uint64_t seed);

/// Greedy curation: walks materials in id order and drops any material
/// closer than `threshold` to an already kept one. Ids are renumbered.
std::vector<Material> curate(const std::vector<Material>& materials, double threshold);

std::vector<int> members_of(const std::vector<Material>& materials, Category c);

// Library directory: manifest.txt ("id label category patch-path" per line)
// plus one Lab raster per material under patches/.
void save_library(const std::filesystem::path& dir, const std::vector<Material>& materials);
std::vector<Material> load_library(const std::filesystem::path& dir);

// Distance export: "n" on the first line, then n rows, 9 significant digits.
std::string format_distance_matrix(const DistanceMatrix& d);
DistanceMatrix parse_distance_matrix(const std::string& text);

}  // namespace matxfer
