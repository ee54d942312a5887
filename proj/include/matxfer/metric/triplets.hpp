#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "matxfer/material/library.hpp"

namespace matxfer {

/// Material ids (r, a, b): a shares r's category, b is r's strictly nearest
/// material outside the category, and D[r][a] < D[r][b].
struct MaterialTriplet {
  int r = 0, a = 0, b = 0;
  auto operator<=>(const MaterialTriplet&) const = default;
};

/// Batch positions (r, a, b) realizing a MaterialTriplet.
struct ImageTriplet {
  std::size_t r = 0, a = 0, b = 0;
  auto operator<=>(const ImageTriplet&) const = default;
};

/// Every admissible triplet, sorted. References whose nearest foreign
/// material is tied or closer than all same-category materials yield none.
std::vector<MaterialTriplet> admissible_triplets(const DistanceMatrix& d, const std::vector<Category>& categories);

/// Up to `count` distinct admissible triplets drawn uniformly, sorted.
/// Throws SamplingError when fewer than two categories are present.
std::vector<MaterialTriplet> sample_reference_triplets(const DistanceMatrix& d, const std::vector<Category>& categories,
                                                       std::size_t count, std::uint64_t seed);

/// All ordered position triples of the batch whose material labels form a
/// triplet of `am`.
std::vector<ImageTriplet> filter_batch_triplets(const std::vector<int>& batch_materials,
                                                const std::vector<MaterialTriplet>& am);

std::vector<Category> categories_of(const std::vector<Material>& library);

// Export: one "r a b" line per triplet.
std::string format_triplets(const std::vector<MaterialTriplet>& t);
std::vector<MaterialTriplet> parse_triplets(const std::string& text);

}  // namespace matxfer
