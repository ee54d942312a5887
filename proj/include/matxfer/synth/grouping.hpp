#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "matxfer/common/image.hpp"
#include "matxfer/learning/rng.hpp"
#include "matxfer/material/assignment.hpp"
#include "matxfer/material/library.hpp"
#include "matxfer/synth/shapes.hpp"

namespace matxfer {

/// Partition of the part vocabulary into groups that share one material.
struct GroupingPrior {
  std::vector<std::vector<int>> groups;  // each sorted, ordered by smallest member
  // (a, b) with a < b -> (observations where both shared a material region, observations with both present)
  std::map<std::pair<int, int>, std::pair<int, int>> support;

  int group_of(int label) const;  // index into groups; -1 if absent
  friend bool operator==(const GroupingPrior&, const GroupingPrior&) = default;
};

GroupingPrior singleton_prior(int vocabulary);

/// Labels a and b are merged when, among observations containing both,
/// the fraction in which their dominant material regions coincide is at
/// least `min_support`; merges are closed transitively. `material_segs`
/// hold material-region ids per pixel (any integers).
GroupingPrior derive_grouping_prior(const std::vector<LabelImage>& semantic_segs,
                                    const std::vector<LabelImage>& material_segs, double min_support, int vocabulary);

/// Material-region rasters for training the prior: labels in the same
/// hidden group share a region with probability `merge_probability` per
/// observation, otherwise every part gets its own region.
std::vector<LabelImage> synth_material_segmentations(const std::vector<LabelImage>& semantic_segs,
                                                     const std::vector<std::vector<int>>& hidden_groups,
                                                     double merge_probability, std::uint64_t seed);

/// Hidden material groups of the chair-like vocabulary, restricted to `vocabulary`.
std::vector<std::vector<int>> default_hidden_groups(int vocabulary);

/// Per-label category weights (index 0 unused).
using CategoryPrior = std::array<std::array<double, kCategoryCount>, kMaxVocabulary + 1>;
CategoryPrior default_category_prior();

/// Per-part raw draw: category from the prior, then a uniform material in it.
std::map<int, int> sample_part_materials(const std::vector<int>& labels, const std::vector<Material>& library,
                                         const CategoryPrior& prior, Rng& rng);

/// Within each group the plurality material wins for every member (ties go
/// to the lowest material id).
PartMaterialAssignment vote_groups(const std::map<int, int>& raw, const GroupingPrior& prior,
                                   const std::vector<Material>& library);

PartMaterialAssignment assign_materials(const ToyShape& shape, const GroupingPrior& prior,
                                        const std::vector<Material>& library, const CategoryPrior& category_prior,
                                        std::uint64_t seed);

}  // namespace matxfer
