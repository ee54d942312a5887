#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "matxfer/common/config.hpp"
#include "matxfer/material/assignment.hpp"
#include "matxfer/material/library.hpp"
#include "matxfer/synth/grouping.hpp"
#include "matxfer/synth/shapes.hpp"

namespace matxfer {

/// One (shape, material variant, view) render with its ground truth.
struct RenderedView {
  int shape_id = 0;
  int variant = 0;
  int view = 0;
  SegmentedImage image;
  PartMaterialAssignment assignment;

  friend bool operator==(const RenderedView&, const RenderedView&) = default;
};

struct DatasetSpec {
  SyntheticLibrarySpec library;
  ShapeSpec shapes;
  int variants = 2;                // material assignments per shape
  double shading_amplitude = 2.0;
  double merge_probability = 0.8;  // hidden-group merge rate in the material segmentations
  double min_support = 0.5;

  void validate() const;
  Config to_config() const;
  static DatasetSpec from_config(const Config& c);
};

struct ToyDataset {
  DatasetSpec spec;
  std::uint64_t seed = 0;
  std::vector<Material> library;
  DistanceMatrix distances;
  std::vector<ToyShape> shapes;
  GroupingPrior prior;
  std::vector<RenderedView> renders;  // ordered by (shape, variant, view)
  std::vector<int> train_shapes, test_shapes;

  const ToyShape& shape(int id) const;
  std::vector<const RenderedView*> renders_of(const std::vector<int>& shape_ids) const;
};

/// Pure function of (spec, seed).
ToyDataset build_dataset(const DatasetSpec& spec, std::uint64_t seed);

struct ShapeSplit {
  std::vector<int> train, test;
};

/// Shape-level split in a 10:1 ratio: round(n / 11) test shapes (at least one).
ShapeSplit split_dataset(const std::vector<int>& shape_ids, std::uint64_t seed);

// Directory layout: dataset.cfg (spec and seed), library/, distances.txt,
// prior.txt, manifest.txt ("shape view variant split color labels assignment"),
// renders/ with one Lab raster, PGM label raster and assignment file per render.
void save_dataset(const std::filesystem::path& dir, const ToyDataset& ds);
ToyDataset load_dataset(const std::filesystem::path& dir);

}  // namespace matxfer
