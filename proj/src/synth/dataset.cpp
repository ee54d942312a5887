#include "matxfer/synth/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "matxfer/common/errors.hpp"
#include "matxfer/common/raster_io.hpp"
#include "matxfer/learning/rng.hpp"
#include "matxfer/synth/render.hpp"

namespace matxfer {
namespace {

// Seed tags for the independent generation streams.
enum : std::uint64_t { kLibraryTag = 1, kShapesTag = 2, kGroupingTag = 3, kSplitTag = 4, kAssignTag = 100 };

std::string join_counts(const std::array<int, kCategoryCount>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::array<int, kCategoryCount> parse_counts(const std::string& s) {
  std::array<int, kCategoryCount> out{};
  std::istringstream in(s);
  std::string item;
  std::size_t i = 0;
  while (std::getline(in, item, ',')) {
    require(i < kCategoryCount, "library.per_category needs exactly 5 counts");
    out[i++] = std::stoi(item);
  }
  require(i == kCategoryCount, "library.per_category needs exactly 5 counts");
  return out;
}

std::string render_stem(const RenderedView& r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "renders/s%04d_k%02d_v%02d", r.shape_id, r.variant, r.view);
  return buf;
}

}  // namespace

void DatasetSpec::validate() const {
  library.validate();
  shapes.validate();
  require(variants >= 1, "variants must be >= 1");
  require(shading_amplitude >= 0.0, "shading_amplitude must be >= 0");
  require(merge_probability >= 0.0 && merge_probability <= 1.0, "merge_probability must be in [0,1]");
  require(min_support >= 0.0 && min_support <= 1.0, "min_support must be in [0,1]");
}

Config DatasetSpec::to_config() const {
  Config c;
  c.set("library", "per_category", join_counts(library.per_category));
  c.set("library", "patch_size", library.patch_size);
  c.set("library", "spread", library.spread);
  c.set("library", "texture_amplitude", library.texture_amplitude);
  c.set("library", "min_distance", library.min_distance);
  c.set("shapes", "count", shapes.count);
  c.set("shapes", "min_parts", shapes.min_parts);
  c.set("shapes", "max_parts", shapes.max_parts);
  c.set("shapes", "vocabulary", shapes.vocabulary);
  c.set("shapes", "views", shapes.views);
  c.set("shapes", "resolution", shapes.resolution);
  c.set("shapes", "jitter", shapes.jitter);
  c.set("shapes", "min_part_pixels", shapes.min_part_pixels);
  c.set("dataset", "variants", variants);
  c.set("dataset", "shading_amplitude", shading_amplitude);
  c.set("dataset", "merge_probability", merge_probability);
  c.set("dataset", "min_support", min_support);
  return c;
}

DatasetSpec DatasetSpec::from_config(const Config& c) {
  DatasetSpec s;
  s.library.per_category = parse_counts(c.get_string("library", "per_category", join_counts(s.library.per_category)));
  s.library.patch_size = c.get_int("library", "patch_size", s.library.patch_size);
  s.library.spread = c.get_double("library", "spread", s.library.spread);
  s.library.texture_amplitude = c.get_double("library", "texture_amplitude", s.library.texture_amplitude);
  s.library.min_distance = c.get_double("library", "min_distance", s.library.min_distance);
  s.shapes.count = c.get_int("shapes", "count", s.shapes.count);
  s.shapes.min_parts = c.get_int("shapes", "min_parts", s.shapes.min_parts);
  s.shapes.max_parts = c.get_int("shapes", "max_parts", s.shapes.max_parts);
  s.shapes.vocabulary = c.get_int("shapes", "vocabulary", s.shapes.vocabulary);
  s.shapes.views = c.get_int("shapes", "views", s.shapes.views);
  s.shapes.resolution = c.get_int("shapes", "resolution", s.shapes.resolution);
  s.shapes.jitter = c.get_double("shapes", "jitter", s.shapes.jitter);
  s.shapes.min_part_pixels = c.get_int("shapes", "min_part_pixels", s.shapes.min_part_pixels);
  s.variants = c.get_int("dataset", "variants", s.variants);
  s.shading_amplitude = c.get_double("dataset", "shading_amplitude", s.shading_amplitude);
  s.merge_probability = c.get_double("dataset", "merge_probability", s.merge_probability);
  s.min_support = c.get_double("dataset", "min_support", s.min_support);
  s.validate();
  return s;
}

const ToyShape& ToyDataset::shape(int id) const {
  require(id >= 0 && id < static_cast<int>(shapes.size()), "unknown shape id " + std::to_string(id));
  return shapes[id];
}

std::vector<const RenderedView*> ToyDataset::renders_of(const std::vector<int>& shape_ids) const {
  std::vector<const RenderedView*> out;
  for (const auto& r : renders)
    if (std::find(shape_ids.begin(), shape_ids.end(), r.shape_id) != shape_ids.end()) out.push_back(&r);
  return out;
}

ToyDataset build_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  spec.validate();
  ToyDataset ds;
  ds.spec = spec;
  ds.seed = seed;
  ds.library = generate_library(spec.library, derive_seed(seed, kLibraryTag));
  ds.distances = build_distance_matrix(ds.library);
  ds.shapes = generate_shapes(spec.shapes, derive_seed(seed, kShapesTag));

  std::vector<LabelImage> semantic;
  for (const auto& s : ds.shapes)
    for (int v : s.views) semantic.push_back(rasterize_labels(s, v));
  const auto material_segs = synth_material_segmentations(
      semantic, default_hidden_groups(spec.shapes.vocabulary), spec.merge_probability, derive_seed(seed, kGroupingTag));
  ds.prior = derive_grouping_prior(semantic, material_segs, spec.min_support, spec.shapes.vocabulary);

  const auto category_prior = default_category_prior();
  for (const auto& s : ds.shapes)
    for (int k = 0; k < spec.variants; ++k) {
      const std::uint64_t vs = derive_seed(seed, kAssignTag + static_cast<std::uint64_t>(s.id) * 64 + k);
      const auto assignment = assign_materials(s, ds.prior, ds.library, category_prior, vs);
      for (int v : s.views)
        ds.renders.push_back({s.id, k, v,
                              render_pair(s, assignment, ds.library, v, spec.shading_amplitude, derive_seed(vs, v + 1)),
                              assignment});
    }

  if (ds.shapes.size() >= 11) {
    std::vector<int> ids;
    for (const auto& s : ds.shapes) ids.push_back(s.id);
    const auto split = split_dataset(ids, derive_seed(seed, kSplitTag));
    ds.train_shapes = split.train;
    ds.test_shapes = split.test;
  } else {
    for (const auto& s : ds.shapes) ds.train_shapes.push_back(s.id);
  }
  return ds;
}

ShapeSplit split_dataset(const std::vector<int>& shape_ids, std::uint64_t seed) {
  require(shape_ids.size() >= 11, "split needs at least 11 shapes, got " + std::to_string(shape_ids.size()));
  std::vector<int> ids = shape_ids;
  std::sort(ids.begin(), ids.end());
  require(std::adjacent_find(ids.begin(), ids.end()) == ids.end(), "split: duplicate shape ids");
  Rng rng(seed);
  rng.shuffle(ids);
  const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(ids.size() / 11.0)));
  ShapeSplit s;
  s.test.assign(ids.begin(), ids.begin() + static_cast<long>(n_test));
  s.train.assign(ids.begin() + static_cast<long>(n_test), ids.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

void save_dataset(const std::filesystem::path& dir, const ToyDataset& ds) {
  Config c = ds.spec.to_config();
  c.set("dataset", "seed", std::to_string(ds.seed));
  io::write_text(dir / "dataset.cfg", c.format());
  save_library(dir / "library", ds.library);
  io::write_text(dir / "distances.txt", format_distance_matrix(ds.distances));

  std::string prior;
  for (const auto& g : ds.prior.groups) {
    prior += "group";
    for (int l : g) prior += " " + std::to_string(l);
    prior += "\n";
  }
  for (const auto& [pair, s] : ds.prior.support)
    prior += "support " + std::to_string(pair.first) + " " + std::to_string(pair.second) + " " +
             std::to_string(s.first) + " " + std::to_string(s.second) + "\n";
  io::write_text(dir / "prior.txt", prior);

  std::string manifest;
  for (const auto& r : ds.renders) {
    const std::string stem = render_stem(r);
    const bool test = std::binary_search(ds.test_shapes.begin(), ds.test_shapes.end(), r.shape_id);
    io::write_color(dir / (stem + ".lab"), r.image.color);
    io::write_labels(dir / (stem + ".pgm"), r.image.labels);
    save_assignment(dir / (stem + ".asg"), r.assignment);
    manifest += std::to_string(r.shape_id) + " " + std::to_string(r.view) + " " + std::to_string(r.variant) + " " +
                (test ? "test" : "train") + " " + stem + ".lab " + stem + ".pgm " + stem + ".asg\n";
  }
  io::write_text(dir / "manifest.txt", manifest);
}

ToyDataset load_dataset(const std::filesystem::path& dir) {
  require(std::filesystem::exists(dir / "dataset.cfg"), "not a dataset directory: " + dir.string());
  const Config c = Config::load(dir / "dataset.cfg");
  ToyDataset ds;
  ds.spec = DatasetSpec::from_config(c);
  ds.seed = std::stoull(c.get_string("dataset", "seed", "0"));
  ds.library = load_library(dir / "library");
  // Shapes are parametric; regenerate them from the recorded spec and seed.
  ds.shapes = generate_shapes(ds.spec.shapes, derive_seed(ds.seed, kShapesTag));
  ds.distances = parse_distance_matrix(io::read_text(dir / "distances.txt"));
  require(ds.distances.n == ds.library.size(), "distance matrix does not match the library");

  std::istringstream prior(io::read_text(dir / "prior.txt"));
  std::string line;
  while (std::getline(prior, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "group") {
      std::vector<int> g;
      for (int l; ls >> l;) g.push_back(l);
      ds.prior.groups.push_back(g);
    } else if (tag == "support") {
      int a, b, k, n;
      ls >> a >> b >> k >> n;
      ds.prior.support[{a, b}] = {k, n};
    }
  }

  std::istringstream manifest(io::read_text(dir / "manifest.txt"));
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    RenderedView r;
    std::string split, color, labels, assignment;
    if (!(ls >> r.shape_id >> r.view >> r.variant >> split >> color >> labels >> assignment))
      throw ValidationError("malformed dataset manifest line: " + line);
    r.image.color = io::read_color(dir / color);
    r.image.labels = io::read_labels(dir / labels);
    r.assignment = load_assignment(dir / assignment, ds.library);
    auto& bucket = split == "test" ? ds.test_shapes : ds.train_shapes;
    if (bucket.empty() || bucket.back() != r.shape_id) bucket.push_back(r.shape_id);
    ds.renders.push_back(std::move(r));
  }
  for (auto* v : {&ds.train_shapes, &ds.test_shapes}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  return ds;
}

}  // namespace matxfer
