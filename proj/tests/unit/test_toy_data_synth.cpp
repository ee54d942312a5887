#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "matxfer/common/errors.hpp"
#include "matxfer/synth/dataset.hpp"
#include "matxfer/synth/render.hpp"

using namespace matxfer;

namespace {

Material flat(int id, Category c, double L, double a = 0, double b = 0) {
  return {id, "m" + std::to_string(id), c, ColorImage(1, 1, {L, a, b})};
}

std::vector<Material> flat_library() {
  std::vector<Material> lib;
  for (int i = 0; i < 10; ++i) lib.push_back(flat(i, category_from_index(i % 5), 10.0 + 8.0 * i, i, -i));
  return lib;
}

LabelImage strip(std::initializer_list<int> v) {
  LabelImage img(1, static_cast<int>(v.size()));
  int i = 0;
  for (int x : v) img[i++] = x;
  return img;
}

}  // namespace

TEST_CASE("generate_shapes: empty, deterministic, bounded, covering") {
  ShapeSpec spec;
  spec.count = 0;
  CHECK(generate_shapes(spec, 1).empty());

  spec.count = 10;
  spec.min_parts = 2;
  spec.max_parts = 5;
  spec.vocabulary = 8;
  const auto a = generate_shapes(spec, 3);
  CHECK(a == generate_shapes(spec, 3));
  REQUIRE(a.size() == 10);
  std::set<int> seen;
  for (const auto& s : a) {
    const auto labels = s.labels();
    CHECK(labels.size() >= 2);
    CHECK(labels.size() <= 5);
    CHECK(std::adjacent_find(labels.begin(), labels.end()) == labels.end());
    seen.insert(labels.begin(), labels.end());
    for (int v : s.views) {
      const auto img = rasterize_labels(s, v);
      for (int l : labels)
        CHECK(std::count(img.data().begin(), img.data().end(), l) >= spec.min_part_pixels);
      for (int x : img.data()) CHECK((x == 0 || std::binary_search(labels.begin(), labels.end(), x)));
    }
  }
  CHECK(seen.size() == 8);

  ShapeSpec bad = spec;
  bad.max_parts = 9;
  CHECK_THROWS_AS(generate_shapes(bad, 1), ValidationError);
  bad = spec;
  bad.count = 1;
  bad.max_parts = 3;
  CHECK_THROWS_AS(generate_shapes(bad, 1), ValidationError);  // cannot cover 8 labels
  CHECK_THROWS_AS(rasterize_labels(a[0], 99), ValidationError);
  CHECK(view_preset("chair") == 5);
  CHECK(view_preset("table") == 4);
  CHECK(view_preset("bed") == 40);
}

TEST_CASE("generate_shapes: coverage holds for tight specs") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    ShapeSpec spec;
    spec.count = 2;
    spec.min_parts = 1;
    spec.max_parts = 3;
    spec.vocabulary = 6;
    std::set<int> seen;
    for (const auto& s : generate_shapes(spec, seed))
      for (int l : s.labels()) seen.insert(l);
    CHECK(seen.size() == 6);
  }
}

TEST_CASE("derive_grouping_prior") {
  SUBCASE("material segmentation equal to semantic gives singletons") {
    const std::vector<LabelImage> sem{strip({0, 1, 1, 2, 3}), strip({1, 2, 2, 3, 0})};
    const auto p = derive_grouping_prior(sem, sem, 0.5, 3);
    CHECK(p.groups == std::vector<std::vector<int>>{{1}, {2}, {3}});
  }
  SUBCASE("support counted per observation") {
    // Labels 1 and 2 share a region in all 4 observations; 1 and 3 in only one.
    const std::vector<LabelImage> sem(4, strip({1, 1, 2, 3, 4}));
    const std::vector<LabelImage> mat{strip({7, 7, 7, 7, 9}), strip({7, 7, 7, 8, 9}), strip({5, 5, 5, 6, 9}),
                                      strip({1, 1, 1, 2, 9})};
    const auto p = derive_grouping_prior(sem, mat, 0.5, 4);
    CHECK(p.groups == std::vector<std::vector<int>>{{1, 2}, {3}, {4}});
    CHECK(p.support.at({1, 2}) == std::pair<int, int>{4, 4});
    CHECK(p.support.at({1, 3}) == std::pair<int, int>{1, 4});
    // With a low threshold the rare merge passes and closure joins 1, 2, 3.
    CHECK(derive_grouping_prior(sem, mat, 0.25, 4).groups == std::vector<std::vector<int>>{{1, 2, 3}, {4}});
  }
  SUBCASE("misaligned rasters") {
    CHECK_THROWS_AS(derive_grouping_prior({strip({1, 2})}, {strip({1})}, 0.5, 2), ValidationError);
  }
}

TEST_CASE("derive_grouping_prior is idempotent on data built from its own groups") {
  ShapeSpec spec;
  spec.count = 12;
  spec.vocabulary = 8;
  spec.max_parts = 6;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::vector<LabelImage> sem;
    for (const auto& s : generate_shapes(spec, seed))
      for (int v : s.views) sem.push_back(rasterize_labels(s, v));
    const auto mat = synth_material_segmentations(sem, default_hidden_groups(8), 0.7, seed);
    const auto p = derive_grouping_prior(sem, mat, 0.5, 8);
    const auto again = derive_grouping_prior(sem, synth_material_segmentations(sem, p.groups, 1.0, seed), 0.5, 8);
    CHECK(again.groups == p.groups);
  }
}

TEST_CASE("vote_groups: plurality, ties, singletons") {
  auto lib = flat_library();  // ids 2 and 7 are woods, 3 is metals
  GroupingPrior grouped{{{1, 2, 3}, {4}}, {}};
  const auto a = vote_groups({{1, 2}, {2, 2}, {3, 3}, {4, 9}}, grouped, lib);
  CHECK(a.parts.at(1).material == 2);
  CHECK(a.parts.at(2).material == 2);
  CHECK(a.parts.at(3).material == 2);
  CHECK(a.parts.at(3).category == Category::woods);
  CHECK(a.parts.at(4).material == 9);

  GroupingPrior pair{{{1, 2}}, {}};
  CHECK(vote_groups({{1, 7}, {2, 3}}, pair, lib).parts.at(1).material == 3);

  const std::map<int, int> raw{{1, 4}, {2, 8}, {3, 0}};
  const auto single = vote_groups(raw, singleton_prior(3), lib);
  for (const auto& [l, m] : raw) CHECK(single.parts.at(l).material == m);
  CHECK_THROWS_AS(vote_groups({{5, 1}}, singleton_prior(3), lib), ValidationError);
}

TEST_CASE("assign_materials: group consistency and empty categories") {
  SyntheticLibrarySpec ls;
  const auto lib = generate_library(ls, 2);
  ShapeSpec spec;
  spec.count = 8;
  spec.vocabulary = 8;
  spec.max_parts = 8;
  spec.min_parts = 4;
  GroupingPrior prior{default_hidden_groups(8), {}};
  for (const auto& s : generate_shapes(spec, 4)) {
    const auto a = assign_materials(s, prior, lib, default_category_prior(), 10 + s.id);
    CHECK(a == assign_materials(s, prior, lib, default_category_prior(), 10 + s.id));
    CHECK(a.covers(s.labels()));
    check_categories(a, lib);
    for (const auto& g : prior.groups) {
      std::set<int> mats;
      for (int l : g)
        if (a.parts.count(l)) mats.insert(a.parts.at(l).material);
      CHECK(mats.size() <= 1);
    }
  }

  std::vector<Material> no_woods;
  for (const auto& m : lib)
    if (m.category != Category::woods) no_woods.push_back(m);
  for (std::size_t i = 0; i < no_woods.size(); ++i) no_woods[i].id = static_cast<int>(i);
  ToyShape legs{0, 32, {{3, {{false, 0, 0, 0.5, 0.5}}}}, {0}};
  CHECK_THROWS_AS(assign_materials(legs, singleton_prior(8), no_woods, default_category_prior(), 1), SamplingError);
}

TEST_CASE("render_pair") {
  const auto lib = flat_library();
  ShapeSpec spec;
  spec.count = 6;
  const auto shapes = generate_shapes(spec, 8);
  SUBCASE("zero shading with 1x1 patches gives exact material colors") {
    for (const auto& s : shapes) {
      PartMaterialAssignment a;
      for (int l : s.labels()) a.parts[l] = {lib[l].category, l, {}};
      for (int v : s.views) {
        const auto img = render_pair(s, a, lib, v, 0.0, 3);
        CHECK(img.labels == rasterize_labels(s, v));
        for (std::size_t i = 0; i < img.labels.pixel_count(); ++i) {
          const int l = img.labels[i];
          const auto expected = l == 0 ? kBackgroundLab : lib[l].patch.pixel(0);
          CHECK(img.color.pixel(i) == expected);
        }
      }
    }
  }
  SUBCASE("part mean stays within the shading amplitude of the tiled material") {
    SyntheticLibrarySpec ls;
    const auto tex = generate_library(ls, 6);
    const double amp = 4.0;
    for (const auto& s : shapes) {
      PartMaterialAssignment a;
      for (int l : s.labels()) a.parts[l] = {tex[3 * l].category, 3 * l, {}};
      const auto img = render_pair(s, a, tex, 2, amp, 17);
      for (int l : s.labels()) {
        double rendered = 0, tiled = 0;
        int n = 0;
        for (int y = 0; y < img.labels.height(); ++y)
          for (int x = 0; x < img.labels.width(); ++x) {
            if (img.labels.at(y, x) != l) continue;
            const auto& p = tex[3 * l].patch;
            rendered += img.color.at(y, x, 0);
            tiled += p.at(y % p.height(), x % p.width(), 0);
            ++n;
            CHECK(std::abs(img.color.at(y, x, 0) - p.at(y % p.height(), x % p.width(), 0)) <= amp + 1e-12);
          }
        CHECK(std::abs(rendered - tiled) / n <= amp);
      }
    }
  }
  SUBCASE("errors") {
    PartMaterialAssignment partial;
    CHECK_THROWS_AS(render_pair(shapes[0], partial, lib, 0, 1.0, 1), ValidationError);
    PartMaterialAssignment a;
    for (int l : shapes[0].labels()) a.parts[l] = {lib[0].category, 0, {}};
    CHECK_THROWS_AS(render_pair(shapes[0], a, lib, 42, 1.0, 1), ValidationError);
  }
}

TEST_CASE("split_dataset: 10:1 at shape granularity") {
  std::vector<int> ids(11);
  for (int i = 0; i < 11; ++i) ids[i] = i;
  auto s = split_dataset(ids, 3);
  CHECK(s.train.size() == 10);
  CHECK(s.test.size() == 1);

  ids.resize(110);
  for (int i = 0; i < 110; ++i) ids[i] = i;
  s = split_dataset(ids, 3);
  CHECK(s.train.size() == 100);
  CHECK(s.test.size() == 10);
  for (std::size_t n = 11; n <= 60; ++n) {
    std::vector<int> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<int>(i);
    const auto sp = split_dataset(v, n);
    CHECK(std::abs(static_cast<double>(sp.train.size()) - 10.0 * sp.test.size()) <= 10.0 + 1e-9);
  }
  CHECK_THROWS_AS(split_dataset(std::vector<int>(10, 0), 1), ValidationError);
}

TEST_CASE("dataset: deterministic build, consistent ground truth, round trip") {
  DatasetSpec spec;
  spec.shapes.count = 12;
  spec.shapes.views = 3;
  spec.library.per_category = {2, 2, 2, 2, 2};
  const auto ds = build_dataset(spec, 21);
  const auto again = build_dataset(spec, 21);
  CHECK(ds.renders == again.renders);
  CHECK(ds.renders.size() == 12u * 2 * 3);
  CHECK(ds.train_shapes.size() == 11);
  CHECK(ds.test_shapes.size() == 1);
  for (const auto& r : ds.renders) {
    // every nonzero label maps to exactly one material
    for (int l : present_labels(r.image.labels)) CHECK(r.assignment.parts.count(l) == 1);
    check_categories(r.assignment, ds.library);
    const bool in_test = std::binary_search(ds.test_shapes.begin(), ds.test_shapes.end(), r.shape_id);
    const bool in_train = std::binary_search(ds.train_shapes.begin(), ds.train_shapes.end(), r.shape_id);
    CHECK(in_test != in_train);
  }

  const auto dir = std::filesystem::temp_directory_path() / "matxfer_test_dataset";
  std::filesystem::remove_all(dir);
  save_dataset(dir, ds);
  const auto loaded = load_dataset(dir);
  CHECK(loaded.library == ds.library);
  CHECK(loaded.shapes == ds.shapes);
  CHECK(loaded.prior == ds.prior);
  CHECK(loaded.train_shapes == ds.train_shapes);
  CHECK(loaded.test_shapes == ds.test_shapes);
  REQUIRE(loaded.renders.size() == ds.renders.size());
  for (std::size_t i = 0; i < ds.renders.size(); ++i) CHECK(loaded.renders[i] == ds.renders[i]);
  std::filesystem::remove_all(dir);
}
