#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "matxfer/common/errors.hpp"
#include "matxfer/common/log.hpp"
#include "matxfer/metric/metric_stage.hpp"
#include "matxfer/synth/dataset.hpp"
#include "test_support.hpp"

using namespace matxfer;
using testing::param_model;
using testing::random_tensor;
using testing::scalar;

namespace {

// Brute force over every (r, a, b) straight from the triplet definition.
std::set<MaterialTriplet> brute_force(const DistanceMatrix& d, const std::vector<Category>& cat) {
  std::set<MaterialTriplet> out;
  const int n = static_cast<int>(d.n);
  for (int r = 0; r < n; ++r)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        if (a == r || cat[a] != cat[r] || cat[b] == cat[r]) continue;
        if (!(d(r, b) > d(r, a))) continue;
        bool nearest = true;
        for (int x = 0; x < n; ++x)
          if (x != b && cat[x] != cat[r] && !(d(r, b) < d(r, x))) nearest = false;
        if (nearest) out.insert({r, a, b});
      }
  return out;
}

DistanceMatrix hand_matrix() {
  return DistanceMatrix(4, {0, 2, 5, 7,  //
                            2, 0, 1, 6,  //
                            5, 1, 0, 3,  //
                            7, 6, 3, 0});
}

const std::vector<Category> kHandCats{Category::woods, Category::woods, Category::metals, Category::metals};

// Random metric from points on a small integer grid, so ties occur.
DistanceMatrix random_metric(std::size_t n, Rng& rng, std::vector<Category>& cats) {
  std::vector<std::array<double, 2>> pts(n);
  cats.clear();
  for (auto& p : pts) p = {static_cast<double>(rng.index(5)), static_cast<double>(rng.index(5))};
  const std::size_t ncat = 2 + rng.index(3);
  for (std::size_t i = 0; i < n; ++i) cats.push_back(category_from_index(i < ncat ? i : rng.index(ncat)));
  DistanceMatrix d(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d(i, j) = std::hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]);
  return d;
}

}  // namespace

TEST_CASE("triplet sampler: hand library") {
  const auto d = hand_matrix();
  const auto all = admissible_triplets(d, kHandCats);
  CHECK(all == std::vector<MaterialTriplet>{{0, 1, 2}, {3, 2, 1}});
  CHECK(std::set<MaterialTriplet>(all.begin(), all.end()) == brute_force(d, kHandCats));
  // Reference 1: its foreign neighbor 2 is closer than its only same-category material.
  for (const auto& t : all) CHECK(t.r != 1);
  CHECK(sample_reference_triplets(d, kHandCats, 100, 1) == all);
  CHECK(sample_reference_triplets(d, kHandCats, 1, 1).size() == 1);

  const std::vector<Category> one(4, Category::woods);
  CHECK_THROWS_AS(sample_reference_triplets(d, one, 5, 1), SamplingError);
}

TEST_CASE("triplet sampler: exact against brute force on random libraries") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Category> cats;
    const auto d = random_metric(4 + rng.index(9), rng, cats);
    const auto all = admissible_triplets(d, cats);
    CHECK(std::set<MaterialTriplet>(all.begin(), all.end()) == brute_force(d, cats));
    // b is unique per reference
    std::map<int, std::set<int>> bs;
    for (const auto& t : all) bs[t.r].insert(t.b);
    for (const auto& [r, s] : bs) CHECK(s.size() == 1);
    // samples are a deterministic subset
    const auto s = sample_reference_triplets(d, cats, 3, trial);
    CHECK(s == sample_reference_triplets(d, cats, 3, trial));
    CHECK(s.size() == std::min<std::size_t>(3, all.size()));
    for (const auto& t : s) CHECK(std::binary_search(all.begin(), all.end(), t));
  }
}

TEST_CASE("filter_batch_triplets") {
  const std::vector<MaterialTriplet> am{{0, 1, 2}, {3, 2, 1}};
  CHECK(filter_batch_triplets({}, am).empty());
  CHECK(filter_batch_triplets({2, 0, 1}, am) == std::vector<ImageTriplet>{{1, 2, 0}});
  CHECK(filter_batch_triplets({0, 1, 3}, am).empty());  // negative of both triplets missing
  // duplicates realize every combination
  CHECK(filter_batch_triplets({0, 0, 1, 2}, am).size() == 2);
  CHECK(parse_triplets(format_triplets(am)) == am);
}

TEST_CASE("embed: masking, determinism, hand-set single-layer encoder") {
  Rng rng(1);
  EncoderConfig cfg;
  cfg.input_size = 8;
  const Model params = init_encoder(cfg, rng);
  ColorImage a(12, 12);
  for (auto& v : a.data()) v = rng.uniform(0, 80);
  std::vector<unsigned char> mask(144, 0);
  for (int y = 3; y < 9; ++y)
    for (int x = 2; x < 7; ++x) mask[y * 12 + x] = 1;
  ColorImage b = a;
  for (std::size_t i = 0; i < 144; ++i)
    if (!mask[i]) b.set_pixel(i, {rng.uniform(0, 100), rng.uniform(-50, 50), rng.uniform(-50, 50)});
  const Tensor ea = embed(a, mask, params, cfg);
  CHECK(ea.size() == kEmbeddingDim);
  CHECK(ea == embed(b, mask, params, cfg));
  CHECK(ea == embed(a, mask, params, cfg));
  CHECK_THROWS_AS(embed(a, std::vector<unsigned char>(144, 0), params, cfg), ValidationError);

  // No conv blocks: masked mean of the input channels through a hand-set linear map.
  EncoderConfig flat;
  flat.input_size = 2;
  flat.channels = {};
  Model hand = init_encoder(flat, rng);
  Tensor w({kEmbeddingDim, 4}, 0.0);
  w.at(0, 0) = 1.0;  // L / 100
  w.at(1, 1) = 1.0;  // a / 128
  w.at(2, 3) = 1.0;  // mask channel
  Tensor bias({kEmbeddingDim}, 0.0);
  bias[3] = 0.5;
  hand.block("enc.fc").tensor("weight") = w;
  hand.block("enc.fc").tensor("bias") = bias;
  ColorImage img(2, 2);
  img.set_pixel(0, {40, 16, 0});
  img.set_pixel(1, {60, -32, 5});
  img.set_pixel(2, {20, 64, 9});
  img.set_pixel(3, {99, 99, 99});
  const Tensor e = embed(img, {1, 1, 1, 0}, hand, flat);
  CHECK(e[0] == doctest::Approx((0.4 + 0.6 + 0.2) / 3.0));
  CHECK(e[1] == doctest::Approx((16.0 - 32.0 + 64.0) / 128.0 / 3.0));
  CHECK(e[2] == doctest::Approx(1.0));
  CHECK(e[3] == doctest::Approx(0.5));
  for (std::size_t i = 4; i < kEmbeddingDim; ++i) CHECK(e[i] == 0.0);
}

TEST_CASE("triplet_loss and similarity_loss: hand values") {
  auto feats = [](std::vector<double> v) { return ad::constant(Tensor({3, 2}, std::move(v))); };
  const std::vector<ImageTriplet> one{{0, 1, 2}};
  // f_r = (0,0), f_a = (1,0), f_b = (0,2)
  const auto f = feats({0, 0, 1, 0, 0, 2});
  CHECK(scalar(triplet_loss(f, one, 0.5)) == 0.0);
  CHECK(scalar(triplet_loss(f, one, 3.5)) == doctest::Approx(0.5));
  // f_r = f_a with |f_r - f_b|^2 >= margin
  CHECK(scalar(triplet_loss(feats({1, 1, 1, 1, 3, 1}), one, 0.3)) == 0.0);
  const auto same = feats({0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  CHECK(scalar(triplet_loss(same, one, 0.3)) == doctest::Approx(0.3));
  CHECK(scalar(similarity_loss(same, one)) == doctest::Approx(std::log(2.0)));
  // f_r = f_a, |f_r - f_b|^2 = 3
  CHECK(scalar(similarity_loss(feats({0, 0, 0, 0, 1, std::sqrt(2.0)}), one)) == doctest::Approx(std::log(1.25)));
  double prev = 1e9;
  for (double far : {1.0, 10.0, 100.0, 1000.0}) {
    const double v = scalar(similarity_loss(feats({0, 0, 0, 0, far, 0}), one));
    CHECK(v > 0.0);
    CHECK(v < prev);
    prev = v;
  }
  CHECK(prev < 1e-5);

  log::set_level(log::Level::quiet);
  log::reset_warning_count();
  CHECK(scalar(triplet_loss(f, {}, 0.3)) == 0.0);
  CHECK(scalar(similarity_loss(f, {})) == 0.0);
  CHECK(log::warning_count() == 2);
}

TEST_CASE("metric losses: sign and monotonicity properties") {
  Rng rng(8);
  const std::vector<ImageTriplet> one{{0, 1, 2}};
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor t = random_tensor({3, 4}, rng, -2, 2);
    const auto f = ad::constant(t);
    const double tl = scalar(triplet_loss(f, one, 0.3));
    CHECK(tl >= 0.0);
    double ra = 0, rb = 0;
    for (int k = 0; k < 4; ++k) {
      ra += std::pow(t.at(0, k) - t.at(1, k), 2);
      rb += std::pow(t.at(0, k) - t.at(2, k), 2);
    }
    CHECK((tl == 0.0) == (rb >= ra + 0.3));
    const double sl = scalar(similarity_loss(f, one));
    CHECK(sl > 0.0);
    // push b away from r: similarity loss drops; push a away: it grows
    Tensor far_b = t, far_a = t;
    for (int k = 0; k < 4; ++k) {
      far_b.at(2, k) = t.at(0, k) + 1.5 * (t.at(2, k) - t.at(0, k));
      far_a.at(1, k) = t.at(0, k) + 1.5 * (t.at(1, k) - t.at(0, k));
    }
    if (rb > 1e-6) CHECK(scalar(similarity_loss(ad::constant(far_b), one)) < sl);
    if (ra > 1e-6) CHECK(scalar(similarity_loss(ad::constant(far_a), one)) > sl);
  }
}

TEST_CASE("metric losses pass gradient checks away from the hinge") {
  Rng rng(31);
  const std::vector<ImageTriplet> triples{{0, 1, 2}, {3, 1, 2}, {0, 3, 1}};
  int checked = 0;
  for (int trial = 0; trial < 60 && checked < 20; ++trial) {
    const Tensor t = random_tensor({4, 3}, rng);
    std::vector<double> hinge_args;
    for (const auto& tr : triples) {
      double ra = 0, rb = 0;
      for (int k = 0; k < 3; ++k) {
        ra += std::pow(t.at(tr.r, k) - t.at(tr.a, k), 2);
        rb += std::pow(t.at(tr.r, k) - t.at(tr.b, k), 2);
      }
      hinge_args.push_back(ra - rb + 0.3);
    }
    if (!away_from_kink(hinge_args, 0.0, 1e-3)) continue;
    ++checked;
    const Model m = param_model(t);
    const auto tri = grad_check([&](const ParamVars& v) { return triplet_loss(v("x", "v"), triples, 0.3); }, m, 1e-4, 1e-4);
    CHECK(tri.passed);
    const auto sim = grad_check([&](const ParamVars& v) { return similarity_loss(v("x", "v"), triples); }, m, 1e-4, 1e-4);
    CHECK(sim.passed);
  }
  CHECK(checked == 20);
}

TEST_CASE("train_metric_stage: lr 0, determinism, category separation") {
  DatasetSpec spec;
  spec.library.per_category = {4, 4, 4, 4, 4};
  spec.shapes.count = 22;
  spec.shapes.views = 3;
  const auto ds = build_dataset(spec, 5);
  const auto train = extract_part_samples(ds.renders_of(ds.train_shapes), 16);
  const auto test = extract_part_samples(ds.renders_of(ds.test_shapes), 16);
  REQUIRE(!test.empty());

  EncoderConfig enc;
  Rng rng(3);
  const Model init = init_encoder(enc, rng);
  OptimizerConfig opt = OptimizerConfig::metric_stage();
  opt.batch_size = 12;
  MetricTrainConfig cfg;
  cfg.seed = 9;
  cfg.steps = 3;

  OptimizerConfig frozen = opt;
  frozen.learning_rate = 0.0;
  CHECK(train_metric_stage(ds.library, ds.distances, train, enc, init, {}, frozen, cfg).encoder == init);

  const auto a = train_metric_stage(ds.library, ds.distances, train, enc, init, {}, opt, cfg);
  const auto b = train_metric_stage(ds.library, ds.distances, train, enc, init, {}, opt, cfg);
  CHECK(a.encoder == b.encoder);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.loss_trace.size() == 3);

  auto separation = [&](const Model& m) {
    const ParamVars v = ParamVars::frozen(m);
    std::vector<const PartSample*> ptrs;
    for (const auto& s : test) ptrs.push_back(&s);
    const Tensor f = encode(v, enc, batch_inputs(ptrs))->value;
    double intra = 0, inter = 0;
    int ni = 0, nx = 0;
    for (std::size_t i = 0; i < test.size(); ++i)
      for (std::size_t j = i + 1; j < test.size(); ++j) {
        double d = 0;
        for (std::size_t k = 0; k < kEmbeddingDim; ++k) d += std::pow(f.at(i, k) - f.at(j, k), 2);
        d = std::sqrt(d);
        if (test[i].category == test[j].category) intra += d, ++ni;
        else inter += d, ++nx;
      }
    REQUIRE(ni > 0);
    REQUIRE(nx > 0);
    return std::pair{intra / ni, inter / nx};
  };
  cfg.steps = 400;
  const auto trained = train_metric_stage(ds.library, ds.distances, train, enc, init, {}, opt, cfg);
  const auto [intra, inter] = separation(trained.encoder);
  MESSAGE("held-out intra " << intra << " inter " << inter);
  CHECK(intra < inter);
}
