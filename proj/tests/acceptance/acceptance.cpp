// Acceptance run: one PASS/FAIL line per criterion, then one line for the
// long translator training example. Criteria can be selected by number
// ("acceptance 1 4 9"); the default runs all of them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "matxfer/common/errors.hpp"
#include "matxfer/common/log.hpp"
#include "matxfer/common/raster_io.hpp"
#include "matxfer/eval/pipeline.hpp"
#include "matxfer/learning/grad_check.hpp"
#include "matxfer/learning/layers.hpp"
#include "matxfer/metric/metric_stage.hpp"
#include "matxfer/metric/triplets.hpp"
#include "matxfer/pose/pose.hpp"
#include "matxfer/translation/correspondence.hpp"

using namespace matxfer;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

Model param_model(Tensor t, const std::string& block) {
  Model m;
  ParamBlock b(block, true);
  b.add("v", std::move(t));
  m.add(std::move(b));
  return m;
}

std::vector<double> differences(const ad::Var& a, const ad::Var& b) {
  std::vector<double> out;
  for (std::size_t i = 0; i < a->value.size(); ++i) out.push_back(a->value[i] - b->value[i]);
  return out;
}

// -- 1. gradient suite --------------------------------------------------------

constexpr double kGradTol = 1e-3;
constexpr int kGradInputs = 20;

struct GradCase {
  std::string name;
  // Draws one input; returns the loss and model, or nullopt when the draw sits on a kink.
  std::function<std::optional<std::pair<LossFn, Model>>(Rng&)> draw;
};

const DistanceMatrix& hand_d() {
  static const DistanceMatrix d(4, {0, 4, 9, 7, 4, 0, 6, 2, 9, 6, 0, 3, 7, 2, 3, 0});
  return d;
}

std::vector<ad::Var> shallow(const ad::Var& x) { return {x, ad::avg_pool2(ad::tanh(x))}; }

// Replays the shared-domain encoder: ReLU inputs must stay off zero and the
// embedding rows off the origin of the normalization.
bool encoder_kink_free(const ParamVars& p, const std::string& pre, const Tensor& input) {
  const ad::Var c1 = apply_conv(p, pre + "c1", ad::constant(input));
  const ad::Var c2 = apply_conv(p, pre + "c2", ad::avg_pool2(ad::relu(c1)));
  const ad::Var c3 = apply_conv(p, pre + "c3", ad::relu(c2));
  if (!away_from_kink(differences(c1, ad::constant(Tensor(c1->value.shape()))), 0.0, 1e-4)) return false;
  if (!away_from_kink(differences(c2, ad::constant(Tensor(c2->value.shape()))), 0.0, 1e-4)) return false;
  const Tensor rows = ad::to_positions(c3)->value;
  for (std::size_t i = 0; i < rows.dim(0); ++i) {
    double norm = 0.0;
    for (std::size_t k = 0; k < rows.dim(1); ++k) norm += rows.at(i, k) * rows.at(i, k);
    if (std::sqrt(norm) < 1e-2) return false;
  }
  return true;
}

std::vector<GradCase> grad_cases() {
  std::vector<GradCase> cases;
  const std::vector<ImageTriplet> triples{{0, 1, 2}, {3, 1, 2}, {0, 3, 1}};

  cases.push_back({"triplet", [=](Rng& rng) -> std::optional<std::pair<LossFn, Model>> {
                     const Tensor t = random_tensor({4, 3}, rng);
                     std::vector<double> args;
                     for (const auto& tr : triples) {
                       double ra = 0, rb = 0;
                       for (std::size_t k = 0; k < 3; ++k) {
                         ra += std::pow(t.at(tr.r, k) - t.at(tr.a, k), 2);
                         rb += std::pow(t.at(tr.r, k) - t.at(tr.b, k), 2);
                       }
                       args.push_back(ra - rb + 0.3);
                     }
                     if (!away_from_kink(args, 0.0, 1e-3)) return std::nullopt;
                     return std::pair{LossFn([=](const ParamVars& v) { return triplet_loss(v("x", "v"), triples, 0.3); }),
                                      param_model(t, "x")};
                   }});
  cases.push_back({"similarity", [=](Rng& rng) -> std::optional<std::pair<LossFn, Model>> {
                     return std::pair{LossFn([=](const ParamVars& v) { return similarity_loss(v("x", "v"), triples); }),
                                      param_model(random_tensor({4, 3}, rng), "x")};
                   }});
  cases.push_back({"cross-entropy", [](Rng& rng) -> std::optional<std::pair<LossFn, Model>> {
                     const std::vector<std::size_t> truth{rng.index(5), rng.index(5), rng.index(5)};
                     return std::pair{LossFn([=](const ParamVars& v) {
                                        return cross_entropy(ad::softmax_rows(v("x", "v")), truth);
                                      }),
                                      param_model(random_tensor({3, 5}, rng, -2, 2), "x")};
                   }});
  cases.push_back({"distance", [](Rng& rng) -> std::optional<std::pair<LossFn, Model>> {
                     const std::vector<std::size_t> gt{rng.index(4), rng.index(4), rng.index(4)};
                     return std::pair{LossFn([=](const ParamVars& v) {
                                        return distance_loss(ad::softmax_rows(v("x", "v")), gt, hand_d());
                                      }),
                                      param_model(random_tensor({3, 4}, rng, -2, 2), "x")};
                   }});
  cases.push_back({"contextual", [](Rng& rng) -> std::optional<std::pair<LossFn, Model>> {
                     const Tensor a = random_tensor({6, 5}, rng), b = random_tensor({6, 5}, rng);
                     // The row max must be unique: the top two affinities differ by a margin.
                     for (std::size_t i = 0; i < 6; ++i) {
                       std::vector<double> cos;
                       for (std::size_t j = 0; j < 6; ++j) {
                         double ab = 0, aa = 0, bb = 0;
                         for (std::size_t k = 0; k < 5; ++k) {
                           ab += a.at(i, k) * b.at(j, k);
                           aa += a.at(i, k) * a.at(i, k);
                           bb += b.at(j, k) * b.at(j, k);
                         }
                         cos.push_back(ab / std::sqrt(aa * bb));
                       }
                       std::sort(cos.rbegin(), cos.rend());
                       if (cos[0] - cos[1] < 1e-3) return std::nullopt;
                     }
                     return std::pair{LossFn([=](const ParamVars& v) {
                                        return contextual_loss({v("x", "v")}, {ad::constant(b)}, 0.5);
                                      }),
                                      param_model(a, "x")};
                   }});
  cases.push_back({"perceptual", [](Rng& rng) -> std::optional<std::pair<LossFn, Model>> {
                     const Tensor x = random_tensor({1, 3, 4, 4}, rng), other = random_tensor({1, 3, 4, 4}, rng);
                     const auto fx = shallow(ad::constant(x)), fo = shallow(ad::constant(other));
                     if (!away_from_kink(differences(fx.back(), fo.back()), 0.0, 1e-4)) return std::nullopt;
                     return std::pair{LossFn([=](const ParamVars& v) {
                                        return perceptual_loss(shallow(v("x", "v")), shallow(ad::constant(other)));
                                      }),
                                      param_model(x, "x")};
                   }});
  cases.push_back({"feature-matching", [](Rng& rng) -> std::optional<std::pair<LossFn, Model>> {
                     const Tensor x = random_tensor({1, 3, 4, 4}, rng), other = random_tensor({1, 3, 4, 4}, rng);
                     const auto fx = shallow(ad::constant(x)), fo = shallow(ad::constant(other));
                     for (std::size_t l = 0; l < fx.size(); ++l)
                       if (!away_from_kink(differences(fx[l], fo[l]), 0.0, 1e-4)) return std::nullopt;
                     return std::pair{LossFn([=](const ParamVars& v) {
                                        return feature_matching_loss(shallow(v("x", "v")), shallow(ad::constant(other)));
                                      }),
                                      param_model(x, "x")};
                   }});
  cases.push_back({"hinge-adversarial", [](Rng& rng) -> std::optional<std::pair<LossFn, Model>> {
                     const Tensor real = random_tensor({1, 1, 3, 3}, rng, -2, 2);
                     const Tensor fake = random_tensor({1, 1, 3, 3}, rng, -2, 2);
                     std::vector<double> args;
                     for (double v : real.values()) args.push_back(1.0 - v);
                     for (double v : fake.values()) args.push_back(1.0 + v);
                     if (!away_from_kink(args, 0.0, 1e-3)) return std::nullopt;
                     Model m = param_model(real, "real");
                     m.merge(param_model(fake, "fake"));
                     return std::pair{LossFn([](const ParamVars& v) {
                                        const auto l = adversarial_losses(v("real", "v"), v("fake", "v"));
                                        return ad::add(l.d_loss, l.g_loss);
                                      }),
                                      m};
                   }});
  cases.push_back({"nll-segmentation", [](Rng& rng) -> std::optional<std::pair<LossFn, Model>> {
                     LabelImage truth(2, 3);
                     for (std::size_t i = 0; i < 6; ++i) truth[i] = static_cast<int>(rng.index(5));
                     return std::pair{LossFn([=](const ParamVars& v) {
                                        return label_nll(ad::softmax_rows(v("x", "v")), truth);
                                      }),
                                      param_model(random_tensor({6, 5}, rng, -2, 2), "x")};
                   }});
  cases.push_back({"align", [](Rng& rng) -> std::optional<std::pair<LossFn, Model>> {
                     // Through the real shared-domain encoders of a miniature translator.
                     TranslatorConfig tc;
                     tc.resolution = 8;
                     tc.label_count = 3;
                     tc.embed_channels = 3;
                     tc.hidden_channels = 2;
                     tc.disc_channels = 2;
                     tc.coordinates = false;  // lets the kink screen below replay the encoder layers
                     Rng init(rng.index(1u << 30));
                     const Model full = init_translator(tc, init);
                     Model m = full.subset("tr.seg.");
                     m.merge(full.subset("tr.col."));
                     LabelImage labels(8, 8);
                     for (std::size_t i = 0; i < 64; ++i) labels[i] = static_cast<int>(rng.index(3));
                     ColorImage color(8, 8);
                     for (std::size_t i = 0; i < 64; ++i)
                       color.set_pixel(i, {rng.uniform(20, 90), rng.uniform(-40, 40), rng.uniform(-40, 40)});
                     const Tensor seg = one_hot_labels(labels, 3), col = color_tensor(color);
                     const auto loss = [=](const ParamVars& v) {
                       return l1_loss(embed_shared(v, tc, ad::constant(seg), Domain::seg),
                                      embed_shared(v, tc, ad::constant(col), Domain::color));
                     };
                     const ParamVars frozen = ParamVars::frozen(m);
                     if (!away_from_kink(differences(embed_shared(frozen, tc, ad::constant(seg), Domain::seg),
                                                     embed_shared(frozen, tc, ad::constant(col), Domain::color)),
                                         0.0, 1e-4) ||
                         !encoder_kink_free(frozen, "tr.seg.", seg) || !encoder_kink_free(frozen, "tr.col.", col))
                       return std::nullopt;
                     return std::pair{LossFn(loss), m};
                   }});
  cases.push_back({"cycle", [](Rng& rng) -> std::optional<std::pair<LossFn, Model>> {
                     const Tensor emb = random_tensor({6, 5}, rng), other = random_tensor({6, 5}, rng);
                     const Tensor src = random_tensor({6, 2}, rng, -3, 3);
                     const auto loss = [=](const ParamVars& v) {
                       const auto corr = correspondence(v("x", "v"), ad::constant(other), 0.5);
                       const auto back = correspondence(ad::constant(other), v("x", "v"), 0.5);
                       return l1_loss(warp(warp(ad::constant(src), corr), back), ad::constant(src));
                     };
                     const auto corr = correspondence(ad::constant(emb), ad::constant(other), 0.5);
                     const auto back = correspondence(ad::constant(other), ad::constant(emb), 0.5);
                     if (!away_from_kink(differences(warp(warp(ad::constant(src), corr), back), ad::constant(src)), 0.0,
                                         1e-4))
                       return std::nullopt;
                     return std::pair{LossFn(loss), param_model(emb, "x")};
                   }});
  cases.push_back({"camera", [](Rng& rng) -> std::optional<std::pair<LossFn, Model>> {
                     const Tensor w = random_tensor({3}, rng, -2, 2);
                     const double theta = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
                     if (theta > 3.0 || theta < 1e-3) return std::nullopt;
                     Model m = param_model(w, "rot");
                     m.merge(param_model(random_tensor({3}, rng), "tr"));
                     const PointSet pts{random_tensor({6, 3}, rng), random_tensor({6, 3}, rng)};
                     return std::pair{LossFn([=](const ParamVars& v) {
                                        return camera_loss(pts, axis_angle_rotation(v("rot", "v")), v("tr", "v"));
                                      }),
                                      m};
                   }});
  cases.push_back({"consistency", [](Rng& rng) -> std::optional<std::pair<LossFn, Model>> {
                     Model m = param_model(random_tensor({2, 4}, rng, -2, 2), "o");
                     m.merge(param_model(random_tensor({3, 4}, rng, -2, 2), "p"));
                     const double w = rng.uniform(0.1, 0.9);
                     const std::vector<MatchedPart> mm{{1, 0, {0, 2}, {w, 1.0 - w}}, {2, 1, {1}, {1.0}}};
                     return std::pair{LossFn([=](const ParamVars& v) {
                                        return consistency_loss(ad::softmax_rows(v("o", "v")),
                                                                ad::softmax_rows(v("p", "v")), mm, hand_d());
                                      }),
                                      m};
                   }});
  return cases;
}

Outcome gradient_suite() {
  Rng rng(20240601);
  std::string failed;
  double worst = 0.0;
  std::size_t total = 0;
  const auto cases = grad_cases();
  for (const auto& c : cases) {
    int accepted = 0, passed = 0;
    for (int trial = 0; trial < 400 && accepted < kGradInputs; ++trial) {
      const auto drawn = c.draw(rng);
      if (!drawn) continue;
      ++accepted;
      const auto report = grad_check(drawn->first, drawn->second, 1e-6, kGradTol);
      worst = std::max(worst, report.max_rel_error);
      passed += report.passed;
    }
    total += static_cast<std::size_t>(accepted);
    if (accepted < kGradInputs || passed < accepted)
      failed += fmt(" %s(%d/%d of %d)", c.name.c_str(), passed, accepted, kGradInputs);
  }
  return {failed.empty(), fmt("%zu losses, %zu kink-free inputs, max rel err %.2e (tol %.0e)%s", cases.size(), total,
                              worst, kGradTol, failed.empty() ? "" : ("; failing:" + failed).c_str())};
}

// -- 2. sampler exactness -----------------------------------------------------

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

bool sampler_matches(const DistanceMatrix& d, const std::vector<Category>& cats, std::uint64_t seed) {
  const auto truth = brute_force(d, cats);
  const auto all = admissible_triplets(d, cats);
  const auto sampled = sample_reference_triplets(d, cats, truth.size() + 10, seed);
  return std::set<MaterialTriplet>(all.begin(), all.end()) == truth &&
         std::set<MaterialTriplet>(sampled.begin(), sampled.end()) == truth && sampled.size() == truth.size();
}

Outcome sampler_exactness() {
  bool ok = true;
  std::string sizes;
  // Hand library: woods {0, 1}, metals {2, 3}; answer worked out by hand.
  const DistanceMatrix hand(4, {0, 2, 5, 7, 2, 0, 1, 6, 5, 1, 0, 3, 7, 6, 3, 0});
  const std::vector<Category> hand_cats{Category::woods, Category::woods, Category::metals, Category::metals};
  ok &= admissible_triplets(hand, hand_cats) == std::vector<MaterialTriplet>{{0, 1, 2}, {3, 2, 1}};
  ok &= sampler_matches(hand, hand_cats, 1);

  Rng rng(77);
  for (int lib = 0; lib < 5; ++lib) {
    SyntheticLibrarySpec spec;
    for (auto& c : spec.per_category) c = 1 + static_cast<int>(rng.index(2));
    spec.per_category[rng.index(kCategoryCount)] += 1;
    spec.min_distance = 0.5;
    const auto library = generate_library(spec, 100 + lib);
    const auto d = build_distance_matrix(library);
    ok &= library.size() <= 12;
    ok &= sampler_matches(d, categories_of(library), lib);
    sizes += fmt(" %zu", library.size());
  }
  return {ok, "hand library plus 5 random libraries (n =" + sizes + "), admissible set equals brute force"};
}

// -- 3. metric axioms -----------------------------------------------------------

Outcome metric_axioms() {
  SyntheticLibrarySpec spec;
  spec.per_category = {7, 7, 6, 6, 6};
  spec.min_distance = 0.0;
  const auto library = generate_library(spec, 32);
  const auto d = build_distance_matrix(library);
  std::size_t violations = 0, triples = 0;
  for (std::size_t i = 0; i < d.n; ++i) {
    violations += d(i, i) != 0.0;
    for (std::size_t j = 0; j < d.n; ++j) {
      violations += d(i, j) != d(j, i) || d(i, j) < 0.0 || !std::isfinite(d(i, j));
      for (std::size_t k = 0; k < d.n; ++k, ++triples) violations += d(i, k) > d(i, j) + d(j, k) + 1e-9;
    }
  }
  return {d.n == 32 && violations == 0,
          fmt("n = %zu, %zu triangle triples, %zu violations", d.n, triples, violations)};
}

// -- 4. warp invariants ---------------------------------------------------------

Outcome warp_invariants() {
  Rng rng(4);
  double worst = 0.0;
  auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + rng.index(6), m = 3 + rng.index(6), c = 1 + rng.index(4);
    const auto corr = correspondence(ad::constant(random_tensor({n, 4}, rng)), ad::constant(random_tensor({m, 4}, rng)),
                                     0.05 + rng.uniform(0, 1));
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        s += corr->value.at(i, j);
        if (corr->value.at(i, j) < 0.0) worst = 1.0;
      }
      track(s, 1.0);
    }

    // Linearity in the source, both directions.
    const Tensor x = random_tensor({m, c}, rng), y = random_tensor({m, c}, rng);
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    Tensor mix({m, c});
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
    const auto wx = warp(ad::constant(x), corr), wy = warp(ad::constant(y), corr), wm = warp(ad::constant(mix), corr);
    for (std::size_t i = 0; i < wm->value.size(); ++i) track(wm->value[i], a * wx->value[i] + b * wy->value[i]);
    const Tensor xb = random_tensor({n, c}, rng), yb = random_tensor({n, c}, rng);
    Tensor mixb({n, c});
    for (std::size_t i = 0; i < mixb.size(); ++i) mixb[i] = a * xb[i] + b * yb[i];
    const auto bx = warp(ad::constant(xb), corr, WarpDirection::backward);
    const auto by = warp(ad::constant(yb), corr, WarpDirection::backward);
    const auto bm = warp(ad::constant(mixb), corr, WarpDirection::backward);
    for (std::size_t i = 0; i < bm->value.size(); ++i) track(bm->value[i], a * bx->value[i] + b * by->value[i]);

    // Identity correlation and permutations.
    Tensor eye({m, m}), perm({m, m});
    std::vector<std::size_t> p(m);
    for (std::size_t i = 0; i < m; ++i) p[i] = i;
    for (std::size_t i = m - 1; i > 0; --i) std::swap(p[i], p[rng.index(i + 1)]);
    for (std::size_t i = 0; i < m; ++i) {
      eye.at(i, i) = 1.0;
      perm.at(i, p[i]) = 1.0;
    }
    const auto id_f = warp(ad::constant(x), ad::constant(eye));
    const auto id_b = warp(ad::constant(x), ad::constant(eye), WarpDirection::backward);
    const auto pf = warp(ad::constant(x), ad::constant(perm));
    const auto pb = warp(ad::constant(x), ad::constant(perm), WarpDirection::backward);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < c; ++k) {
        track(id_f->value.at(i, k), x.at(i, k));
        track(id_b->value.at(i, k), x.at(i, k));
        track(pf->value.at(i, k), x.at(p[i], k));
        track(pb->value.at(p[i], k), x.at(i, k));
      }

    // Constant sources survive a soft correlation in both directions.
    const Tensor cf({m, c}, std::vector<double>(m * c, 1.5)), cb({n, c}, std::vector<double>(n * c, -0.5));
    const auto wf = warp(ad::constant(cf), corr), wb = warp(ad::constant(cb), corr, WarpDirection::backward);
    for (double v : wf->value.values()) track(v, 1.5);
    for (double v : wb->value.values()) track(v, -0.5);
  }
  return {worst <= 1e-9, fmt("50 random fixtures (row sums, linearity, identity, permutations, constants), max deviation %.2e (tol 1e-9)", worst)};
}

// -- 5. Table 1 -----------------------------------------------------------------

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

std::string triple(const MetricTriple& m) {
  return fmt("acc %.3f cat %.3f dis %.2f", m.mat_acc, m.cat_acc, m.mat_dis);
}

Outcome table1(double& per_run_seconds) {
  PipelineConfig cfg;
  cfg.dataset.shapes.count = 44;
  cfg.dataset.shapes.views = 5;
  std::size_t library_size = 0;
  for (auto s : kSeeds) library_size = std::max(library_size, build_dataset(cfg.dataset, s).library.size());
  const auto t0 = std::chrono::steady_clock::now();
  const Table1Result r = run_ablation_table1(cfg, kSeeds);
  per_run_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() /
                    static_cast<double>(kSeeds.size());
  const bool setup_ok = library_size == 30 && r.train_patches >= 600;
  return {setup_ok && r.dis_ordered && r.acc_ordered,
          fmt("30-material library: %s, min train patches %zu; medians cat+mat [%s] +dis [%s] full [%s]; "
              "dis ordered %s, acc ordered %s",
              library_size == 30 ? "yes" : "no", r.train_patches, triple(r.median[0]).c_str(),
              triple(r.median[1]).c_str(), triple(r.median[2]).c_str(), r.dis_ordered ? "yes" : "no",
              r.acc_ordered ? "yes" : "no")};
}

// -- 6. Table 2 -----------------------------------------------------------------

Outcome table2() {
  const PipelineConfig cfg;
  const Table2Result r = run_ablation_table2(cfg, kSeeds);
  const auto& m = r.median;
  return {r.finetune_improves_exemplar && r.finetune_improves_projection && r.consistency_improves_projection,
          fmt("exemplar pair [%s] -> [%s]; projection pair [%s] -> [%s] -> +Lc [%s]; "
              "finetune improves exemplar %s, projection %s; Lc improves projection %s",
              triple(m[0][0]).c_str(), triple(m[1][0]).c_str(), triple(m[0][1]).c_str(), triple(m[1][1]).c_str(),
              triple(m[2][1]).c_str(), r.finetune_improves_exemplar ? "yes" : "no",
              r.finetune_improves_projection ? "yes" : "no", r.consistency_improves_projection ? "yes" : "no")};
}

// -- 7 and 9: trained pipeline on a separable library ---------------------------

struct TrainedFixture {
  PipelineConfig cfg;
  ToyDataset ds;
  TrainedModels models;
  double min_distance = 0.0;
  double seconds = 0.0;
};

const TrainedFixture& trained_fixture() {
  static const TrainedFixture fixture = [] {
    const auto t0 = std::chrono::steady_clock::now();
    TrainedFixture f;
    f.cfg.dataset.shapes.count = 48;
    f.cfg.dataset.library.min_distance = 5.0 * f.cfg.dataset.shading_amplitude;
    // The default 1500 classifier steps leave this library undertrained (test acc about 0.44).
    f.cfg.classifier_steps = 4000;
    const std::uint64_t seed = 7;
    f.ds = build_dataset(f.cfg.dataset, seed);
    f.min_distance = INFINITY;
    for (std::size_t i = 0; i < f.ds.distances.n; ++i)
      for (std::size_t j = 0; j < f.ds.distances.n; ++j)
        if (i != j) f.min_distance = std::min(f.min_distance, f.ds.distances(i, j));
    const SampleSplit samples = split_samples(f.ds, f.cfg.encoder);
    const Model pretrained =
        train_predictor(f.ds, samples, f.cfg, f.cfg.protocol, initial_predictor(f.ds, f.cfg, seed), seed).model;
    const Model translator = train_translator_stage(f.ds, f.cfg, seed).generator;
    const auto pairs = make_translated_pairs(f.ds, f.cfg, f.ds.train_shapes, f.ds.train_shapes,
                                             f.cfg.train_pairs_per_shape, translator, pretrained, derive_seed(seed, 13));
    FineTuneConfig fc = f.cfg.finetune;
    fc.seed = derive_seed(seed, 18);
    const FineTuneResult ft =
        fine_tune(pretrained, pairs, f.ds.library, f.ds.distances, f.cfg.encoder, f.cfg.finetune_opt, fc);
    f.models = {f.cfg.encoder, f.cfg.translator, translator, ft.predictor_o, ft.predictor_p, f.ds.library};
    f.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return f;
  }();
  return fixture;
}

Outcome round_trip() {
  const TrainedFixture& f = trained_fixture();
  const auto renders = f.ds.renders_of(f.ds.test_shapes);
  std::size_t parts = 0, exact = 0, fixtures = 0;
  for (const RenderedView* r : renders) {
    if (fixtures == 20) break;
    ++fixtures;
    const TransferResult result = transfer(f.ds.shape(r->shape_id), r->image, f.models, f.cfg.transfer);
    for (const auto& [label, truth] : r->assignment.parts) {
      ++parts;
      const auto it = result.assignment.parts.find(label);
      exact += it != result.assignment.parts.end() && it->second.material == truth.material;
    }
  }
  const double share = parts ? static_cast<double>(exact) / static_cast<double>(parts) : 0.0;
  const bool separable = f.min_distance >= 5.0 * f.cfg.dataset.shading_amplitude;
  return {separable && fixtures == 20 && share >= 0.9,
          fmt("min D %.2f vs 5x shading %.1f; %zu fixtures, %zu/%zu parts exact (%.1f%%, need 90%%); "
              "training took %.0f s",
              f.min_distance, 5.0 * f.cfg.dataset.shading_amplitude, fixtures, exact, parts, 100.0 * share,
              f.seconds)};
}

Outcome totality() {
  const TrainedFixture& f = trained_fixture();
  const fs::path root = fs::temp_directory_path() / "matxfer_totality";
  fs::remove_all(root);
  Rng rng(909);
  int failures = 0;
  std::string first_failure;
  for (int i = 0; i < 50; ++i) {
    const ToyShape& shape = f.ds.shapes[rng.index(f.ds.shapes.size())];
    const RenderedView& ex = f.ds.renders[rng.index(f.ds.renders.size())];
    try {
      const TransferResult result = transfer(shape, ex.image, f.models, f.cfg.transfer);
      const auto labels = shape.labels();
      require(result.assignment.parts.size() == labels.size() && result.assignment.covers(labels),
              "assignment does not cover the shape's parts");
      check_categories(result.assignment, f.ds.library);
      const fs::path dir = root / std::to_string(i);
      save_audit(dir, result, f.ds.library);
      for (const auto& file : audit_inventory()) require(fs::exists(dir / file), "missing audit file " + file);
    } catch (const std::exception& e) {
      if (failures++ == 0) first_failure = e.what();
    }
  }
  fs::remove_all(root);
  return {failures == 0, fmt("50 random (shape, exemplar) pairs, %d failures%s", failures,
                             failures ? (", first: " + first_failure).c_str() : "")};
}

// -- 8. determinism -------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MATXFER_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "matxfer_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  io::write_text(root / "run.cfg",
                 "[shapes]\ncount = 12\n[encoder]\nchannels = 4,8\nembedding = 16\n[metric]\nsteps = 20\n"
                 "[classifier]\nsteps = 40\n[translation]\nsteps = 100\n[finetune]\nsteps = 10\n"
                 "train_pairs_per_shape = 1\ntest_pairs_per_shape = 2\n");
  const std::string cfg = " --config " + (root / "run.cfg").string() + " --seed 5";
  int bad_exit = 0;
  for (const std::string run : {"a", "b"}) {
    const std::string d = (root / run).string();
    const std::vector<std::string> commands{
        "synth" + cfg + " --out " + d + "/data --report " + d + "/synth.txt",
        "train-metric" + cfg + " --data " + d + "/data --out " + d + "/enc.ckpt --report " + d + "/metric.txt",
        "train-classifier" + cfg + " --data " + d + "/data --init " + d + "/enc.ckpt --out " + d +
            "/pred_init.ckpt --report " + d + "/cls_init.txt",
        "train-classifier" + cfg + " --data " + d + "/data --out " + d + "/pred.ckpt --report " + d + "/cls.txt",
        "train-translator" + cfg + " --data " + d + "/data --out " + d + "/tr.ckpt --report " + d + "/tr.txt",
        "fine-tune" + cfg + " --data " + d + "/data --predictor " + d + "/pred.ckpt --translator " + d +
            "/tr.ckpt --out " + d + "/models --report " + d + "/ft.txt",
        "transfer" + cfg + " --data " + d + "/data --models " + d + "/models --shape 2 --exemplar " + d +
            "/data/renders/s0005_k01_v01.lab --out " + d + "/audit",
        "evaluate" + cfg + " --data " + d + "/data --predictor " + d + "/pred.ckpt --report " + d + "/eval.txt",
        "gallery" + cfg + " --data " + d + "/data --models " + d + "/models --out " + d + "/gallery --count 3",
        "ablate-table1" + cfg + " --seeds 5 --report " + d + "/t1.txt",
        "ablate-table2" + cfg + " --seeds 5 --report " + d + "/t2.txt",
    };
    for (const auto& c : commands) bad_exit += run_cli(c) != 0;
  }
  std::size_t compared = 0, differing = 0;
  std::string first_diff;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), root / "a");
    ++compared;
    if (read_bytes(entry.path()) != read_bytes(root / "b" / rel)) {
      if (differing++ == 0) first_diff = rel.string();
    }
  }
  fs::remove_all(root);
  return {bad_exit == 0 && differing == 0 && compared > 0,
          fmt("11 commands run twice, %d nonzero exits, %zu files compared, %zu differ%s", bad_exit, compared,
              differing, differing ? (" (first: " + first_diff + ")").c_str() : "")};
}

// -- extra: long translator run --------------------------------------------------

Outcome translator_convergence() {
  DatasetSpec spec;
  spec.shapes.count = 16;
  const ToyDataset ds = build_dataset(spec, 16);
  TranslatorConfig tc;
  Rng rng(61);
  const Model g = init_translator(tc, rng), d = init_discriminator(tc, rng);
  TranslatorTrainConfig train;
  train.steps = 2000;
  train.seed = 62;
  const auto r = train_translator(g, d, build_quadruples(ds, ds.train_shapes), tc, {}, OptimizerConfig::translation(), train);
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < 50; ++i) {
    head += r.g_trace[i] / 50.0;
    tail += r.g_trace[r.g_trace.size() - 1 - i] / 50.0;
  }
  return {tail <= 0.5 * head, fmt("16 shapes, 2000 steps: mean generator loss %.2f (first 50) -> %.2f (last 50), "
                                  "%.0f%% decrease (need 50%%)",
                                  head, tail, 100.0 * (1.0 - tail / head))};
}

}  // namespace

int main(int argc, char** argv) {
  log::set_level(log::Level::quiet);
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  auto wanted = [&](int id) { return selected.empty() || selected.count(id); };

  double table1_per_run = 0.0;
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient suite", 120, gradient_suite},
      {2, "sampler exactness", 10, sampler_exactness},
      {3, "metric axioms", 5, metric_axioms},
      {4, "warp invariants", 10, warp_invariants},
      {5, "table 1 trend", 3 * 600, [&] { return table1(table1_per_run); }},
      {6, "table 2 trend", 1800, table2},
      {7, "round-trip transfer", 300, round_trip},
      {8, "determinism", 0, determinism},
      {9, "pipeline totality", 0, totality},
      {10, "translator training example", 0, translator_convergence},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!wanted(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    // Training the shared fixture is charged to the round trip, its first user.
    bool in_time = c.limit_seconds <= 0 || seconds <= c.limit_seconds;
    if (c.id == 5) in_time = table1_per_run <= 600;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::string timing = fmt("%.1f s", seconds);
    if (c.limit_seconds > 0) timing += fmt(", limit %.0f s", c.limit_seconds);
    if (c.id == 5) timing += fmt(", %.0f s per seed", table1_per_run);
    std::printf("%s %2d %s: %s (%s)%s\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), timing.c_str(),
                in_time ? "" : " [over time limit]");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
