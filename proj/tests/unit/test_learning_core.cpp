#include <cmath>
#include <sstream>

#include "doctest.h"
#include "matxfer/common/errors.hpp"
#include "matxfer/learning/autodiff.hpp"
#include "matxfer/learning/checkpoint.hpp"
#include "matxfer/learning/grad_check.hpp"
#include "matxfer/learning/layers.hpp"
#include "matxfer/learning/train.hpp"

using namespace matxfer;

namespace {

Model single(const std::string& block, const std::string& name, Tensor t) {
  Model m;
  ParamBlock b(block, true);
  b.add(name, std::move(t));
  m.add(std::move(b));
  return m;
}

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Weighted sum of all outputs so every output coordinate gets a distinct upstream gradient.
LayerSpec op(LayerSpec::Kind kind) {
  LayerSpec s;
  s.kind = kind;
  return s;
}

ad::Var weighted_sum(const ad::Var& v, std::uint64_t seed) {
  Rng rng(seed);
  return ad::sum(ad::mul(v, ad::constant(random_tensor(v->shape(), rng))));
}

}  // namespace

TEST_CASE("forward: identity, zero linear, hand-set two-layer stack") {
  Rng rng(1);
  Network identity({0, 2}, {op(LayerSpec::Kind::identity)});
  Tensor x({1, 2}, {3.0, -4.0});
  CHECK(forward(identity, identity.init(rng), x) == x);

  Network lin({0, 2}, {LayerSpec{.kind = LayerSpec::Kind::linear, .block = "fc", .in = 2, .out = 3}});
  Model zero = lin.init(rng);
  zero.block("fc").tensor("weight").fill(0.0);
  const Tensor y = forward(lin, zero, x);
  CHECK(y.shape() == Shape{1, 3});
  for (double v : y.values()) CHECK(v == 0.0);

  // W1 = [[1,2],[3,4],[-1,1]], b1 = [0.5,-4,0], relu, W2 = [[1,-1,2]], b2 = [0.25]
  Network two({0, 2}, {LayerSpec{.kind = LayerSpec::Kind::linear, .block = "l1", .in = 2, .out = 3}, op(LayerSpec::Kind::relu),
                       LayerSpec{.kind = LayerSpec::Kind::linear, .block = "l2", .in = 3, .out = 1}});
  Model m = two.init(rng);
  m.block("l1").tensor("weight") = Tensor({3, 2}, {1, 2, 3, 4, -1, 1});
  m.block("l1").tensor("bias") = Tensor({3}, {0.5, -4, 0});
  m.block("l2").tensor("weight") = Tensor({1, 3}, {1, -1, 2});
  m.block("l2").tensor("bias") = Tensor({1}, {0.25});
  // x = [1,0]: hidden pre-activation [1.5, -1, -1] -> relu [1.5, 0, 0] -> 1.5 + 0.25
  CHECK(forward(two, m, Tensor({1, 2}, {1.0, 0.0}))[0] == doctest::Approx(1.75));

  CHECK_THROWS_AS(forward(two, m, Tensor({1, 3}, 0.0)), ValidationError);
}

TEST_CASE("grad_check: quadratic has exact gradient") {
  Model p = single("p", "v", Tensor({2}, {1.0, 2.0}));
  const LossFn loss = [](const ParamVars& v) { return ad::sum(ad::square(v("p", "v"))); };
  const auto report = grad_check(loss, p, 1e-5, 1e-8);
  CHECK(report.passed);
  REQUIRE(report.entries.size() == 2);
  CHECK(report.entries[0].analytic == doctest::Approx(2.0));
  CHECK(report.entries[1].analytic == doctest::Approx(4.0));
  CHECK(report.max_rel_error < 1e-8);
}

TEST_CASE("grad_check: non-finite perturbation names the coordinate") {
  Model p = single("p", "v", Tensor({2}, {1.0, 0.5e-4}));
  const LossFn loss = [](const ParamVars& v) { return ad::sum(ad::log(v("p", "v"))); };
  const auto report = grad_check(loss, p, 1e-4, 1e-3);
  CHECK_FALSE(report.passed);
  REQUIRE(report.failure.has_value());
  CHECK(report.failure->find("p.v[1]") != std::string::npos);
}

TEST_CASE("every graph op agrees with central differences") {
  Rng rng(7);
  struct Case {
    const char* name;
    Shape shape;
    std::function<ad::Var(const ad::Var&)> f;
    double lo = -1.0, hi = 1.0;
  };
  const Tensor mask({2, 1, 4, 4}, {1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0,  //
                                   0, 1, 1, 1, 0, 1, 0, 1, 1, 1, 1, 1, 0, 0, 0, 1});
  Tensor conv_w = random_tensor({3, 2, 3, 3}, rng);
  Tensor conv_b = random_tensor({3}, rng);
  Tensor lin_w = random_tensor({4, 3}, rng);
  std::vector<Case> cases = {
      {"exp/log", {5}, [](const ad::Var& x) { return ad::log(ad::add_scalar(ad::exp(x), 1.0)); }},
      {"sqrt/reciprocal", {4}, [](const ad::Var& x) { return ad::reciprocal(ad::sqrt(x)); }, 0.5, 2.0},
      {"tanh/sigmoid", {4}, [](const ad::Var& x) { return ad::mul(ad::tanh(x), ad::sigmoid(x)); }},
      {"sin/cos", {3}, [](const ad::Var& x) { return ad::div(ad::sin(x), ad::add_scalar(ad::cos(x), 2.0)); }},
      {"matmul/transpose", {3, 2}, [](const ad::Var& x) { return ad::matmul(x, ad::transpose(x)); }},
      {"linear", {2, 3},
       [&](const ad::Var& x) { return ad::linear(x, ad::constant(lin_w), ad::constant(Tensor({4}, 0.1))); }},
      {"conv2d", {2, 2, 4, 4},
       [&](const ad::Var& x) { return ad::conv2d(x, ad::constant(conv_w), ad::constant(conv_b)); }},
      {"conv2d-weights", {3, 2, 3, 3},
       [&](const ad::Var& w) {
         Rng r(3);
         return ad::conv2d(ad::constant(random_tensor({1, 2, 4, 4}, r)), w, ad::constant(conv_b));
       }},
      {"pool/upsample", {1, 2, 4, 4}, [](const ad::Var& x) { return ad::upsample_nearest(ad::avg_pool2(x), 2); }},
      {"concat_channels", {1, 2, 2, 2}, [](const ad::Var& x) { return ad::concat_channels(x, ad::square(x)); }},
      {"masked_mean_pool", {2, 3, 4, 4}, [&](const ad::Var& x) { return ad::masked_mean_pool(x, mask); }},
      {"positions", {1, 3, 2, 2}, [](const ad::Var& x) { return ad::from_positions(ad::to_positions(x), 2, 2); }},
      {"normalize_rows", {3, 4}, [](const ad::Var& x) { return ad::normalize_rows(x); }},
      {"normalize_rows_l1", {3, 4}, [](const ad::Var& x) { return ad::normalize_rows_l1(x); }, 0.2, 1.0},
      {"softmax_rows", {3, 4}, [](const ad::Var& x) { return ad::softmax_rows(x); }},
      {"log_softmax_rows", {3, 4}, [](const ad::Var& x) { return ad::log_softmax_rows(x); }},
      {"pick", {3, 4}, [](const ad::Var& x) { return ad::pick(x, {0, 3, 2}); }},
      {"pair_sq_dists", {4, 3}, [](const ad::Var& x) { return ad::pair_sq_dists(x, {{0, 1}, {2, 3}, {1, 3}}); }},
      {"select/stack", {3},
       [](const ad::Var& x) {
         return ad::stack({ad::select(x, 2), ad::mul(ad::select(x, 0), ad::select(x, 1))}, {2});
       }},
      {"slice/concat rows", {4, 2},
       [](const ad::Var& x) { return ad::concat_rows({ad::slice_rows(x, 2, 4), ad::square(ad::slice_rows(x, 0, 1))}); }},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    Model p = single("x", "v", random_tensor(c.shape, rng, c.lo, c.hi));
    const LossFn loss = [&](const ParamVars& v) { return weighted_sum(c.f(v("x", "v")), 99); };
    const auto report = grad_check(loss, p, 1e-6, 1e-6);
    CHECK(report.passed);
    CHECK(report.max_rel_error < 1e-6);
  }
}

TEST_CASE("kink guard rejects arguments near the hinge") {
  CHECK(away_from_kink({0.5, -0.2}, 0.0, 1e-3));
  CHECK_FALSE(away_from_kink({0.5, 0.0005}, 0.0, 1e-3));
}

namespace {

// Two-parameter quadratic f = 0.5 * (3 p0^2 + 0.5 p1^2), gradient (3 p0, 0.5 p1).
ad::Var quad_loss(const ParamVars& v) {
  ad::Var p = v("q", "p");
  return ad::mul_scalar(ad::sum(ad::mul(ad::square(p), ad::constant(Tensor({2}, {3.0, 0.5})))), 0.5);
}

}  // namespace

TEST_CASE("optimizers follow the hand-computed 10-step trajectory") {
  const double curv[2] = {3.0, 0.5};
  SUBCASE("adam") {
    OptimizerConfig cfg{OptimizerKind::adam, 0.1, 0.0, 0.9, 0.999, 1e-8, 1};
    double p[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
    Model model = single("q", "p", Tensor({2}, {1.0, -2.0}));
    Optimizer opt(cfg);
    for (int t = 1; t <= 10; ++t) {
      for (int i = 0; i < 2; ++i) {
        const double g = curv[i] * p[i];
        m[i] = 0.9 * m[i] + 0.1 * g;
        v[i] = 0.999 * v[i] + 0.001 * g * g;
        const double mh = m[i] / (1.0 - std::pow(0.9, t));
        const double vh = v[i] / (1.0 - std::pow(0.999, t));
        p[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      }
      Rng rng(0);
      train_one_step(model, [](const ParamVars& pv, std::size_t, Rng&) { return quad_loss(pv); }, opt, 0, rng);
      const Tensor& got = model.block("q").tensor("p");
      CHECK(got[0] == doctest::Approx(p[0]).epsilon(1e-12));
      CHECK(got[1] == doctest::Approx(p[1]).epsilon(1e-12));
    }
  }
  SUBCASE("sgd-momentum") {
    OptimizerConfig cfg{OptimizerKind::sgd_momentum, 0.05, 0.9, 0.9, 0.999, 1e-8, 1};
    double p[2] = {1.0, -2.0}, u[2] = {0, 0};
    Model model = single("q", "p", Tensor({2}, {1.0, -2.0}));
    Optimizer opt(cfg);
    for (int t = 1; t <= 10; ++t) {
      for (int i = 0; i < 2; ++i) {
        u[i] = 0.9 * u[i] + curv[i] * p[i];
        p[i] -= 0.05 * u[i];
      }
      Rng rng(0);
      train_one_step(model, [](const ParamVars& pv, std::size_t, Rng&) { return quad_loss(pv); }, opt, 0, rng);
      const Tensor& got = model.block("q").tensor("p");
      CHECK(got[0] == doctest::Approx(p[0]).epsilon(1e-12));
      CHECK(got[1] == doctest::Approx(p[1]).epsilon(1e-12));
    }
  }
}

namespace {

struct LeastSquares {
  Tensor a{{20, 3}};
  Tensor y{{20, 1}};
  LeastSquares() {
    Rng rng(11);
    const double w[3] = {0.7, -1.3, 2.0};
    for (std::size_t i = 0; i < 20; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 3; ++j) s += (a.at(i, j) = rng.uniform(-1, 1)) * w[j];
      y.at(i, 0) = s;
    }
  }
  StepLossFn loss() const {
    return [this](const ParamVars& v, std::size_t, Rng& rng) {
      // Mini-batch of 8 rows drawn from the rng, exercising the data-iterator path.
      std::vector<std::size_t> rows(8);
      for (auto& r : rows) r = rng.index(20);
      Tensor xa({8, 3}), ya({8, 1});
      for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 3; ++j) xa.at(i, j) = a.at(rows[i], j);
        ya.at(i, 0) = y.at(rows[i], 0);
      }
      ad::Var pred = ad::matmul(ad::constant(xa), v("w", "v"));
      return ad::mean(ad::square(ad::sub(pred, ad::constant(ya))));
    };
  }
  double full_loss(const Model& m) const {
    ParamVars v(m);
    return ad::mean(ad::square(ad::sub(ad::matmul(ad::constant(a), v("w", "v")), ad::constant(y))))->value.item();
  }
};

}  // namespace

TEST_CASE("train_steps: lr 0 leaves parameters unchanged") {
  LeastSquares ls;
  Model m = single("w", "v", Tensor({3, 1}, 0.0));
  OptimizerConfig cfg = OptimizerConfig::translation();
  cfg.learning_rate = 0.0;
  const auto result = train_steps(m, ls.loss(), cfg, 1, 5);
  CHECK(result.model == m);
  CHECK(result.loss_trace.size() == 1);
}

TEST_CASE("train_steps: Adam solves least squares and is reproducible") {
  LeastSquares ls;
  Model m = single("w", "v", Tensor({3, 1}, 0.0));
  OptimizerConfig cfg{OptimizerKind::adam, 0.05, 0.0, 0.9, 0.999, 1e-8, 8};
  const double initial = ls.full_loss(m);
  const auto a = train_steps(m, ls.loss(), cfg, 200, 42);
  CHECK(a.loss_trace.size() == 200);
  CHECK(ls.full_loss(a.model) < 1e-3 * initial);

  const auto b = train_steps(m, ls.loss(), cfg, 200, 42);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.model == b.model);
}

TEST_CASE("train_steps: NaN loss aborts with the step index") {
  Model m = single("w", "v", Tensor({1}, {1.0}));
  const StepLossFn loss = [](const ParamVars& v, std::size_t step, Rng&) {
    ad::Var x = v("w", "v");
    return step == 3 ? ad::sum(ad::log(ad::mul_scalar(x, -1.0))) : ad::sum(ad::square(x));
  };
  try {
    train_steps(m, loss, OptimizerConfig::translation(), 10, 1);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(e.step() == 3);
  }
  CHECK_THROWS_AS(train_steps(m, loss, OptimizerConfig::translation(), 0, 1), ValidationError);
}

TEST_CASE("checkpoint round-trips exactly and is byte-stable") {
  Rng rng(3);
  Model m;
  m.add(make_conv("enc.conv1", 2, 3, 3, rng));
  m.add(make_linear("head", 4, 2, rng, false));
  Checkpoint ck{"test-schema", 17, OptimizerConfig::metric_stage(), m};

  std::ostringstream a, b;
  write_checkpoint(a, ck);
  write_checkpoint(b, ck);
  CHECK(a.str() == b.str());

  std::istringstream in(a.str());
  const Checkpoint back = read_checkpoint(in);
  CHECK(back == ck);
  CHECK_FALSE(back.model.block("head").trainable());

  std::istringstream bad("matxfer-checkpoint 9\n");
  CHECK_THROWS_AS(read_checkpoint(bad), ValidationError);
}

TEST_CASE("model invariants: unique names, frozen blocks get no gradient") {
  Rng rng(0);
  Model m;
  m.add(make_linear("a", 2, 2, rng));
  CHECK_THROWS_AS(m.add(make_linear("a", 2, 2, rng)), ValidationError);
  m.add(make_linear("frozen", 2, 1, rng, false));
  ParamVars v(m);
  ad::Var loss = ad::sum(apply_linear(v, "frozen", apply_linear(v, "a", ad::constant(Tensor({1, 2}, {1, 2})))));
  ad::backward(loss);
  const Gradients g = collect_gradients(m, v);
  CHECK(g.count("a.weight") == 1);
  CHECK(g.count("frozen.weight") == 0);
}
