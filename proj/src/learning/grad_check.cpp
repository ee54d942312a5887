#include "matxfer/learning/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "matxfer/common/errors.hpp"

namespace matxfer {
namespace {

double evaluate(const LossFn& fn, const Model& m) {
  ParamVars vars(m);
  return fn(vars)->value.item();
}

}  // namespace

GradCheckReport grad_check(const LossFn& loss_fn, const Model& params, double step, double tol) {
  require(step > 0.0, "grad_check step must be positive");
  GradCheckReport report;

  ParamVars vars(params);
  ad::Var loss = loss_fn(vars);
  require(loss->value.size() == 1, "grad_check: loss must be scalar");
  if (!std::isfinite(loss->value.item())) {
    report.failure = "non-finite loss at the unperturbed point";
    return report;
  }
  ad::backward(loss);
  const Gradients analytic = collect_gradients(params, vars);

  Model probe = params;
  for (const auto& block : params.blocks()) {
    if (!block.trainable()) continue;
    for (const auto& [name, tensor] : block.tensors()) {
      const std::string key = param_key(block.name(), name);
      Tensor& p = probe.block(block.name()).tensor(name);
      const Tensor& g = analytic.at(key);
      for (std::size_t i = 0; i < tensor.size(); ++i) {
        const double orig = p[i];
        p[i] = orig + step;
        const double up = evaluate(loss_fn, probe);
        p[i] = orig - step;
        const double down = evaluate(loss_fn, probe);
        p[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down)) {
          report.failure = "non-finite loss when perturbing " + key + "[" + std::to_string(i) + "]";
          report.passed = false;
          return report;
        }
        const double numeric = (up - down) / (2.0 * step);
        const double rel = std::fabs(g[i] - numeric) / std::max(1.0, std::fabs(g[i]));
        report.entries.push_back({key, i, g[i], numeric, rel});
        report.max_rel_error = std::max(report.max_rel_error, rel);
      }
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

bool away_from_kink(const std::vector<double>& arguments, double kink, double margin) {
  return std::all_of(arguments.begin(), arguments.end(), [&](double a) { return std::fabs(a - kink) >= margin; });
}

}  // namespace matxfer
