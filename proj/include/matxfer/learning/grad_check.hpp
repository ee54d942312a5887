#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "matxfer/learning/model.hpp"

namespace matxfer {

/// Builds a scalar loss from bound parameters. Inputs other than the
/// parameters are captured by the closure.
using LossFn = std::function<ad::Var(const ParamVars&)>;

struct GradCheckEntry {
  std::string param;  // "block.tensor"
  std::size_t index;
  double analytic;
  double numeric;
  double rel_error;  // |analytic - numeric| / max(1, |analytic|)
};

struct GradCheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> entries;
  std::optional<std::string> failure;  // set when a perturbed loss is non-finite
};

/// Compares reverse-mode gradients of every trainable coordinate against
/// central differences (f(p+h) - f(p-h)) / 2h.
GradCheckReport grad_check(const LossFn& loss_fn, const Model& params, double step, double tol);

/// True when every value is at least `margin` away from `kink`; used to
/// reject random samples that sit on a hinge or max boundary.
bool away_from_kink(const std::vector<double>& arguments, double kink, double margin);

}  // namespace matxfer
