#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "matxfer/learning/model.hpp"
#include "matxfer/learning/optimizer.hpp"
#include "matxfer/learning/rng.hpp"

namespace matxfer {

/// Loss for one optimization step. The callee draws its batch from `rng`
/// (the data iterator) and builds the graph over `vars`.
using StepLossFn = std::function<ad::Var(const ParamVars& vars, std::size_t step, Rng& rng)>;

struct TrainResult {
  Model model;
  std::vector<double> loss_trace;
};

/// Runs `steps` optimizer updates. Aborts with TrainingError (carrying the
/// step index) as soon as a loss is non-finite.
TrainResult train_steps(Model model, const StepLossFn& loss_fn, const OptimizerConfig& cfg, std::size_t steps,
                        std::uint64_t seed);

/// Same loop with a caller-owned optimizer (lr scales, resumed state).
TrainResult train_steps(Model model, const StepLossFn& loss_fn, Optimizer& optimizer, std::size_t steps,
                        std::uint64_t seed);

/// One forward/backward/update; returns the loss value.
double train_one_step(Model& model, const StepLossFn& loss_fn, Optimizer& optimizer, std::size_t step, Rng& rng);

}  // namespace matxfer
