#include "matxfer/learning/train.hpp"

#include <cmath>

#include "matxfer/common/errors.hpp"

namespace matxfer {

double train_one_step(Model& model, const StepLossFn& loss_fn, Optimizer& optimizer, std::size_t step, Rng& rng) {
  ParamVars vars(model);
  ad::Var loss = loss_fn(vars, step, rng);
  const double value = loss->value.item();
  if (!std::isfinite(value)) throw TrainingError("non-finite loss", step);
  ad::backward(loss);
  optimizer.step(model, collect_gradients(model, vars));
  return value;
}

TrainResult train_steps(Model model, const StepLossFn& loss_fn, Optimizer& optimizer, std::size_t steps,
                        std::uint64_t seed) {
  require(steps >= 1, "train_steps requires steps >= 1");
  Rng rng(seed);
  TrainResult result;
  result.loss_trace.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) result.loss_trace.push_back(train_one_step(model, loss_fn, optimizer, s, rng));
  result.model = std::move(model);
  return result;
}

TrainResult train_steps(Model model, const StepLossFn& loss_fn, const OptimizerConfig& cfg, std::size_t steps,
                        std::uint64_t seed) {
  Optimizer optimizer(cfg);
  return train_steps(std::move(model), loss_fn, optimizer, steps, seed);
}

}  // namespace matxfer
