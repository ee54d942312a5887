#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "matxfer/learning/model.hpp"

namespace matxfer {

enum class OptimizerKind { adam, sgd_momentum };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 2e-4;
  double momentum = 0.9;  // sgd only
  double beta1 = 0.9;     // adam only
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 3;

  void validate() const;

  // Settings reported for the three training stages.
  static OptimizerConfig translation() { return {OptimizerKind::adam, 2e-4, 0.9, 0.5, 0.999, 1e-8, 3}; }
  static OptimizerConfig metric_stage() { return {OptimizerKind::sgd_momentum, 1e-3, 0.9, 0.9, 0.999, 1e-8, 180}; }
  static OptimizerConfig classifier_stage() { return {OptimizerKind::adam, 5e-4, 0.9, 0.9, 0.999, 1e-8, 180}; }

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

/// Stateful first-order optimizer over the trainable blocks of a Model.
///
/// Adam (bias-corrected):
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
/// SGD with momentum:
///   u <- mu u + g,  p <- p - lr u
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg);

  /// Multiplies the learning rate for every block whose name starts with `prefix`.
  void set_lr_scale(const std::string& prefix, double scale);

  void step(Model& model, const Gradients& grads);

  const OptimizerConfig& config() const { return cfg_; }
  std::size_t steps_taken() const { return t_; }

 private:
  double lr_for(const std::string& block) const;

  OptimizerConfig cfg_;
  std::size_t t_ = 0;
  std::map<std::string, Tensor> first_;
  std::map<std::string, Tensor> second_;
  std::map<std::string, double> lr_scale_;
};

}  // namespace matxfer
