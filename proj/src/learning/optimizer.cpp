#include "matxfer/learning/optimizer.hpp"

#include <cmath>

#include "matxfer/common/errors.hpp"

namespace matxfer {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd-momentum"; }

OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd-momentum" || s == "sgd") return OptimizerKind::sgd_momentum;
  throw ValidationError("unknown optimizer kind '" + s + "'");
}

void OptimizerConfig::validate() const {
  // lr 0 is accepted: it is how callers freeze a stage in ablations.
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning_rate must be finite and >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  if (kind == OptimizerKind::sgd_momentum) require(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0,1)");
  if (kind == OptimizerKind::adam) {
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "adam betas must be in [0,1)");
    require(epsilon > 0.0, "adam epsilon must be positive");
  }
}

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void Optimizer::set_lr_scale(const std::string& prefix, double scale) {
  require(scale >= 0.0, "lr scale must be nonnegative");
  lr_scale_[prefix] = scale;
}

double Optimizer::lr_for(const std::string& block) const {
  double lr = cfg_.learning_rate;
  for (const auto& [prefix, scale] : lr_scale_)
    if (block.rfind(prefix, 0) == 0) lr *= scale;
  return lr;
}

void Optimizer::step(Model& model, const Gradients& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& block : model.blocks()) {
    if (!block.trainable()) continue;
    const double lr = lr_for(block.name());
    for (auto& [name, param] : block.tensors()) {
      const std::string key = param_key(block.name(), name);
      auto git = grads.find(key);
      if (git == grads.end()) continue;
      const Tensor& g = git->second;
      require(g.shape() == param.shape(), "gradient shape mismatch for " + key);
      if (cfg_.kind == OptimizerKind::sgd_momentum) {
        auto [it, _] = first_.try_emplace(key, param.shape(), 0.0);
        Tensor& u = it->second;
        for (std::size_t i = 0; i < param.size(); ++i) {
          u[i] = cfg_.momentum * u[i] + g[i];
          param[i] -= lr * u[i];
        }
      } else {
        auto [mit, _m] = first_.try_emplace(key, param.shape(), 0.0);
        auto [vit, _v] = second_.try_emplace(key, param.shape(), 0.0);
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        for (std::size_t i = 0; i < param.size(); ++i) {
          m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
          v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
          param[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.epsilon);
        }
      }
    }
  }
}

}  // namespace matxfer
