#pragma once

#include <string>
#include <vector>

#include "matxfer/learning/model.hpp"
#include "matxfer/learning/rng.hpp"

namespace matxfer {

// Weight initialization: seeded uniform with fan-in scaling,
// U(-sqrt(6/fan_in), +sqrt(6/fan_in)); biases start at zero.
ParamBlock make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool trainable = true);
ParamBlock make_conv(const std::string& name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                     Rng& rng, bool trainable = true);

ad::Var apply_linear(const ParamVars& p, const std::string& block, const ad::Var& x);
ad::Var apply_conv(const ParamVars& p, const std::string& block, const ad::Var& x);

struct LayerSpec {
  enum class Kind { identity, linear, conv, relu, leaky_relu, tanh, avg_pool };
  Kind kind = Kind::identity;
  std::string block;  // parameter block name for linear/conv
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 3;
  double slope = 0.2;
};

/// A feed-forward stack with a declared input signature. Extents of 0 in
/// the signature match any size (batch dimension, typically).
class Network {
 public:
  Network(Shape input_signature, std::vector<LayerSpec> layers);

  const Shape& input_signature() const { return signature_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  Model init(Rng& rng, bool trainable = true) const;
  void check_input(const Shape& shape) const;
  ad::Var apply(const ParamVars& p, const ad::Var& x) const;

 private:
  Shape signature_;
  std::vector<LayerSpec> layers_;
};

/// Inference through a network; throws ValidationError on a signature mismatch.
Tensor forward(const Network& net, const Model& params, const Tensor& input);

}  // namespace matxfer
