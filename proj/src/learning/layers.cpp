#include "matxfer/learning/layers.hpp"

#include <cmath>

#include "matxfer/common/errors.hpp"

namespace matxfer {
namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

ParamBlock make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool trainable) {
  require(in > 0 && out > 0, "linear layer dimensions must be positive");
  ParamBlock b(name, trainable);
  b.add("weight", uniform_tensor({out, in}, std::sqrt(6.0 / static_cast<double>(in)), rng));
  b.add("bias", Tensor({out}, 0.0));
  return b;
}

ParamBlock make_conv(const std::string& name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                     Rng& rng, bool trainable) {
  require(in_channels > 0 && out_channels > 0 && kernel % 2 == 1, "invalid conv layer shape");
  const double fan_in = static_cast<double>(in_channels * kernel * kernel);
  ParamBlock b(name, trainable);
  b.add("weight", uniform_tensor({out_channels, in_channels, kernel, kernel}, std::sqrt(6.0 / fan_in), rng));
  b.add("bias", Tensor({out_channels}, 0.0));
  return b;
}

ad::Var apply_linear(const ParamVars& p, const std::string& block, const ad::Var& x) {
  return ad::linear(x, p(block, "weight"), p(block, "bias"));
}

ad::Var apply_conv(const ParamVars& p, const std::string& block, const ad::Var& x) {
  return ad::conv2d(x, p(block, "weight"), p(block, "bias"));
}

Network::Network(Shape input_signature, std::vector<LayerSpec> layers)
    : signature_(std::move(input_signature)), layers_(std::move(layers)) {}

Model Network::init(Rng& rng, bool trainable) const {
  Model m;
  for (const auto& l : layers_) {
    if (l.kind == LayerSpec::Kind::linear) m.add(make_linear(l.block, l.in, l.out, rng, trainable));
    if (l.kind == LayerSpec::Kind::conv) m.add(make_conv(l.block, l.in, l.out, l.kernel, rng, trainable));
  }
  return m;
}

void Network::check_input(const Shape& shape) const {
  bool ok = shape.size() == signature_.size();
  for (std::size_t i = 0; ok && i < shape.size(); ++i) ok = signature_[i] == 0 || signature_[i] == shape[i];
  if (!ok) throw ValidationError("input " + shape_string(shape) + " does not match signature " + shape_string(signature_));
}

ad::Var Network::apply(const ParamVars& p, const ad::Var& x) const {
  check_input(x->shape());
  ad::Var h = x;
  for (const auto& l : layers_) {
    switch (l.kind) {
      case LayerSpec::Kind::identity: break;
      case LayerSpec::Kind::linear: h = apply_linear(p, l.block, h); break;
      case LayerSpec::Kind::conv: h = apply_conv(p, l.block, h); break;
      case LayerSpec::Kind::relu: h = ad::relu(h); break;
      case LayerSpec::Kind::leaky_relu: h = ad::leaky_relu(h, l.slope); break;
      case LayerSpec::Kind::tanh: h = ad::tanh(h); break;
      case LayerSpec::Kind::avg_pool: h = ad::avg_pool2(h); break;
    }
  }
  return h;
}

Tensor forward(const Network& net, const Model& params, const Tensor& input) {
  net.check_input(input.shape());
  const ParamVars vars = ParamVars::frozen(params);
  Tensor out = net.apply(vars, ad::constant(input))->value;
  if (!out.all_finite()) throw std::runtime_error("forward produced non-finite output");
  return out;
}

}  // namespace matxfer
