#include "matxfer/learning/model.hpp"

#include <algorithm>

#include "matxfer/common/errors.hpp"

namespace matxfer {

ParamBlock& ParamBlock::add(const std::string& tensor_name, Tensor value) {
  require(!has(tensor_name), "duplicate tensor '" + tensor_name + "' in block '" + name_ + "'");
  tensors_.emplace_back(tensor_name, std::move(value));
  return *this;
}

bool ParamBlock::has(const std::string& tensor_name) const {
  return std::any_of(tensors_.begin(), tensors_.end(), [&](const auto& t) { return t.first == tensor_name; });
}

const Tensor& ParamBlock::tensor(const std::string& tensor_name) const {
  for (const auto& [n, t] : tensors_)
    if (n == tensor_name) return t;
  throw ValidationError("block '" + name_ + "' has no tensor '" + tensor_name + "'");
}

Tensor& ParamBlock::tensor(const std::string& tensor_name) {
  return const_cast<Tensor&>(static_cast<const ParamBlock&>(*this).tensor(tensor_name));
}

Model& Model::add(ParamBlock block) {
  require(!has(block.name()), "duplicate parameter block '" + block.name() + "'");
  blocks_.push_back(std::move(block));
  return *this;
}

Model& Model::merge(const Model& other) {
  for (const auto& b : other.blocks()) add(b);
  return *this;
}

bool Model::has(const std::string& name) const {
  return std::any_of(blocks_.begin(), blocks_.end(), [&](const ParamBlock& b) { return b.name() == name; });
}

const ParamBlock& Model::block(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name() == name) return b;
  throw ValidationError("model has no parameter block '" + name + "'");
}

ParamBlock& Model::block(const std::string& name) {
  return const_cast<ParamBlock&>(static_cast<const Model&>(*this).block(name));
}

Model Model::subset(const std::string& prefix) const {
  Model out;
  for (const auto& b : blocks_)
    if (b.name().rfind(prefix, 0) == 0) out.add(b);
  return out;
}

void Model::assign_from(const Model& other) {
  for (const auto& b : other.blocks()) {
    ParamBlock& mine = block(b.name());
    require(mine.trainable() == b.trainable(), "assign_from: trainable flag mismatch on '" + b.name() + "'");
    for (const auto& [n, t] : b.tensors()) {
      require(mine.tensor(n).shape() == t.shape(), "assign_from: shape mismatch on " + param_key(b.name(), n));
      mine.tensor(n) = t;
    }
  }
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks_)
    for (const auto& [_, t] : b.tensors()) n += t.size();
  return n;
}

bool Model::all_finite() const {
  for (const auto& b : blocks_)
    for (const auto& [_, t] : b.tensors())
      if (!t.all_finite()) return false;
  return true;
}

ParamVars::ParamVars(const Model& model) { bind(model); }

ParamVars ParamVars::frozen(const Model& model) {
  ParamVars v;
  v.bind(model, false);
  return v;
}

void ParamVars::bind(const Model& model, bool track_gradients) {
  for (const auto& b : model.blocks())
    for (const auto& [n, t] : b.tensors()) {
      const std::string key = param_key(b.name(), n);
      require(!vars_.count(key), "parameter '" + key + "' bound twice");
      vars_.emplace(key, ad::leaf(t, track_gradients && b.trainable()));
    }
}

const ad::Var& ParamVars::operator()(const std::string& block, const std::string& tensor) const {
  return get(param_key(block, tensor));
}

const ad::Var& ParamVars::get(const std::string& key) const {
  auto it = vars_.find(key);
  if (it == vars_.end()) throw ValidationError("unbound parameter '" + key + "'");
  return it->second;
}

Gradients collect_gradients(const Model& model, const ParamVars& vars) {
  Gradients out;
  for (const auto& b : model.blocks()) {
    if (!b.trainable()) continue;
    for (const auto& [n, t] : b.tensors()) {
      const std::string key = param_key(b.name(), n);
      out.emplace(key, ad::grad_of(vars.get(key)));
    }
  }
  return out;
}

}  // namespace matxfer
