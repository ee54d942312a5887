#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "matxfer/learning/autodiff.hpp"
#include "matxfer/learning/tensor.hpp"

namespace matxfer {

/// A named group of tensors (one layer, typically). The trainable flag is
/// fixed when the block is created.
class ParamBlock {
 public:
  ParamBlock(std::string name, bool trainable) : name_(std::move(name)), trainable_(trainable) {}

  const std::string& name() const { return name_; }
  bool trainable() const { return trainable_; }

  ParamBlock& add(const std::string& tensor_name, Tensor value);
  const Tensor& tensor(const std::string& tensor_name) const;
  Tensor& tensor(const std::string& tensor_name);
  bool has(const std::string& tensor_name) const;

  const std::vector<std::pair<std::string, Tensor>>& tensors() const { return tensors_; }
  std::vector<std::pair<std::string, Tensor>>& tensors() { return tensors_; }

  friend bool operator==(const ParamBlock&, const ParamBlock&) = default;

 private:
  std::string name_;
  bool trainable_;
  std::vector<std::pair<std::string, Tensor>> tensors_;
};

/// Ordered set of parameter blocks with unique names. Value type: copies are deep.
class Model {
 public:
  Model() = default;

  Model& add(ParamBlock block);
  /// Appends all blocks of `other`; names must stay unique.
  Model& merge(const Model& other);

  bool has(const std::string& block) const;
  const ParamBlock& block(const std::string& name) const;
  ParamBlock& block(const std::string& name);
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  std::vector<ParamBlock>& blocks() { return blocks_; }

  /// Sub-model holding only the blocks whose names start with `prefix`.
  Model subset(const std::string& prefix) const;
  /// Overwrites blocks of this model with same-named blocks from `other`.
  void assign_from(const Model& other);

  std::size_t parameter_count() const;
  bool all_finite() const;

  friend bool operator==(const Model&, const Model&) = default;

 private:
  std::vector<ParamBlock> blocks_;
};

/// Full key "block.tensor".
inline std::string param_key(const std::string& block, const std::string& tensor) { return block + "." + tensor; }

/// Graph leaves for every tensor of a model, keyed "block.tensor". Leaves of
/// trainable blocks require gradients; the rest are constants.
class ParamVars {
 public:
  ParamVars() = default;
  explicit ParamVars(const Model& model);
  /// Binds every tensor as a constant (inference: no backward graph is kept).
  static ParamVars frozen(const Model& model);

  const ad::Var& operator()(const std::string& block, const std::string& tensor) const;
  const ad::Var& get(const std::string& key) const;
  bool has(const std::string& key) const { return vars_.count(key) > 0; }
  /// Adds the leaves of another model (for losses spanning several models).
  void bind(const Model& model, bool track_gradients = true);

  const std::map<std::string, ad::Var>& all() const { return vars_; }

 private:
  std::map<std::string, ad::Var> vars_;
};

using Gradients = std::map<std::string, Tensor>;

/// Gradients of every trainable tensor after ad::backward(); zeros when a
/// tensor did not influence the loss.
Gradients collect_gradients(const Model& model, const ParamVars& vars);

}  // namespace matxfer
