#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "matxfer/eval/metrics.hpp"
#include "matxfer/learning/optimizer.hpp"
#include "matxfer/material/library.hpp"
#include "matxfer/metric/encoder.hpp"
#include "matxfer/metric/metric_stage.hpp"

namespace matxfer {

/// Linear category (embedding -> 5) and material (embedding -> n) heads,
/// blocks "head.cat" and "head.mat".
Model init_heads(const EncoderConfig& enc, std::size_t n_materials, Rng& rng);

struct HeadProbs {
  ad::Var category;  // [N, 5], rows sum to 1
  ad::Var material;  // [N, n]
};

/// Softmax outputs of encoder + heads on a batch [N, 4, S, S].
HeadProbs forward_probs(const ParamVars& p, const EncoderConfig& enc, const Tensor& batch);

struct MaterialPrediction {
  std::array<double, kCategoryCount> category{};
  std::vector<double> material;

  /// Most probable category, then the most probable material inside it
  /// (ties to the lowest index). The pair is always library-consistent.
  Category top_category() const;
  int top_material(const std::vector<Material>& library) const;
};

MaterialPrediction predict(const ColorImage& color, const std::vector<unsigned char>& part_mask, const Model& model,
                           const EncoderConfig& enc);
std::vector<MaterialPrediction> predict_samples(const std::vector<PartSample>& samples, const Model& model,
                                                const EncoderConfig& enc, std::size_t chunk = 64);

/// mean_i -log(probs[i][truth_i]); probabilities below 1e-12 are clamped
/// (and a warning is logged).
ad::Var cross_entropy(const ad::Var& probs, const std::vector<std::size_t>& truth);

/// mean_i sum_j probs[i][j] * D[j][gt_i]: expected perceptual distance to the truth.
ad::Var distance_loss(const ad::Var& probs, const std::vector<std::size_t>& gt, const DistanceMatrix& d);

/// Same for two soft predictions: mean_i p_i^T D q_i (reduces to the above when q is one-hot).
ad::Var soft_distance_loss(const ad::Var& p, const ad::Var& q, const DistanceMatrix& d);

struct ClassWeights {
  double alpha3 = 0.5;  // category cross-entropy
  double alpha4 = 1.0;  // material cross-entropy
  double alpha5 = 10.0; // perceptual distance term

  void validate() const;
};

ad::Var classification_loss(const HeadProbs& probs, const std::vector<std::size_t>& gt_category,
                            const std::vector<std::size_t>& gt_material, const DistanceMatrix& d,
                            const ClassWeights& w);

MetricsReport evaluate_samples(const std::vector<PartSample>& samples, const Model& model, const EncoderConfig& enc,
                               const std::vector<Material>& library, const DistanceMatrix& d);

struct ClassifierTrainConfig {
  std::size_t steps = 1500;
  double encoder_lr_scale = 0.1;  // 1 trains encoder and heads jointly at the same rate
  std::size_t eval_every = 0;     // 0: evaluate only at the end
  std::uint64_t seed = 0;
};

struct ClassifierTrainResult {
  Model model;  // encoder + heads
  std::vector<double> loss_trace;
  std::vector<std::pair<std::size_t, MetricsReport>> validation;  // (step, metrics)
};

ClassifierTrainResult train_classifier_stage(const Model& init, const std::vector<PartSample>& train,
                                             const std::vector<PartSample>& validation,
                                             const std::vector<Material>& library, const DistanceMatrix& d,
                                             const EncoderConfig& enc, const ClassWeights& weights,
                                             const OptimizerConfig& opt, const ClassifierTrainConfig& cfg);

/// Text dump: "part top-category top-material p0 p1 ..." with 6 significant digits.
std::string format_predictions(const std::vector<std::pair<int, MaterialPrediction>>& parts,
                               const std::vector<Material>& library);

}  // namespace matxfer
