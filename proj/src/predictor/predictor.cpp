#include "matxfer/predictor/predictor.hpp"

#include <algorithm>
#include <cstdio>

#include "matxfer/common/errors.hpp"
#include "matxfer/common/log.hpp"
#include "matxfer/learning/layers.hpp"
#include "matxfer/learning/train.hpp"

namespace matxfer {
namespace {

constexpr double kProbFloor = 1e-12;

std::size_t argmax(const double* v, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

MaterialPrediction row_prediction(const Tensor& cat, const Tensor& mat, std::size_t i) {
  MaterialPrediction p;
  const std::size_t n = mat.dim(1);
  for (std::size_t c = 0; c < kCategoryCount; ++c) p.category[c] = cat.at(i, c);
  p.material.assign(mat.vec().begin() + static_cast<long>(i * n), mat.vec().begin() + static_cast<long>((i + 1) * n));
  return p;
}

}  // namespace

Model init_heads(const EncoderConfig& enc, std::size_t n_materials, Rng& rng) {
  require(n_materials >= 1, "material head needs at least one material");
  Model m;
  m.add(make_linear("head.cat", static_cast<std::size_t>(enc.embedding), kCategoryCount, rng));
  m.add(make_linear("head.mat", static_cast<std::size_t>(enc.embedding), n_materials, rng));
  return m;
}

HeadProbs forward_probs(const ParamVars& p, const EncoderConfig& enc, const Tensor& batch) {
  const ad::Var f = encode(p, enc, batch);
  return {ad::softmax_rows(apply_linear(p, "head.cat", f)), ad::softmax_rows(apply_linear(p, "head.mat", f))};
}

Category MaterialPrediction::top_category() const {
  return category_from_index(argmax(category.data(), kCategoryCount));
}

int MaterialPrediction::top_material(const std::vector<Material>& library) const {
  require(material.size() == library.size(), "prediction size does not match the library");
  const Category c = top_category();
  int best = -1;
  for (const auto& m : library)
    if (m.category == c && (best < 0 || material[m.id] > material[best])) best = m.id;
  // A category without members cannot win a library-consistent decode; fall back to the global argmax.
  if (best < 0) best = static_cast<int>(argmax(material.data(), material.size()));
  return best;
}

MaterialPrediction predict(const ColorImage& color, const std::vector<unsigned char>& part_mask, const Model& model,
                           const EncoderConfig& enc) {
  require(mask_area(part_mask) > 0, "predict: part mask is empty");
  PartSample s{part_input(color, part_mask, enc.input_size)};
  return predict_samples({s}, model, enc).front();
}

std::vector<MaterialPrediction> predict_samples(const std::vector<PartSample>& samples, const Model& model,
                                                const EncoderConfig& enc, std::size_t chunk) {
  const ParamVars vars = ParamVars::frozen(model);
  std::vector<MaterialPrediction> out;
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    std::vector<const PartSample*> batch;
    for (std::size_t i = start; i < std::min(samples.size(), start + chunk); ++i) batch.push_back(&samples[i]);
    const HeadProbs probs = forward_probs(vars, enc, batch_inputs(batch));
    for (std::size_t i = 0; i < batch.size(); ++i) out.push_back(row_prediction(probs.category->value, probs.material->value, i));
  }
  return out;
}

ad::Var cross_entropy(const ad::Var& probs, const std::vector<std::size_t>& truth) {
  require(probs->value.rank() == 2 && probs->value.dim(0) == truth.size(), "cross_entropy: batch size mismatch");
  for (std::size_t t : truth) require(t < probs->value.dim(1), "cross_entropy: truth index out of range");
  const ad::Var picked = ad::pick(probs, truth);
  for (double v : picked->value.values())
    if (v < kProbFloor) {
      log::warn_once("cross_entropy.clamp", "cross_entropy: truth probability below 1e-12 clamped");
      break;
    }
  return ad::neg(ad::mean(ad::log_clamped(picked, kProbFloor)));
}

ad::Var distance_loss(const ad::Var& probs, const std::vector<std::size_t>& gt, const DistanceMatrix& d) {
  const Tensor& p = probs->value;
  require(p.rank() == 2 && p.dim(0) == gt.size() && p.dim(1) == d.n, "distance_loss: shape mismatch");
  Tensor cols({gt.size(), d.n});
  for (std::size_t i = 0; i < gt.size(); ++i) {
    require(gt[i] < d.n, "distance_loss: ground-truth index out of range");
    for (std::size_t j = 0; j < d.n; ++j) cols.at(i, j) = d(j, gt[i]);
  }
  return ad::mul_scalar(ad::sum(ad::mul(probs, ad::constant(cols))), 1.0 / static_cast<double>(gt.size()));
}

ad::Var soft_distance_loss(const ad::Var& p, const ad::Var& q, const DistanceMatrix& d) {
  require(p->value.shape() == q->value.shape() && p->value.rank() == 2 && p->value.dim(1) == d.n,
          "soft_distance_loss: shape mismatch");
  const ad::Var pd = ad::matmul(p, ad::constant(Tensor({d.n, d.n}, d.values)));
  return ad::mul_scalar(ad::sum(ad::mul(pd, q)), 1.0 / static_cast<double>(p->value.dim(0)));
}

void ClassWeights::validate() const {
  require(alpha3 >= 0.0 && alpha4 >= 0.0 && alpha5 >= 0.0, "classification weights must be >= 0");
}

ad::Var classification_loss(const HeadProbs& probs, const std::vector<std::size_t>& gt_category,
                            const std::vector<std::size_t>& gt_material, const DistanceMatrix& d,
                            const ClassWeights& w) {
  w.validate();
  std::vector<ad::Var> terms;
  if (w.alpha3 != 0.0) terms.push_back(ad::mul_scalar(cross_entropy(probs.category, gt_category), w.alpha3));
  if (w.alpha4 != 0.0) terms.push_back(ad::mul_scalar(cross_entropy(probs.material, gt_material), w.alpha4));
  if (w.alpha5 != 0.0) terms.push_back(ad::mul_scalar(distance_loss(probs.material, gt_material, d), w.alpha5));
  if (terms.empty()) return ad::constant(Tensor::scalar(0.0));
  return ad::add_all(terms);
}

MetricsReport evaluate_samples(const std::vector<PartSample>& samples, const Model& model, const EncoderConfig& enc,
                               const std::vector<Material>& library, const DistanceMatrix& d) {
  const auto preds = predict_samples(samples, model, enc);
  std::vector<PartOutcome> outcomes;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int m = preds[i].top_material(library);
    outcomes.push_back({m, library[m].category, samples[i].material, samples[i].category});
  }
  return score_outcomes(outcomes, d);
}

ClassifierTrainResult train_classifier_stage(const Model& init, const std::vector<PartSample>& train,
                                             const std::vector<PartSample>& validation,
                                             const std::vector<Material>& library, const DistanceMatrix& d,
                                             const EncoderConfig& enc, const ClassWeights& weights,
                                             const OptimizerConfig& opt, const ClassifierTrainConfig& cfg) {
  weights.validate();
  require(!train.empty(), "classifier stage: no training samples");
  require(cfg.encoder_lr_scale >= 0.0, "encoder_lr_scale must be >= 0");
  Optimizer optimizer(opt);
  optimizer.set_lr_scale("enc.", cfg.encoder_lr_scale);

  const StepLossFn step_loss = [&](const ParamVars& p, std::size_t, Rng& rng) {
    std::vector<const PartSample*> batch;
    std::vector<std::size_t> cats, mats;
    for (std::size_t k = 0; k < opt.batch_size; ++k) {
      const auto& s = train[rng.index(train.size())];
      batch.push_back(&s);
      cats.push_back(index_of(s.category));
      mats.push_back(static_cast<std::size_t>(s.material));
    }
    return classification_loss(forward_probs(p, enc, batch_inputs(batch)), cats, mats, d, weights);
  };

  ClassifierTrainResult result;
  result.model = init;
  Rng rng(derive_seed(cfg.seed, 7));
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    result.loss_trace.push_back(train_one_step(result.model, step_loss, optimizer, s, rng));
    if (!validation.empty() && cfg.eval_every > 0 && (s + 1) % cfg.eval_every == 0 && s + 1 < cfg.steps)
      result.validation.emplace_back(s + 1, evaluate_samples(validation, result.model, enc, library, d));
  }
  if (!validation.empty())
    result.validation.emplace_back(cfg.steps, evaluate_samples(validation, result.model, enc, library, d));
  return result;
}

std::string format_predictions(const std::vector<std::pair<int, MaterialPrediction>>& parts,
                               const std::vector<Material>& library) {
  std::string s;
  char buf[32];
  for (const auto& [part, p] : parts) {
    s += std::to_string(part) + " " + std::string(to_string(p.top_category())) + " " +
         std::to_string(p.top_material(library));
    for (double v : p.material) {
      std::snprintf(buf, sizeof buf, " %.6g", v);
      s += buf;
    }
    s += "\n";
  }
  return s;
}

}  // namespace matxfer
