#include "matxfer/metric/metric_stage.hpp"

#include <algorithm>
#include <map>

#include "matxfer/common/errors.hpp"
#include "matxfer/common/log.hpp"
#include "matxfer/learning/train.hpp"
#include "matxfer/synth/dataset.hpp"

namespace matxfer {
namespace {

using Pairs = std::vector<std::pair<std::size_t, std::size_t>>;

void split_pairs(const std::vector<ImageTriplet>& triples, Pairs& ra, Pairs& rb) {
  for (const auto& t : triples) {
    ra.emplace_back(t.r, t.a);
    rb.emplace_back(t.r, t.b);
  }
}

}  // namespace

std::vector<PartSample> extract_part_samples(const std::vector<const RenderedView*>& renders, int input_size) {
  std::vector<PartSample> out;
  for (std::size_t i = 0; i < renders.size(); ++i) {
    const auto& r = *renders[i];
    for (int l : present_labels(r.image.labels)) {
      const auto it = r.assignment.parts.find(l);
      require(it != r.assignment.parts.end(), "render has a part without ground truth");
      out.push_back({part_input(r.image.color, label_mask(r.image.labels, l), input_size), it->second.material,
                     it->second.category, l, static_cast<int>(i)});
    }
  }
  return out;
}

void MetricWeights::validate() const {
  require(alpha1 >= 0.0 && alpha2 >= 0.0, "metric weights must be >= 0");
  require(margin > 0.0, "triplet margin must be > 0");
}

ad::Var triplet_loss(const ad::Var& features, const std::vector<ImageTriplet>& triples, double margin) {
  if (triples.empty()) {
    log::warn("triplet loss on an empty triple set; contributing 0");
    return ad::constant(Tensor::scalar(0.0));
  }
  Pairs ra, rb;
  split_pairs(triples, ra, rb);
  const ad::Var hinge = ad::add_scalar(ad::sub(ad::pair_sq_dists(features, ra), ad::pair_sq_dists(features, rb)), margin);
  return ad::mean(ad::relu(hinge));
}

ad::Var similarity_loss(const ad::Var& features, const std::vector<ImageTriplet>& triples) {
  if (triples.empty()) {
    log::warn("similarity loss on an empty triple set; contributing 0");
    return ad::constant(Tensor::scalar(0.0));
  }
  Pairs ra, rb;
  split_pairs(triples, ra, rb);
  // -log(s_ra / (s_ra + s_rb)) = log(1 + (1 + d_ra) / (1 + d_rb))
  const ad::Var ratio =
      ad::div(ad::add_scalar(ad::pair_sq_dists(features, ra), 1.0), ad::add_scalar(ad::pair_sq_dists(features, rb), 1.0));
  return ad::mean(ad::log(ad::add_scalar(ratio, 1.0)));
}

ad::Var metric_loss(const ad::Var& features, const std::vector<ImageTriplet>& triples, const MetricWeights& w) {
  std::vector<ad::Var> terms;
  if (w.alpha1 != 0.0) terms.push_back(ad::mul_scalar(triplet_loss(features, triples, w.margin), w.alpha1));
  if (w.alpha2 != 0.0) terms.push_back(ad::mul_scalar(similarity_loss(features, triples), w.alpha2));
  if (terms.empty()) return ad::constant(Tensor::scalar(0.0));
  return ad::add_all(terms);
}

MetricTrainResult train_metric_stage(const std::vector<Material>& library, const DistanceMatrix& d,
                                     const std::vector<PartSample>& samples, const EncoderConfig& enc,
                                     const Model& init, const MetricWeights& weights, const OptimizerConfig& opt,
                                     const MetricTrainConfig& cfg) {
  weights.validate();
  require(d.n == library.size(), "metric stage: distance matrix does not match the library");
  std::map<int, std::vector<std::size_t>> by_material;
  for (std::size_t i = 0; i < samples.size(); ++i) by_material[samples[i].material].push_back(i);

  // Reference set restricted to triplets whose three materials have samples.
  std::vector<MaterialTriplet> usable;
  for (const auto& t : admissible_triplets(d, categories_of(library)))
    if (by_material.count(t.r) && by_material.count(t.a) && by_material.count(t.b)) usable.push_back(t);
  if (usable.empty()) throw SamplingError("metric stage: no admissible triplet has samples for all three materials");
  std::vector<MaterialTriplet> am;
  {
    Rng rng(derive_seed(cfg.seed, 1));
    for (std::size_t i = 0; i < std::min(cfg.triplet_count, usable.size()); ++i)
      std::swap(usable[i], usable[i + rng.index(usable.size() - i)]);
    am.assign(usable.begin(), usable.begin() + static_cast<long>(std::min(cfg.triplet_count, usable.size())));
    std::sort(am.begin(), am.end());
  }

  const std::size_t per_batch = std::max<std::size_t>(1, opt.batch_size / 3);
  const StepLossFn step_loss = [&](const ParamVars& p, std::size_t, Rng& rng) {
    std::vector<const PartSample*> batch;
    std::vector<int> mats;
    for (std::size_t k = 0; k < per_batch; ++k) {
      const auto& t = am[rng.index(am.size())];
      for (int m : {t.r, t.a, t.b}) {
        const auto& pool = by_material.at(m);
        batch.push_back(&samples[pool[rng.index(pool.size())]]);
        mats.push_back(m);
      }
    }
    const ad::Var f = encode(p, enc, batch_inputs(batch));
    return metric_loss(f, filter_batch_triplets(mats, am), weights);
  };
  if (cfg.steps == 0) return {init, {}, am};
  auto r = train_steps(init, step_loss, opt, cfg.steps, derive_seed(cfg.seed, 2));
  return {std::move(r.model), std::move(r.loss_trace), std::move(am)};
}

}  // namespace matxfer
