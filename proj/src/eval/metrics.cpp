#include "matxfer/eval/metrics.hpp"

#include "matxfer/common/errors.hpp"

namespace matxfer {

MetricsReport score_outcomes(const std::vector<PartOutcome>& outcomes, const DistanceMatrix& d) {
  require(!outcomes.empty(), "metrics need at least one part");
  MetricsReport r;
  double dis = 0.0;
  for (const auto& o : outcomes) {
    require(o.pred_material >= 0 && static_cast<std::size_t>(o.pred_material) < d.n && o.gt_material >= 0 &&
                static_cast<std::size_t>(o.gt_material) < d.n,
            "metrics: material id out of range");
    r.mat_correct += o.pred_material == o.gt_material;
    r.cat_correct += o.pred_category == o.gt_category;
    dis += d(o.pred_material, o.gt_material);
  }
  r.n_parts = outcomes.size();
  r.mat_acc = static_cast<double>(r.mat_correct) / static_cast<double>(r.n_parts);
  r.cat_acc = static_cast<double>(r.cat_correct) / static_cast<double>(r.n_parts);
  r.mat_dis = dis / static_cast<double>(r.n_parts);
  return r;
}

MetricsReport compute_metrics(const std::vector<PartMaterialAssignment>& predicted,
                              const std::vector<PartMaterialAssignment>& truth, const DistanceMatrix& d) {
  require(predicted.size() == truth.size(), "metrics: prediction and ground-truth counts differ");
  std::vector<PartOutcome> outcomes;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    require(predicted[i].parts.size() == truth[i].parts.size(), "metrics: part sets differ for item " + std::to_string(i));
    for (const auto& [label, gt] : truth[i].parts) {
      const auto it = predicted[i].parts.find(label);
      require(it != predicted[i].parts.end(), "metrics: part sets differ for item " + std::to_string(i));
      outcomes.push_back({it->second.material, it->second.category, gt.material, gt.category});
    }
  }
  return score_outcomes(outcomes, d);
}

}  // namespace matxfer
