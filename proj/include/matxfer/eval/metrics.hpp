#pragma once

#include <cstddef>
#include <vector>

#include "matxfer/material/assignment.hpp"
#include "matxfer/material/library.hpp"

namespace matxfer {

/// Predicted and true labels of one part.
struct PartOutcome {
  int pred_material = 0;
  Category pred_category = Category::leathers;
  int gt_material = 0;
  Category gt_category = Category::leathers;
};

/// Mat-acc and Cat-acc are exact fractions correct/total; Mat-dis is the
/// mean D[pred][gt] over parts. Cat-acc is sometimes called sub-category accuracy.
struct MetricsReport {
  std::size_t n_parts = 0;
  std::size_t mat_correct = 0;
  std::size_t cat_correct = 0;
  double mat_acc = 0.0;
  double cat_acc = 0.0;
  double mat_dis = 0.0;
};

MetricsReport score_outcomes(const std::vector<PartOutcome>& outcomes, const DistanceMatrix& d);

/// Pairs predicted and true assignments part by part; their part sets must match.
MetricsReport compute_metrics(const std::vector<PartMaterialAssignment>& predicted,
                              const std::vector<PartMaterialAssignment>& truth, const DistanceMatrix& d);

}  // namespace matxfer
