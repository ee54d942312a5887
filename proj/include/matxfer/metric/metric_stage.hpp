#pragma once

#include <cstdint>
#include <vector>

#include "matxfer/learning/optimizer.hpp"
#include "matxfer/metric/encoder.hpp"
#include "matxfer/metric/triplets.hpp"

namespace matxfer {

struct RenderedView;

/// One PartSample per (render, visible part), in render order then label order.
std::vector<PartSample> extract_part_samples(const std::vector<const RenderedView*>& renders, int input_size);

struct MetricWeights {
  double alpha1 = 1.0;  // triplet term
  double alpha2 = 1.0;  // similarity term
  double margin = 0.3;

  void validate() const;
};

/// mean over triples of max(0, |f_r - f_a|^2 - |f_r - f_b|^2 + margin).
/// An empty triple list gives 0 and a warning.
ad::Var triplet_loss(const ad::Var& features, const std::vector<ImageTriplet>& triples, double margin);

/// -mean log(s_ra / (s_ra + s_rb)) with s_xy = 1 / (1 + |f_x - f_y|^2).
/// An empty triple list gives 0 and a warning.
ad::Var similarity_loss(const ad::Var& features, const std::vector<ImageTriplet>& triples);

ad::Var metric_loss(const ad::Var& features, const std::vector<ImageTriplet>& triples, const MetricWeights& w);

struct MetricTrainConfig {
  std::size_t steps = 2000;
  std::size_t triplet_count = 4000;  // size of the pre-sampled reference set
  std::uint64_t seed = 0;
};

struct MetricTrainResult {
  Model encoder;
  std::vector<double> loss_trace;
  std::vector<MaterialTriplet> reference_triplets;
};

/// Each step draws batch_size/3 reference triplets (at least one) and one
/// sample per member material, then trains on every realized triple.
MetricTrainResult train_metric_stage(const std::vector<Material>& library, const DistanceMatrix& d,
                                     const std::vector<PartSample>& samples, const EncoderConfig& enc,
                                     const Model& init, const MetricWeights& weights, const OptimizerConfig& opt,
                                     const MetricTrainConfig& cfg);

}  // namespace matxfer
