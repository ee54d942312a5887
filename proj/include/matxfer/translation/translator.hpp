#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "matxfer/common/config.hpp"
#include "matxfer/common/image.hpp"
#include "matxfer/learning/optimizer.hpp"
#include "matxfer/learning/rng.hpp"
#include "matxfer/translation/correspondence.hpp"

namespace matxfer {

struct ToyDataset;

/// Miniature exemplar-based translator. Inputs are square rasters of side
/// `resolution`; the shared domain and the correlation live at half resolution.
struct TranslatorConfig {
  int resolution = 32;
  int label_count = 9;        // part labels 1..8 plus background 0
  int embed_channels = 16;    // shared-domain feature width
  int hidden_channels = 8;    // first encoder / generator level
  int disc_channels = 16;
  double temperature = 0.05;  // correlation softmax temperature
  double context_bandwidth = 0.5;
  int max_shift = 2;          // pseudo-exemplar translation range (pixels)
  bool coordinates = true;    // append normalized (x, y) planes to the shared-domain encoder inputs
  double recon_threshold = 10.0;  // acceptable mean Lab error for self-translation

  void validate() const;
  int feature_size() const { return resolution / 2; }
  Config to_config() const;
  static TranslatorConfig from_config(const Config& c);
};

/// Loss weights psi1..psi8 in order: color context, perceptual, feature
/// matching, adversarial, label NLL, segmentation context, align, cycle.
struct TranslationWeights {
  std::array<double, 8> psi{1.0, 0.01, 10.0, 10.0, 100.0, 2.0, 1.0, 1.0};

  void validate() const;
};

/// Generator side: shared-domain encoders "tr.seg.*" and "tr.col.*", the
/// synthesis network "tr.gen.*" and the fixed (non-trainable) feature
/// extractors "fx.col.*" and "fx.seg.*" used by the losses.
Model init_translator(const TranslatorConfig& cfg, Rng& rng);
/// Patch discriminator "disc.*".
Model init_discriminator(const TranslatorConfig& cfg, Rng& rng);

enum class Domain { seg, color };

/// Shared-domain embedding [n, C] of a [1, K, H, W] label input (seg) or a
/// [1, 3, H, W] color input; every position is L2-normalized.
ad::Var embed_shared(const ParamVars& p, const TranslatorConfig& cfg, const ad::Var& input, Domain domain);

/// Fixed extractor features, shallow to deep: color gives 3 levels, seg gives 2.
std::vector<ad::Var> extract_features(const ParamVars& p, const ad::Var& image, Domain domain);

/// Everything one forward pass produces for (O_s, P_c).
struct TranslationGraph {
  ad::Var emb_o, emb_p;  // [n, C]
  ad::Var corr_op;       // rows O positions, columns P positions
  ad::Var corr_po;       // reverse direction
  ad::Var warped_color;  // [1, 3, H, W], exemplar color in the O layout (upsampled)
  ad::Var color;         // generator output O^_c, [1, 3, H, W]
  ad::Var seg;           // P^_s distribution, [H*W, K] in the P layout (upsampled)
};

/// o_s: one-hot [1, K, H, W]; p_c: color planes [1, 3, H, W].
TranslationGraph run_translator(const ParamVars& p, const TranslatorConfig& cfg, const Tensor& o_s, const Tensor& p_c);

struct TranslationOutput {
  ColorImage color;    // O^_c
  Tensor seg_probs;    // [H*W, K]
  LabelImage seg;      // argmax of seg_probs
  Tensor correlation;  // corr_op, for audit
};

/// Mean per-pixel Euclidean Lab distance; sizes must match.
double mean_lab_error(const ColorImage& a, const ColorImage& b);

TranslationOutput translate(const LabelImage& o_s, const ColorImage& p_c, const Model& model,
                            const TranslatorConfig& cfg);

// -- loss terms ---------------------------------------------------------------

/// Contextual affinity A = exp((cos - 1) / bandwidth) between positions.
/// Per layer: -log((1/n) sum_i max_j A_ij); layers averaged (uniform weights).
ad::Var contextual_loss(const std::vector<ad::Var>& feat_a, const std::vector<ad::Var>& feat_b, double bandwidth);
/// Mean absolute difference of the deepest features.
ad::Var perceptual_loss(const std::vector<ad::Var>& feat_a, const std::vector<ad::Var>& feat_b);
/// Uniformly weighted mean absolute feature differences over all layers.
ad::Var feature_matching_loss(const std::vector<ad::Var>& feat_a, const std::vector<ad::Var>& feat_b);

struct AdversarialLosses {
  ad::Var d_loss;  // mean relu(1 - D(real)) + mean relu(1 + D(fake))
  ad::Var g_loss;  // -mean D(fake)
};
AdversarialLosses adversarial_losses(const ad::Var& real_scores, const ad::Var& fake_scores);
ad::Var discriminate(const ParamVars& p, const ad::Var& image);

/// Pixel-mean negative log-likelihood of the true labels (probabilities clamped at 1e-12).
ad::Var label_nll(const ad::Var& probs, const LabelImage& truth);
/// Sum over layers of the RMS feature difference.
ad::Var segmentation_context_loss(const std::vector<ad::Var>& feat_a, const std::vector<ad::Var>& feat_b);
/// Mean absolute difference.
ad::Var l1_loss(const ad::Var& a, const ad::Var& b);

/// Random horizontal flip plus integer shift (edge pixels repeat).
struct Distortion {
  bool flip = false;
  int dx = 0, dy = 0;
};
Distortion sample_distortion(Rng& rng, int max_shift);
Tensor apply_distortion(const Tensor& planes, const Distortion& d);

struct TranslationTerms {
  std::array<ad::Var, 8> terms;  // unweighted, psi order

  ad::Var total(const TranslationWeights& w) const;
  std::array<double, 8> values() const;
};

/// One training quadruple: (O_c, O_s) and (P_c, P_s) drawn from the same shape.
struct Quadruple {
  ColorImage o_c;
  LabelImage o_s;
  ColorImage p_c;
  LabelImage p_s;
};

/// Generator-side terms on one quadruple. The discriminator is evaluated
/// with `disc` (its parameters may be frozen constants).
TranslationTerms translation_terms(const ParamVars& p, const ParamVars& disc, const TranslatorConfig& cfg,
                                   const Quadruple& q, const Distortion& distortion);

/// All ordered (variant a != b) pairs of renders of one shape whose views
/// differ by at most `max_view_gap`, for the given shapes.
std::vector<Quadruple> build_quadruples(const ToyDataset& ds, const std::vector<int>& shape_ids, int max_view_gap = 1);

struct TranslatorTrainConfig {
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
};

struct TranslatorTrainResult {
  Model generator;
  Model discriminator;
  std::vector<double> g_trace;  // weighted total generator loss per step (batch mean)
  std::vector<double> d_trace;
  std::vector<std::array<double, 8>> term_trace;
};

/// Alternating generator / discriminator steps (1:1) on random batches of
/// opt.batch_size quadruples.
TranslatorTrainResult train_translator(const Model& generator, const Model& discriminator,
                                       const std::vector<Quadruple>& data, const TranslatorConfig& cfg,
                                       const TranslationWeights& weights, const OptimizerConfig& opt,
                                       const TranslatorTrainConfig& train);

}  // namespace matxfer
