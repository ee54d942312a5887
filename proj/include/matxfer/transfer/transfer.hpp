#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "matxfer/common/config.hpp"
#include "matxfer/predictor/predictor.hpp"
#include "matxfer/synth/dataset.hpp"
#include "matxfer/translation/translator.hpp"

namespace matxfer {

// -- ground truth for the translated color ------------------------------------

struct TranslatedColorTruth {
  PartMaterialAssignment assignment;  // every part of O_s
  std::set<int> matched;              // parts whose label the exemplar also carries
};

/// Matched parts copy the exemplar's material. Unmatched parts take the
/// exemplar material closest under D to their predicted material (ties to
/// the lowest id); `predicted` must cover every unmatched part.
TranslatedColorTruth build_gt_translated_color(const std::vector<int>& o_parts, const PartMaterialAssignment& exemplar,
                                               const std::map<int, int>& predicted, const DistanceMatrix& d,
                                               const std::vector<Material>& library);

// -- exemplar over-segmentation -----------------------------------------------

struct OversegConfig {
  int granularity = 8;            // k-means cluster count
  double position_weight = 8.0;   // Lab units per unit of normalized position
  double merge_distance = 6.0;    // clusters with closer mean Lab colors are merged
  int min_segment_pixels = 4;     // smaller components join their largest neighbor
  int iterations = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Segment ids 1..n on the foreground (mask != 0), 0 elsewhere. Seeded
/// k-means over (Lab, weighted position), similar clusters merged, then
/// split into 4-connected components; ids follow raster order of first pixel.
LabelImage oversegment(const ColorImage& color, const std::vector<unsigned char>& foreground,
                       const OversegConfig& cfg);

struct SubRegion {
  int segment = 0;
  std::vector<unsigned char> mask;
  std::size_t area = 0;
  double weight = 0.0;  // area share within its part
};

/// Part label -> its sub-regions (nonempty segment intersections).
struct SubRegionSet {
  std::map<int, std::vector<SubRegion>> parts;

  std::size_t count() const;
};

SubRegionSet intersect_subregions(const LabelImage& overseg, const LabelImage& translated_labels);

/// Per-pixel material id from part labels and an assignment; -1 on background.
LabelImage material_raster(const LabelImage& labels, const PartMaterialAssignment& assignment);

/// Plurality material under the mask (ties to the lowest id); pixels with
/// negative ids are ignored.
int dominant_material(const std::vector<unsigned char>& mask, const LabelImage& materials);

// -- consistency between the two translated pairs -----------------------------

/// Row `o_row` of the projection-pair predictions against the rows
/// `p_rows` of the exemplar-pair predictions with weights `weights`.
struct MatchedPart {
  int label = 0;
  std::size_t o_row = 0;
  std::vector<std::size_t> p_rows;
  std::vector<double> weights;
};

/// sum over matches of sum_t w_t * p_O^T D p_P,t.
ad::Var consistency_loss(const ad::Var& pred_o, const ad::Var& pred_p, const std::vector<MatchedPart>& matches,
                         const DistanceMatrix& d);

// -- translated training pairs ------------------------------------------------

/// One (projection, exemplar) pair after translation, with encoder inputs.
struct TranslatedPair {
  ColorImage p_c, o_hat_c;
  LabelImage o_s, p_hat_s, overseg;
  SubRegionSet subregions;
  std::vector<int> o_parts;          // labels of O_s, sorted
  std::vector<PartSample> o_samples; // one per o_part, truth from build_gt_translated_color
  std::vector<PartSample> p_samples; // one per sub-region in SubRegionSet order, truth = dominant material
  std::vector<MatchedPart> matches;  // rows index o_samples / p_samples
  std::set<int> gt_matched;          // o_parts with an exemplar-copied truth
};

struct TransferConfig {
  OversegConfig overseg;

  void validate() const;
  Config to_config() const;
  static TransferConfig from_config(const Config& c);
};

/// Translates (shape view, exemplar render) and builds all training truth.
/// `pretrained` supplies the fallback predictions for unmatched parts.
TranslatedPair build_translated_pair(const ToyShape& shape, int view, const RenderedView& exemplar,
                                     const Model& translator, const TranslatorConfig& tcfg, const Model& pretrained,
                                     const EncoderConfig& enc, const std::vector<Material>& library,
                                     const DistanceMatrix& d, const TransferConfig& cfg);

/// Part-level outcomes: projection pair over gt_matched parts, exemplar pair over sub-regions.
struct PairOutcomes {
  std::vector<PartOutcome> projection, exemplar;
};
PairOutcomes evaluate_pairs(const std::vector<TranslatedPair>& pairs, const Model& predictor_o,
                            const Model& predictor_p, const EncoderConfig& enc, const std::vector<Material>& library);

// -- fine-tuning --------------------------------------------------------------

struct FineTuneConfig {
  std::size_t steps = 300;
  std::size_t pairs_per_step = 8;
  double consistency_weight = 1.0;
  double encoder_lr_scale = 0.1;
  ClassWeights weights;
  bool train_projection = true;  // variant-O on (O^_c, O_s)
  bool train_exemplar = true;    // variant-P on (P_c, P^_s)
  std::uint64_t seed = 0;

  void validate() const;
};

struct FineTuneResult {
  Model predictor_o, predictor_p;
  std::vector<double> loss_trace;
};

/// Both variants start from `pretrained`. Each step draws pairs_per_step
/// pairs; the projection side trains on matched parts only, the exemplar
/// side on sub-regions, and the consistency term couples the two.
FineTuneResult fine_tune(const Model& pretrained, const std::vector<TranslatedPair>& pairs,
                         const std::vector<Material>& library, const DistanceMatrix& d, const EncoderConfig& enc,
                         const OptimizerConfig& opt, const FineTuneConfig& cfg);

// -- final assignment and the end-to-end transfer -----------------------------

/// Matched parts (labels with sub-regions) take the weighted vote of their
/// sub-region predictions; other parts take the projection prediction.
PartMaterialAssignment final_assignment(const std::vector<int>& parts, const SubRegionSet& subregions,
                                        const std::vector<MaterialPrediction>& pred_p,
                                        const std::map<int, MaterialPrediction>& pred_o,
                                        const std::vector<Material>& library);

struct TrainedModels {
  EncoderConfig encoder;
  TranslatorConfig translator_config;
  Model translator;
  Model predictor_o, predictor_p;
  std::vector<Material> library;
};

struct TransferAudit {
  int view = 0;
  LabelImage o_s, p_hat_s, overseg;
  ColorImage p_c, o_hat_c;
  SubRegionSet subregions;
  std::map<int, MaterialPrediction> pred_o;
  std::vector<MaterialPrediction> pred_p;
};

struct TransferResult {
  PartMaterialAssignment assignment;
  TransferAudit audit;
};

/// select_pose -> semantic_projection -> translate -> per-pair prediction ->
/// final_assignment. Errors are rethrown with the failing stage prefixed.
TransferResult transfer(const ToyShape& shape, const SegmentedImage& exemplar, const TrainedModels& models,
                        const TransferConfig& cfg);

/// Writes o_s.pgm, p_hat_s.pgm, overseg.pgm, p_c.lab, o_hat_c.lab, their
/// .ppm previews, subregions.txt, predictions.txt and assignment.txt.
void save_audit(const std::filesystem::path& dir, const TransferResult& result, const std::vector<Material>& library);
/// Files save_audit produces; used to check bundle completeness.
std::vector<std::string> audit_inventory();

}  // namespace matxfer
