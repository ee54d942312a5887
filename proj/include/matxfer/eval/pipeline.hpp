#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "matxfer/common/config.hpp"
#include "matxfer/eval/metrics.hpp"
#include "matxfer/predictor/predictor.hpp"
#include "matxfer/synth/dataset.hpp"
#include "matxfer/transfer/transfer.hpp"
#include "matxfer/translation/translator.hpp"

namespace matxfer {

/// How the pretrained predictor is obtained.
///   cat_mat      category + material cross-entropy, encoder trained jointly
///   cat_mat_dis  adds the perceptual distance term
///   full         metric pretraining first, then all classification terms
///                with the encoder at full_encoder_lr_scale
enum class PredictorProtocol { cat_mat, cat_mat_dis, full };

std::string to_string(PredictorProtocol p);
PredictorProtocol parse_predictor_protocol(const std::string& s);

/// Every setting of a desk-scale run. Stage seeds are derived from the run
/// seed, so a (config, seed) pair fixes every result.
struct PipelineConfig {
  DatasetSpec dataset;
  EncoderConfig encoder;

  OptimizerConfig metric_opt;
  MetricWeights metric_weights;
  std::size_t metric_steps = 1000;
  std::size_t triplet_count = 4000;

  OptimizerConfig classifier_opt;
  ClassWeights class_weights;
  std::size_t classifier_steps = 1500;
  double full_encoder_lr_scale = 0.1;
  PredictorProtocol protocol = PredictorProtocol::cat_mat_dis;

  TranslatorConfig translator;
  TranslationWeights translation_weights;
  OptimizerConfig translator_opt;
  std::size_t translator_steps = 800;

  TransferConfig transfer;
  OptimizerConfig finetune_opt;
  FineTuneConfig finetune;
  int train_pairs_per_shape = 4;
  int test_pairs_per_shape = 16;

  PipelineConfig();

  void validate() const;
  Config to_config() const;
  /// Unknown keys are rejected; missing keys keep their defaults.
  static PipelineConfig from_config(const Config& c);
  std::string fingerprint() const { return to_config().fingerprint(); }
};

// -- stages -------------------------------------------------------------------

/// Part samples of the training and test shapes at the encoder input size.
struct SampleSplit {
  std::vector<PartSample> train, test;
};
SampleSplit split_samples(const ToyDataset& ds, const EncoderConfig& enc);

/// Fresh encoder + heads; every Table 1 setting starts from this model.
Model initial_predictor(const ToyDataset& ds, const PipelineConfig& cfg, std::uint64_t seed);

/// Metric-stage encoder trained from the encoder blocks of `init`.
Model train_metric(const ToyDataset& ds, const std::vector<PartSample>& train, const PipelineConfig& cfg,
                   const Model& init, std::uint64_t seed);

/// Encoder + heads trained by `protocol` starting from `init`.
ClassifierTrainResult train_predictor(const ToyDataset& ds, const SampleSplit& samples, const PipelineConfig& cfg,
                                      PredictorProtocol protocol, const Model& init, std::uint64_t seed);

TranslatorTrainResult train_translator_stage(const ToyDataset& ds, const PipelineConfig& cfg, std::uint64_t seed);

/// Translated pairs: each shape of `shapes` is paired `per_shape` times with a
/// random render of a different shape from `exemplar_shapes`, at a random view.
std::vector<TranslatedPair> make_translated_pairs(const ToyDataset& ds, const PipelineConfig& cfg,
                                                  const std::vector<int>& shapes,
                                                  const std::vector<int>& exemplar_shapes, int per_shape,
                                                  const Model& translator, const Model& pretrained,
                                                  std::uint64_t seed);

// -- ablations ----------------------------------------------------------------

struct MetricTriple {
  double mat_acc = 0.0, cat_acc = 0.0, mat_dis = 0.0;
};

/// Component-wise median; even counts average the middle two.
MetricTriple median_metrics(const std::vector<MetricsReport>& reports);

inline constexpr std::array<PredictorProtocol, 3> kTable1Settings{PredictorProtocol::cat_mat,
                                                                  PredictorProtocol::cat_mat_dis,
                                                                  PredictorProtocol::full};

struct Table1Result {
  std::vector<std::uint64_t> seeds;
  std::vector<std::array<MetricsReport, 3>> runs;  // per seed, in kTable1Settings order
  std::array<MetricTriple, 3> median;
  std::size_t train_patches = 0;  // smallest over seeds
  bool dis_ordered = false;       // Mat-dis strictly decreasing cat_mat -> full
  bool acc_ordered = false;       // Mat-acc strictly increasing cat_mat -> full
  bool degenerate = false;        // every setting gave identical medians
  std::string note;
};

Table1Result run_ablation_table1(const PipelineConfig& cfg, const std::vector<std::uint64_t>& seeds);

enum class Table2Row { no_finetune, finetune, finetune_consistency };
inline constexpr std::array<const char*, 3> kTable2RowNames{"no_finetune", "finetune", "finetune_lc"};

struct Table2Run {
  // [row][pair]; pair 0 is the exemplar pair (P_c, P^_s), 1 the projection pair (O^_c, O_s).
  std::array<std::array<MetricsReport, 2>, 3> reports;
};

struct Table2Result {
  std::vector<std::uint64_t> seeds;
  std::vector<Table2Run> runs;
  std::array<std::array<MetricTriple, 2>, 3> median;
  bool finetune_improves_exemplar = false;
  bool finetune_improves_projection = false;
  bool consistency_improves_projection = false;
};

Table2Result run_ablation_table2(const PipelineConfig& cfg, const std::vector<std::uint64_t>& seeds);

/// True when `after` beats `before` on all three metrics (accuracies up, distance down).
bool improves_all(const MetricTriple& before, const MetricTriple& after);

// -- reports ------------------------------------------------------------------

/// Ordered key-value report. text() gives "key: value" lines and json() the
/// same entries as a JSON object; both embed the config fingerprint and seed,
/// so equal inputs produce equal bytes.
class Report {
 public:
  Report(std::string kind, std::string fingerprint, std::uint64_t seed);

  void add(const std::string& key, const std::string& value);
  void add(const std::string& key, double value);
  void add(const std::string& key, std::size_t value);
  void add_metrics(const std::string& prefix, const MetricsReport& m);
  void add_metrics(const std::string& prefix, const MetricTriple& m);

  std::string text() const;
  std::string json() const;
  /// Writes `path` (text) and `path` + ".json".
  void save(const std::filesystem::path& path) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

Report table1_report(const Table1Result& r, const PipelineConfig& cfg);
Report table2_report(const Table2Result& r, const PipelineConfig& cfg);

}  // namespace matxfer
