#include "matxfer/eval/pipeline.hpp"

#include <algorithm>
#include <sstream>

#include "json.hpp"
#include "matxfer/common/errors.hpp"
#include "matxfer/common/raster_io.hpp"
#include "matxfer/learning/rng.hpp"

namespace matxfer {
namespace {

// Stage seed tags; each stage draws from derive_seed(run seed, tag).
constexpr std::uint64_t kInitTag = 11, kTranslatorInitTag = 12, kTrainPairsTag = 13, kTestPairsTag = 14,
                        kClassifierTag = 15, kMetricTag = 16, kTranslatorTrainTag = 17, kFineTuneTag = 18;

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ValidationError("not an integer list: '" + s + "'");
    }
  }
  return out;
}

void put_optimizer(Config& c, const std::string& section, const OptimizerConfig& o) {
  c.set(section, "optimizer", to_string(o.kind));
  c.set(section, "learning_rate", o.learning_rate);
  c.set(section, "momentum", o.momentum);
  c.set(section, "beta1", o.beta1);
  c.set(section, "beta2", o.beta2);
  c.set(section, "epsilon", o.epsilon);
  c.set(section, "batch_size", static_cast<long>(o.batch_size));
}

OptimizerConfig get_optimizer(const Config& c, const std::string& section, OptimizerConfig o) {
  o.kind = parse_optimizer_kind(c.get_string(section, "optimizer", to_string(o.kind)));
  o.learning_rate = c.get_double(section, "learning_rate", o.learning_rate);
  o.momentum = c.get_double(section, "momentum", o.momentum);
  o.beta1 = c.get_double(section, "beta1", o.beta1);
  o.beta2 = c.get_double(section, "beta2", o.beta2);
  o.epsilon = c.get_double(section, "epsilon", o.epsilon);
  o.batch_size = static_cast<std::size_t>(c.get_long(section, "batch_size", static_cast<long>(o.batch_size)));
  return o;
}

std::size_t get_count(const Config& c, const std::string& section, const std::string& key, std::size_t fallback) {
  const long v = c.get_long(section, key, static_cast<long>(fallback));
  require(v >= 0, section + "." + key + " must be >= 0");
  return static_cast<std::size_t>(v);
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string to_string(PredictorProtocol p) {
  switch (p) {
    case PredictorProtocol::cat_mat: return "cat_mat";
    case PredictorProtocol::cat_mat_dis: return "cat_mat_dis";
    case PredictorProtocol::full: return "full";
  }
  return "?";
}

PredictorProtocol parse_predictor_protocol(const std::string& s) {
  for (auto p : kTable1Settings)
    if (to_string(p) == s) return p;
  throw ValidationError("unknown predictor protocol '" + s + "' (cat_mat, cat_mat_dis, full)");
}

PipelineConfig::PipelineConfig() {
  dataset.shapes.count = 32;
  dataset.shapes.views = 3;
  metric_opt = OptimizerConfig::metric_stage();
  metric_opt.batch_size = 24;
  classifier_opt = OptimizerConfig::classifier_stage();
  classifier_opt.batch_size = 24;
  translator_opt = OptimizerConfig::translation();
  translator_opt.learning_rate = 1e-3;
  finetune_opt = OptimizerConfig::classifier_stage();
  finetune.steps = 200;
  finetune.consistency_weight = 0.01;
}

void PipelineConfig::validate() const {
  dataset.validate();
  encoder.validate();
  metric_opt.validate();
  metric_weights.validate();
  classifier_opt.validate();
  class_weights.validate();
  require(full_encoder_lr_scale >= 0.0, "classifier.full_encoder_lr_scale must be >= 0");
  translator.validate();
  translation_weights.validate();
  translator_opt.validate();
  transfer.validate();
  finetune_opt.validate();
  finetune.validate();
  require(train_pairs_per_shape >= 1 && test_pairs_per_shape >= 1, "pairs per shape must be >= 1");
  require(translator.resolution == dataset.shapes.resolution, "translator and render resolutions differ");
}

Config PipelineConfig::to_config() const {
  Config c = dataset.to_config();
  c.merge(translator.to_config());
  c.merge(transfer.to_config());
  c.set("encoder", "input_size", encoder.input_size);
  c.set("encoder", "channels", join_ints(encoder.channels));
  c.set("encoder", "embedding", encoder.embedding);

  put_optimizer(c, "metric", metric_opt);
  c.set("metric", "alpha1", metric_weights.alpha1);
  c.set("metric", "alpha2", metric_weights.alpha2);
  c.set("metric", "margin", metric_weights.margin);
  c.set("metric", "steps", static_cast<long>(metric_steps));
  c.set("metric", "triplet_count", static_cast<long>(triplet_count));

  put_optimizer(c, "classifier", classifier_opt);
  c.set("classifier", "alpha3", class_weights.alpha3);
  c.set("classifier", "alpha4", class_weights.alpha4);
  c.set("classifier", "alpha5", class_weights.alpha5);
  c.set("classifier", "steps", static_cast<long>(classifier_steps));
  c.set("classifier", "full_encoder_lr_scale", full_encoder_lr_scale);
  c.set("classifier", "protocol", to_string(protocol));

  put_optimizer(c, "translation", translator_opt);
  for (std::size_t i = 0; i < translation_weights.psi.size(); ++i)
    c.set("translation", "psi" + std::to_string(i + 1), translation_weights.psi[i]);
  c.set("translation", "steps", static_cast<long>(translator_steps));

  put_optimizer(c, "finetune", finetune_opt);
  c.set("finetune", "steps", static_cast<long>(finetune.steps));
  c.set("finetune", "pairs_per_step", static_cast<long>(finetune.pairs_per_step));
  c.set("finetune", "consistency_weight", finetune.consistency_weight);
  c.set("finetune", "encoder_lr_scale", finetune.encoder_lr_scale);
  c.set("finetune", "alpha3", finetune.weights.alpha3);
  c.set("finetune", "alpha4", finetune.weights.alpha4);
  c.set("finetune", "alpha5", finetune.weights.alpha5);
  c.set("finetune", "train_pairs_per_shape", train_pairs_per_shape);
  c.set("finetune", "test_pairs_per_shape", test_pairs_per_shape);
  return c;
}

PipelineConfig PipelineConfig::from_config(const Config& c) {
  PipelineConfig p;
  c.check_known(p.to_config());
  p.dataset = DatasetSpec::from_config(c);
  // Dataset defaults differ from the module defaults; keep ours for absent keys.
  p.dataset.shapes.count = c.get_int("shapes", "count", PipelineConfig().dataset.shapes.count);
  p.dataset.shapes.views = c.get_int("shapes", "views", PipelineConfig().dataset.shapes.views);
  p.translator = TranslatorConfig::from_config(c);
  p.transfer = TransferConfig::from_config(c);
  p.encoder.input_size = c.get_int("encoder", "input_size", p.encoder.input_size);
  p.encoder.channels = parse_ints(c.get_string("encoder", "channels", join_ints(p.encoder.channels)));
  p.encoder.embedding = c.get_int("encoder", "embedding", p.encoder.embedding);

  p.metric_opt = get_optimizer(c, "metric", p.metric_opt);
  p.metric_weights.alpha1 = c.get_double("metric", "alpha1", p.metric_weights.alpha1);
  p.metric_weights.alpha2 = c.get_double("metric", "alpha2", p.metric_weights.alpha2);
  p.metric_weights.margin = c.get_double("metric", "margin", p.metric_weights.margin);
  p.metric_steps = get_count(c, "metric", "steps", p.metric_steps);
  p.triplet_count = get_count(c, "metric", "triplet_count", p.triplet_count);

  p.classifier_opt = get_optimizer(c, "classifier", p.classifier_opt);
  p.class_weights.alpha3 = c.get_double("classifier", "alpha3", p.class_weights.alpha3);
  p.class_weights.alpha4 = c.get_double("classifier", "alpha4", p.class_weights.alpha4);
  p.class_weights.alpha5 = c.get_double("classifier", "alpha5", p.class_weights.alpha5);
  p.classifier_steps = get_count(c, "classifier", "steps", p.classifier_steps);
  p.full_encoder_lr_scale = c.get_double("classifier", "full_encoder_lr_scale", p.full_encoder_lr_scale);
  p.protocol = parse_predictor_protocol(c.get_string("classifier", "protocol", to_string(p.protocol)));

  p.translator_opt = get_optimizer(c, "translation", p.translator_opt);
  for (std::size_t i = 0; i < p.translation_weights.psi.size(); ++i)
    p.translation_weights.psi[i] = c.get_double("translation", "psi" + std::to_string(i + 1), p.translation_weights.psi[i]);
  p.translator_steps = get_count(c, "translation", "steps", p.translator_steps);

  p.finetune_opt = get_optimizer(c, "finetune", p.finetune_opt);
  p.finetune.steps = get_count(c, "finetune", "steps", p.finetune.steps);
  p.finetune.pairs_per_step = get_count(c, "finetune", "pairs_per_step", p.finetune.pairs_per_step);
  p.finetune.consistency_weight = c.get_double("finetune", "consistency_weight", p.finetune.consistency_weight);
  p.finetune.encoder_lr_scale = c.get_double("finetune", "encoder_lr_scale", p.finetune.encoder_lr_scale);
  p.finetune.weights.alpha3 = c.get_double("finetune", "alpha3", p.finetune.weights.alpha3);
  p.finetune.weights.alpha4 = c.get_double("finetune", "alpha4", p.finetune.weights.alpha4);
  p.finetune.weights.alpha5 = c.get_double("finetune", "alpha5", p.finetune.weights.alpha5);
  p.train_pairs_per_shape = c.get_int("finetune", "train_pairs_per_shape", p.train_pairs_per_shape);
  p.test_pairs_per_shape = c.get_int("finetune", "test_pairs_per_shape", p.test_pairs_per_shape);
  p.validate();
  return p;
}

// -- stages -------------------------------------------------------------------

SampleSplit split_samples(const ToyDataset& ds, const EncoderConfig& enc) {
  return {extract_part_samples(ds.renders_of(ds.train_shapes), enc.input_size),
          extract_part_samples(ds.renders_of(ds.test_shapes), enc.input_size)};
}

Model initial_predictor(const ToyDataset& ds, const PipelineConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kInitTag));
  Model m = init_encoder(cfg.encoder, rng);
  m.merge(init_heads(cfg.encoder, ds.library.size(), rng));
  return m;
}

Model train_metric(const ToyDataset& ds, const std::vector<PartSample>& train, const PipelineConfig& cfg,
                   const Model& init, std::uint64_t seed) {
  MetricTrainConfig mc;
  mc.steps = cfg.metric_steps;
  mc.triplet_count = cfg.triplet_count;
  mc.seed = derive_seed(seed, kMetricTag);
  return train_metric_stage(ds.library, ds.distances, train, cfg.encoder, init.subset("enc."), cfg.metric_weights,
                            cfg.metric_opt, mc)
      .encoder;
}

ClassifierTrainResult train_predictor(const ToyDataset& ds, const SampleSplit& samples, const PipelineConfig& cfg,
                                      PredictorProtocol protocol, const Model& init, std::uint64_t seed) {
  ClassifierTrainConfig cc;
  cc.steps = cfg.classifier_steps;
  cc.seed = derive_seed(seed, kClassifierTag);
  cc.encoder_lr_scale = 1.0;
  ClassWeights w = cfg.class_weights;
  Model start = init;
  switch (protocol) {
    case PredictorProtocol::cat_mat: w.alpha5 = 0.0; break;
    case PredictorProtocol::cat_mat_dis: break;
    case PredictorProtocol::full:
      start.assign_from(train_metric(ds, samples.train, cfg, init, seed));
      cc.encoder_lr_scale = cfg.full_encoder_lr_scale;
      break;
  }
  return train_classifier_stage(start, samples.train, samples.test, ds.library, ds.distances, cfg.encoder, w,
                                cfg.classifier_opt, cc);
}

TranslatorTrainResult train_translator_stage(const ToyDataset& ds, const PipelineConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kTranslatorInitTag));
  const Model g = init_translator(cfg.translator, rng);
  const Model d = init_discriminator(cfg.translator, rng);
  TranslatorTrainConfig tc;
  tc.steps = cfg.translator_steps;
  tc.seed = derive_seed(seed, kTranslatorTrainTag);
  return train_translator(g, d, build_quadruples(ds, ds.train_shapes), cfg.translator, cfg.translation_weights,
                          cfg.translator_opt, tc);
}

std::vector<TranslatedPair> make_translated_pairs(const ToyDataset& ds, const PipelineConfig& cfg,
                                                  const std::vector<int>& shapes,
                                                  const std::vector<int>& exemplar_shapes, int per_shape,
                                                  const Model& translator, const Model& pretrained,
                                                  std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TranslatedPair> out;
  for (int sid : shapes) {
    std::vector<int> others;
    for (int e : exemplar_shapes)
      if (e != sid) others.push_back(e);
    require(!others.empty(), "no exemplar shape differs from shape " + std::to_string(sid));
    const ToyShape& shape = ds.shape(sid);
    for (int k = 0; k < per_shape; ++k) {
      const auto renders = ds.renders_of({others[rng.index(others.size())]});
      const RenderedView& exemplar = *renders[rng.index(renders.size())];
      const int view = shape.views[rng.index(shape.views.size())];
      out.push_back(build_translated_pair(shape, view, exemplar, translator, cfg.translator, pretrained, cfg.encoder,
                                          ds.library, ds.distances, cfg.transfer));
    }
  }
  return out;
}

// -- ablations ----------------------------------------------------------------

MetricTriple median_metrics(const std::vector<MetricsReport>& reports) {
  require(!reports.empty(), "median of an empty report list");
  std::vector<double> acc, cat, dis;
  for (const auto& r : reports) {
    acc.push_back(r.mat_acc);
    cat.push_back(r.cat_acc);
    dis.push_back(r.mat_dis);
  }
  return {median_of(acc), median_of(cat), median_of(dis)};
}

bool improves_all(const MetricTriple& before, const MetricTriple& after) {
  return after.mat_acc > before.mat_acc && after.cat_acc > before.cat_acc && after.mat_dis < before.mat_dis;
}

Table1Result run_ablation_table1(const PipelineConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  cfg.validate();
  require(!seeds.empty(), "ablation needs at least one seed");
  Table1Result r;
  r.seeds = seeds;
  r.train_patches = SIZE_MAX;
  for (std::uint64_t seed : seeds) {
    const ToyDataset ds = build_dataset(cfg.dataset, seed);
    const SampleSplit samples = split_samples(ds, cfg.encoder);
    r.train_patches = std::min(r.train_patches, samples.train.size());
    const Model init = initial_predictor(ds, cfg, seed);
    std::array<MetricsReport, 3> run;
    for (std::size_t s = 0; s < kTable1Settings.size(); ++s)
      run[s] = train_predictor(ds, samples, cfg, kTable1Settings[s], init, seed).validation.back().second;
    r.runs.push_back(run);
  }
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<MetricsReport> column;
    for (const auto& run : r.runs) column.push_back(run[s]);
    r.median[s] = median_metrics(column);
  }
  const auto& m = r.median;
  r.degenerate = m[0].mat_acc == m[1].mat_acc && m[1].mat_acc == m[2].mat_acc && m[0].mat_dis == m[1].mat_dis &&
                 m[1].mat_dis == m[2].mat_dis;
  if (r.degenerate) {
    r.note = "degenerate: all settings produced identical metrics";
    return r;
  }
  r.dis_ordered = m[2].mat_dis < m[1].mat_dis && m[1].mat_dis < m[0].mat_dis;
  r.acc_ordered = m[0].mat_acc < m[1].mat_acc && m[1].mat_acc < m[2].mat_acc;
  return r;
}

Table2Result run_ablation_table2(const PipelineConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  cfg.validate();
  require(!seeds.empty(), "ablation needs at least one seed");
  Table2Result r;
  r.seeds = seeds;
  for (std::uint64_t seed : seeds) {
    const ToyDataset ds = build_dataset(cfg.dataset, seed);
    const SampleSplit samples = split_samples(ds, cfg.encoder);
    const Model pretrained =
        train_predictor(ds, samples, cfg, cfg.protocol, initial_predictor(ds, cfg, seed), seed).model;
    const Model translator = train_translator_stage(ds, cfg, seed).generator;
    const auto train_pairs = make_translated_pairs(ds, cfg, ds.train_shapes, ds.train_shapes, cfg.train_pairs_per_shape,
                                                   translator, pretrained, derive_seed(seed, kTrainPairsTag));
    const auto test_pairs = make_translated_pairs(ds, cfg, ds.test_shapes, ds.train_shapes, cfg.test_pairs_per_shape,
                                                  translator, pretrained, derive_seed(seed, kTestPairsTag));

    auto score = [&](const Model& o, const Model& p) {
      const PairOutcomes out = evaluate_pairs(test_pairs, o, p, cfg.encoder, ds.library);
      require(!out.exemplar.empty() && !out.projection.empty(),
              "test pairs have no scorable parts (no translated sub-regions or no matched parts); "
              "the translator is likely undertrained");
      return std::array<MetricsReport, 2>{score_outcomes(out.exemplar, ds.distances),
                                          score_outcomes(out.projection, ds.distances)};
    };
    Table2Run run;
    run.reports[0] = score(pretrained, pretrained);
    FineTuneConfig fc = cfg.finetune;
    fc.seed = derive_seed(seed, kFineTuneTag);
    for (int row = 1; row <= 2; ++row) {
      fc.consistency_weight = row == 1 ? 0.0 : cfg.finetune.consistency_weight;
      const FineTuneResult ft =
          fine_tune(pretrained, train_pairs, ds.library, ds.distances, cfg.encoder, cfg.finetune_opt, fc);
      run.reports[row] = score(ft.predictor_o, ft.predictor_p);
    }
    r.runs.push_back(run);
  }
  for (std::size_t row = 0; row < 3; ++row)
    for (std::size_t pair = 0; pair < 2; ++pair) {
      std::vector<MetricsReport> column;
      for (const auto& run : r.runs) column.push_back(run.reports[row][pair]);
      r.median[row][pair] = median_metrics(column);
    }
  r.finetune_improves_exemplar = improves_all(r.median[0][0], r.median[1][0]);
  r.finetune_improves_projection = improves_all(r.median[0][1], r.median[1][1]);
  r.consistency_improves_projection = improves_all(r.median[1][1], r.median[2][1]);
  return r;
}

// -- reports ------------------------------------------------------------------

Report::Report(std::string kind, std::string fingerprint, std::uint64_t seed) {
  add("report", kind);
  add("config_fingerprint", fingerprint);
  add("seed", std::to_string(seed));
}

void Report::add(const std::string& key, const std::string& value) {
  for (const auto& e : entries_) require(e.first != key, "duplicate report key '" + key + "'");
  entries_.emplace_back(key, value);
}

void Report::add(const std::string& key, double value) { add(key, format_real(value)); }

void Report::add(const std::string& key, std::size_t value) { add(key, std::to_string(value)); }

void Report::add_metrics(const std::string& prefix, const MetricsReport& m) {
  add(prefix + ".n_parts", m.n_parts);
  add(prefix + ".mat_correct", m.mat_correct);
  add(prefix + ".cat_correct", m.cat_correct);
  add(prefix + ".mat_acc", m.mat_acc);
  add(prefix + ".cat_acc", m.cat_acc);
  add(prefix + ".mat_dis", m.mat_dis);
}

void Report::add_metrics(const std::string& prefix, const MetricTriple& m) {
  add(prefix + ".mat_acc", m.mat_acc);
  add(prefix + ".cat_acc", m.cat_acc);
  add(prefix + ".mat_dis", m.mat_dis);
}

std::string Report::text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + ": " + v + "\n";
  return out;
}

std::string Report::json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : entries_) {
    // Numbers stay numbers; the fingerprint is hex text and the seed may exceed 2^53.
    const bool keep_text = k == "config_fingerprint" || k == "seed";
    char* end = nullptr;
    const long long n = std::strtoll(v.c_str(), &end, 10);
    const bool integral = !v.empty() && *end == '\0';
    const double d = std::strtod(v.c_str(), &end);
    if (!keep_text && integral)
      j[k] = n;
    else if (!keep_text && !v.empty() && *end == '\0')
      j[k] = d;
    else if (v == "true" || v == "false")
      j[k] = v == "true";
    else
      j[k] = v;
  }
  j["external_scores"] = nullptr;
  return j.dump(2) + "\n";
}

void Report::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  io::write_text(path, text());
  io::write_text(path.string() + ".json", json());
}

Report table1_report(const Table1Result& r, const PipelineConfig& cfg) {
  Report rep("ablate-table1", cfg.fingerprint(), r.seeds.front());
  std::string seeds;
  for (std::size_t i = 0; i < r.seeds.size(); ++i) seeds += (i ? "," : "") + std::to_string(r.seeds[i]);
  rep.add("seeds", seeds);
  rep.add("train_patches", r.train_patches);
  for (std::size_t i = 0; i < r.runs.size(); ++i)
    for (std::size_t s = 0; s < 3; ++s)
      rep.add_metrics("seed" + std::to_string(r.seeds[i]) + "." + to_string(kTable1Settings[s]), r.runs[i][s]);
  for (std::size_t s = 0; s < 3; ++s) rep.add_metrics("median." + to_string(kTable1Settings[s]), r.median[s]);
  rep.add("dis_ordered", std::string(r.dis_ordered ? "true" : "false"));
  rep.add("acc_ordered", std::string(r.acc_ordered ? "true" : "false"));
  rep.add("degenerate", std::string(r.degenerate ? "true" : "false"));
  rep.add("note", r.note);
  return rep;
}

Report table2_report(const Table2Result& r, const PipelineConfig& cfg) {
  Report rep("ablate-table2", cfg.fingerprint(), r.seeds.front());
  std::string seeds;
  for (std::size_t i = 0; i < r.seeds.size(); ++i) seeds += (i ? "," : "") + std::to_string(r.seeds[i]);
  rep.add("seeds", seeds);
  const char* pair_names[2] = {"exemplar_pair", "projection_pair"};
  for (std::size_t i = 0; i < r.runs.size(); ++i)
    for (std::size_t row = 0; row < 3; ++row)
      for (std::size_t pair = 0; pair < 2; ++pair)
        rep.add_metrics("seed" + std::to_string(r.seeds[i]) + "." + kTable2RowNames[row] + "." + pair_names[pair],
                        r.runs[i].reports[row][pair]);
  for (std::size_t row = 0; row < 3; ++row)
    for (std::size_t pair = 0; pair < 2; ++pair)
      rep.add_metrics(std::string("median.") + kTable2RowNames[row] + "." + pair_names[pair], r.median[row][pair]);
  rep.add("finetune_improves_exemplar", std::string(r.finetune_improves_exemplar ? "true" : "false"));
  rep.add("finetune_improves_projection", std::string(r.finetune_improves_projection ? "true" : "false"));
  rep.add("consistency_improves_projection", std::string(r.consistency_improves_projection ? "true" : "false"));
  return rep;
}

}  // namespace matxfer
