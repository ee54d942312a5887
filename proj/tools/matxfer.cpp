// Command-line driver: dataset synthesis, the training stages, transfer,
// evaluation, the two ablations and a result gallery.
//
// Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "matxfer/common/config.hpp"
#include "matxfer/common/errors.hpp"
#include "matxfer/common/log.hpp"
#include "matxfer/common/raster_io.hpp"
#include "matxfer/eval/pipeline.hpp"
#include "matxfer/learning/checkpoint.hpp"
#include "matxfer/synth/render.hpp"

namespace fs = std::filesystem;
using namespace matxfer;

namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 1;
  std::string report_path;
};

PipelineConfig load_config(const Common& common) {
  if (common.config_path.empty()) return PipelineConfig{};
  return PipelineConfig::from_config(Config::load(common.config_path));
}

void emit(const Report& report, const std::string& path) {
  std::cout << report.text();
  if (!path.empty()) report.save(path);
}

void save_model(const fs::path& path, const std::string& schema, std::uint64_t seed, const OptimizerConfig& opt,
                const Model& model) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_checkpoint(path, {schema, seed, opt, model});
}

Model load_model(const fs::path& path, const std::string& schema) {
  const Checkpoint ckpt = load_checkpoint(path);
  require(ckpt.schema == schema, path.string() + ": expected a '" + schema + "' checkpoint, found '" + ckpt.schema + "'");
  return ckpt.model;
}

const std::string kEncoderSchema = "matxfer.encoder.v1";
const std::string kPredictorSchema = "matxfer.predictor.v1";
const std::string kTranslatorSchema = "matxfer.translator.v1";

double head_mean(const std::vector<double>& v, bool tail) {
  if (v.empty()) return 0.0;
  const std::size_t k = std::max<std::size_t>(1, v.size() / 10);
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += tail ? v[v.size() - 1 - i] : v[i];
  return s / static_cast<double>(k);
}

TrainedModels load_models(const fs::path& dir, const PipelineConfig& cfg, const ToyDataset& ds) {
  TrainedModels m;
  m.encoder = cfg.encoder;
  m.translator_config = cfg.translator;
  m.translator = load_model(dir / "translator.ckpt", kTranslatorSchema);
  m.predictor_o = load_model(dir / "predictor_o.ckpt", kPredictorSchema);
  m.predictor_p = load_model(dir / "predictor_p.ckpt", kPredictorSchema);
  m.library = ds.library;
  return m;
}

// exemplar.lab with its label raster next to it (exemplar.pgm) unless given.
SegmentedImage load_exemplar(const fs::path& color, std::string labels) {
  if (labels.empty()) labels = fs::path(color).replace_extension(".pgm").string();
  SegmentedImage img{io::read_color(color), io::read_labels(labels)};
  require(same_size(img.color, img.labels), "exemplar color and label rasters differ in size");
  return img;
}

ColorImage side_by_side(const std::vector<ColorImage>& tiles) {
  const int gap = 2, h = tiles.front().height();
  int w = 0;
  for (const auto& t : tiles) w += t.width() + gap;
  ColorImage out(h, w - gap, {1.0, 1.0, 1.0});
  int x0 = 0;
  for (const auto& t : tiles) {
    require(t.height() == h, "gallery tiles differ in height");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < t.width(); ++x)
        for (int c = 0; c < 3; ++c) out.at(y, x0 + x, c) = t.at(y, x, c);
    x0 += t.width() + gap;
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw ValidationError("bad seed list '" + s + "'");
    }
  }
  require(!out.empty(), "seed list is empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"matxfer: part-material transfer from exemplar images on toy data"};
  app.require_subcommand(0, 1);
  bool dump_config = false;
  std::string dump_from;
  app.add_flag("--dump-config", dump_config, "Print every setting with its value and exit");
  app.add_option("--with-config", dump_from, "Config file merged over the defaults before --dump-config");
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress");

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "Key-value config file (see --dump-config)")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Run seed");
    sub->add_option("--report", common.report_path, "Write the report here (plus a .json sidecar)");
  };

  std::string data_dir, out_path, init_path, predictor_path, translator_path, models_dir, exemplar_path,
      exemplar_labels, seeds_text = "1,2,3";
  int shape_id = -1, count = 8;
  std::function<int()> action;

  auto* synth = app.add_subcommand("synth", "Generate a toy dataset directory");
  add_common(synth);
  synth->add_option("--out", out_path, "Dataset directory")->required();
  synth->callback([&] {
    action = [&] {
      const PipelineConfig cfg = load_config(common);
      const ToyDataset ds = build_dataset(cfg.dataset, common.seed);
      save_dataset(out_path, ds);
      Report rep("synth", cfg.fingerprint(), common.seed);
      rep.add("materials", ds.library.size());
      rep.add("shapes", ds.shapes.size());
      rep.add("renders", ds.renders.size());
      rep.add("train_shapes", ds.train_shapes.size());
      rep.add("test_shapes", ds.test_shapes.size());
      emit(rep, common.report_path);
      return 0;
    };
  });

  auto* train_metric_cmd = app.add_subcommand("train-metric", "Train the part encoder with the metric losses");
  add_common(train_metric_cmd);
  train_metric_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  train_metric_cmd->add_option("--out", out_path, "Encoder checkpoint")->required();
  train_metric_cmd->callback([&] {
    action = [&] {
      const PipelineConfig cfg = load_config(common);
      const ToyDataset ds = load_dataset(data_dir);
      const SampleSplit samples = split_samples(ds, cfg.encoder);
      const Model encoder = train_metric(ds, samples.train, cfg, initial_predictor(ds, cfg, common.seed), common.seed);
      save_model(out_path, kEncoderSchema, common.seed, cfg.metric_opt, encoder);
      Report rep("train-metric", cfg.fingerprint(), common.seed);
      rep.add("train_patches", samples.train.size());
      rep.add("steps", cfg.metric_steps);
      emit(rep, common.report_path);
      return 0;
    };
  });

  auto* train_cls = app.add_subcommand("train-classifier", "Train the material predictor");
  add_common(train_cls);
  train_cls->add_option("--data", data_dir, "Dataset directory")->required();
  train_cls->add_option("--init", init_path, "Encoder checkpoint from train-metric (replaces the protocol's own start)");
  train_cls->add_option("--out", out_path, "Predictor checkpoint")->required();
  train_cls->callback([&] {
    action = [&] {
      const PipelineConfig cfg = load_config(common);
      const ToyDataset ds = load_dataset(data_dir);
      const SampleSplit samples = split_samples(ds, cfg.encoder);
      Model start = initial_predictor(ds, cfg, common.seed);
      ClassifierTrainResult result;
      if (init_path.empty()) {
        result = train_predictor(ds, samples, cfg, cfg.protocol, start, common.seed);
      } else {
        start.assign_from(load_model(init_path, kEncoderSchema));
        ClassifierTrainConfig cc;
        cc.steps = cfg.classifier_steps;
        cc.encoder_lr_scale = cfg.full_encoder_lr_scale;
        cc.seed = derive_seed(common.seed, 15);
        result = train_classifier_stage(start, samples.train, samples.test, ds.library, ds.distances, cfg.encoder,
                                        cfg.class_weights, cfg.classifier_opt, cc);
      }
      save_model(out_path, kPredictorSchema, common.seed, cfg.classifier_opt, result.model);
      Report rep("train-classifier", cfg.fingerprint(), common.seed);
      rep.add("protocol", init_path.empty() ? to_string(cfg.protocol) : std::string("from_encoder"));
      rep.add("train_patches", samples.train.size());
      rep.add("loss_first", head_mean(result.loss_trace, false));
      rep.add("loss_last", head_mean(result.loss_trace, true));
      rep.add_metrics("test", result.validation.back().second);
      emit(rep, common.report_path);
      return 0;
    };
  });

  auto* train_tr = app.add_subcommand("train-translator", "Train the cross-domain translator");
  add_common(train_tr);
  train_tr->add_option("--data", data_dir, "Dataset directory")->required();
  train_tr->add_option("--out", out_path, "Translator checkpoint")->required();
  train_tr->callback([&] {
    action = [&] {
      const PipelineConfig cfg = load_config(common);
      const ToyDataset ds = load_dataset(data_dir);
      const TranslatorTrainResult result = train_translator_stage(ds, cfg, common.seed);
      save_model(out_path, kTranslatorSchema, common.seed, cfg.translator_opt, result.generator);
      Report rep("train-translator", cfg.fingerprint(), common.seed);
      rep.add("steps", cfg.translator_steps);
      rep.add("g_loss_first", head_mean(result.g_trace, false));
      rep.add("g_loss_last", head_mean(result.g_trace, true));
      rep.add("d_loss_last", head_mean(result.d_trace, true));
      emit(rep, common.report_path);
      return 0;
    };
  });

  auto* ft = app.add_subcommand("fine-tune", "Fine-tune the two predictor variants on translated pairs");
  add_common(ft);
  ft->add_option("--data", data_dir, "Dataset directory")->required();
  ft->add_option("--predictor", predictor_path, "Pretrained predictor checkpoint")->required();
  ft->add_option("--translator", translator_path, "Translator checkpoint")->required();
  ft->add_option("--out", out_path, "Model directory (predictor_o.ckpt, predictor_p.ckpt, translator.ckpt)")
      ->required();
  ft->callback([&] {
    action = [&] {
      const PipelineConfig cfg = load_config(common);
      const ToyDataset ds = load_dataset(data_dir);
      const Model pretrained = load_model(predictor_path, kPredictorSchema);
      const Model translator = load_model(translator_path, kTranslatorSchema);
      const auto train_pairs = make_translated_pairs(ds, cfg, ds.train_shapes, ds.train_shapes,
                                                     cfg.train_pairs_per_shape, translator, pretrained,
                                                     derive_seed(common.seed, 13));
      const auto test_pairs = make_translated_pairs(ds, cfg, ds.test_shapes, ds.train_shapes, cfg.test_pairs_per_shape,
                                                    translator, pretrained, derive_seed(common.seed, 14));
      FineTuneConfig fc = cfg.finetune;
      fc.seed = derive_seed(common.seed, 18);
      const FineTuneResult result =
          fine_tune(pretrained, train_pairs, ds.library, ds.distances, cfg.encoder, cfg.finetune_opt, fc);
      const fs::path dir(out_path);
      save_model(dir / "predictor_o.ckpt", kPredictorSchema, common.seed, cfg.finetune_opt, result.predictor_o);
      save_model(dir / "predictor_p.ckpt", kPredictorSchema, common.seed, cfg.finetune_opt, result.predictor_p);
      save_model(dir / "translator.ckpt", kTranslatorSchema, common.seed, cfg.translator_opt, translator);

      Report rep("fine-tune", cfg.fingerprint(), common.seed);
      rep.add("train_pairs", train_pairs.size());
      rep.add("test_pairs", test_pairs.size());
      const PairOutcomes before = evaluate_pairs(test_pairs, pretrained, pretrained, cfg.encoder, ds.library);
      const PairOutcomes after =
          evaluate_pairs(test_pairs, result.predictor_o, result.predictor_p, cfg.encoder, ds.library);
      rep.add_metrics("before.exemplar_pair", score_outcomes(before.exemplar, ds.distances));
      rep.add_metrics("before.projection_pair", score_outcomes(before.projection, ds.distances));
      rep.add_metrics("after.exemplar_pair", score_outcomes(after.exemplar, ds.distances));
      rep.add_metrics("after.projection_pair", score_outcomes(after.projection, ds.distances));
      emit(rep, common.report_path);
      return 0;
    };
  });

  auto* tr = app.add_subcommand("transfer", "Assign materials to a shape from an exemplar image");
  add_common(tr);
  tr->add_option("--data", data_dir, "Dataset directory (library and shapes)")->required();
  tr->add_option("--models", models_dir, "Model directory written by fine-tune")->required();
  tr->add_option("--shape", shape_id, "Shape id")->required();
  tr->add_option("--exemplar", exemplar_path, "Exemplar Lab raster (.lab)")->required()->check(CLI::ExistingFile);
  tr->add_option("--exemplar-labels", exemplar_labels, "Exemplar part labels (default: the .pgm next to it)");
  tr->add_option("--out", out_path, "Audit bundle directory")->required();
  tr->callback([&] {
    action = [&] {
      const PipelineConfig cfg = load_config(common);
      const ToyDataset ds = load_dataset(data_dir);
      const TrainedModels models = load_models(models_dir, cfg, ds);
      const TransferResult result =
          transfer(ds.shape(shape_id), load_exemplar(exemplar_path, exemplar_labels), models, cfg.transfer);
      save_audit(out_path, result, ds.library);
      Report rep("transfer", cfg.fingerprint(), common.seed);
      rep.add("shape", std::to_string(shape_id));
      rep.add("view", std::to_string(result.audit.view));
      rep.add("parts", result.assignment.parts.size());
      rep.add("subregions", result.audit.subregions.count());
      for (const auto& [label, entry] : result.assignment.parts)
        rep.add("part" + std::to_string(label), std::to_string(entry.material) + " " + std::string(to_string(entry.category)));
      emit(rep, common.report_path.empty() ? (fs::path(out_path) / "report.txt").string() : common.report_path);
      return 0;
    };
  });

  auto* ev = app.add_subcommand("evaluate", "Score a predictor on the test shapes' parts");
  add_common(ev);
  ev->add_option("--data", data_dir, "Dataset directory")->required();
  ev->add_option("--predictor", predictor_path, "Predictor checkpoint (default: untrained at --seed)");
  ev->callback([&] {
    action = [&] {
      const PipelineConfig cfg = load_config(common);
      const ToyDataset ds = load_dataset(data_dir);
      const SampleSplit samples = split_samples(ds, cfg.encoder);
      const Model model = predictor_path.empty() ? initial_predictor(ds, cfg, common.seed)
                                                 : load_model(predictor_path, kPredictorSchema);
      Report rep("evaluate", cfg.fingerprint(), common.seed);
      rep.add("predictor", predictor_path.empty() ? std::string("untrained") : fs::path(predictor_path).filename().string());
      rep.add("materials", ds.library.size());
      rep.add_metrics("test", evaluate_samples(samples.test, model, cfg.encoder, ds.library, ds.distances));
      emit(rep, common.report_path);
      return 0;
    };
  });

  auto* t1 = app.add_subcommand("ablate-table1", "Loss ablation of the material predictor");
  add_common(t1);
  t1->add_option("--seeds", seeds_text, "Comma-separated seeds");
  t1->callback([&] {
    action = [&] {
      const PipelineConfig cfg = load_config(common);
      emit(table1_report(run_ablation_table1(cfg, parse_seeds(seeds_text)), cfg), common.report_path);
      return 0;
    };
  });

  auto* t2 = app.add_subcommand("ablate-table2", "Fine-tuning ablation on translated pairs");
  add_common(t2);
  t2->add_option("--seeds", seeds_text, "Comma-separated seeds");
  t2->callback([&] {
    action = [&] {
      const PipelineConfig cfg = load_config(common);
      emit(table2_report(run_ablation_table2(cfg, parse_seeds(seeds_text)), cfg), common.report_path);
      return 0;
    };
  });

  auto* gal = app.add_subcommand("gallery", "Render transfer results next to their exemplars");
  add_common(gal);
  gal->add_option("--data", data_dir, "Dataset directory")->required();
  gal->add_option("--models", models_dir, "Model directory written by fine-tune")->required();
  gal->add_option("--out", out_path, "Gallery directory")->required();
  gal->add_option("--count", count, "Number of results")->check(CLI::PositiveNumber);
  gal->callback([&] {
    action = [&] {
      const PipelineConfig cfg = load_config(common);
      const ToyDataset ds = load_dataset(data_dir);
      const TrainedModels models = load_models(models_dir, cfg, ds);
      const auto exemplars = ds.renders_of(ds.train_shapes);
      Rng rng(derive_seed(common.seed, 21));
      fs::create_directories(out_path);
      std::string index;
      for (int i = 0; i < count; ++i) {
        const int sid = ds.test_shapes[static_cast<std::size_t>(i) % ds.test_shapes.size()];
        const RenderedView& ex = *exemplars[rng.index(exemplars.size())];
        const TransferResult result = transfer(ds.shape(sid), ex.image, models, cfg.transfer);
        const SegmentedImage rendered = render_pair(ds.shape(sid), result.assignment, ds.library, result.audit.view,
                                                    ds.spec.shading_amplitude, derive_seed(common.seed, 22));
        char name[32];
        std::snprintf(name, sizeof name, "%03d.ppm", i);
        io::write_ppm(fs::path(out_path) / name, side_by_side({lab_to_rgb(ex.image.color), lab_to_rgb(rendered.color)}));
        index += std::string(name) + " shape " + std::to_string(sid) + " view " + std::to_string(result.audit.view) +
                 " exemplar " + std::to_string(ex.shape_id) + "/" + std::to_string(ex.variant) + "/" +
                 std::to_string(ex.view) + "\n";
      }
      io::write_text(fs::path(out_path) / "index.txt", index);
      Report rep("gallery", cfg.fingerprint(), common.seed);
      rep.add("images", static_cast<std::size_t>(count));
      emit(rep, common.report_path);
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  log::set_level(verbose ? log::Level::info : log::Level::warn);
  try {
    if (dump_config) {
      const PipelineConfig cfg =
          dump_from.empty() ? PipelineConfig{} : PipelineConfig::from_config(Config::load(dump_from));
      std::cout << cfg.to_config().format();
      return 0;
    }
    if (!action) {
      std::cerr << app.help();
      return 1;
    }
    return action();
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return 2;
  }
}
