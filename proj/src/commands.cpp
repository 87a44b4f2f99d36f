#include "roadseg/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "roadseg/errors.hpp"
#include "roadseg/image_io.hpp"
#include "roadseg/synthetic.hpp"

namespace roadseg::cli {

namespace {

using json = nlohmann::json;
using experiment::ExperimentConfig;

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Creates the run directory or checks that an existing one uses our schema.
void ensure_run_dir(const RunLayout& run) {
  fs::create_directories(run.root);
  if (fs::exists(run.schema())) {
    const json tag = read_json(run.schema());
    if (tag.value("schema", "") != kRunSchema || tag.value("version", 0) != kRunSchemaVersion) {
      throw ConfigError(run.root.string() + " holds an incompatible run directory schema");
    }
    return;
  }
  write_json(run.schema(), {{"schema", kRunSchema}, {"version", kRunSchemaVersion}});
}

json prepare_fingerprint(const ExperimentConfig& config, const experiment::DatasetSpec& spec) {
  json j = config.to_json().at("datasets").at(spec.name);
  j["dilation"] = config.to_json().at("dilation");
  return j;
}

models::SegmentationModel load_checkpoint(const ExperimentConfig& config, const fs::path& path) {
  if (!fs::exists(path)) {
    throw ConfigError("checkpoint not found: " + path.string() + " (run `roadseg train` first or pass --checkpoint)");
  }
  return models::load_weights(path, config.model);
}

fs::path default_checkpoint(const RunLayout& run) {
  return fs::exists(run.best_checkpoint()) ? run.best_checkpoint() : run.final_checkpoint();
}

std::string pick_foreign(const ExperimentConfig& config, const std::string& requested) {
  if (!requested.empty()) return requested;
  if (!config.foreign_dataset.empty()) return config.foreign_dataset;
  for (const auto& [name, spec] : config.datasets) {
    if (name != config.train_dataset) return name;
  }
  return config.train_dataset;
}

void print_report(std::ostream& log, const metrics::MetricsReport& r) {
  log << "  pixel_accuracy " << r.pixel_accuracy.value() << "\n"
      << "  precision      " << r.precision.value() << "\n"
      << "  recall         " << r.recall.value() << "\n"
      << "  f1             " << r.f1.value() << "\n"
      << "  iou_road       " << r.iou_road.value() << "\n"
      << "  iou_background " << r.iou_background.value() << "\n"
      << "  miou           " << r.miou.value() << "\n";
}

}  // namespace

ResolvedDataset resolve_dataset(const ExperimentConfig& config, const std::string& name) {
  const auto& spec = config.dataset(name);
  const RunLayout run{config.output_dir};
  ResolvedDataset out;
  out.manifest = data::load_manifest(spec.root, spec.kind, name);
  out.options = config.sample_options(spec);
  if (fs::exists(run.prepared_marker(name))) {
    for (auto& e : out.manifest.entries) e.label_path = run.masks(name) / (e.sample_id + ".png");
    out.options.label_encoding = data::LabelEncoding::binary_mask;
    out.options.lane_repair.reset();
  }
  return out;
}

std::vector<PrepareOutcome> cmd_prepare(const ExperimentConfig& config, bool force, std::ostream& log) {
  config.validate();
  const RunLayout run{config.output_dir};
  ensure_run_dir(run);
  write_json(run.run_config(), config.to_json());

  std::vector<PrepareOutcome> outcomes;
  for (const auto& [name, spec] : config.datasets) {
    PrepareOutcome outcome;
    outcome.dataset = name;
    if (fs::exists(run.prepared_marker(name)) && !force) {
      const json marker = read_json(run.prepared_marker(name));
      outcome.skipped = true;
      outcome.samples = marker.value("samples", std::size_t{0});
      if (marker.value("fingerprint", json()) != prepare_fingerprint(config, spec)) {
        log << "warning: " << name << " was prepared with different settings; rerun with --force\n";
      }
      log << name << ": already prepared (" << outcome.samples << " samples), nothing to do\n";
      outcomes.push_back(outcome);
      continue;
    }

    fs::remove(run.prepared_marker(name));
    const auto manifest = data::load_manifest(spec.root, spec.kind, name);
    const auto options = config.sample_options(spec);
    for (const auto& entry : manifest.entries) {
      BinaryMask mask;
      try {
        mask = data::load_label_mask(entry, options);
      } catch (const Error& e) {
        throw IoError("sample '" + entry.sample_id + "': " + e.what());
      }
      write_mask(run.masks(name) / (entry.sample_id + ".png"), mask);
    }
    outcome.samples = manifest.size();

    if (name == config.train_dataset) {
      const auto assignment = data::split(manifest, config.split_seed, config.ratios);
      assignment.save(run.split(name));
      outcome.split = assignment.sizes();
      log << name << ": split " << outcome.split->train << "/" << outcome.split->val << "/"
          << outcome.split->test << " (seed " << config.split_seed << ")\n";
    }
    write_json(run.prepared_marker(name), {{"dataset", name},
                                           {"samples", manifest.size()},
                                           {"fingerprint", prepare_fingerprint(config, spec)}});
    log << name << ": cached " << manifest.size() << " masks\n";
    outcomes.push_back(outcome);
  }
  return outcomes;
}

train::TrainResult cmd_train(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const RunLayout run{config.output_dir};
  ensure_run_dir(run);
  if (!fs::exists(run.split(config.train_dataset))) {
    throw ConfigError("no split for '" + config.train_dataset + "' in " + run.root.string() +
                      " (run `roadseg prepare` first)");
  }
  write_json(run.run_config(), config.to_json());

  const auto dataset = resolve_dataset(config, config.train_dataset);
  const auto assignment = data::SplitAssignment::load(run.split(config.train_dataset));
  const data::StreamOptions stream_options{true, config.workers};
  const auto train_stream = data::make_part_stream(dataset.manifest, assignment, data::Part::train, dataset.options,
                                                   config.training.batch_size, config.training.seed, stream_options);
  const auto val_stream = data::make_part_stream(dataset.manifest, assignment, data::Part::val, dataset.options,
                                                 config.eval_batch_size, 0, stream_options);

  auto model = models::build_model(config.model, config.training.seed);
  log << "training " << config.model_tag() << " on " << train_stream.sample_count() << " samples ("
      << val_stream.sample_count() << " val), " << model.parameter_count() << " parameters\n";

  std::vector<train::EpochLog> so_far;
  train::TrainOptions options;
  options.checkpoint_dir = run.train_dir();
  options.on_epoch = [&](const train::EpochLog& l) {
    so_far.push_back(l);
    train::write_epoch_logs(run.train_log(), so_far);
    log << "epoch " << l.epoch << "  train_loss " << l.train_loss << "  val_loss " << l.val_loss
        << "  val_acc " << l.val_pixel_accuracy << "  (" << l.wall_time << " s)\n";
  };
  auto result = train::train(model, train_stream, val_stream, config.training, options);
  train::write_epoch_logs(run.train_log(), result.logs);
  write_json(run.train_dir() / "summary.json",
             {{"model_tag", config.model_tag()},
              {"trained_on", config.train_dataset},
              {"epochs", result.logs.size()},
              {"best_epoch", result.best_epoch},
              {"best_val_pixel_accuracy", result.best_val_accuracy},
              {"reached_target", result.reached_target},
              {"target_pixel_accuracy", config.training.target_pixel_accuracy}});
  log << (result.reached_target ? "reached" : "did not reach") << " target "
      << config.training.target_pixel_accuracy << " after " << result.logs.size() << " epoch(s)\n";
  return result;
}

eval::CrossEvalResult cmd_eval(const ExperimentConfig& config, const fs::path& checkpoint, std::ostream& log) {
  config.validate();
  const RunLayout run{config.output_dir};
  ensure_run_dir(run);
  if (!fs::exists(run.split(config.train_dataset))) {
    throw ConfigError("no split for '" + config.train_dataset + "' (run `roadseg prepare` first)");
  }
  auto model = load_checkpoint(config, checkpoint.empty() ? default_checkpoint(run) : checkpoint);
  const auto dataset = resolve_dataset(config, config.train_dataset);
  const auto assignment = data::SplitAssignment::load(run.split(config.train_dataset));
  const auto stream = data::make_part_stream(dataset.manifest, assignment, data::Part::test, dataset.options,
                                             config.eval_batch_size, 0, {true, config.workers});
  auto result = eval::cross_evaluate(model, stream,
                                     {config.model_tag(), config.train_dataset, config.train_dataset},
                                     config.threshold);
  result.save(run.eval_result(config.train_dataset));
  log << config.model_tag() << " on " << config.train_dataset << " test split ("
      << result.per_sample.size() << " samples)\n";
  print_report(log, result.report);
  return result;
}

eval::CrossEvalResult cmd_crosseval(const ExperimentConfig& config, const fs::path& checkpoint,
                                    const std::string& foreign_dataset, std::ostream& log) {
  config.validate();
  const RunLayout run{config.output_dir};
  ensure_run_dir(run);
  const std::string target = pick_foreign(config, foreign_dataset);
  auto model = load_checkpoint(config, checkpoint.empty() ? default_checkpoint(run) : checkpoint);
  const auto dataset = resolve_dataset(config, target);
  const data::BatchStream stream(dataset.manifest.entries, dataset.options, config.eval_batch_size,
                                 data::Order::fixed, 0, {false, config.workers});
  auto result = eval::cross_evaluate(model, stream, {config.model_tag(), config.train_dataset, target},
                                     config.threshold);
  result.save(run.crosseval_dir() / (config.model_tag() + "_on_" + target + ".json"));
  if (result.same_dataset()) {
    log << "warning: evaluating on the training dataset '" << target << "'; this is not a cross-dataset result\n";
  }
  log << config.model_tag() << " on " << target << " (" << result.per_sample.size() << " samples)\n";
  print_report(log, result.report);
  return result;
}

ReportOutcome cmd_report(const fs::path& run_dir, const std::optional<fs::path>& checkpoint, std::ostream& log) {
  const RunLayout run{run_dir};
  if (!fs::exists(run.schema())) throw ConfigError(run_dir.string() + " is not a roadseg run directory");
  ensure_run_dir(run);
  auto config = ExperimentConfig::from_json(read_json(run.run_config()));
  config.output_dir = run_dir;

  std::vector<eval::CrossEvalResult> results;
  if (fs::is_directory(run.crosseval_dir())) {
    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(run.crosseval_dir())) {
      if (f.path().extension() == ".json") files.push_back(f.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) results.push_back(eval::CrossEvalResult::load(f));
  }
  if (results.empty()) throw ConfigError("no cross-evaluation results in " + run_dir.string() + " (run `roadseg crosseval` first)");

  ReportOutcome outcome;
  outcome.tables = eval::tabulate(results, run.root);
  log << "wrote " << outcome.tables.csv.string() << " (" << results.size() << " row(s))\n";

  if (fs::exists(run.train_log())) {
    const auto logs = train::read_epoch_logs(run.train_log());
    if (!logs.empty()) {
      outcome.curves = eval::plot_curves(logs, run.root);
      log << "wrote " << outcome.curves->image.string() << "\n";
    }
  }

  // Gallery of the first cross-evaluation target.
  const auto& target = results.front();
  const fs::path ckpt = checkpoint.value_or(default_checkpoint(run));
  auto model = load_checkpoint(config, ckpt);
  const auto dataset = resolve_dataset(config, target.evaluated_on);
  const data::BatchStream stream(dataset.manifest.entries, dataset.options, config.eval_batch_size,
                                 data::Order::fixed, 0, {false, config.workers});
  fs::remove_all(run.gallery_dir());
  outcome.gallery = eval::error_gallery(model, stream, static_cast<std::size_t>(config.gallery_k), run.gallery_dir(),
                                        config.threshold, dataset.options.normalization);
  log << "wrote " << outcome.gallery.size() << " gallery entries to " << run.gallery_dir().string() << "\n";
  return outcome;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Binary road segmentation: prepare, train, evaluate and cross-evaluate"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool force = false;
  std::string device;
  std::string checkpoint;
  std::string foreign;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Experiment config (JSON)");
    cmd->add_option("--seed", seed, "Override training.seed");
    cmd->add_option("--out", out_dir, "Override output_dir");
    cmd->add_option("--device", device, "Compute device (cpu)");
  };

  auto* prepare = app.add_subcommand("prepare", "Cache binary masks and write the split");
  add_common(prepare);
  prepare->add_flag("--force", force, "Redo preparation even if cached");

  auto* train_cmd = app.add_subcommand("train", "Train the configured model");
  add_common(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the training dataset's test split");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint (default: run's best.ckpt)");

  auto* cross_cmd = app.add_subcommand("crosseval", "Evaluate a checkpoint on an entire foreign dataset");
  add_common(cross_cmd);
  cross_cmd->add_option("--checkpoint", checkpoint, "Checkpoint (default: run's best.ckpt)");
  cross_cmd->add_option("--foreign-dataset", foreign, "Dataset name from the config");

  auto* report_cmd = app.add_subcommand("report", "Write tables, curves and the error gallery");
  add_common(report_cmd);
  report_cmd->add_option("--checkpoint", checkpoint, "Checkpoint for the gallery");

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  int count = 60;
  int size = 128;
  std::string style_name = "highway";
  synth_cmd->add_option("--out", out_dir, "Target directory")->required();
  synth_cmd->add_option("--count", count, "Number of samples");
  synth_cmd->add_option("--size", size, "Image side in pixels");
  synth_cmd->add_option("--seed", seed, "Generator seed");
  synth_cmd->add_option("--style", style_name, "highway or suburban")->check(CLI::IsMember({"highway", "suburban"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth_cmd->parsed()) {
      const auto style = style_name == "suburban" ? data::SyntheticStyle::suburban() : data::SyntheticStyle::highway();
      const auto manifest = data::generate_synthetic(out_dir, count, size, seed.value_or(0), style);
      out << "wrote " << manifest.size() << " samples to " << out_dir << "\n";
      return 0;
    }

    if (report_cmd->parsed() && config_path.empty()) {
      if (out_dir.empty()) throw ConfigError("report needs --config or --out");
      cmd_report(out_dir, checkpoint.empty() ? std::nullopt : std::optional<fs::path>(checkpoint), out);
      return 0;
    }

    if (config_path.empty()) throw ConfigError("--config is required");
    auto config = ExperimentConfig::load(config_path);
    if (seed) config.training.seed = *seed;
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (!device.empty()) config.device = device;

    if (prepare->parsed()) {
      cmd_prepare(config, force, out);
    } else if (train_cmd->parsed()) {
      cmd_train(config, out);
    } else if (eval_cmd->parsed()) {
      cmd_eval(config, checkpoint, out);
    } else if (cross_cmd->parsed()) {
      cmd_crosseval(config, checkpoint, foreign, out);
    } else if (report_cmd->parsed()) {
      config.validate();
      cmd_report(config.output_dir, checkpoint.empty() ? std::nullopt : std::optional<fs::path>(checkpoint), out);
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace roadseg::cli
