#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "roadseg/evaluation.hpp"
#include "roadseg/experiment.hpp"
#include "roadseg/training.hpp"

namespace roadseg::cli {

namespace fs = std::filesystem;

inline constexpr const char* kRunSchema = "roadseg-run";
inline constexpr int kRunSchemaVersion = 1;

// Run directory layout (schema version 1):
//   schema.json                      schema tag
//   run.json                         config echo of the last command
//   prepared/<dataset>/masks/*.png   cached binary masks (0/255)
//   prepared/<dataset>/split.json    split of the training dataset
//   prepared/<dataset>/prepared.json completion marker
//   train/log.csv, best.ckpt, final.ckpt, summary.json
//   eval/<dataset>_test.json         own-test-split metrics
//   crosseval/<tag>_on_<dataset>.json
//   results.csv, results.json, curves.png, curves.csv, gallery/
struct RunLayout {
  fs::path root;

  fs::path schema() const { return root / "schema.json"; }
  fs::path run_config() const { return root / "run.json"; }
  fs::path prepared(const std::string& dataset) const { return root / "prepared" / dataset; }
  fs::path masks(const std::string& dataset) const { return prepared(dataset) / "masks"; }
  fs::path split(const std::string& dataset) const { return prepared(dataset) / "split.json"; }
  fs::path prepared_marker(const std::string& dataset) const { return prepared(dataset) / "prepared.json"; }
  fs::path train_dir() const { return root / "train"; }
  fs::path train_log() const { return train_dir() / "log.csv"; }
  fs::path best_checkpoint() const { return train_dir() / "best.ckpt"; }
  fs::path final_checkpoint() const { return train_dir() / "final.ckpt"; }
  fs::path eval_result(const std::string& dataset) const { return root / "eval" / (dataset + "_test.json"); }
  fs::path crosseval_dir() const { return root / "crosseval"; }
  fs::path gallery_dir() const { return root / "gallery"; }
};

struct PrepareOutcome {
  std::string dataset;
  std::size_t samples = 0;
  bool skipped = false;  // already prepared and --force not given
  std::optional<data::SplitSizes> split;
};

std::vector<PrepareOutcome> cmd_prepare(const experiment::ExperimentConfig& config, bool force,
                                        std::ostream& log);
train::TrainResult cmd_train(const experiment::ExperimentConfig& config, std::ostream& log);
eval::CrossEvalResult cmd_eval(const experiment::ExperimentConfig& config, const fs::path& checkpoint,
                               std::ostream& log);
eval::CrossEvalResult cmd_crosseval(const experiment::ExperimentConfig& config, const fs::path& checkpoint,
                                    const std::string& foreign_dataset, std::ostream& log);

struct ReportOutcome {
  eval::TableFiles tables;
  std::optional<eval::CurvePlot> curves;
  std::vector<eval::GalleryItem> gallery;
};
ReportOutcome cmd_report(const fs::path& run_dir, const std::optional<fs::path>& checkpoint, std::ostream& log);

// Manifest of a dataset for evaluation/training: cached masks when the
// dataset was prepared in this run directory, color labels otherwise.
struct ResolvedDataset {
  data::DatasetManifest manifest;
  data::SampleOptions options;
};
ResolvedDataset resolve_dataset(const experiment::ExperimentConfig& config, const std::string& name);

// Entry point of the `roadseg` executable. Returns the process exit code:
// 0 success, 1 usage or configuration error, 2 runtime failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace roadseg::cli
