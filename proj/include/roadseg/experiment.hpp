#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "roadseg/datasets.hpp"
#include "roadseg/mask_ops.hpp"
#include "roadseg/models.hpp"
#include "roadseg/training.hpp"

namespace roadseg::experiment {

namespace fs = std::filesystem;

struct DatasetSpec {
  std::string name;
  fs::path root;
  data::DatasetKind kind = data::DatasetKind::synthetic;
  ColorSpec road_color;
  std::optional<ColorSpec> lane_color;
  bool repair_lanes = false;
};

// Upstream class colors: KITTI Road marks road magenta; comma10k marks road
// #402020 and lane markings #ff0000. Synthetic sets use the comma10k palette.
ColorSpec default_road_color(data::DatasetKind kind);
std::optional<ColorSpec> default_lane_color(data::DatasetKind kind);

struct ExperimentConfig {
  std::map<std::string, DatasetSpec> datasets;
  std::string train_dataset;
  std::string foreign_dataset;  // default target of crosseval
  std::uint64_t split_seed = 0;
  data::SplitRatios ratios;
  models::ModelConfig model;
  train::TrainConfig training;
  StructuringElement dilation;
  double threshold = 0.5;
  int gallery_k = 8;
  int eval_batch_size = 4;
  int workers = 1;
  fs::path output_dir = "runs/default";
  std::string device = "cpu";

  // Unknown keys anywhere raise ConfigError. Relative paths resolve against
  // `base_dir` (the config file's directory).
  static ExperimentConfig from_json(const nlohmann::json& j, const fs::path& base_dir = {});
  static ExperimentConfig load(const fs::path& path);
  nlohmann::json to_json() const;

  // Structural checks plus existence of every dataset root.
  void validate() const;

  const DatasetSpec& dataset(const std::string& name) const;
  data::SampleOptions sample_options(const DatasetSpec& spec) const;
  std::string model_tag() const;
};

}  // namespace roadseg::experiment
