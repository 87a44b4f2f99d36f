#include "roadseg/experiment.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "roadseg/errors.hpp"

namespace roadseg::experiment {

namespace {

using json = nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

ColorSpec color_from_json(const json& j, const std::string& where) {
  check_keys(j, {"r", "g", "b", "tolerance"}, where);
  ColorSpec c{j.at("r").get<int>(), j.at("g").get<int>(), j.at("b").get<int>(), j.value("tolerance", 0)};
  try {
    c.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return c;
}

json color_to_json(const ColorSpec& c) {
  return {{"r", c.r}, {"g", c.g}, {"b", c.b}, {"tolerance", c.tolerance}};
}

ElementShape parse_shape(const std::string& s) {
  if (s == "square") return ElementShape::square;
  if (s == "cross") return ElementShape::cross;
  if (s == "disk") return ElementShape::disk;
  throw ConfigError("unknown structuring element shape '" + s + "'");
}

std::string shape_name(ElementShape s) {
  switch (s) {
    case ElementShape::square: return "square";
    case ElementShape::cross: return "cross";
    case ElementShape::disk: return "disk";
  }
  return "square";
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

}  // namespace

ColorSpec default_road_color(data::DatasetKind kind) {
  if (kind == data::DatasetKind::kitti_road) return {255, 0, 255, 0};
  return {64, 32, 32, 0};
}

std::optional<ColorSpec> default_lane_color(data::DatasetKind kind) {
  if (kind == data::DatasetKind::kitti_road) return std::nullopt;
  return ColorSpec{255, 0, 0, 0};
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  try {
    check_keys(j, {"datasets", "train_dataset", "foreign_dataset", "split", "model", "training",
                   "dilation", "evaluation", "loader", "output_dir", "device"},
               "config");

    if (!j.contains("datasets") || j.at("datasets").empty()) {
      throw ConfigError("config must declare at least one dataset");
    }
    for (const auto& [name, d] : j.at("datasets").items()) {
      const std::string where = "datasets." + name;
      check_keys(d, {"root", "kind", "road_color", "lane_color", "repair_lanes"}, where);
      if (!d.contains("root")) throw ConfigError(where + ".root is required");
      DatasetSpec spec;
      spec.name = name;
      spec.root = resolve(base_dir, d.at("root").get<std::string>());
      try {
        spec.kind = data::parse_dataset_kind(d.value("kind", "synthetic"));
      } catch (const ParameterError& e) {
        throw ConfigError(where + ": " + e.what());
      }
      spec.road_color = d.contains("road_color") ? color_from_json(d.at("road_color"), where + ".road_color")
                                                 : default_road_color(spec.kind);
      if (d.contains("lane_color") && !d.at("lane_color").is_null()) {
        spec.lane_color = color_from_json(d.at("lane_color"), where + ".lane_color");
      } else if (!d.contains("lane_color")) {
        spec.lane_color = default_lane_color(spec.kind);
      }
      spec.repair_lanes = d.value("repair_lanes", false);
      c.datasets[name] = spec;
    }

    c.train_dataset = j.value("train_dataset", c.datasets.begin()->first);
    c.foreign_dataset = j.value("foreign_dataset", std::string{});

    if (j.contains("split")) {
      const auto& s = j.at("split");
      check_keys(s, {"seed", "ratios"}, "split");
      c.split_seed = s.value("seed", c.split_seed);
      if (s.contains("ratios")) {
        const auto& r = s.at("ratios");
        check_keys(r, {"train", "val", "test"}, "split.ratios");
        c.ratios = {r.value("train", 0.70), r.value("val", 0.15), r.value("test", 0.15)};
      }
    }

    if (j.contains("model")) {
      const auto& m = j.at("model");
      check_keys(m, {"architecture", "input_size", "pretrained_encoder", "pretrained_weights",
                     "freeze_encoder", "base_channels"},
                 "model");
      json filled = m;
      if (!filled.contains("architecture")) filled["architecture"] = "unet";
      c.model = models::ModelConfig::from_json(filled);
      c.model.pretrained_weights = resolve(base_dir, c.model.pretrained_weights).string();
    }

    if (j.contains("training")) {
      const auto& t = j.at("training");
      check_keys(t, {"learning_rate", "batch_size", "max_epochs", "target_pixel_accuracy", "seed",
                     "adam_betas", "adam_eps"},
                 "training");
      c.training = train::TrainConfig::from_json(t);
    }

    if (j.contains("dilation")) {
      const auto& d = j.at("dilation");
      check_keys(d, {"shape", "radius"}, "dilation");
      c.dilation.shape = parse_shape(d.value("shape", "square"));
      c.dilation.radius = d.value("radius", 1);
    }

    if (j.contains("evaluation")) {
      const auto& e = j.at("evaluation");
      check_keys(e, {"threshold", "gallery_k", "batch_size"}, "evaluation");
      c.threshold = e.value("threshold", c.threshold);
      c.gallery_k = e.value("gallery_k", c.gallery_k);
      c.eval_batch_size = e.value("batch_size", c.eval_batch_size);
    }

    if (j.contains("loader")) {
      const auto& l = j.at("loader");
      check_keys(l, {"workers"}, "loader");
      c.workers = l.value("workers", c.workers);
    }

    c.output_dir = resolve(base_dir, j.value("output_dir", c.output_dir.string()));
    c.device = j.value("device", c.device);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, fs::absolute(path).parent_path());
}

json ExperimentConfig::to_json() const {
  json ds = json::object();
  for (const auto& [name, d] : datasets) {
    ds[name] = {{"root", d.root.string()},
                {"kind", data::to_string(d.kind)},
                {"road_color", color_to_json(d.road_color)},
                {"lane_color", d.lane_color ? color_to_json(*d.lane_color) : json(nullptr)},
                {"repair_lanes", d.repair_lanes}};
  }
  return {{"datasets", ds},
          {"train_dataset", train_dataset},
          {"foreign_dataset", foreign_dataset},
          {"split", {{"seed", split_seed}, {"ratios", {{"train", ratios.train}, {"val", ratios.val}, {"test", ratios.test}}}}},
          {"model", model.to_json()},
          {"training", training.to_json()},
          {"dilation", {{"shape", shape_name(dilation.shape)}, {"radius", dilation.radius}}},
          {"evaluation", {{"threshold", threshold}, {"gallery_k", gallery_k}, {"batch_size", eval_batch_size}}},
          {"loader", {{"workers", workers}}},
          {"output_dir", output_dir.string()},
          {"device", device}};
}

void ExperimentConfig::validate() const {
  if (datasets.empty()) throw ConfigError("config must declare at least one dataset");
  if (!datasets.count(train_dataset)) throw ConfigError("train_dataset '" + train_dataset + "' is not declared");
  if (!foreign_dataset.empty() && !datasets.count(foreign_dataset)) {
    throw ConfigError("foreign_dataset '" + foreign_dataset + "' is not declared");
  }
  for (const auto& [name, d] : datasets) {
    if (!fs::is_directory(d.root)) {
      throw ConfigError("dataset '" + name + "' root does not exist: " + d.root.string());
    }
    if (d.repair_lanes && !d.lane_color) {
      throw ConfigError("dataset '" + name + "' enables repair_lanes without a lane_color");
    }
  }
  try {
    ratios.validate();
    dilation.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  model.validate();
  training.validate();
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("evaluation.threshold must lie in (0, 1)");
  if (gallery_k < 1) throw ConfigError("evaluation.gallery_k must be >= 1");
  if (eval_batch_size < 1) throw ConfigError("evaluation.batch_size must be >= 1");
  if (workers < 1) throw ConfigError("loader.workers must be >= 1");
  if (device != "cpu") throw ConfigError("device '" + device + "' is not supported by this build (use cpu)");
}

const DatasetSpec& ExperimentConfig::dataset(const std::string& name) const {
  auto it = datasets.find(name);
  if (it == datasets.end()) throw ConfigError("dataset '" + name + "' is not declared in the config");
  return it->second;
}

data::SampleOptions ExperimentConfig::sample_options(const DatasetSpec& spec) const {
  data::SampleOptions o;
  o.size = model.input_size;
  o.road_color = spec.road_color;
  if (spec.repair_lanes && spec.lane_color) o.lane_repair = data::LaneRepair{*spec.lane_color, dilation};
  o.normalization = model.pretrained_encoder ? data::Normalization::imagenet : data::Normalization::unit_range;
  return o;
}

std::string ExperimentConfig::model_tag() const {
  return models::to_string(model.architecture) + "_" + train_dataset;
}

}  // namespace roadseg::experiment
