#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "roadseg/datasets.hpp"
#include "roadseg/metrics.hpp"
#include "roadseg/models.hpp"

namespace roadseg::train {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 8;
  int max_epochs = 300;
  double target_pixel_accuracy = 0.97;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;  // throws ConfigError
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  bool operator==(const TrainConfig&) const = default;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_pixel_accuracy = 0.0;
  double wall_time = 0.0;  // seconds for the epoch, including validation
};

// Mean over every element of max(x,0) - x*y + log(1 + exp(-|x|)).
// Throws ShapeError on mismatched shapes and DomainError when a target is
// not exactly 0 or 1.
torch::Tensor bce_logits_loss(const torch::Tensor& logits, const torch::Tensor& targets);

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Zero moments and a zero step counter until the first update.
struct AdamState {
  std::vector<torch::Tensor> first_moment;
  std::vector<torch::Tensor> second_moment;
  std::int64_t step = 0;
};

// One bias-corrected Adam update applied in place to `params`.
void adam_step(std::span<torch::Tensor> params, std::span<const torch::Tensor> grads,
               AdamState& state, const AdamOptions& options);

// Road iff logit > log(t / (1 - t)); for t = 0.5 that is logit > 0, so a
// logit of exactly 0 is background.
torch::Tensor predict_road(const torch::Tensor& logits, double threshold = 0.5);
metrics::ConfusionCounts confusion_from_logits(const torch::Tensor& logits,
                                               const torch::Tensor& targets,
                                               double threshold = 0.5);

struct EvalSummary {
  double mean_loss = 0.0;
  double pixel_accuracy = 0.0;
  metrics::ConfusionCounts counts;
};

// Inference-only pass over one epoch of `stream`; parameters are not
// touched and the model's training flag is restored afterwards.
EvalSummary evaluate_epoch(models::SegmentationModel& model, const data::BatchStream& stream,
                           double threshold = 0.5);

struct TrainOptions {
  // When set, best.ckpt (best validation accuracy) and final.ckpt are written here.
  std::filesystem::path checkpoint_dir;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochLog> logs;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  bool reached_target = false;
};

// Adam on the BCE-with-logits loss. After every epoch the validation split is
// evaluated; the run stops once validation pixel accuracy reaches the
// target or after max_epochs. Throws DivergenceError on a non-finite loss
// and ConfigError on an empty stream.
TrainResult train(models::SegmentationModel& model, const data::BatchStream& train_stream,
                  const data::BatchStream& val_stream, const TrainConfig& config,
                  const TrainOptions& options = {});

void write_epoch_logs(const std::filesystem::path& csv_path, const std::vector<EpochLog>& logs);
std::vector<EpochLog> read_epoch_logs(const std::filesystem::path& csv_path);

}  // namespace roadseg::train
