#include "roadseg/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "roadseg/errors.hpp"

namespace roadseg::train {

namespace fs = std::filesystem;

namespace {

torch::Tensor elementwise_bce(const torch::Tensor& logits, const torch::Tensor& targets) {
  return torch::clamp_min(logits, 0) - logits * targets + torch::log1p(torch::exp(-logits.abs()));
}

void check_loss_inputs(const torch::Tensor& logits, const torch::Tensor& targets) {
  if (logits.sizes() != targets.sizes()) {
    std::ostringstream msg;
    msg << "loss: logits " << logits.sizes() << " vs targets " << targets.sizes();
    throw ShapeError(msg.str());
  }
  if (logits.numel() == 0) throw ShapeError("loss: empty tensors");
  const auto binary = torch::logical_or(targets == 0, targets == 1).all().item<bool>();
  if (!binary) throw DomainError("loss targets must be exactly 0 or 1");
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (!(target_pixel_accuracy > 0.0 && target_pixel_accuracy <= 1.0)) {
    throw ConfigError("target_pixel_accuracy must lie in (0, 1]");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("adam eps must be > 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"target_pixel_accuracy", target_pixel_accuracy},
          {"seed", seed},
          {"adam_betas", {beta1, beta2}},
          {"adam_eps", eps}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.target_pixel_accuracy = j.value("target_pixel_accuracy", c.target_pixel_accuracy);
  c.seed = j.value("seed", c.seed);
  if (j.contains("adam_betas")) {
    const auto betas = j.at("adam_betas").get<std::vector<double>>();
    if (betas.size() != 2) throw ConfigError("adam_betas must hold two values");
    c.beta1 = betas[0];
    c.beta2 = betas[1];
  }
  c.eps = j.value("adam_eps", c.eps);
  return c;
}

torch::Tensor bce_logits_loss(const torch::Tensor& logits, const torch::Tensor& targets) {
  check_loss_inputs(logits, targets);
  return elementwise_bce(logits, targets).mean();
}

void adam_step(std::span<torch::Tensor> params, std::span<const torch::Tensor> grads,
               AdamState& state, const AdamOptions& options) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: params/grads count mismatch");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(torch::zeros_like(p));
      state.second_moment.push_back(torch::zeros_like(p));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state does not match parameters");
  }

  torch::NoGradGuard no_grad;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(options.beta1, t);
  const double bias2 = 1.0 - std::pow(options.beta2, t);
  const double step_size = options.learning_rate / bias1;
  const double bias2_sqrt = std::sqrt(bias2);

  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].defined()) continue;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m.mul_(options.beta1).add_(grads[i], 1.0 - options.beta1);
    v.mul_(options.beta2).addcmul_(grads[i], grads[i], 1.0 - options.beta2);
    const auto denom = (v.sqrt() / bias2_sqrt).add_(options.eps);
    params[i].addcdiv_(m, denom, -step_size);
  }
}

torch::Tensor predict_road(const torch::Tensor& logits, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ParameterError("threshold must lie in (0, 1)");
  const double cut = std::log(threshold / (1.0 - threshold));
  return logits > cut;
}

metrics::ConfusionCounts confusion_from_logits(const torch::Tensor& logits,
                                               const torch::Tensor& targets, double threshold) {
  if (logits.sizes() != targets.sizes()) throw ShapeError("confusion: logits/targets shape mismatch");
  const auto pred = predict_road(logits, threshold);
  const auto truth = targets > 0.5;
  metrics::ConfusionCounts c;
  c.tp = static_cast<std::uint64_t>(torch::logical_and(pred, truth).sum().item<int64_t>());
  c.fp = static_cast<std::uint64_t>(torch::logical_and(pred, truth.logical_not()).sum().item<int64_t>());
  c.fn = static_cast<std::uint64_t>(torch::logical_and(pred.logical_not(), truth).sum().item<int64_t>());
  c.tn = static_cast<std::uint64_t>(logits.numel()) - c.tp - c.fp - c.fn;
  return c;
}

EvalSummary evaluate_epoch(models::SegmentationModel& model, const data::BatchStream& stream,
                           double threshold) {
  if (stream.sample_count() == 0) throw ConfigError("evaluation stream is empty");
  const bool was_training = model.is_training();
  model.eval();
  torch::NoGradGuard no_grad;

  double loss_sum = 0.0;
  metrics::ConfusionCounts counts;
  stream.for_each_batch(0, [&](const data::Batch& batch) {
    const auto logits = model.forward(batch.images);
    check_loss_inputs(logits, batch.masks);
    loss_sum += elementwise_bce(logits, batch.masks).to(torch::kFloat64).sum().item<double>();
    counts += confusion_from_logits(logits, batch.masks, threshold);
  });
  model.train(was_training);

  EvalSummary summary;
  summary.counts = counts;
  summary.mean_loss = loss_sum / static_cast<double>(counts.total());
  summary.pixel_accuracy = metrics::pixel_accuracy(counts).value();
  return summary;
}

TrainResult train(models::SegmentationModel& model, const data::BatchStream& train_stream,
                  const data::BatchStream& val_stream, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  if (train_stream.sample_count() == 0) throw ConfigError("training stream is empty");
  if (val_stream.sample_count() == 0) throw ConfigError("validation stream is empty");
  torch::manual_seed(config.seed);

  auto params = model.trainable_parameters();
  AdamState state;
  const AdamOptions adam{config.learning_rate, config.beta1, config.beta2, config.eps};
  if (!options.checkpoint_dir.empty()) fs::create_directories(options.checkpoint_dir);

  TrainResult result;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    model.train();
    double loss_sum = 0.0;
    std::size_t seen = 0;
    int step = 0;
    train_stream.for_each_batch(static_cast<std::size_t>(epoch - 1), [&](const data::Batch& batch) {
      ++step;
      for (auto& p : params) p.mutable_grad() = torch::Tensor();
      const auto loss = bce_logits_loss(model.forward(batch.images), batch.masks);
      const double value = loss.item<double>();
      if (!std::isfinite(value)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step));
      }
      loss.backward();
      std::vector<torch::Tensor> grads;
      grads.reserve(params.size());
      for (auto& p : params) grads.push_back(p.grad());
      adam_step(params, grads, state, adam);
      loss_sum += value * static_cast<double>(batch.size());
      seen += batch.size();
    });

    const EvalSummary val = evaluate_epoch(model, val_stream);
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(seen);
    log.val_loss = val.mean_loss;
    log.val_pixel_accuracy = val.pixel_accuracy;
    log.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.logs.push_back(log);

    if (result.best_epoch == 0 || log.val_pixel_accuracy > result.best_val_accuracy) {
      result.best_epoch = epoch;
      result.best_val_accuracy = log.val_pixel_accuracy;
      if (!options.checkpoint_dir.empty()) {
        models::save_weights(model, options.checkpoint_dir / "best.ckpt");
      }
    }
    if (options.on_epoch) options.on_epoch(log);
    if (log.val_pixel_accuracy >= config.target_pixel_accuracy) {
      result.reached_target = true;
      break;
    }
  }
  if (!options.checkpoint_dir.empty()) models::save_weights(model, options.checkpoint_dir / "final.ckpt");
  return result;
}

void write_epoch_logs(const fs::path& csv_path, const std::vector<EpochLog>& logs) {
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot write " + csv_path.string());
  out << "epoch,train_loss,val_loss,val_pixel_accuracy,wall_time\n";
  char line[256];
  for (const auto& l : logs) {
    std::snprintf(line, sizeof line, "%d,%.10f,%.10f,%.10f,%.3f\n", l.epoch, l.train_loss,
                  l.val_loss, l.val_pixel_accuracy, l.wall_time);
    out << line;
  }
}

std::vector<EpochLog> read_epoch_logs(const fs::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot read " + csv_path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("epoch,", 0) != 0) throw FormatError(csv_path.string() + ": missing epoch log header");
  std::vector<EpochLog> logs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochLog l;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &l.epoch, &l.train_loss, &l.val_loss,
                    &l.val_pixel_accuracy, &l.wall_time) != 5) {
      throw FormatError(csv_path.string() + ": malformed row '" + line + "'");
    }
    logs.push_back(l);
  }
  return logs;
}

}  // namespace roadseg::train
