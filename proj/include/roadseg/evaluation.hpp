#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "roadseg/datasets.hpp"
#include "roadseg/metrics.hpp"
#include "roadseg/models.hpp"
#include "roadseg/training.hpp"

namespace roadseg::eval {

namespace fs = std::filesystem;

// Batch of images (B x 3 x S x S) to logits (B x 1 x S x S).
using LogitFunction = std::function<torch::Tensor(const torch::Tensor&)>;

// Wraps a model for inference: eval mode, no autograd.
LogitFunction inference_fn(models::SegmentationModel& model);

struct SampleScore {
  std::string sample_id;
  metrics::ConfusionCounts counts;
  metrics::Ratio road_iou;
};

struct CrossEvalResult {
  std::string model_tag;
  std::string trained_on;
  std::string evaluated_on;
  metrics::MetricsReport report;
  std::vector<SampleScore> per_sample;  // stream order

  // Same-dataset evaluation is allowed but flagged in every output.
  bool same_dataset() const { return trained_on == evaluated_on; }

  nlohmann::json to_json() const;
  static CrossEvalResult from_json(const nlohmann::json& j);
  void save(const fs::path& path) const;
  static CrossEvalResult load(const fs::path& path);
};

struct EvalTags {
  std::string model_tag;
  std::string trained_on;
  std::string evaluated_on;
};

// One inference-only pass over epoch 0 of `stream`. The report is built
// from the sum of per-sample counts. Throws ConfigError when the stream's
// resolution differs from `input_size` or the stream is empty.
CrossEvalResult cross_evaluate(const LogitFunction& logits_of, int input_size,
                               const data::BatchStream& stream, const EvalTags& tags,
                               double threshold = 0.5);
CrossEvalResult cross_evaluate(models::SegmentationModel& model, const data::BatchStream& stream,
                               const EvalTags& tags, double threshold = 0.5);

// k lowest road IoUs, ties broken by sample id; k is clamped to the list size.
std::vector<SampleScore> worst_samples(std::vector<SampleScore> scores, std::size_t k);

struct TableRow {
  std::string model_tag;
  std::string trained_on;
  std::string evaluated_on;
  bool same_dataset = false;
  std::vector<std::string> values;  // metrics::report_columns() order
};

struct TableFiles {
  fs::path csv;
  fs::path json;
};

// Writes <dir>/results.csv and <dir>/results.json, one row per result.
TableFiles tabulate(const std::vector<CrossEvalResult>& results, const fs::path& dir);
std::vector<TableRow> read_results_csv(const fs::path& csv_path);

struct CurvePlot {
  fs::path image;
  fs::path csv;
  int first_epoch = 0;
  int last_epoch = 0;
};

// Renders loss and validation accuracy against epoch to <dir>/curves.png
// and copies the series to <dir>/curves.csv.
CurvePlot plot_curves(const std::vector<train::EpochLog>& logs, const fs::path& dir);

struct GalleryItem {
  int rank = 0;
  std::string sample_id;
  metrics::Ratio road_iou;
  fs::path input;
  fs::path ground_truth;
  fs::path prediction;
};

// Writes NNN_iouX.XXX_<sample>_{input,gt,pred}.png for the k samples with the
// lowest road IoU, in non-decreasing IoU order.
std::vector<GalleryItem> error_gallery(const LogitFunction& logits_of, const data::BatchStream& stream,
                                       std::size_t k, const fs::path& dir, double threshold = 0.5,
                                       data::Normalization normalization = data::Normalization::unit_range);
std::vector<GalleryItem> error_gallery(models::SegmentationModel& model, const data::BatchStream& stream,
                                       std::size_t k, const fs::path& dir, double threshold = 0.5,
                                       data::Normalization normalization = data::Normalization::unit_range);

}  // namespace roadseg::eval
