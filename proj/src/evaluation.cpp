#include "roadseg/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "roadseg/errors.hpp"
#include "roadseg/image_io.hpp"
#include "roadseg/mask_ops.hpp"

namespace roadseg::eval {

namespace {

constexpr float kImagenetMean[3] = {0.485F, 0.456F, 0.406F};
constexpr float kImagenetStd[3] = {0.229F, 0.224F, 0.225F};

const ColorSpec kTruthTint{0, 255, 0, 0};
const ColorSpec kPredTint{255, 0, 255, 0};
constexpr double kOverlayAlpha = 0.5;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

RgbImage tensor_to_rgb(torch::Tensor image, data::Normalization normalization) {
  image = image.detach().to(torch::kFloat32).cpu();
  if (normalization == data::Normalization::imagenet) {
    auto mean = torch::tensor({kImagenetMean[0], kImagenetMean[1], kImagenetMean[2]}).view({3, 1, 1});
    auto stdev = torch::tensor({kImagenetStd[0], kImagenetStd[1], kImagenetStd[2]}).view({3, 1, 1});
    image = image * stdev + mean;
  }
  auto hwc = (image.clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8).permute({1, 2, 0}).contiguous();
  const int h = static_cast<int>(hwc.size(0));
  const int w = static_cast<int>(hwc.size(1));
  return RgbImage::from_interleaved(h, w, 3, {hwc.data_ptr<std::uint8_t>(), static_cast<std::size_t>(hwc.numel())});
}

BinaryMask tensor_to_mask(const torch::Tensor& plane) {
  auto bytes = plane.to(torch::kUInt8).contiguous();
  const int h = static_cast<int>(bytes.size(-2));
  const int w = static_cast<int>(bytes.size(-1));
  return BinaryMask::from_values(h, w, {bytes.data_ptr<std::uint8_t>(), static_cast<std::size_t>(bytes.numel())});
}

std::vector<SampleScore> score_samples(const LogitFunction& logits_of, int input_size,
                                       const data::BatchStream& stream, double threshold) {
  if (stream.sample_count() == 0) throw ConfigError("evaluation stream is empty");
  if (stream.image_size() != input_size) {
    throw ConfigError("stream resolution " + std::to_string(stream.image_size()) +
                      " does not match model input size " + std::to_string(input_size));
  }
  std::vector<SampleScore> scores;
  stream.for_each_batch(0, [&](const data::Batch& batch) {
    const auto logits = logits_of(batch.images);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto idx = static_cast<int64_t>(i);
      SampleScore s;
      s.sample_id = batch.sample_ids[i];
      s.counts = train::confusion_from_logits(logits[idx], batch.masks[idx], threshold);
      s.road_iou = metrics::iou(s.counts, metrics::SegClass::road);
      scores.push_back(std::move(s));
    }
  });
  return scores;
}

std::string iou_tag(const metrics::Ratio& r) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.3f", r.value());
  return buf;
}

}  // namespace

LogitFunction inference_fn(models::SegmentationModel& model) {
  return [&model](const torch::Tensor& images) {
    const bool was_training = model.is_training();
    model.eval();
    torch::NoGradGuard no_grad;
    auto out = model.forward(images);
    model.train(was_training);
    return out;
  };
}

nlohmann::json CrossEvalResult::to_json() const {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : per_sample) {
    samples.push_back({{"sample_id", s.sample_id},
                       {"road_iou", s.road_iou.value()},
                       {"counts", metrics::to_json(s.counts)}});
  }
  return {{"model_tag", model_tag},         {"trained_on", trained_on},
          {"evaluated_on", evaluated_on},   {"same_dataset_warning", same_dataset()},
          {"report", metrics::to_json(report)}, {"per_sample", samples}};
}

CrossEvalResult CrossEvalResult::from_json(const nlohmann::json& j) {
  CrossEvalResult r;
  try {
    r.model_tag = j.at("model_tag").get<std::string>();
    r.trained_on = j.at("trained_on").get<std::string>();
    r.evaluated_on = j.at("evaluated_on").get<std::string>();
    r.report = metrics::report(metrics::counts_from_json(j.at("report").at("counts")));
    for (const auto& s : j.at("per_sample")) {
      SampleScore score;
      score.sample_id = s.at("sample_id").get<std::string>();
      score.counts = metrics::counts_from_json(s.at("counts"));
      score.road_iou = metrics::iou(score.counts, metrics::SegClass::road);
      r.per_sample.push_back(std::move(score));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed evaluation result: ") + e.what());
  }
  return r;
}

void CrossEvalResult::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

CrossEvalResult CrossEvalResult::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

CrossEvalResult cross_evaluate(const LogitFunction& logits_of, int input_size,
                               const data::BatchStream& stream, const EvalTags& tags,
                               double threshold) {
  CrossEvalResult result;
  result.model_tag = tags.model_tag;
  result.trained_on = tags.trained_on;
  result.evaluated_on = tags.evaluated_on;
  result.per_sample = score_samples(logits_of, input_size, stream, threshold);
  metrics::ConfusionCounts total;
  for (const auto& s : result.per_sample) total += s.counts;
  result.report = metrics::report(total);
  return result;
}

CrossEvalResult cross_evaluate(models::SegmentationModel& model, const data::BatchStream& stream,
                               const EvalTags& tags, double threshold) {
  return cross_evaluate(inference_fn(model), model.config().input_size, stream, tags, threshold);
}

std::vector<SampleScore> worst_samples(std::vector<SampleScore> scores, std::size_t k) {
  std::sort(scores.begin(), scores.end(), [](const SampleScore& a, const SampleScore& b) {
    if (a.road_iou != b.road_iou) return a.road_iou < b.road_iou;
    return a.sample_id < b.sample_id;
  });
  scores.resize(std::min(k, scores.size()));
  return scores;
}

TableFiles tabulate(const std::vector<CrossEvalResult>& results, const fs::path& dir) {
  fs::create_directories(dir);
  TableFiles files{dir / "results.csv", dir / "results.json"};

  std::ofstream csv(files.csv);
  if (!csv) throw IoError("cannot write " + files.csv.string());
  csv << "model_tag,trained_on,evaluated_on,same_dataset";
  for (const auto& col : metrics::report_columns()) csv << ',' << col;
  csv << '\n';

  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : results) {
    csv << csv_field(r.model_tag) << ',' << csv_field(r.trained_on) << ',' << csv_field(r.evaluated_on)
        << ',' << (r.same_dataset() ? "true" : "false");
    for (const auto& v : metrics::report_csv_fields(r.report)) csv << ',' << v;
    csv << '\n';

    nlohmann::json row = metrics::to_json(r.report);
    row["model_tag"] = r.model_tag;
    row["trained_on"] = r.trained_on;
    row["evaluated_on"] = r.evaluated_on;
    row["same_dataset_warning"] = r.same_dataset();
    rows.push_back(row);
  }

  std::ofstream json(files.json);
  if (!json) throw IoError("cannot write " + files.json.string());
  json << nlohmann::json{{"results", rows}}.dump(2) << '\n';
  return files;
}

std::vector<TableRow> read_results_csv(const fs::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot read " + csv_path.string());
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  const auto& columns = metrics::report_columns();
  if (header.size() != 4 + columns.size()) throw FormatError(csv_path.string() + ": unexpected header");
  std::vector<TableRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) throw FormatError(csv_path.string() + ": ragged row");
    TableRow row;
    row.model_tag = fields[0];
    row.trained_on = fields[1];
    row.evaluated_on = fields[2];
    row.same_dataset = fields[3] == "true";
    row.values.assign(fields.begin() + 4, fields.end());
    rows.push_back(std::move(row));
  }
  return rows;
}

CurvePlot plot_curves(const std::vector<train::EpochLog>& logs, const fs::path& dir) {
  if (logs.empty()) throw ParameterError("plot_curves needs at least one epoch");
  fs::create_directories(dir);
  CurvePlot plot{dir / "curves.png", dir / "curves.csv", logs.front().epoch, logs.back().epoch};
  train::write_epoch_logs(plot.csv, logs);

  constexpr int kPanelW = 480, kPanelH = 360, kMargin = 50;
  cv::Mat canvas(kPanelH, 2 * kPanelW, CV_8UC3, cv::Scalar(255, 255, 255));

  double max_loss = 1e-12;
  for (const auto& l : logs) max_loss = std::max({max_loss, l.train_loss, l.val_loss});

  const double x_lo = plot.first_epoch;
  const double x_hi = plot.last_epoch;
  auto x_of = [&](int panel, double epoch) {
    const double span = x_hi > x_lo ? (epoch - x_lo) / (x_hi - x_lo) : 0.5;
    return panel * kPanelW + kMargin + static_cast<int>(span * (kPanelW - 2 * kMargin));
  };
  auto y_of = [&](double v, double v_max) {
    return kPanelH - kMargin - static_cast<int>(v / v_max * (kPanelH - 2 * kMargin));
  };

  const cv::Scalar black(0, 0, 0);
  for (int panel = 0; panel < 2; ++panel) {
    const int left = panel * kPanelW + kMargin;
    const int right = (panel + 1) * kPanelW - kMargin;
    cv::line(canvas, {left, kPanelH - kMargin}, {right, kPanelH - kMargin}, black, 1);
    cv::line(canvas, {left, kMargin}, {left, kPanelH - kMargin}, black, 1);
    cv::putText(canvas, std::to_string(plot.first_epoch), {left - 4, kPanelH - kMargin + 18},
                cv::FONT_HERSHEY_SIMPLEX, 0.4, black);
    cv::putText(canvas, std::to_string(plot.last_epoch), {right - 10, kPanelH - kMargin + 18},
                cv::FONT_HERSHEY_SIMPLEX, 0.4, black);
    cv::putText(canvas, "epoch", {(left + right) / 2 - 20, kPanelH - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.45, black);
  }
  cv::putText(canvas, "loss (blue: train, orange: val)", {kMargin, 30}, cv::FONT_HERSHEY_SIMPLEX, 0.45, black);
  cv::putText(canvas, "val pixel accuracy", {kPanelW + kMargin, 30}, cv::FONT_HERSHEY_SIMPLEX, 0.45, black);

  auto draw_series = [&](int panel, auto value_of, double v_max, const cv::Scalar& color) {
    std::vector<cv::Point> pts;
    for (const auto& l : logs) pts.emplace_back(x_of(panel, l.epoch), y_of(value_of(l), v_max));
    if (pts.size() > 1) cv::polylines(canvas, pts, false, color, 2, cv::LINE_AA);
    for (const auto& p : pts) cv::circle(canvas, p, 2, color, cv::FILLED);
  };
  draw_series(0, [](const train::EpochLog& l) { return l.train_loss; }, max_loss, cv::Scalar(200, 80, 20));
  draw_series(0, [](const train::EpochLog& l) { return l.val_loss; }, max_loss, cv::Scalar(20, 140, 240));
  draw_series(1, [](const train::EpochLog& l) { return l.val_pixel_accuracy; }, 1.0, cv::Scalar(40, 160, 40));

  if (!cv::imwrite(plot.image.string(), canvas)) throw IoError("cannot write " + plot.image.string());
  return plot;
}

std::vector<GalleryItem> error_gallery(const LogitFunction& logits_of, const data::BatchStream& stream,
                                       std::size_t k, const fs::path& dir, double threshold,
                                       data::Normalization normalization) {
  if (k < 1) throw ParameterError("gallery size k must be >= 1");
  auto scores = score_samples(logits_of, stream.image_size(), stream, threshold);
  const auto worst = worst_samples(std::move(scores), k);

  std::map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < stream.sample_count(); ++i) index_of[stream.sample_id(i)] = i;

  fs::create_directories(dir);
  std::vector<GalleryItem> items;
  for (std::size_t rank = 0; rank < worst.size(); ++rank) {
    const auto& score = worst[rank];
    const auto sample = stream.sample(index_of.at(score.sample_id));
    const auto logits = logits_of(sample.image.unsqueeze(0));
    const BinaryMask predicted = tensor_to_mask(train::predict_road(logits, threshold)[0][0]);
    const RgbImage input = tensor_to_rgb(sample.image, normalization);

    char prefix[32];
    std::snprintf(prefix, sizeof prefix, "%03zu_iou%s_", rank, iou_tag(score.road_iou).c_str());
    const std::string stem = prefix + score.sample_id;

    GalleryItem item{static_cast<int>(rank), score.sample_id, score.road_iou,
                     dir / (stem + "_input.png"), dir / (stem + "_gt.png"), dir / (stem + "_pred.png")};
    write_rgb(item.input, input);
    write_rgb(item.ground_truth, overlay(input, sample.mask, kTruthTint, kOverlayAlpha));
    write_rgb(item.prediction, overlay(input, predicted, kPredTint, kOverlayAlpha));
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<GalleryItem> error_gallery(models::SegmentationModel& model, const data::BatchStream& stream,
                                       std::size_t k, const fs::path& dir, double threshold,
                                       data::Normalization normalization) {
  return error_gallery(inference_fn(model), stream, k, dir, threshold, normalization);
}

}  // namespace roadseg::eval
