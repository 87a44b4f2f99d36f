#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "roadseg/errors.hpp"
#include "roadseg/evaluation.hpp"
#include "roadseg/image_io.hpp"
#include "roadseg/synthetic.hpp"
#include "support/fixtures.hpp"
#include "support/nets.hpp"
#include "support/oracles.hpp"

using namespace roadseg;
using namespace roadseg::eval;
namespace fs = std::filesystem;

namespace {

std::vector<data::LabeledSample> load_all(const data::DatasetManifest& m, int size) {
  data::SampleOptions opts;
  opts.size = size;
  opts.road_color = data::SyntheticStyle{}.road_label;
  std::vector<data::LabeledSample> out;
  for (const auto& e : m.entries) out.push_back(data::load_sample(e, opts));
  return out;
}

// Logits that reproduce each sample's own label, looked up by image content.
LogitFunction oracle_model(const std::vector<data::LabeledSample>& samples) {
  return [samples](const torch::Tensor& images) {
    std::vector<torch::Tensor> rows;
    for (int64_t i = 0; i < images.size(0); ++i) {
      for (const auto& s : samples) {
        if (torch::equal(s.image, images[i])) {
          rows.push_back(data::mask_to_tensor(s.mask) * 20.0 - 10.0);
          break;
        }
      }
    }
    return torch::stack(rows);
  };
}

LogitFunction constant_model(float logit) {
  return [logit](const torch::Tensor& images) {
    return torch::full({images.size(0), 1, images.size(2), images.size(3)}, logit);
  };
}

CrossEvalResult fake_result(const std::string& tag, const std::string& on, metrics::ConfusionCounts c) {
  CrossEvalResult r;
  r.model_tag = tag;
  r.trained_on = "a";
  r.evaluated_on = on;
  r.report = metrics::report(c);
  return r;
}

}  // namespace

class SyntheticSet : public ::testing::Test {
 protected:
  void SetUp() override {
    manifest_ = data::generate_synthetic(dir_.path(), 6, 32, 4);
    samples_ = load_all(manifest_, 32);
  }
  fixture::TempDir dir_{"evalset"};
  data::DatasetManifest manifest_;
  std::vector<data::LabeledSample> samples_;
};

TEST_F(SyntheticSet, OracleModelScoresOne) {
  const auto stream = data::BatchStream::from_samples(samples_, 4, data::Order::fixed);
  const auto r = cross_evaluate(oracle_model(samples_), 32, stream, {"oracle", "a", "b"});
  for (const auto& v : {r.report.pixel_accuracy, r.report.precision, r.report.recall, r.report.f1,
                        r.report.iou_road, r.report.iou_background, r.report.miou}) {
    EXPECT_EQ(v, metrics::Ratio(1, 1));
  }
  EXPECT_EQ(r.per_sample.size(), 6u);
}

TEST_F(SyntheticSet, BackgroundModelHasZeroRecall) {
  const auto stream = data::BatchStream::from_samples(samples_, 4, data::Order::fixed);
  const auto r = cross_evaluate(constant_model(-5.0F), 32, stream, {"bg", "a", "b"});
  EXPECT_EQ(r.report.recall, metrics::Ratio(0, 1));
  EXPECT_EQ(r.report.precision, metrics::Ratio(1, 1));
}

TEST_F(SyntheticSet, ReportEqualsSumOfPerSampleOracles) {
  auto model = models::build_unet([] {
    models::ModelConfig c;
    c.input_size = 32;
    c.base_channels = 4;
    return c;
  }(), 3);
  const auto stream = data::BatchStream::from_samples(samples_, 4, data::Order::fixed);
  const auto r = cross_evaluate(model, stream, {"tiny", "a", "b"});

  model.eval();
  torch::NoGradGuard ng;
  oracle::Counts sum;
  for (const auto& s : samples_) {
    const auto logits = model.forward(s.image.unsqueeze(0));
    BinaryMask pred(32, 32);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) pred.set(y, x, logits[0][0][y][x].item<float>() > 0.0F);
    const auto c = oracle::enumerate(pred, s.mask).counts;
    sum.tp += c.tp;
    sum.fp += c.fp;
    sum.fn += c.fn;
    sum.tn += c.tn;
  }
  std::string why;
  EXPECT_TRUE(oracle::matches(r.report, oracle::from_counts(sum), &why)) << why;
}

TEST_F(SyntheticSet, VisitsEverySampleOnceWithoutMutation) {
  auto model = models::build_unet([] {
    models::ModelConfig c;
    c.input_size = 32;
    c.base_channels = 4;
    return c;
  }(), 1);
  const auto before = model.clone();
  const auto stream = data::BatchStream::from_samples(samples_, 4, data::Order::shuffled, 3);
  const auto r = cross_evaluate(model, stream, {"t", "a", "b"});
  std::multiset<std::string> seen;
  for (const auto& s : r.per_sample) seen.insert(s.sample_id);
  std::multiset<std::string> want;
  for (const auto& s : samples_) want.insert(s.sample_id);
  EXPECT_EQ(seen, want);
  auto after = model.named_parameters();
  for (const auto& item : before.named_parameters()) EXPECT_TRUE(torch::equal(item.value(), after[item.key()]));
}

TEST_F(SyntheticSet, ResolutionMismatchAndEmpty) {
  const auto stream = data::BatchStream::from_samples(samples_, 4, data::Order::fixed);
  EXPECT_THROW(cross_evaluate(constant_model(0.0F), 64, stream, {}), ConfigError);
  EXPECT_THROW(cross_evaluate(constant_model(0.0F), 32, data::BatchStream::from_samples({}, 1, data::Order::fixed), {}),
               ConfigError);
}

TEST_F(SyntheticSet, GalleryOrderedByIou) {
  const auto stream = data::BatchStream::from_samples(samples_, 4, data::Order::fixed);
  // Half-wrong model: road iff green channel > 0.5.
  auto model = fixture::wrap(std::make_shared<fixture::ThresholdNet>(), 32);
  const auto items = error_gallery(model, stream, 4, dir_ / "gallery");
  ASSERT_EQ(items.size(), 4u);
  for (std::size_t i = 0; i + 1 < items.size(); ++i) EXPECT_LE(items[i].road_iou, items[i + 1].road_iou);
  const auto all = cross_evaluate(model, stream, {});
  auto scores = all.per_sample;
  std::sort(scores.begin(), scores.end(), [](const SampleScore& a, const SampleScore& b) {
    return a.road_iou < b.road_iou || (a.road_iou == b.road_iou && a.sample_id < b.sample_id);
  });
  for (std::size_t i = 0; i < items.size(); ++i) {
    EXPECT_EQ(items[i].sample_id, scores[i].sample_id);
    EXPECT_TRUE(fs::exists(items[i].input));
    EXPECT_TRUE(fs::exists(items[i].ground_truth));
    EXPECT_TRUE(fs::exists(items[i].prediction));
    EXPECT_EQ(read_rgb(items[i].prediction).height(), 32);
  }
}

TEST_F(SyntheticSet, GalleryClampsAndOracleIous) {
  const auto stream = data::BatchStream::from_samples(samples_, 4, data::Order::fixed);
  const auto items = error_gallery(oracle_model(samples_), stream, 50, dir_ / "g2");
  EXPECT_EQ(items.size(), 6u);
  for (const auto& it : items) EXPECT_EQ(it.road_iou, metrics::Ratio(1, 1));
  const auto bg = error_gallery(constant_model(-3.0F), stream, 3, dir_ / "g3");
  for (const auto& it : bg) EXPECT_EQ(it.road_iou, metrics::Ratio(0, 1));
}

TEST(WorstSamples, SortsAndClamps) {
  std::vector<SampleScore> s{{"b", {}, metrics::Ratio(1, 2)}, {"a", {}, metrics::Ratio(1, 2)},
                             {"c", {}, metrics::Ratio(1, 4)}};
  const auto w = worst_samples(s, 10);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0].sample_id, "c");
  EXPECT_EQ(w[1].sample_id, "a");
  EXPECT_EQ(worst_samples(s, 1).size(), 1u);
}

TEST(Tabulate, RowsColumnsAndRoundTrip) {
  fixture::TempDir dir("table");
  std::vector<CrossEvalResult> results{fake_result("unet_a", "b", {3, 1, 2, 10}),
                                       fake_result("unet_a", "a", {5, 0, 1, 10})};
  const auto files = tabulate(results, dir.path());
  const auto rows = read_results_csv(files.csv);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_FALSE(rows[0].same_dataset);
  EXPECT_TRUE(rows[1].same_dataset);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].values, metrics::report_csv_fields(results[i].report));
    EXPECT_EQ(rows[i].evaluated_on, results[i].evaluated_on);
  }
  const auto header = fixture::slurp(files.csv).substr(0, fixture::slurp(files.csv).find('\n'));
  EXPECT_EQ(header.rfind("model_tag,trained_on,evaluated_on,same_dataset,pixel_accuracy,", 0), 0u);
  const auto j = nlohmann::json::parse(fixture::slurp(files.json));
  EXPECT_EQ(j.at("results").size(), 2u);
  EXPECT_TRUE(j.at("results")[1].at("same_dataset_warning").get<bool>());
}

TEST(CrossEvalResultTest, JsonRoundTrip) {
  fixture::TempDir dir("cer");
  auto r = fake_result("t", "b", {3, 1, 2, 10});
  r.per_sample.push_back({"x", {3, 1, 2, 10}, metrics::Ratio(1, 2)});
  r.save(dir / "r.json");
  const auto back = CrossEvalResult::load(dir / "r.json");
  EXPECT_EQ(back.report, r.report);
  EXPECT_EQ(back.per_sample.size(), 1u);
  EXPECT_EQ(back.per_sample[0].road_iou, metrics::Ratio(1, 2));
  EXPECT_FALSE(back.same_dataset());
}

TEST(Curves, EpochRangeAndSinglePoint) {
  fixture::TempDir dir("curves");
  for (int n : {8, 300, 1}) {
    std::vector<train::EpochLog> logs;
    for (int e = 1; e <= n; ++e) logs.push_back({e, 1.0 / e, 1.2 / e, 1.0 - 0.5 / e, 0.1});
    const auto plot = plot_curves(logs, dir / std::to_string(n));
    EXPECT_EQ(plot.first_epoch, 1);
    EXPECT_EQ(plot.last_epoch, n);
    EXPECT_TRUE(fs::exists(plot.image));
    EXPECT_GT(read_rgb(plot.image).width(), 0);
    EXPECT_EQ(train::read_epoch_logs(plot.csv).size(), static_cast<std::size_t>(n));
  }
}
