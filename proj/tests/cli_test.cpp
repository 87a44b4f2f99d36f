#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "roadseg/commands.hpp"
#include "roadseg/errors.hpp"
#include "roadseg/synthetic.hpp"
#include "support/fixtures.hpp"

using namespace roadseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "roadseg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream(p) << j.dump(2);
}

// Two small synthetic sets and a config training a tiny U-Net on the first.
class CliRun : public ::testing::Test {
 protected:
  void SetUp() override {
    data::generate_synthetic(dir_ / "a", 12, 32, 1, data::SyntheticStyle::highway());
    data::generate_synthetic(dir_ / "b", 5, 32, 2, data::SyntheticStyle::suburban());
    config_ = {
        {"datasets", {{"a", {{"root", "a"}, {"kind", "synthetic"}}}, {"b", {{"root", "b"}, {"kind", "synthetic"}}}}},
        {"train_dataset", "a"},
        {"foreign_dataset", "b"},
        {"split", {{"seed", 3}}},
        {"model", {{"architecture", "unet"}, {"input_size", 32}, {"base_channels", 4}}},
        {"training", {{"learning_rate", 1e-3}, {"batch_size", 4}, {"max_epochs", 2}, {"seed", 1}}},
        {"evaluation", {{"gallery_k", 3}}},
        {"output_dir", "run"}};
    write_json(cfg(), config_);
  }
  fs::path cfg() const { return dir_ / "cfg.json"; }
  fs::path run_dir() const { return dir_ / "run"; }

  fixture::TempDir dir_{"cli"};
  nlohmann::json config_;
};

}  // namespace

TEST(CliArgs, UsageErrorsExitOne) {
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"bogus"}).code, 1);
  EXPECT_EQ(run_cli({"train"}).code, 1);
  EXPECT_EQ(run_cli({"synth", "--out", "/tmp/x", "--style", "rural"}).code, 1);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(CliArgs, MissingConfigFile) {
  const auto r = run_cli({"prepare", "--config", "/nonexistent/cfg.json"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("/nonexistent/cfg.json"), std::string::npos);
}

TEST(CliArgs, SynthWritesDataset) {
  fixture::TempDir dir("clisynth");
  const auto r = run_cli({"synth", "--out", (dir / "s").string(), "--count", "4", "--size", "32", "--seed", "9"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(data::load_manifest(dir / "s", data::DatasetKind::synthetic).size(), 4u);
}

TEST_F(CliRun, UnknownKeyRejected) {
  config_["training"]["lerning_rate"] = 0.1;
  write_json(cfg(), config_);
  const auto r = run_cli({"prepare", "--config", cfg().string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("lerning_rate"), std::string::npos);
}

TEST_F(CliRun, MissingRootNamesPath) {
  config_["datasets"]["b"]["root"] = "missing_dir";
  write_json(cfg(), config_);
  const auto r = run_cli({"prepare", "--config", cfg().string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("missing_dir"), std::string::npos);
}

TEST_F(CliRun, UnsupportedDevice) {
  const auto r = run_cli({"prepare", "--config", cfg().string(), "--device", "cuda"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("cuda"), std::string::npos);
}

TEST_F(CliRun, PrepareIsIdempotent) {
  auto r = run_cli({"prepare", "--config", cfg().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto split = data::SplitAssignment::load(run_dir() / "prepared" / "a" / "split.json");
  EXPECT_EQ(split.sizes(), (data::SplitSizes{8, 2, 2}));
  EXPECT_EQ(std::distance(fs::directory_iterator(run_dir() / "prepared" / "a" / "masks"), fs::directory_iterator{}), 12);
  const auto stamp = fs::last_write_time(run_dir() / "prepared" / "a" / "split.json");

  r = run_cli({"prepare", "--config", cfg().string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(fs::last_write_time(run_dir() / "prepared" / "a" / "split.json"), stamp);

  r = run_cli({"prepare", "--config", cfg().string(), "--force"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(data::SplitAssignment::load(run_dir() / "prepared" / "a" / "split.json"), split);
}

TEST_F(CliRun, TrainRequiresPrepare) {
  const auto r = run_cli({"train", "--config", cfg().string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("prepare"), std::string::npos);
}

TEST_F(CliRun, CrossevalWithoutCheckpoint) {
  ASSERT_EQ(run_cli({"prepare", "--config", cfg().string()}).code, 0);
  const auto r = run_cli({"crosseval", "--config", cfg().string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("checkpoint"), std::string::npos);
}

TEST_F(CliRun, FullPipeline) {
  ASSERT_EQ(run_cli({"prepare", "--config", cfg().string()}).code, 0);
  auto r = run_cli({"train", "--config", cfg().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(run_dir() / "train" / "log.csv"));
  EXPECT_TRUE(fs::exists(run_dir() / "train" / "best.ckpt"));
  EXPECT_EQ(train::read_epoch_logs(run_dir() / "train" / "log.csv").size(), 2u);

  r = run_cli({"eval", "--config", cfg().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto own = eval::CrossEvalResult::load(run_dir() / "eval" / "a_test.json");
  EXPECT_EQ(own.per_sample.size(), 2u);

  r = run_cli({"crosseval", "--config", cfg().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto foreign = eval::CrossEvalResult::load(run_dir() / "crosseval" / "unet_a_on_b.json");
  EXPECT_EQ(foreign.per_sample.size(), 5u);
  EXPECT_FALSE(foreign.same_dataset());

  r = run_cli({"crosseval", "--config", cfg().string(), "--foreign-dataset", "a"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("warning"), std::string::npos);
  EXPECT_TRUE(eval::CrossEvalResult::load(run_dir() / "crosseval" / "unet_a_on_a.json").same_dataset());

  r = run_cli({"crosseval", "--config", cfg().string(), "--foreign-dataset", "zzz"});
  EXPECT_EQ(r.code, 1);

  r = run_cli({"report", "--out", run_dir().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(run_dir() / "results.csv"));
  EXPECT_TRUE(fs::exists(run_dir() / "results.json"));
  EXPECT_TRUE(fs::exists(run_dir() / "curves.png"));
  EXPECT_EQ(eval::read_results_csv(run_dir() / "results.csv").size(), 2u);
  EXPECT_EQ(std::distance(fs::directory_iterator(run_dir() / "gallery"), fs::directory_iterator{}), 9);
}

TEST_F(CliRun, SeedOverrideChangesWeights) {
  ASSERT_EQ(run_cli({"prepare", "--config", cfg().string()}).code, 0);
  ASSERT_EQ(run_cli({"train", "--config", cfg().string(), "--out", (dir_ / "r1").string()}).code, 1)
      << "unprepared output dir must be rejected";
  ASSERT_EQ(run_cli({"train", "--config", cfg().string()}).code, 0);
  const auto first = fixture::slurp(run_dir() / "train" / "final.ckpt");
  ASSERT_EQ(run_cli({"train", "--config", cfg().string()}).code, 0);
  EXPECT_EQ(fixture::slurp(run_dir() / "train" / "final.ckpt"), first);
  ASSERT_EQ(run_cli({"train", "--config", cfg().string(), "--seed", "77"}).code, 0);
  EXPECT_NE(fixture::slurp(run_dir() / "train" / "final.ckpt"), first);
}

TEST(ConfigFile, RelativePathsAndDefaults) {
  fixture::TempDir dir("cfgfile");
  fs::create_directories(dir / "data");
  write_json(dir / "c.json", {{"datasets", {{"k", {{"root", "data"}, {"kind", "kitti_road"}}}}},
                              {"model", {{"architecture", "unet"}, {"input_size", 64}}}});
  const auto c = experiment::ExperimentConfig::load(dir / "c.json");
  EXPECT_EQ(c.train_dataset, "k");
  EXPECT_EQ(c.dataset("k").root, dir / "data");
  EXPECT_EQ(c.dataset("k").road_color, (ColorSpec{255, 0, 255, 0}));
  EXPECT_FALSE(c.dataset("k").lane_color.has_value());
  EXPECT_NO_THROW(c.validate());
  const auto again = experiment::ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(again.to_json(), c.to_json());
}

TEST(ConfigFile, RejectsBadValues) {
  auto base = nlohmann::json{{"datasets", {{"k", {{"root", "/tmp"}}}}}};
  auto bad = base;
  bad["evaluation"] = {{"threshold", 1.5}};
  EXPECT_THROW(experiment::ExperimentConfig::from_json(bad).validate(), ConfigError);
  bad = base;
  bad["datasets"]["k"]["kind"] = "cityscapes";
  EXPECT_THROW(experiment::ExperimentConfig::from_json(bad), ConfigError);
  bad = base;
  bad["model"] = {{"architecture", "unet"}, {"input_size", 100}};
  EXPECT_THROW(experiment::ExperimentConfig::from_json(bad).validate(), ConfigError);
  bad = base;
  bad["datasets"]["k"]["road_color"] = {{"r", 300}, {"g", 0}, {"b", 0}};
  EXPECT_THROW(experiment::ExperimentConfig::from_json(bad), ConfigError);
}
