#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>

#include "calib_il/error.hpp"
#include "calib_il/store_io.hpp"
#include "commands.hpp"
#include "fixtures.hpp"
#include "run_spec.hpp"

using namespace calib_il;
using namespace calib_il::cli;
namespace fs = std::filesystem;

namespace {

const char* kTinySpec = R"({
  "seed": 3,
  "num_states": 3,
  "num_references": 3,
  "num_targets": 2,
  "synthetic": {"num_classes": 6, "feature_dim": 8, "train_per_class": 9, "val_per_class": 6, "test_per_class": 6},
  "backbone": {"kind": "ftplus", "hidden_dim": 12, "epochs_initial": 6, "epochs_incremental": 3},
  "calibration": {"epochs": 20},
  "sweep": {"r_values": [1, 2, 3], "samplings": 10, "halved": true}
})";

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(fixture::slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    rows.push_back(f);
  }
  return rows;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fixture::fresh_dir(std::string("cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    spec_ = dir_ / "spec.json";
    write_file_atomic(spec_, kTinySpec);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& command, const fs::path& out, const fs::path& spec = {}) {
    log_.str("");
    return run_command({command, spec.empty() ? spec_ : spec, out, 1, false}, log_);
  }

  fs::path dir_, spec_;
  std::ostringstream log_;
};

}  // namespace

TEST(RunSpec, MissingSeedIsRejected) {
  EXPECT_THROW(parse_run_spec(R"({"num_states": 5})", "s"), SpecError);
  EXPECT_THROW(parse_run_spec(R"({"seed": -1})", "s"), SpecError);
}

TEST(RunSpec, UnknownKeysAndBadValuesRejected) {
  EXPECT_THROW(parse_run_spec(R"({"seed": 1, "num_state": 5})", "s"), SpecError);
  EXPECT_THROW(parse_run_spec(R"({"seed": 1, "backbone": {"kind": "resnet"}})", "s"), SpecError);
  EXPECT_THROW(parse_run_spec(R"({"seed": 1, "num_states": 3})", "s"), SpecError);  // 20 classes
  EXPECT_THROW(parse_run_spec(R"({"seed": 1, "calibration": {"epochs": 0}})", "s"), SpecError);
  EXPECT_THROW(parse_run_spec(R"({"seed": 1,)", "s"), SpecError);
}

TEST(RunSpec, DefaultsAndDistinctSeeds) {
  const RunSpec spec = parse_run_spec(R"({"seed": 1})", "s");
  EXPECT_EQ(spec.num_states, 5);
  EXPECT_EQ(spec.num_references, 10);
  EXPECT_EQ(spec.sweep.samplings, 10);
  EXPECT_EQ(spec.calibration.epochs, 300);
  std::set<std::uint64_t> seeds;
  for (int i = 0; i < 10; ++i) {
    seeds.insert(spec.reference_data_seed(i));
    seeds.insert(spec.target_data_seed(i));
    seeds.insert(spec.reference_model_seed(i));
    seeds.insert(spec.target_model_seed(i));
  }
  EXPECT_EQ(seeds.size(), 40u);
}

TEST_F(Cli, EnvironmentSeedOverride) {
  ::setenv("CALIB_IL_SEED", "99", 1);
  EXPECT_EQ(load_run_spec(spec_).seed, 99u);
  ::setenv("CALIB_IL_SEED", "x1", 1);
  EXPECT_THROW(load_run_spec(spec_), SpecError);
  ::unsetenv("CALIB_IL_SEED");
  EXPECT_EQ(load_run_spec(spec_).seed, 3u);
}

TEST_F(Cli, GenWritesDistinctSeedsAndIsRepeatable) {
  ASSERT_EQ(run("gen", dir_ / "a"), 0) << log_.str();
  ASSERT_EQ(run("gen", dir_ / "b"), 0);
  std::set<std::uint64_t> seeds;
  for (const char* name : {"reference_00", "reference_01", "reference_02", "target_00", "target_01"}) {
    const fs::path p = dir_ / "a" / "datasets" / (std::string(name) + ".csv");
    const auto ds = read_dataset(p);
    seeds.insert(ds.seed);
    EXPECT_EQ(fixture::slurp(p), fixture::slurp(dir_ / "b" / "datasets" / (std::string(name) + ".csv")));
  }
  EXPECT_EQ(seeds.size(), 5u);
}

TEST_F(Cli, ExitCodes) {
  write_file_atomic(dir_ / "bad.json", R"({"num_states": 3})");
  EXPECT_EQ(run("gen", dir_ / "o", dir_ / "bad.json"), 2);
  EXPECT_NE(log_.str().find("event=error kind=spec"), std::string::npos) << log_.str();
  EXPECT_EQ(run("run-target", dir_ / "empty"), 3);
  EXPECT_EQ(run("gen", dir_ / "o", dir_ / "absent.json"), 2);

  std::string diverging = kTinySpec;
  diverging.replace(diverging.find("\"kind\": \"ftplus\""), 16, "\"kind\": \"ftplus\", \"learning_rate\": 1e150");
  write_file_atomic(dir_ / "diverge.json", diverging);
  EXPECT_EQ(run("run-reference", dir_ / "o", dir_ / "diverge.json"), 4) << log_.str();

  std::ostringstream out, err;
  const char* bad_jobs[] = {"calib-il", "gen", "--spec", "x.json", "--out", "o", "--jobs", "0"};
  EXPECT_EQ(run_cli(8, bad_jobs, out, err), 2);
  const char* no_command[] = {"calib-il"};
  EXPECT_EQ(run_cli(1, no_command, out, err), 2);
  const char* help[] = {"calib-il", "--help"};
  EXPECT_EQ(run_cli(2, help, out, err), 0);
  EXPECT_NE(out.str().find("run-reference"), std::string::npos);
}

TEST_F(Cli, ReferenceTablesAreCompleteAndFitsImprove) {
  ASSERT_EQ(run("run-reference", dir_), 0) << log_.str();
  for (int r = 0; r < 3; ++r) {
    const auto t = read_table(dir_ / "tables" / (reference_name(r) + ".table.json"));
    EXPECT_EQ(t.num_states(), 3);
    const auto rows = csv_rows(dir_ / "tables" / (reference_name(r) + ".fit.csv"));
    ASSERT_EQ(rows.size(), 3u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      EXPECT_LE(parse_double(rows[i][2], "final"), parse_double(rows[i][1], "initial"));
    }
  }
}

TEST_F(Cli, RunTargetComparisonStructure) {
  ASSERT_EQ(run("run-reference", dir_), 0);
  ASSERT_EQ(run("run-target", dir_), 0) << log_.str();
  const auto rows = csv_rows(dir_ / "comparison.csv");
  ASSERT_EQ(rows.size(), 1u + 4 * 3);  // two targets plus their mean
  std::map<std::string, double> raw;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double avg = parse_double(rows[i][2], "avg");
    if (rows[i][1] == "raw") raw[rows[i][0]] = avg;
    EXPECT_NEAR(parse_double(rows[i][3], "gain"), avg - raw.at(rows[i][0]), 1e-12);
  }
  const auto per_target = csv_rows(dir_ / "targets" / "target_00" / "comparison.csv");
  ASSERT_EQ(per_target.size(), 5u);
  EXPECT_EQ(per_target[1][0], "raw");
  EXPECT_EQ(per_target[2][0], "bic");
  EXPECT_EQ(per_target[3][0], "adbic");
  EXPECT_EQ(per_target[4][0], "adbic_oracle");
  EXPECT_TRUE(fs::exists(dir_ / "comparison.md"));
  const auto choices = csv_rows(dir_ / "targets" / "target_00" / "oracle_choices.csv");
  ASSERT_EQ(choices.size(), 3u);  // states 2 and 3
  for (std::size_t i = 1; i < choices.size(); ++i) {
    EXPECT_EQ(choices[i][2], "test");
    EXPECT_EQ(choices[i][3], "false");
  }
}

TEST_F(Cli, RunTargetWithIdentityTablesReproducesRaw) {
  for (int r = 0; r < 2; ++r) {
    write_table(dir_ / "tables" / (reference_name(r) + ".table.json"), CalibrationTable::identity(3));
  }
  ASSERT_EQ(run("run-target", dir_), 0) << log_.str();
  const fs::path t = dir_ / "targets" / "target_01";
  const std::string raw = fixture::slurp(t / "metrics_raw.csv");
  EXPECT_EQ(fixture::slurp(t / "metrics_adbic.csv"), raw);
  EXPECT_EQ(fixture::slurp(t / "metrics_bic.csv"), raw);
  EXPECT_EQ(fixture::slurp(t / "metrics_adbic_oracle.csv"), raw);
}

TEST_F(Cli, SweepSamplingProtocol) {
  ASSERT_EQ(run("run-reference", dir_), 0);
  ASSERT_EQ(run("sweep", dir_), 0) << log_.str();
  const auto rows = csv_rows(dir_ / "sweep_r.csv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[1][1], "10");
  EXPECT_EQ(rows[2][1], "10");
  EXPECT_EQ(rows[3][1], "1");
  EXPECT_EQ(rows[3][3], "0");

  const auto samples = csv_rows(dir_ / "sweep_r_samples.csv");
  EXPECT_EQ(samples.size(), 1u + 10 + 10 + 1);
  for (std::size_t i = 1; i < samples.size(); ++i) {
    std::set<std::string> picked;
    std::stringstream ids(samples[i][2]);
    for (std::string id; std::getline(ids, id, ';');) picked.insert(id);
    EXPECT_EQ(picked.size(), static_cast<std::size_t>(std::stoi(samples[i][0])));  // no repeats
  }

  const auto halved = csv_rows(dir_ / "halved.csv");
  ASSERT_GT(halved.size(), 1u);
  for (std::size_t i = 1; i < halved.size(); ++i) EXPECT_EQ(halved[i][2], "5");  // ceil(9/2)
}

TEST_F(Cli, SweepRejectsTooManyReferences) {
  std::string spec = kTinySpec;
  spec.replace(spec.find("[1, 2, 3]"), 9, "[1, 4]");
  write_file_atomic(dir_ / "wide.json", spec);
  ASSERT_EQ(run("run-reference", dir_), 0);
  EXPECT_EQ(run("sweep", dir_, dir_ / "wide.json"), 2);
}

TEST_F(Cli, PlotRendersAndValidatesColumns) {
  ASSERT_EQ(run("run-reference", dir_), 0);
  ASSERT_EQ(run("run-target", dir_), 0);
  ASSERT_EQ(run("plot", dir_), 0) << log_.str();
  const std::string chart = fixture::slurp(dir_ / "plots" / "target_00_comparison.svg");
  EXPECT_NE(chart.find("stroke-dasharray"), std::string::npos);
  EXPECT_NE(fixture::slurp(dir_ / "plots" / "target_00_metrics_adbic.svg").find("class=\"masked\""), std::string::npos);

  std::string text = fixture::slurp(dir_ / "targets" / "target_00" / "comparison.csv");
  text.replace(text.find("acc_s1"), 6, "acc_x1");
  write_file_atomic(dir_ / "targets" / "target_00" / "comparison.csv", text);
  EXPECT_EQ(run("plot", dir_), 3);
  EXPECT_NE(log_.str().find("acc_s1"), std::string::npos) << log_.str();
}

TEST_F(Cli, ExternalLogitsFeedTheSamePipeline) {
  ASSERT_EQ(run("run-reference", dir_ / "trained"), 0);
  // reuse the dumped validation logits as if another system had produced them
  for (int r = 0; r < 3; ++r) {
    for (int s = 2; s <= 3; ++s) {
      const auto l = read_logits(dir_ / "trained" / "logits" / reference_name(r) / ("validation_state_" + std::to_string(s) + ".csv"));
      write_logits(dir_ / "ext" / reference_name(r) / ("state_" + std::to_string(s) + ".csv"), l);
    }
  }
  std::string spec = kTinySpec;
  spec.replace(spec.find("\"seed\": 3,"), 10,
               R"("seed": 3, "external_logits": {"references": ["ext/reference_00", "ext/reference_01", "ext/reference_02"]},)");
  write_file_atomic(dir_ / "ext.json", spec);
  ASSERT_EQ(run("run-reference", dir_ / "external", dir_ / "ext.json"), 0) << log_.str();
  for (int r = 0; r < 3; ++r) {
    const std::string name = reference_name(r) + ".table.json";
    EXPECT_EQ(fixture::slurp(dir_ / "external" / "tables" / name), fixture::slurp(dir_ / "trained" / "tables" / name));
  }
}
