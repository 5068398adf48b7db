#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "experiment.hpp"

using namespace bpre::lab;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int error_line(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

std::string error_message(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Catalog, NamesAndStatements) {
  const auto& catalog = list_experiments();
  auto find = [&](const std::string& name) -> const ExperimentInfo* {
    for (const auto& e : catalog)
      if (e.name == name) return &e;
    return nullptr;
  };
  for (const char* name : {"survival", "renewal", "theorem1", "theorem2", "remark1", "corollaries",
                           "conditions", "c0"})
    ASSERT_NE(find(name), nullptr) << name;
  EXPECT_EQ(find("theorem1")->statement, "Theorem 1");
  EXPECT_NE(find("c0")->statement.find("AsH"), std::string::npos);
}

TEST(Config, DefaultsPerExperiment) {
  const auto c = parse_config("experiment: theorem1\n");
  EXPECT_EQ(c.n, 4000u);
  EXPECT_EQ(c.p, 200u);
  EXPECT_EQ(c.min_survivors, 20000u);
  EXPECT_TRUE(c.environment.has_value());
  const auto r = parse_config("experiment: corollaries\n");
  EXPECT_EQ(r.p, 100u);
  const auto m = parse_config("experiment: c0\n");
  EXPECT_EQ(m.n_grid.back(), 10000u);
  EXPECT_TRUE(m.increments->lattice());
}

TEST(Config, ShortScaleConstraintIsNamed) {
  const std::string text = "experiment: theorem1\nn: 4000\np: 500\n";
  EXPECT_EQ(error_line(text), 3);
  EXPECT_NE(error_message(text).find("p <= n/10"), std::string::npos);
}

TEST(Config, UnknownExperimentListsValidNames) {
  const auto msg = error_message("experiment: theorem3\n");
  EXPECT_NE(msg.find("theorem1"), std::string::npos);
  EXPECT_NE(msg.find("c0"), std::string::npos);
  EXPECT_EQ(error_line("seed: 3\nexperiment: theorem3\n"), 2);
}

TEST(Config, LineReferencedErrors) {
  EXPECT_EQ(error_line("experiment: remark1\nn: 2000\nreplicate: 5\n"), 3);
  EXPECT_EQ(error_line("experiment: remark1\nreplicates: -4\n"), 2);
  EXPECT_EQ(error_line("experiment: remark1\nreplicates: 0\n"), 2);
  EXPECT_EQ(error_line("experiment: remark1\nU: 1\nseed: abc\n"), 3);
  EXPECT_EQ(error_line("experiment: theorem1\nU: -1\n"), 2);
  EXPECT_EQ(error_line("experiment: remark1\nenvironment:\n  family: geometric_lognormal\n  sigma: x\n"), 4);
  EXPECT_EQ(error_line("experiment: remark1\nenvironment:\n  family: banana\n"), 3);
  EXPECT_EQ(error_line("experiment: remark1\nthresholds:\n  ks_end: 0.05\n  ks_nd: 0.1\n"), 4);
  EXPECT_GT(error_line("experiment: [remark1\n"), 0);
  EXPECT_EQ(error_line("experiment: martingale\nq_grid: [25, 500]\n"), 2);
}

TEST(Config, NestedBlocks) {
  const auto c = parse_config(
      "experiment: renewal\n"
      "increments:\n  kind: discrete\n  points: [-2, -1, 1, 2]\n  probs: [0.2, 0.3, 0.3, 0.2]\n"
      "environment:\n  family: mixture\n  laws:\n    - {family: geometric, mean: 2}\n"
      "    - {family: poisson, mean: 0.5}\n  weights: [0.5, 0.5]\n");
  ASSERT_TRUE(c.increments->lattice());
  EXPECT_EQ(c.increments->lattice()->steps.size(), 4u);
  EXPECT_EQ(c.environment->laws().size(), 2u);
  EXPECT_EQ(c.echo["environment"]["laws"][1]["family"], "poisson");
}

TEST(Config, HashIgnoresThreadsAndOutput) {
  auto a = parse_config("experiment: meander\nseed: 5\n");
  const auto hash = a.hash;
  apply_overrides(a, Overrides{.threads = 4u, .out_dir = std::string("elsewhere")});
  EXPECT_EQ(a.hash, hash);
  apply_overrides(a, Overrides{.seed = 6u});
  EXPECT_NE(a.hash, hash);
  EXPECT_EQ(a.echo["seed"], 6u);
}

TEST(Config, ShippedConfigsParse) {
  for (const auto& entry : std::filesystem::directory_iterator(BPRE_CONFIG_DIR)) {
    if (entry.path().extension() != ".yaml") continue;
    EXPECT_NO_THROW(load_config(entry.path().string())) << entry.path();
  }
}

TEST(Run, DeterministicAcrossThreadCounts) {
  auto config = parse_config("experiment: meander\nseed: 3\nreplicates: 400\nreference_steps: 300\n");
  apply_overrides(config, Overrides{.threads = 1u});
  const auto a = run(config, false);
  apply_overrides(config, Overrides{.threads = 3u});
  const auto b = run(config, false);
  EXPECT_EQ(deterministic_part(a.report).dump(), deterministic_part(b.report).dump());
  EXPECT_EQ(a.report["seed"], 3u);
}

TEST(Run, WritesReportAndDumps) {
  const auto dir = std::filesystem::temp_directory_path() / "bpre_lab_test_run";
  std::filesystem::remove_all(dir);
  auto config = parse_config("experiment: renewal\nx_max: 40\nstay_n: 200\nreplicates: 300\nharmonic_x: [0, 3]\n");
  apply_overrides(config, Overrides{.out_dir = dir.string()});
  const auto outcome = run(config);
  EXPECT_TRUE(outcome.passed) << outcome.report.dump(2);
  ASSERT_GE(outcome.files.size(), 2u);
  const auto json_text = read_file(outcome.files[0]);
  const auto report = nlohmann::json::parse(json_text);
  EXPECT_EQ(report["config_hash"], config.hash);
  EXPECT_EQ(report["seed"], config.seed);
  EXPECT_TRUE(report.contains("wall_time_seconds"));
  const auto csv = read_file(outcome.files[1]);
  EXPECT_EQ(csv.rfind("# config_hash=" + config.hash + " seed=", 0), 0u);

  // Re-running reproduces every emitted file apart from the timing fields.
  const auto again = run(config);
  EXPECT_EQ(deterministic_part(again.report).dump(), deterministic_part(report).dump());
  EXPECT_EQ(read_file(again.files[1]), csv);
  std::filesystem::remove_all(dir);
}

TEST(Run, FailingCheckGivesFailedVerdict) {
  auto config = parse_config(
      "experiment: meander\nreplicates: 300\nreference_steps: 200\nthresholds:\n  ks_meander: 0.0\n");
  EXPECT_FALSE(run(config, false).passed);
}
