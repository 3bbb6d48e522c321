#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <json.hpp>

#include "fixtures.hpp"
#include "tkg/errors.hpp"
#include "tkg/io.hpp"
#include "tkg/pipeline.hpp"

namespace tkg {
namespace {

namespace fs = std::filesystem;

PipelineConfig fixture_config(const fs::path& out) {
  PipelineConfig c;
  c.dataset_dir = testing::fixture_dir();
  c.granularity = 24;
  c.polarity = testing::fixture_dir() / "polarity.json";
  c.output_dir = out;
  c.gateway.embedding_dimension = 64;
  return c;
}

TEST(Config, StrictParsing) {
  const fs::path base = "/base";
  const auto c = PipelineConfig::from_json(
      R"({"dataset":{"dir":"d","granularity":24},"filter":{"tau":0.5},"seed":7})", base);
  EXPECT_EQ(c.dataset_dir, fs::path("/base/d"));
  EXPECT_EQ(c.granularity, 24);
  EXPECT_EQ(c.filter.tau, 0.5);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_THROW(PipelineConfig::from_json(R"({"sed":7})", base), ConfigError);
  EXPECT_THROW(PipelineConfig::from_json(R"({"filter":{"tua":1}})", base), ConfigError);
  EXPECT_THROW(PipelineConfig::from_json(R"({"seed":"x"})", base), ConfigError);
  EXPECT_THROW(PipelineConfig::from_json("{", base), ConfigError);
  EXPECT_THROW(PipelineConfig::from_json(R"({"split":"dev"})", base), Error);
}

TEST(Config, RoundTripAndHash) {
  auto c = fixture_config("/tmp/x");
  const auto back = PipelineConfig::from_json(c.to_json(), "/");
  EXPECT_EQ(back.hash(), c.hash());
  auto d = c;
  d.jobs = 8;
  d.output_dir = "/elsewhere";
  EXPECT_EQ(d.hash(), c.hash());
  d.filter.tau = 0.7;
  EXPECT_NE(d.hash(), c.hash());
}

TEST(Config, ValidationErrors) {
  auto c = fixture_config("/tmp/x");
  c.gateway.backend = "grpc";
  EXPECT_THROW(Pipeline{c}, ConfigError);
  c = fixture_config("/tmp/x");
  c.gateway.backend = "http";
  EXPECT_THROW(Pipeline{c}, ConfigError);
  c = fixture_config("/tmp/x");
  c.dataset_dir.clear();
  EXPECT_THROW(Pipeline{c}, ConfigError);
}

TEST(Pipeline, MissingPrerequisiteNamesProducer) {
  testing::TempDir dir;
  Pipeline p(fixture_config(dir.path()));
  try {
    p.run_stage("mine-rules");
    FAIL() << "expected PrerequisiteError";
  } catch (const PrerequisiteError& e) {
    EXPECT_NE(std::string(e.what()).find("ingest"), std::string::npos) << e.what();
  }
  EXPECT_THROW(p.run_stage("eval"), PrerequisiteError);
  EXPECT_THROW(p.run_stage("transmogrify"), ConfigError);
}

TEST(Pipeline, DeterministicAndIncremental) {
  testing::TempDir a, b;
  auto ca = fixture_config(a.path());
  auto cb = fixture_config(b.path());
  cb.jobs = 3;
  Pipeline pa(ca);
  Pipeline pb(cb);
  const auto ra = pa.run_all();
  pb.run_all();
  EXPECT_EQ(ra.size(), 7u);
  for (const auto* name : {"report.json", "traces.jsonl", "histories.jsonl", "prompts.jsonl",
                           "rules.json", "analysis.json"}) {
    EXPECT_EQ(read_file(a / name), read_file(b / name)) << name;
  }
  const auto report = nlohmann::json::parse(read_file(a / "report.json"));
  EXPECT_EQ(report.at("schema_version"), kArtifactSchemaVersion);
  EXPECT_EQ(report.at("kind"), "report");
  EXPECT_GT(report.at("sample_count").get<int>(), 0);

  // Second run is a no-op.
  Pipeline again(ca);
  for (const auto& r : again.run_all()) EXPECT_TRUE(r.skipped) << r.stage;

  // Forcing reruns every stage.
  Pipeline forced(ca, true);
  for (const auto& r : forced.run_all()) EXPECT_FALSE(r.skipped) << r.stage;
  EXPECT_EQ(read_file(a / "report.json"), read_file(b / "report.json"));

  // A changed config reruns.
  auto changed = ca;
  changed.filter.tau = 0.9;
  Pipeline p2(changed);
  EXPECT_FALSE(p2.run_stage("run").skipped);
}

TEST(Pipeline, ExportPairsAndCalibrate) {
  testing::TempDir dir;
  auto c = fixture_config(dir.path());
  c.pair_shots = 3;
  c.filter.always_score = true;
  c.filter.tau = 0.0;
  Pipeline p(c);
  p.run_stage("ingest");
  p.run_stage("mine-rules");
  p.run_stage("export-pairs");
  const auto pairs = read_file(dir / "training_pairs.jsonl");
  EXPECT_EQ(std::count(pairs.begin(), pairs.end(), '\n'), 3 + 1);
  p.run_stage("sample");
  p.run_stage("build-prompts");
  p.run_stage("run");
  p.run_stage("calibrate");
  const auto tau = nlohmann::json::parse(read_file(dir / "tau.json"));
  EXPECT_GE(tau.at("tau").get<double>(), -1.0);
  EXPECT_LE(tau.at("tau").get<double>(), 1.0);
}

TEST(ParallelFor, CoversEverySlotAndRethrows) {
  std::vector<int> hit(100, 0);
  parallel_for(hit.size(), 4, [&](std::size_t i) { hit[i] += 1; });
  for (int h : hit) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 5) throw ContractError("five");
                            }),
               ContractError);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TKGF_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, HelpForEverySubcommand) {
  EXPECT_EQ(run_cli("--help"), 0);
  for (const auto* sub : {"ingest", "mine-rules", "sample", "build-prompts", "export-pairs", "run",
                          "calibrate", "eval", "analyze", "all"}) {
    EXPECT_EQ(run_cli(std::string(sub) + " --help"), 0) << sub;
  }
}

TEST(Cli, ExitCodes) {
  testing::TempDir dir;
  const auto data = testing::fixture_dir().string();
  const auto out = dir.path().string();
  EXPECT_EQ(run_cli("--output-dir " + out + " --granularity 24 mine-rules --dataset " + data), 3);
  EXPECT_EQ(run_cli("--output-dir " + out + " --granularity 24 ingest --dataset " + data), 0);
  EXPECT_EQ(run_cli("--output-dir " + out + " --granularity 24 mine-rules --dataset " + data), 0);
  testing::write_text(dir / "bad.json", R"({"bogus":1})");
  EXPECT_EQ(run_cli("--config " + (dir / "bad.json").string() + " ingest"), 2);
  EXPECT_NE(run_cli("no-such-command"), 0);
}

}  // namespace
}  // namespace tkg
