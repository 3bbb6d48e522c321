#pragma once
// Stage runner behind the command line tool.
//
//   ingest        -> graph_stats.json
//   mine-rules    -> rules.json
//   sample        -> histories.jsonl
//   build-prompts -> prompts.jsonl
//   export-pairs  -> training_pairs.jsonl
//   run           -> traces.jsonl, sims.jsonl
//   calibrate     -> tau.json
//   eval          -> report.json
//   analyze       -> analysis.json
//
// Artifacts live in the output directory unless a path is overridden. Each
// one starts with (JSON) or is preceded by (JSONL header line) the schema
// version, artifact kind, producing config hash and seed. manifest.json maps
// each stage to the config hash and input/output hashes of its last run; a
// stage whose entry still matches is skipped unless forced.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tkg/contrastive.hpp"
#include "tkg/evaluator.hpp"
#include "tkg/gateway.hpp"
#include "tkg/graph_store.hpp"
#include "tkg/history_sampler.hpp"
#include "tkg/inference_filter.hpp"
#include "tkg/rule_miner.hpp"

namespace tkg {

inline constexpr int kArtifactSchemaVersion = 1;

struct GatewayConfig {
  std::string backend = "stub";  // stub | http
  std::string generate_url;
  std::string embed_url;
  int timeout_ms = 30000;
  int retries = 2;
  int max_in_flight = 4;
  std::size_t embedding_dimension = 768;
  double stub_history_bias = 0.7;
  std::filesystem::path embedding_cache;  // empty: in-memory only
};

struct PipelineConfig {
  std::filesystem::path dataset_dir;
  Timestamp granularity = 1;
  std::string time_format = "iso";  // iso | integer
  std::string epoch = "2014-01-01";
  std::string time_prefix;
  MiningOptions rules;
  SamplerConfig sampler;
  FilterConfig filter;
  GatewayConfig gateway;
  std::size_t pair_shots = 8;
  Split pair_split = Split::train;
  std::filesystem::path polarity;
  FilterScope eval_scope = FilterScope::all_splits;
  Split split = Split::test;
  std::size_t max_queries = 0;  // 0: every query of the split
  std::uint64_t seed = 42;
  std::filesystem::path output_dir = "out";
  unsigned jobs = 1;

  // Strict: unknown keys are errors. Relative paths resolve against
  // `base_dir`. Throws ConfigError.
  static PipelineConfig from_json(std::string_view text, const std::filesystem::path& base_dir);
  static PipelineConfig load(const std::filesystem::path& path);

  std::string to_json() const;
  // Hash of everything that can change an artifact (not jobs or output_dir).
  std::string hash() const;
  // Throws ConfigError.
  void validate() const;
  TimeFormat make_time_format() const;
};

std::shared_ptr<GenerationClient> make_generation_client(const PipelineConfig& config,
                                                         const TemporalGraph& graph);
// Wrapped in a cache, preloaded from gateway.embedding_cache when that file
// exists.
std::shared_ptr<CachingEmbeddingClient> make_embedding_client(const PipelineConfig& config);

struct StageResult {
  std::string stage;
  bool skipped = false;
  std::vector<std::filesystem::path> outputs;
};

class Pipeline {
 public:
  static const std::vector<std::string>& stage_names();

  // Validates the config. Throws ConfigError.
  explicit Pipeline(PipelineConfig config, bool force = false);

  // Artifact names: graph_stats, rules, histories, prompts, training_pairs,
  // traces, sims, tau, report, analysis.
  void set_path(const std::string& artifact, std::filesystem::path path);
  std::filesystem::path path_of(const std::string& artifact) const;

  // Throws PrerequisiteError when an upstream artifact is missing, ConfigError
  // for an unknown stage, and whatever the stage itself raises.
  StageResult run_stage(std::string_view stage);

  // ingest, mine-rules, sample, build-prompts, run, eval, analyze.
  std::vector<StageResult> run_all();

  const PipelineConfig& config() const { return config_; }

 private:
  const TemporalGraph& graph();
  std::vector<Query> selected_queries();
  void require(std::string_view stage, const std::string& artifact,
               const std::string& producer) const;

  void stage_ingest();
  void stage_mine_rules();
  void stage_sample();
  void stage_build_prompts();
  void stage_export_pairs();
  void stage_run();
  void stage_calibrate();
  void stage_eval();
  void stage_analyze();

  PipelineConfig config_;
  bool force_;
  std::string config_hash_;
  std::map<std::string, std::filesystem::path> overrides_;
  std::optional<TemporalGraph> graph_;
};

// Splits [0, n) over `jobs` threads; fn(i) must only touch slot i of any
// shared output. The first exception thrown is rethrown after all threads
// stop.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn);

}  // namespace tkg
