// tkgf: temporal knowledge graph forecasting pipeline.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tkg/errors.hpp"
#include "tkg/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  bool force = false;
  std::string output_dir;
  std::optional<std::int64_t> granularity;
  std::string log_level = "info";
};

// Per-command overrides; empty means "keep the config value".
struct Overrides {
  std::string dataset;
  std::map<std::string, std::string> paths;  // artifact -> path
  std::string split;
  std::optional<std::size_t> max_history;
  std::vector<double> gamma;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau;
  std::optional<int> k;
  std::optional<double> beta;
  std::optional<std::size_t> shots;
  std::string polarity;
  std::string scope;
  std::optional<std::size_t> max_queries;
};

int run(const std::string& stage, const Globals& g, const Overrides& o) {
  tkg::PipelineConfig cfg;
  if (!g.config.empty()) cfg = tkg::PipelineConfig::load(g.config);
  if (!o.dataset.empty()) cfg.dataset_dir = fs::absolute(o.dataset);
  if (g.granularity) cfg.granularity = *g.granularity;
  if (!g.output_dir.empty()) cfg.output_dir = g.output_dir;
  if (g.seed) cfg.seed = *g.seed;
  if (o.seed) cfg.seed = *o.seed;
  if (g.jobs) cfg.jobs = *g.jobs;
  if (!o.split.empty()) cfg.split = tkg::parse_split(o.split);
  if (o.max_history) cfg.sampler.max_history = *o.max_history;
  if (!o.gamma.empty()) std::copy(o.gamma.begin(), o.gamma.end(), cfg.sampler.gamma.begin());
  if (o.tau) cfg.filter.tau = *o.tau;
  if (o.k) cfg.filter.k = *o.k;
  if (o.beta) cfg.filter.beta = *o.beta;
  if (o.shots) cfg.pair_shots = *o.shots;
  if (!o.polarity.empty()) cfg.polarity = o.polarity;
  if (!o.scope.empty()) cfg.eval_scope = tkg::parse_filter_scope(o.scope);
  if (o.max_queries) cfg.max_queries = *o.max_queries;

  tkg::Pipeline pipeline(std::move(cfg), g.force);
  for (const auto& [artifact, path] : o.paths) pipeline.set_path(artifact, path);

  std::vector<tkg::StageResult> results;
  if (stage == "all") {
    results = pipeline.run_all();
  } else {
    results.push_back(pipeline.run_stage(stage));
  }
  for (const auto& r : results) {
    for (const auto& out : r.outputs) {
      std::cout << r.stage << (r.skipped ? " (unchanged) " : " ") << out.string() << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal knowledge graph forecasting pipeline", "tkgf"};
  app.require_subcommand(1);

  Globals g;
  app.add_option("--config", g.config, "Pipeline config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed recorded in every artifact");
  app.add_option("--jobs", g.jobs, "Worker threads for per-query work (0 = all cores)");
  app.add_flag("--force", g.force, "Re-run stages even when the manifest says they are current");
  app.add_option("--output-dir", g.output_dir, "Artifact directory");
  app.add_option("--granularity", g.granularity, "Timestamp units per step (delta)");
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off");

  Overrides o;
  std::string stage;
  auto path_opt = [&o](CLI::App* cmd, const char* flag, const char* artifact, const char* help) {
    cmd->add_option_function<std::string>(
        flag, [&o, artifact](const std::string& p) { o.paths[artifact] = p; }, help);
  };
  auto dataset_opt = [&o](CLI::App* cmd) {
    cmd->add_option("--dataset", o.dataset, "Dataset directory")->check(CLI::ExistingDirectory);
  };

  auto* ingest = app.add_subcommand("ingest", "Load the dataset and write graph statistics");
  dataset_opt(ingest);
  path_opt(ingest, "--out", "graph_stats", "Statistics file");

  auto* mine = app.add_subcommand("mine-rules", "Mine temporal rules from the training split");
  dataset_opt(mine);
  path_opt(mine, "--out", "rules", "Rule file");

  auto* sample = app.add_subcommand("sample", "Sample a history for every query");
  dataset_opt(sample);
  path_opt(sample, "--rules", "rules", "Rule file");
  sample->add_option("--split", o.split, "train|valid|test");
  sample->add_option("--max-history", o.max_history, "History budget N");
  sample->add_option("--gamma", o.gamma, "Four weight parameters")->expected(4);
  sample->add_option("--seed", o.seed, "Sampling seed");
  sample->add_option("--max-queries", o.max_queries, "Limit on queries (0 = all)");
  path_opt(sample, "--out", "histories", "Histories file");

  auto* prompts = app.add_subcommand("build-prompts", "Render prompts from sampled histories");
  dataset_opt(prompts);
  path_opt(prompts, "--histories", "histories", "Histories file");
  path_opt(prompts, "--out", "prompts", "Prompts file");

  auto* pairs = app.add_subcommand("export-pairs", "Export few-shot training pairs");
  dataset_opt(pairs);
  path_opt(pairs, "--rules", "rules", "Rule file");
  pairs->add_option("--shots", o.shots, "Number of training queries");
  pairs->add_option("--polarity", o.polarity, "Relation polarity file")->check(CLI::ExistingFile);
  pairs->add_option("--seed", o.seed, "Selection seed");
  path_opt(pairs, "--out", "training_pairs", "Output file");

  auto* filter = app.add_subcommand("run", "Generate and filter answers for every prompt");
  filter->alias("filter-run");
  dataset_opt(filter);
  path_opt(filter, "--prompts", "prompts", "Prompts file");
  filter->add_option("--tau", o.tau, "Similarity threshold");
  filter->add_option("--k", o.k, "Regeneration attempts");
  filter->add_option("--beta", o.beta, "Fallback frequency weight");
  path_opt(filter, "--trace-out", "traces", "Trace file");
  path_opt(filter, "--sims-out", "sims", "Similarity records");

  auto* calibrate = app.add_subcommand("calibrate", "Pick the similarity threshold");
  path_opt(calibrate, "--records", "sims", "Similarity records");
  path_opt(calibrate, "--out", "tau", "Output file");

  auto* eval = app.add_subcommand("eval", "Score traces with filtered Hits@k");
  dataset_opt(eval);
  path_opt(eval, "--traces", "traces", "Trace file");
  eval->add_option("--scope", o.scope, "Temporal filter scope: all|test");
  path_opt(eval, "--report", "report", "Report file");

  auto* analyze = app.add_subcommand("analyze", "Reachability, filter and distance diagnostics");
  dataset_opt(analyze);
  path_opt(analyze, "--traces", "traces", "Trace file");
  path_opt(analyze, "--out", "analysis", "Output file");

  auto* all = app.add_subcommand("all", "ingest, mine-rules, sample, build-prompts, run, eval, analyze");
  dataset_opt(all);
  all->add_option("--max-queries", o.max_queries, "Limit on queries (0 = all)");

  for (auto* cmd : app.get_subcommands({})) {
    cmd->callback([&stage, cmd] { stage = cmd->get_name(); });
  }

  CLI11_PARSE(app, argc, argv);

  spdlog::set_default_logger(spdlog::stderr_color_mt("tkgf"));
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  try {
    return run(stage, g, o);
  } catch (const tkg::PrerequisiteError& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const tkg::ConfigError& e) {
    spdlog::error("configuration: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
