#include "tkg/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <json.hpp>
#include <mutex>
#include <set>
#include <thread>

#include "tkg/errors.hpp"
#include "tkg/hashing.hpp"
#include "tkg/io.hpp"
#include "tkg/prompt_builder.hpp"

namespace tkg {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Reads the keys of one config section, rejecting any it does not know.
class Section {
 public:
  Section(const json& obj, std::string name) : obj_(obj), name_(std::move(name)) {
    if (!obj_.is_object()) throw ConfigError("config '" + name_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config " + name_ + "." + key + ": " + e.what());
    }
  }

  std::optional<json> sub(const char* key) {
    used_.insert(key);
    if (!obj_.contains(key)) return std::nullopt;
    return obj_.at(key);
  }

  void finish() const {
    for (const auto& [key, _] : obj_.items()) {
      if (!used_.contains(key)) throw ConfigError("unknown config key " + name_ + "." + key);
    }
  }

 private:
  const json& obj_;
  std::string name_;
  std::set<std::string> used_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

json config_json(const PipelineConfig& c, bool for_hash) {
  json j = {
      {"dataset",
       {{"dir", c.dataset_dir.generic_string()},
        {"granularity", c.granularity},
        {"time_format", c.time_format},
        {"epoch", c.epoch},
        {"time_prefix", c.time_prefix}}},
      {"rules", {{"top_k", c.rules.top_k}, {"min_support", c.rules.min_support}}},
      {"sampler",
       {{"max_history", c.sampler.max_history},
        {"gamma", c.sampler.gamma},
        {"pool_multiplier", c.sampler.pool_multiplier}}},
      {"filter",
       {{"tau", c.filter.tau},
        {"k", c.filter.k},
        {"beta", c.filter.beta},
        {"num_sequences", c.filter.num_sequences},
        {"max_new_tokens", c.filter.max_new_tokens},
        {"temperature", c.filter.temperature},
        {"ranked_limit", c.filter.ranked_limit},
        {"always_score", c.filter.always_score}}},
      {"gateway",
       {{"backend", c.gateway.backend},
        {"generate_url", c.gateway.generate_url},
        {"embed_url", c.gateway.embed_url},
        {"timeout_ms", c.gateway.timeout_ms},
        {"retries", c.gateway.retries},
        {"max_in_flight", c.gateway.max_in_flight},
        {"embedding_dimension", c.gateway.embedding_dimension},
        {"stub_history_bias", c.gateway.stub_history_bias},
        {"embedding_cache", c.gateway.embedding_cache.generic_string()}}},
      {"pairs",
       {{"shots", c.pair_shots},
        {"split", to_string(c.pair_split)},
        {"polarity", c.polarity.generic_string()}}},
      {"eval", {{"filter_scope", to_string(c.eval_scope)}}},
      {"split", to_string(c.split)},
      {"max_queries", c.max_queries},
      {"seed", c.seed},
  };
  if (!for_hash) {
    j["output_dir"] = c.output_dir.generic_string();
    j["jobs"] = c.jobs;
  }
  return j;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(std::string_view text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig c;
  Section top(doc, "config");
  std::string str;

  if (auto d = top.sub("dataset")) {
    Section s(*d, "dataset");
    str.clear();
    s.get("dir", str);
    c.dataset_dir = resolve(base_dir, str);
    s.get("granularity", c.granularity);
    s.get("time_format", c.time_format);
    s.get("epoch", c.epoch);
    s.get("time_prefix", c.time_prefix);
    s.finish();
  }
  if (auto d = top.sub("rules")) {
    Section s(*d, "rules");
    s.get("top_k", c.rules.top_k);
    s.get("min_support", c.rules.min_support);
    s.finish();
  }
  if (auto d = top.sub("sampler")) {
    Section s(*d, "sampler");
    s.get("max_history", c.sampler.max_history);
    s.get("gamma", c.sampler.gamma);
    s.get("pool_multiplier", c.sampler.pool_multiplier);
    s.finish();
  }
  if (auto d = top.sub("filter")) {
    Section s(*d, "filter");
    s.get("tau", c.filter.tau);
    s.get("k", c.filter.k);
    s.get("beta", c.filter.beta);
    s.get("num_sequences", c.filter.num_sequences);
    s.get("max_new_tokens", c.filter.max_new_tokens);
    s.get("temperature", c.filter.temperature);
    s.get("ranked_limit", c.filter.ranked_limit);
    s.get("always_score", c.filter.always_score);
    s.finish();
  }
  if (auto d = top.sub("gateway")) {
    Section s(*d, "gateway");
    s.get("backend", c.gateway.backend);
    s.get("generate_url", c.gateway.generate_url);
    s.get("embed_url", c.gateway.embed_url);
    s.get("timeout_ms", c.gateway.timeout_ms);
    s.get("retries", c.gateway.retries);
    s.get("max_in_flight", c.gateway.max_in_flight);
    s.get("embedding_dimension", c.gateway.embedding_dimension);
    s.get("stub_history_bias", c.gateway.stub_history_bias);
    str.clear();
    s.get("embedding_cache", str);
    c.gateway.embedding_cache = resolve(base_dir, str);
    s.finish();
  }
  if (auto d = top.sub("pairs")) {
    Section s(*d, "pairs");
    s.get("shots", c.pair_shots);
    str = std::string(to_string(c.pair_split));
    s.get("split", str);
    c.pair_split = parse_split(str);
    str.clear();
    s.get("polarity", str);
    c.polarity = resolve(base_dir, str);
    s.finish();
  }
  if (auto d = top.sub("eval")) {
    Section s(*d, "eval");
    str = std::string(to_string(c.eval_scope));
    s.get("filter_scope", str);
    c.eval_scope = parse_filter_scope(str);
    s.finish();
  }
  str = std::string(to_string(c.split));
  top.get("split", str);
  c.split = parse_split(str);
  top.get("max_queries", c.max_queries);
  top.get("seed", c.seed);
  str = c.output_dir.generic_string();
  top.get("output_dir", str);
  c.output_dir = resolve(base_dir, str);
  top.get("jobs", c.jobs);
  top.finish();
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  const auto base = fs::absolute(path).parent_path();
  return from_json(read_file(path), base);
}

std::string PipelineConfig::to_json() const { return config_json(*this, false).dump(2); }

std::string PipelineConfig::hash() const { return hex64(fnv1a64(config_json(*this, true).dump())); }

void PipelineConfig::validate() const {
  if (dataset_dir.empty()) throw ConfigError("dataset.dir is not set");
  if (granularity <= 0) throw ConfigError("dataset.granularity must be positive");
  if (time_format != "iso" && time_format != "integer") {
    throw ConfigError("dataset.time_format must be 'iso' or 'integer'");
  }
  make_time_format();
  if (rules.top_k == 0) throw ConfigError("rules.top_k must be positive");
  sampler.validate();
  filter.validate();
  if (gateway.backend == "http") {
    if (gateway.generate_url.empty() || gateway.embed_url.empty()) {
      throw ConfigError("gateway.backend http needs generate_url and embed_url");
    }
  } else if (gateway.backend != "stub") {
    throw ConfigError("gateway.backend must be 'stub' or 'http'");
  }
  if (gateway.embedding_dimension == 0) throw ConfigError("gateway.embedding_dimension is 0");
  if (gateway.timeout_ms <= 0) throw ConfigError("gateway.timeout_ms must be positive");
  if (gateway.retries < 0) throw ConfigError("gateway.retries must be >= 0");
  if (gateway.max_in_flight < 1) throw ConfigError("gateway.max_in_flight must be >= 1");
  if (pair_shots == 0) throw ConfigError("pairs.shots must be positive");
  if (output_dir.empty()) throw ConfigError("output_dir is not set");
}

TimeFormat PipelineConfig::make_time_format() const {
  return time_format == "iso" ? TimeFormat::iso_date(epoch) : TimeFormat::integer(time_prefix);
}

std::shared_ptr<GenerationClient> make_generation_client(const PipelineConfig& config,
                                                         const TemporalGraph& graph) {
  if (config.gateway.backend == "http") {
    HttpClientOptions o;
    o.base_url = config.gateway.generate_url;
    o.timeout_ms = config.gateway.timeout_ms;
    o.retries = config.gateway.retries;
    o.max_in_flight = config.gateway.max_in_flight;
    return std::make_shared<HttpGenerationClient>(std::move(o));
  }
  StubGenerationOptions o;
  o.seed = config.seed;
  o.history_bias = config.gateway.stub_history_bias;
  for (auto id : graph.entities().ids()) {
    o.distractors.push_back(render_answer(EntityId{id}, graph.entities().label(id)));
  }
  return std::make_shared<StubGenerationClient>(std::move(o));
}

std::shared_ptr<CachingEmbeddingClient> make_embedding_client(const PipelineConfig& config) {
  std::shared_ptr<EmbeddingClient> inner;
  if (config.gateway.backend == "http") {
    HttpClientOptions o;
    o.base_url = config.gateway.embed_url;
    o.timeout_ms = config.gateway.timeout_ms;
    o.retries = config.gateway.retries;
    o.max_in_flight = config.gateway.max_in_flight;
    inner = std::make_shared<HttpEmbeddingClient>(std::move(o), config.gateway.embedding_dimension);
  } else {
    inner = std::make_shared<HashEmbeddingClient>(config.gateway.embedding_dimension, config.seed);
  }
  auto cached = std::make_shared<CachingEmbeddingClient>(std::move(inner));
  const auto& cache = config.gateway.embedding_cache;
  if (!cache.empty() && fs::exists(cache)) cached->load(cache);
  return cached;
}

void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first;
  std::mutex mutex;
  {
    std::vector<std::jthread> workers;
    for (unsigned w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (;;) {
          const auto i = next.fetch_add(1);
          if (i >= n || failed) return;
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(mutex);
            if (!first) first = std::current_exception();
            failed = true;
          }
        }
      });
    }
  }
  if (first) std::rethrow_exception(first);
}

namespace {

const std::map<std::string, std::string>& artifact_files() {
  static const std::map<std::string, std::string> files{
      {"graph_stats", "graph_stats.json"}, {"rules", "rules.json"},
      {"histories", "histories.jsonl"},    {"prompts", "prompts.jsonl"},
      {"training_pairs", "training_pairs.jsonl"}, {"traces", "traces.jsonl"},
      {"sims", "sims.jsonl"},              {"tau", "tau.json"},
      {"report", "report.json"},           {"analysis", "analysis.json"},
  };
  return files;
}

struct StageSpec {
  std::vector<std::pair<std::string, std::string>> needs;  // artifact, producing stage
  std::vector<std::string> produces;
  bool uses_dataset = true;
};

const std::map<std::string, StageSpec, std::less<>>& stage_specs() {
  static const std::map<std::string, StageSpec, std::less<>> specs{
      {"ingest", {{}, {"graph_stats"}}},
      {"mine-rules", {{{"graph_stats", "ingest"}}, {"rules"}}},
      {"sample", {{{"rules", "mine-rules"}}, {"histories"}}},
      {"build-prompts", {{{"histories", "sample"}}, {"prompts"}}},
      {"export-pairs", {{{"rules", "mine-rules"}}, {"training_pairs"}}},
      {"run", {{{"prompts", "build-prompts"}}, {"traces", "sims"}}},
      {"calibrate", {{{"sims", "run"}}, {"tau"}, false}},
      {"eval", {{{"traces", "run"}}, {"report"}}},
      {"analyze", {{{"traces", "run"}}, {"analysis"}}},
  };
  return specs;
}

json header(std::string_view kind, const std::string& config_hash, std::uint64_t seed) {
  return {{"schema_version", kArtifactSchemaVersion},
          {"kind", kind},
          {"config_hash", config_hash},
          {"seed", seed}};
}

struct Jsonl {
  json header;
  std::vector<json> records;
};

Jsonl read_jsonl(const fs::path& path, std::string_view kind) {
  const auto text = read_file(path);
  Jsonl out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string::npos) nl = text.size();
    const std::string_view line(text.data() + start, nl - start);
    start = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (line_no == 1) {
      out.header = std::move(j);
    } else {
      out.records.push_back(std::move(j));
    }
  }
  if (!out.header.is_object() || out.header.value("kind", "") != kind) {
    throw SchemaError(path.string() + ": expected a '" + std::string(kind) + "' header line");
  }
  if (out.header.value("schema_version", 0) != kArtifactSchemaVersion) {
    throw SchemaError(path.string() + ": unsupported schema_version");
  }
  return out;
}

std::string to_jsonl(const json& head, const std::vector<json>& records) {
  std::string out = head.dump();
  out += '\n';
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

json query_json(const std::string& query_id, const Query& q) {
  json j = {{"query_id", query_id},
            {"subject", raw(q.subject)},
            {"relation", raw(q.relation)},
            {"time", q.time}};
  j["gold"] = q.gold ? json(raw(*q.gold)) : json(nullptr);
  return j;
}

Query query_from_json(const json& j, const TemporalGraph& graph) {
  Query q;
  try {
    q.subject = EntityId{j.at("subject").get<std::uint32_t>()};
    q.relation = RelationId{j.at("relation").get<std::uint32_t>()};
    q.time = j.at("time").get<Timestamp>();
    if (!j.at("gold").is_null()) q.gold = EntityId{j.at("gold").get<std::uint32_t>()};
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad query record: ") + e.what());
  }
  if (!graph.entities().contains(raw(q.subject)) ||
      !graph.relations().contains(raw(q.relation)) ||
      (q.gold && !graph.entities().contains(raw(*q.gold)))) {
    throw SchemaError("query record references ids outside the dataset vocabulary");
  }
  return q;
}

json attempt_json(const FilterAttempt& a) {
  json j = {{"candidates", a.candidates}, {"decision", to_string(a.decision)}};
  j["prediction"] = a.prediction ? json(*a.prediction) : json(nullptr);
  j["similarity"] = a.similarity ? json(*a.similarity) : json(nullptr);
  if (!a.error.empty()) j["error"] = a.error;
  return j;
}

json trace_json(const FilterTrace& t) {
  json attempts = json::array();
  for (const auto& a : t.attempts) attempts.push_back(attempt_json(a));
  return {{"attempts", std::move(attempts)},
          {"fallback_used", t.fallback_used},
          {"unresolved", t.unresolved},
          {"final_prediction", t.final_prediction},
          {"ranked", t.ranked},
          {"fallback_scores", t.fallback_scores},
          {"generation_calls", t.generation_calls},
          {"similarity_calls", t.similarity_calls},
          {"context_embeddings", t.context_embeddings}};
}

std::vector<fs::path> dataset_files(const PipelineConfig& c) {
  const auto p = DatasetPaths::in_directory(c.dataset_dir);
  return {p.train, p.valid, p.test, p.entity_vocab, p.relation_vocab};
}

}  // namespace

const std::vector<std::string>& Pipeline::stage_names() {
  static const std::vector<std::string> names{"ingest",       "mine-rules", "sample",
                                              "build-prompts", "export-pairs", "run",
                                              "calibrate",    "eval",       "analyze"};
  return names;
}

Pipeline::Pipeline(PipelineConfig config, bool force)
    : config_(std::move(config)), force_(force) {
  config_.validate();
  config_hash_ = config_.hash();
}

void Pipeline::set_path(const std::string& artifact, fs::path path) {
  if (!artifact_files().contains(artifact)) {
    throw ConfigError("unknown artifact '" + artifact + "'");
  }
  overrides_[artifact] = std::move(path);
}

fs::path Pipeline::path_of(const std::string& artifact) const {
  if (auto it = overrides_.find(artifact); it != overrides_.end()) return it->second;
  return config_.output_dir / artifact_files().at(artifact);
}

const TemporalGraph& Pipeline::graph() {
  if (!graph_) {
    auto result = ingest_dataset(DatasetPaths::in_directory(config_.dataset_dir),
                                 config_.granularity);
    graph_.emplace(std::move(result.graph));
  }
  return *graph_;
}

std::vector<Query> Pipeline::selected_queries() {
  auto qs = graph().queries(config_.split);
  if (config_.max_queries > 0 && qs.size() > config_.max_queries) qs.resize(config_.max_queries);
  return qs;
}

void Pipeline::require(std::string_view stage, const std::string& artifact,
                       const std::string& producer) const {
  const auto p = path_of(artifact);
  if (!fs::exists(p)) {
    throw PrerequisiteError(std::string(stage), producer, p.string());
  }
}

StageResult Pipeline::run_stage(std::string_view stage) {
  const auto it = stage_specs().find(stage);
  if (it == stage_specs().end()) {
    throw ConfigError("unknown stage '" + std::string(stage) + "'");
  }
  const auto& spec = it->second;
  for (const auto& [artifact, producer] : spec.needs) require(stage, artifact, producer);

  json inputs = json::object();
  if (spec.uses_dataset) {
    for (const auto& f : dataset_files(config_)) inputs[f.generic_string()] = hash_file(f);
  }
  if (stage == "export-pairs" && !config_.polarity.empty() && fs::exists(config_.polarity)) {
    inputs[config_.polarity.generic_string()] = hash_file(config_.polarity);
  }
  for (const auto& [artifact, _] : spec.needs) {
    const auto p = path_of(artifact);
    inputs[p.generic_string()] = hash_file(p);
  }

  StageResult result;
  result.stage = std::string(stage);
  for (const auto& a : spec.produces) result.outputs.push_back(path_of(a));

  const auto manifest_path = config_.output_dir / "manifest.json";
  json manifest = json::object();
  if (fs::exists(manifest_path)) {
    try {
      manifest = json::parse(read_file(manifest_path));
    } catch (const json::parse_error&) {
      spdlog::warn("{} is unreadable; rebuilding it", manifest_path.string());
      manifest = json::object();
    }
  }
  const std::string key(stage);

  if (!force_ && manifest.contains("stages") && manifest["stages"].contains(key)) {
    const auto& entry = manifest["stages"][key];
    bool fresh = entry.value("config_hash", "") == config_hash_ && entry.value("inputs", json()) == inputs;
    if (fresh) {
      const auto outputs = entry.value("outputs", json::object());
      for (const auto& out : result.outputs) {
        const auto name = out.generic_string();
        if (!fs::exists(out) || !outputs.contains(name) || outputs[name] != hash_file(out)) {
          fresh = false;
          break;
        }
      }
    }
    if (fresh) {
      spdlog::info("{}: up to date, skipped", key);
      result.skipped = true;
      return result;
    }
  }

  spdlog::info("{}: running", key);
  if (stage == "ingest") stage_ingest();
  else if (stage == "mine-rules") stage_mine_rules();
  else if (stage == "sample") stage_sample();
  else if (stage == "build-prompts") stage_build_prompts();
  else if (stage == "export-pairs") stage_export_pairs();
  else if (stage == "run") stage_run();
  else if (stage == "calibrate") stage_calibrate();
  else if (stage == "eval") stage_eval();
  else if (stage == "analyze") stage_analyze();

  json outputs = json::object();
  for (const auto& out : result.outputs) outputs[out.generic_string()] = hash_file(out);
  manifest["schema_version"] = kArtifactSchemaVersion;
  manifest["stages"][key] = {{"config_hash", config_hash_},
                             {"seed", config_.seed},
                             {"inputs", std::move(inputs)},
                             {"outputs", std::move(outputs)}};
  write_file_atomic(manifest_path, manifest.dump(2) + "\n");
  return result;
}

std::vector<StageResult> Pipeline::run_all() {
  std::vector<StageResult> out;
  for (const auto* s : {"ingest", "mine-rules", "sample", "build-prompts", "run", "eval", "analyze"}) {
    out.push_back(run_stage(s));
  }
  return out;
}

void Pipeline::stage_ingest() {
  auto result = ingest_dataset(DatasetPaths::in_directory(config_.dataset_dir),
                               config_.granularity);
  auto doc = header("graph_stats", config_hash_, config_.seed);
  doc["stats"] = json::parse(stats_json(result.graph));
  doc["warnings"] = result.warnings;
  graph_.emplace(std::move(result.graph));
  write_file_atomic(path_of("graph_stats"), doc.dump(2) + "\n");
}

void Pipeline::stage_mine_rules() {
  const auto& g = graph();
  std::vector<Quadruple> train;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.split_of(i) == Split::train) train.push_back(g.fact(i));
  }
  const auto bank = mine_rules(train, config_.rules);
  spdlog::info("mine-rules: {} rules over {} training facts", bank.rule_count(), train.size());
  json extra = {{"kind", "rules"}, {"config_hash", config_hash_}, {"seed", config_.seed}};
  save_rules(bank, path_of("rules"), extra.dump());
}

void Pipeline::stage_sample() {
  const auto& g = graph();
  const auto rules = load_rules(path_of("rules"));
  const auto queries = selected_queries();
  std::vector<SampledHistory> histories(queries.size());
  parallel_for(queries.size(), config_.jobs, [&](std::size_t i) {
    auto cfg = config_.sampler;
    cfg.rng_seed = mix_seed(config_.seed, i);
    histories[i] = rbmh_sample(g, rules, queries[i], cfg);
  });

  auto head = header("histories", config_hash_, config_.seed);
  head["split"] = to_string(config_.split);
  head["count"] = queries.size();
  std::vector<json> records;
  records.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    auto r = query_json(std::string(to_string(config_.split)) + ":" + std::to_string(i),
                        queries[i]);
    r["facts"] = histories[i].facts;
    r["stage1"] = histories[i].stage1;
    r["expansion"] = histories[i].expansion;
    records.push_back(std::move(r));
  }
  write_file_atomic(path_of("histories"), to_jsonl(head, records));
}

void Pipeline::stage_build_prompts() {
  const auto& g = graph();
  const auto in = read_jsonl(path_of("histories"), "histories");
  const auto format = config_.make_time_format();
  std::vector<json> records(in.records.size());
  parallel_for(in.records.size(), config_.jobs, [&](std::size_t i) {
    const auto& h = in.records[i];
    const auto q = query_from_json(h, g);
    std::vector<FactIndex> facts;
    try {
      facts = h.at("facts").get<std::vector<FactIndex>>();
    } catch (const json::exception& e) {
      throw SchemaError(std::string("bad history record: ") + e.what());
    }
    for (auto f : facts) {
      if (f >= g.size()) throw SchemaError("history references fact " + std::to_string(f));
    }
    const auto prompt = build_prompt(g, q, std::span<const FactIndex>(facts), format);
    auto r = query_json(h.at("query_id").get<std::string>(), q);
    r["gold_answer"] = prompt.gold_answer ? json(*prompt.gold_answer) : json(nullptr);
    r["history_length"] = prompt.history_lines.size();
    r["history_objects"] = prompt.history_objects;
    r["prompt"] = prompt.full_prompt;
    records[i] = std::move(r);
  });
  auto head = header("prompts", config_hash_, config_.seed);
  head["count"] = records.size();
  head["time_format"] = config_.time_format;
  write_file_atomic(path_of("prompts"), to_jsonl(head, records));
}

void Pipeline::stage_export_pairs() {
  const auto& g = graph();
  if (config_.polarity.empty()) throw ConfigError("pairs.polarity is not set");
  std::vector<std::string> warnings;
  const auto polarity = RelationPolarityMap::load(config_.polarity, g.relations(), &warnings);
  for (const auto& w : warnings) spdlog::warn("polarity: {}", w);
  const auto rules = load_rules(path_of("rules"));
  PairExportOptions opts;
  opts.shots = config_.pair_shots;
  opts.seed = config_.seed;
  opts.split = config_.pair_split;
  opts.config_hash = config_hash_;
  const auto n = export_training_pairs(g, rules, config_.sampler, polarity,
                                       config_.make_time_format(), opts, path_of("training_pairs"));
  spdlog::info("export-pairs: {} records", n);
}

void Pipeline::stage_run() {
  const auto& g = graph();
  const auto in = read_jsonl(path_of("prompts"), "prompts");
  auto generator = make_generation_client(config_, g);
  auto embedder = make_embedding_client(config_);
  const auto run_seed = mix_seed(config_.seed, fnv1a64("run"));

  std::vector<json> traces(in.records.size());
  std::vector<std::vector<json>> sims(in.records.size());
  parallel_for(in.records.size(), config_.jobs, [&](std::size_t i) {
    const auto& p = in.records[i];
    const auto q = query_from_json(p, g);
    const auto query_id = p.at("query_id").get<std::string>();
    std::optional<std::string> gold_answer;
    if (p.contains("gold_answer") && p["gold_answer"].is_string()) {
      gold_answer = p["gold_answer"].get<std::string>();
    }
    const auto prompt = PromptRecord::from_text(p.at("prompt").get<std::string>(), gold_answer);
    const auto trace =
        filter_predict(prompt, *generator, *embedder, config_.filter, mix_seed(run_seed, i), query_id);

    auto r = query_json(query_id, q);
    r["history_length"] = prompt.history_lines.size();
    r["history_objects"] = prompt.history_objects;
    r.update(trace_json(trace));
    traces[i] = std::move(r);

    const std::string gold_label = q.gold ? g.entity_label(*q.gold) : std::string();
    for (std::size_t a = 0; a < trace.attempts.size(); ++a) {
      const auto& att = trace.attempts[a];
      if (!att.similarity) continue;
      sims[i].push_back({{"query_id", query_id},
                         {"attempt", a},
                         {"prediction", *att.prediction},
                         {"similarity", *att.similarity},
                         {"correct", q.gold.has_value() && *att.prediction == gold_label}});
    }
  });

  auto head = header("traces", config_hash_, config_.seed);
  head["count"] = traces.size();
  head["filter"] = {{"tau", config_.filter.tau}, {"k", config_.filter.k}, {"beta", config_.filter.beta}};
  write_file_atomic(path_of("traces"), to_jsonl(head, traces));

  std::vector<json> flat;
  for (auto& v : sims) {
    for (auto& s : v) flat.push_back(std::move(s));
  }
  auto sims_head = header("similarities", config_hash_, config_.seed);
  sims_head["count"] = flat.size();
  write_file_atomic(path_of("sims"), to_jsonl(sims_head, flat));

  if (!config_.gateway.embedding_cache.empty()) embedder->save(config_.gateway.embedding_cache);
}

void Pipeline::stage_calibrate() {
  const auto in = read_jsonl(path_of("sims"), "similarities");
  std::vector<SimilarityRecord> records;
  records.reserve(in.records.size());
  for (const auto& r : in.records) {
    try {
      records.push_back({r.at("similarity").get<double>(), r.at("correct").get<bool>()});
    } catch (const json::exception& e) {
      throw SchemaError(std::string("bad similarity record: ") + e.what());
    }
  }
  const auto cal = calibrate_threshold(records);
  auto doc = header("calibration", config_hash_, config_.seed);
  doc["tau"] = cal.tau;
  doc["separation"] = cal.separation;
  doc["correct"] = cal.correct;
  doc["incorrect"] = cal.incorrect;
  write_file_atomic(path_of("tau"), doc.dump(2) + "\n");
  spdlog::info("calibrate: tau* = {} (separation {})", cal.tau, cal.separation);
}

namespace {

std::vector<PredictionRecord> prediction_records(const Jsonl& traces, const TemporalGraph& g) {
  auto to_id = [&](const std::string& label) {
    const auto id = g.entities().find(label);
    return id ? EntityId{*id} : kUnknownEntity;
  };
  std::vector<PredictionRecord> out;
  out.reserve(traces.records.size());
  for (const auto& t : traces.records) {
    PredictionRecord r;
    r.query = query_from_json(t, g);
    try {
      for (const auto& label : t.at("ranked")) r.ranked.push_back(to_id(label.get<std::string>()));
      for (const auto& label : t.at("history_objects")) {
        const auto id = to_id(label.get<std::string>());
        if (id != kUnknownEntity) r.history_entities.push_back(id);
      }
      r.history_length = t.at("history_length").get<std::size_t>();
    } catch (const json::exception& e) {
      throw SchemaError(std::string("bad trace record: ") + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

void Pipeline::stage_eval() {
  const auto& g = graph();
  const auto traces = read_jsonl(path_of("traces"), "traces");
  const auto records = prediction_records(traces, g);
  const TemporalFilter filter(g, config_.eval_scope);
  const auto report = evaluate(records, filter);
  auto doc = header("report", config_hash_, config_.seed);
  doc["filter_scope"] = to_string(config_.eval_scope);
  doc.update(json::parse(report.to_json()));
  write_file_atomic(path_of("report"), doc.dump(2) + "\n");
  spdlog::info("eval: {} queries, Hits@1 {:.4f} Hits@3 {:.4f} Hits@10 {:.4f}", report.overall.count,
               report.overall.hits1, report.overall.hits3, report.overall.hits10);
}

void Pipeline::stage_analyze() {
  const auto& g = graph();
  const auto traces = read_jsonl(path_of("traces"), "traces");
  const auto records = prediction_records(traces, g);

  std::vector<Query> queries;
  queries.reserve(records.size());
  for (const auto& r : records) queries.push_back(r.query);
  const auto reach = analyze_reachability(g, queries);

  std::map<std::string, std::size_t> decisions;
  std::size_t fallback = 0, unresolved = 0, generations = 0;
  for (const auto& t : traces.records) {
    for (const auto& a : t.at("attempts")) ++decisions[a.at("decision").get<std::string>()];
    fallback += t.value("fallback_used", false);
    unresolved += t.value("unresolved", false);
    generations += t.value("generation_calls", std::size_t{0});
  }

  auto embedder = make_embedding_client(config_);
  const auto curve = semantic_distance_curve(records, g, *embedder);
  json curve_json = json::array();
  for (const auto& [len, point] : curve) {
    curve_json.push_back(
        {{"history_length", len}, {"count", point.count}, {"mean_distance", point.mean_distance}});
  }

  auto doc = header("analysis", config_hash_, config_.seed);
  doc["queries"] = records.size();
  doc["reachability"] = {{"one_hop", reach.one_hop},
                         {"multi_hop", reach.multi_hop},
                         {"unreachable", reach.unreachable},
                         {"skipped", reach.skipped}};
  doc["filter"] = {{"decisions", decisions},
                   {"fallback_used", fallback},
                   {"unresolved", unresolved},
                   {"generation_calls", generations}};
  doc["semantic_distance"] = std::move(curve_json);
  write_file_atomic(path_of("analysis"), doc.dump(2) + "\n");
  if (!config_.gateway.embedding_cache.empty()) embedder->save(config_.gateway.embedding_cache);
}

}  // namespace tkg
