#include "tkg/graph_store.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <deque>
#include <fstream>
#include <numeric>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "tkg/errors.hpp"

namespace tkg {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  s = trim(s);
  Int value{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty()) return std::nullopt;
  return value;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::uint64_t pair_key(EntityId a, EntityId b) {
  auto lo = raw(a), hi = raw(b);
  if (lo > hi) std::swap(lo, hi);
  return (static_cast<std::uint64_t>(lo) << 32) | hi;
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "valid") return Split::valid;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(name) + "' (expected train, valid or test)");
}

std::string canonical_label(std::string_view label) {
  label = trim(label);
  std::string out;
  out.reserve(label.size());
  bool in_space = false;
  for (char c : label) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
      continue;
    }
    if (in_space) out.push_back('_');
    in_space = false;
    out.push_back(c);
  }
  return out;
}

// --- Vocabulary -------------------------------------------------------------

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) {
      throw ParseError(path.string(), line_no, "expected 'label<TAB>id'");
    }
    const auto id = parse_int<std::uint32_t>(std::string_view(line).substr(tab + 1));
    if (!id) throw ParseError(path.string(), line_no, "id is not a non-negative integer");
    const auto label = std::string_view(line).substr(0, tab);
    if (trim(label).empty()) throw ParseError(path.string(), line_no, "empty label");
    try {
      vocab.add(*id, label);
    } catch (const VocabularyError& e) {
      throw VocabularyError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return vocab;
}

void Vocabulary::add(std::uint32_t id, std::string_view label) {
  auto canon = canonical_label(label);
  if (contains(id)) {
    throw VocabularyError("duplicate id " + std::to_string(id));
  }
  if (by_label_.count(canon)) {
    throw VocabularyError("duplicate label '" + canon + "'");
  }
  if (id >= labels_.size()) {
    labels_.resize(static_cast<std::size_t>(id) + 1);
    present_.resize(static_cast<std::size_t>(id) + 1, false);
  }
  labels_[id] = canon;
  present_[id] = true;
  by_label_.emplace(std::move(canon), id);
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view label) const {
  auto it = by_label_.find(canonical_label(label));
  if (it == by_label_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::label(std::uint32_t id) const {
  if (!contains(id)) throw VocabularyError("unknown id " + std::to_string(id));
  return labels_[id];
}

std::vector<std::uint32_t> Vocabulary::ids() const {
  std::vector<std::uint32_t> out;
  out.reserve(size());
  for (std::uint32_t i = 0; i < labels_.size(); ++i) {
    if (present_[i]) out.push_back(i);
  }
  return out;
}

// --- TemporalGraph ----------------------------------------------------------

TemporalGraph::TemporalGraph(std::vector<Quadruple> facts, std::vector<Split> splits,
                             Vocabulary entities, Vocabulary relations,
                             Timestamp granularity_delta)
    : entities_(std::move(entities)),
      relations_(std::move(relations)),
      granularity_delta_(granularity_delta) {
  if (granularity_delta <= 0) throw ContractError("granularity delta must be positive");
  if (facts.size() != splits.size()) {
    throw ContractError("facts and split tags differ in length");
  }
  for (const auto& q : facts) {
    if (!entities_.contains(raw(q.subject)) || !entities_.contains(raw(q.object))) {
      throw VocabularyError("fact references unknown entity");
    }
    if (!relations_.contains(raw(q.relation))) {
      throw VocabularyError("fact references unknown relation " + std::to_string(raw(q.relation)));
    }
    if (q.time < 0) throw ContractError("negative timestamp");
  }

  std::vector<std::size_t> order(facts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return facts[a].time < facts[b].time; });
  facts_.reserve(facts.size());
  splits_.reserve(facts.size());
  for (auto i : order) {
    facts_.push_back(facts[i]);
    splits_.push_back(splits[i]);
  }

  for (auto s : splits_) {
    switch (s) {
      case Split::train: ++split_counts_.train; break;
      case Split::valid: ++split_counts_.valid; break;
      case Split::test: ++split_counts_.test; break;
    }
  }

  incident_.resize(entities_.capacity());
  by_subject_.resize(entities_.capacity());
  for (FactIndex i = 0; i < facts_.size(); ++i) {
    const auto& q = facts_[i];
    incident_[raw(q.subject)].push_back(i);
    if (q.object != q.subject) incident_[raw(q.object)].push_back(i);
    by_subject_[raw(q.subject)].push_back(i);
  }
}

std::optional<Timestamp> TemporalGraph::min_time() const {
  if (facts_.empty()) return std::nullopt;
  return facts_.front().time;
}

std::optional<Timestamp> TemporalGraph::max_time() const {
  if (facts_.empty()) return std::nullopt;
  return facts_.back().time;
}

std::span<const FactIndex> TemporalGraph::incident(EntityId e) const {
  if (raw(e) >= incident_.size()) return {};
  return incident_[raw(e)];
}

std::span<const FactIndex> TemporalGraph::by_subject(EntityId e) const {
  if (raw(e) >= by_subject_.size()) return {};
  return by_subject_[raw(e)];
}

GraphView TemporalGraph::snapshot_before(Timestamp cutoff) const {
  auto it = std::lower_bound(facts_.begin(), facts_.end(), cutoff,
                             [](const Quadruple& q, Timestamp t) { return q.time < t; });
  return GraphView(*this, static_cast<std::size_t>(it - facts_.begin()), cutoff);
}

GraphView TemporalGraph::full() const { return GraphView(*this, facts_.size(), kUnboundedTime); }

std::vector<Query> TemporalGraph::queries(Split split) const {
  std::vector<Query> out;
  for (FactIndex i = 0; i < facts_.size(); ++i) {
    if (splits_[i] != split || facts_[i].time <= 0) continue;
    const auto& q = facts_[i];
    out.push_back(Query{q.subject, q.relation, q.time, q.object});
  }
  return out;
}

// --- Structural queries -----------------------------------------------------

std::size_t HopDistances::reached_count() const {
  return static_cast<std::size_t>(
      std::count_if(dist_.begin(), dist_.end(), [](std::int32_t d) { return d >= 0; }));
}

std::unordered_map<EntityId, std::uint32_t> HopDistances::to_map() const {
  std::unordered_map<EntityId, std::uint32_t> out;
  for (std::uint32_t i = 0; i < dist_.size(); ++i) {
    if (dist_[i] >= 0) out.emplace(EntityId{i}, static_cast<std::uint32_t>(dist_[i]));
  }
  return out;
}

HopDistances hop_distances(const GraphView& view, EntityId source) {
  const auto& g = view.graph();
  std::vector<std::int32_t> dist(std::max<std::size_t>(g.entities().capacity(), raw(source) + 1),
                                 -1);
  dist[raw(source)] = 0;
  std::deque<EntityId> frontier{source};
  while (!frontier.empty()) {
    const auto u = frontier.front();
    frontier.pop_front();
    const auto du = dist[raw(u)];
    for (auto fi : g.incident(u)) {
      // Incidence lists ascend, so everything past here is outside the view.
      if (!view.contains(fi)) break;
      const auto& q = g.fact(fi);
      const auto v = q.subject == u ? q.object : q.subject;
      if (dist[raw(v)] < 0) {
        dist[raw(v)] = du + 1;
        frontier.push_back(v);
      }
    }
  }
  return HopDistances(source, std::move(dist));
}

std::size_t triple_frequency(const GraphView& view, EntityId s, RelationId p, EntityId o) {
  std::size_t n = 0;
  for (auto fi : view.graph().by_subject(s)) {
    if (!view.contains(fi)) break;
    const auto& q = view.graph().fact(fi);
    if (q.relation == p && q.object == o) ++n;
  }
  return n;
}

std::size_t pair_cooccurrence(const GraphView& view, EntityId s, EntityId o) {
  std::size_t n = 0;
  for (auto fi : view.graph().incident(s)) {
    if (!view.contains(fi)) break;
    const auto& q = view.graph().fact(fi);
    if ((q.subject == s && q.object == o) || (q.subject == o && q.object == s)) ++n;
  }
  return n;
}

std::size_t TripleKeyHash::operator()(const TripleKey& k) const noexcept {
  std::uint64_t h = raw(k.subject);
  h = h * 0x9e3779b97f4a7c15ULL ^ raw(k.relation);
  h = h * 0x9e3779b97f4a7c15ULL ^ raw(k.object);
  return static_cast<std::size_t>(h ^ (h >> 29));
}

GraphStats GraphStats::compute(const GraphView& view, EntityId source) {
  GraphStats stats(hop_distances(view, source));
  stats.triples_.reserve(view.size());
  stats.pairs_.reserve(view.size());
  for (const auto& q : view.facts()) {
    ++stats.triples_[TripleKey{q.subject, q.relation, q.object}];
    ++stats.pairs_[pair_key(q.subject, q.object)];
  }
  return stats;
}

std::size_t GraphStats::triple_frequency(EntityId s, RelationId p, EntityId o) const {
  auto it = triples_.find(TripleKey{s, p, o});
  return it == triples_.end() ? 0 : it->second;
}

std::size_t GraphStats::pair_cooccurrence(EntityId s, EntityId o) const {
  auto it = pairs_.find(pair_key(s, o));
  return it == pairs_.end() ? 0 : it->second;
}

// --- Ingestion --------------------------------------------------------------

DatasetPaths DatasetPaths::in_directory(const std::filesystem::path& dir) {
  return DatasetPaths{dir / "train.txt", dir / "valid.txt", dir / "test.txt",
                      dir / "entity2id.txt", dir / "relation2id.txt"};
}

namespace {

std::size_t read_split(const std::filesystem::path& path, Split split, const Vocabulary& entities,
                       const Vocabulary& relations, std::vector<Quadruple>& facts,
                       std::vector<Split>& splits) {
  auto in = open_or_throw(path);
  const auto file = path.string();
  std::string line;
  std::size_t line_no = 0, rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() < 4) {
      throw ParseError(file, line_no,
                       "expected 4 tab-separated fields, got " + std::to_string(fields.size()));
    }
    const auto s = parse_int<std::uint32_t>(fields[0]);
    const auto p = parse_int<std::uint32_t>(fields[1]);
    const auto o = parse_int<std::uint32_t>(fields[2]);
    const auto t = parse_int<Timestamp>(fields[3]);
    if (!s || !p || !o) throw ParseError(file, line_no, "ids must be non-negative integers");
    if (!t || *t < 0) throw ParseError(file, line_no, "timestamp must be a non-negative integer");
    if (!entities.contains(*s) || !entities.contains(*o)) {
      throw VocabularyError(file + ":" + std::to_string(line_no) + ": entity id " +
                            std::to_string(entities.contains(*s) ? *o : *s) +
                            " not in entity vocabulary");
    }
    if (!relations.contains(*p)) {
      throw VocabularyError(file + ":" + std::to_string(line_no) + ": relation id " +
                            std::to_string(*p) + " not in relation vocabulary");
    }
    facts.push_back(Quadruple{EntityId{*s}, RelationId{*p}, EntityId{*o}, *t});
    splits.push_back(split);
    ++rows;
  }
  return rows;
}

}  // namespace

IngestResult ingest_dataset(const DatasetPaths& paths, Timestamp granularity_delta) {
  if (granularity_delta <= 0) throw ContractError("granularity delta must be positive");
  auto entities = Vocabulary::load(paths.entity_vocab);
  auto relations = Vocabulary::load(paths.relation_vocab);

  std::vector<Quadruple> facts;
  std::vector<Split> splits;
  std::vector<std::string> warnings;
  const std::pair<const std::filesystem::path*, Split> inputs[] = {
      {&paths.train, Split::train}, {&paths.valid, Split::valid}, {&paths.test, Split::test}};
  for (const auto& [path, split] : inputs) {
    const auto rows = read_split(*path, split, entities, relations, facts, splits);
    if (rows == 0) {
      warnings.push_back(std::string(to_string(split)) + " split " + path->string() +
                         " is empty");
      spdlog::warn("{}", warnings.back());
    }
  }

  TemporalGraph graph(std::move(facts), std::move(splits), std::move(entities),
                      std::move(relations), granularity_delta);
  const auto counts = graph.split_counts();
  spdlog::info("ingested {} / {} / {} facts, {} entities, {} relations", counts.train,
               counts.valid, counts.test, graph.entities().size(), graph.relations().size());
  return IngestResult{std::move(graph), std::move(warnings)};
}

std::string stats_json(const TemporalGraph& graph) {
  const auto counts = graph.split_counts();
  nlohmann::json j;
  j["splits"] = {{"train", counts.train}, {"valid", counts.valid}, {"test", counts.test}};
  j["entities"] = graph.entities().size();
  j["relations"] = graph.relations().size();
  j["granularity_delta"] = graph.granularity_delta();
  if (graph.size() > 0) {
    j["time_range"] = {{"min", *graph.min_time()}, {"max", *graph.max_time()}};
  } else {
    j["time_range"] = nullptr;
  }
  return j.dump(2);
}

}  // namespace tkg
