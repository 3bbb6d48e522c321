#pragma once
// Temporal knowledge graph storage.
//
// A TemporalGraph owns every quadruple of a dataset (all three splits) sorted
// by timestamp, ties kept in insertion order (train, then valid, then test,
// each in file order). Because of that ordering, the historical snapshot
// "all facts with t < T" is always a prefix of the fact array, so a GraphView
// is just a length plus a pointer back to the graph.
//
// Per-entity incidence lists hold fact indices in ascending order; traversals
// restricted to a view stop at the first index outside the prefix.
//
// The graph is immutable after construction and safe to share across threads.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tkg {

enum class EntityId : std::uint32_t {};
enum class RelationId : std::uint32_t {};

constexpr std::uint32_t raw(EntityId id) { return static_cast<std::uint32_t>(id); }
constexpr std::uint32_t raw(RelationId id) { return static_cast<std::uint32_t>(id); }

using Timestamp = std::int64_t;
using FactIndex = std::size_t;

// Cutoff meaning "no temporal restriction".
inline constexpr Timestamp kUnboundedTime = std::numeric_limits<Timestamp>::max();

struct Quadruple {
  EntityId subject{};
  RelationId relation{};
  EntityId object{};
  Timestamp time = 0;

  friend bool operator==(const Quadruple&, const Quadruple&) = default;
};

enum class Split : std::uint8_t { train, valid, test };

std::string_view to_string(Split split);
// Throws ConfigError on an unknown name.
Split parse_split(std::string_view name);

struct Query {
  EntityId subject{};
  RelationId relation{};
  Timestamp time = 0;
  std::optional<EntityId> gold;

  friend bool operator==(const Query&, const Query&) = default;
};

// Labels are stored underscore-joined: surrounding whitespace is trimmed and
// inner runs of whitespace become a single '_'.
std::string canonical_label(std::string_view label);

// Bijective id <-> label map.
class Vocabulary {
 public:
  Vocabulary() = default;

  // Reads `label \t id` lines. Throws ParseError / VocabularyError.
  static Vocabulary load(const std::filesystem::path& path);

  // Throws VocabularyError if the id or the canonical label is already taken.
  void add(std::uint32_t id, std::string_view label);

  bool contains(std::uint32_t id) const { return id < labels_.size() && present_[id]; }
  std::optional<std::uint32_t> find(std::string_view label) const;
  // Throws VocabularyError for an unknown id.
  const std::string& label(std::uint32_t id) const;

  std::size_t size() const { return by_label_.size(); }
  // One past the largest id.
  std::size_t capacity() const { return labels_.size(); }
  // Ids in ascending order.
  std::vector<std::uint32_t> ids() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.labels_ == b.labels_ && a.present_ == b.present_;
  }

 private:
  std::vector<std::string> labels_;
  std::vector<bool> present_;
  std::unordered_map<std::string, std::uint32_t> by_label_;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;

  friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

class GraphView;

class TemporalGraph {
 public:
  // `splits` parallels `facts`. Validates ids against the vocabularies and
  // sorts stably by timestamp. Throws VocabularyError / ContractError.
  TemporalGraph(std::vector<Quadruple> facts, std::vector<Split> splits, Vocabulary entities,
                Vocabulary relations, Timestamp granularity_delta);

  std::span<const Quadruple> facts() const { return facts_; }
  const Quadruple& fact(FactIndex i) const { return facts_.at(i); }
  Split split_of(FactIndex i) const { return splits_.at(i); }
  std::size_t size() const { return facts_.size(); }

  const Vocabulary& entities() const { return entities_; }
  const Vocabulary& relations() const { return relations_; }
  const std::string& entity_label(EntityId id) const { return entities_.label(raw(id)); }
  const std::string& relation_label(RelationId id) const { return relations_.label(raw(id)); }

  // Divisor applied to timestamp differences in the recency decay.
  Timestamp granularity_delta() const { return granularity_delta_; }
  SplitCounts split_counts() const { return split_counts_; }
  std::optional<Timestamp> min_time() const;
  std::optional<Timestamp> max_time() const;

  // Facts whose subject or object is `e` (a self-loop is listed once).
  std::span<const FactIndex> incident(EntityId e) const;
  std::span<const FactIndex> by_subject(EntityId e) const;

  // Facts with t < cutoff.
  GraphView snapshot_before(Timestamp cutoff) const;
  GraphView full() const;

  // One query per fact of the split, in fact order. Facts at t <= 0 cannot be
  // forecast from any history and are skipped.
  std::vector<Query> queries(Split split) const;

  friend bool operator==(const TemporalGraph& a, const TemporalGraph& b) {
    return a.facts_ == b.facts_ && a.splits_ == b.splits_ && a.entities_ == b.entities_ &&
           a.relations_ == b.relations_ && a.granularity_delta_ == b.granularity_delta_;
  }

 private:
  std::vector<Quadruple> facts_;
  std::vector<Split> splits_;
  Vocabulary entities_;
  Vocabulary relations_;
  Timestamp granularity_delta_;
  SplitCounts split_counts_;
  std::vector<std::vector<FactIndex>> incident_;
  std::vector<std::vector<FactIndex>> by_subject_;
};

// Prefix of a graph's facts: exactly those with t < cutoff.
class GraphView {
 public:
  GraphView(const TemporalGraph& graph, std::size_t size, Timestamp cutoff)
      : graph_(&graph), size_(size), cutoff_(cutoff) {}

  const TemporalGraph& graph() const { return *graph_; }
  std::span<const Quadruple> facts() const { return graph_->facts().first(size_); }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  Timestamp cutoff() const { return cutoff_; }
  bool contains(FactIndex i) const { return i < size_; }

 private:
  const TemporalGraph* graph_;
  std::size_t size_;
  Timestamp cutoff_;
};

// Undirected BFS hop counts from one source entity. Unreached entities have
// no value (infinite distance).
class HopDistances {
 public:
  HopDistances(EntityId source, std::vector<std::int32_t> dist)
      : source_(source), dist_(std::move(dist)) {}

  EntityId source() const { return source_; }
  std::optional<std::uint32_t> operator[](EntityId e) const {
    const auto i = raw(e);
    if (i >= dist_.size() || dist_[i] < 0) return std::nullopt;
    return static_cast<std::uint32_t>(dist_[i]);
  }
  std::size_t reached_count() const;
  std::unordered_map<EntityId, std::uint32_t> to_map() const;

 private:
  EntityId source_;
  std::vector<std::int32_t> dist_;
};

HopDistances hop_distances(const GraphView& view, EntityId source);

// Single-shot counts by scanning the view.
std::size_t triple_frequency(const GraphView& view, EntityId s, RelationId p, EntityId o);
// Symmetric: facts s->o and o->s both count.
std::size_t pair_cooccurrence(const GraphView& view, EntityId s, EntityId o);

struct TripleKey {
  EntityId subject;
  RelationId relation;
  EntityId object;
  friend bool operator==(const TripleKey&, const TripleKey&) = default;
};

struct TripleKeyHash {
  std::size_t operator()(const TripleKey& k) const noexcept;
};

// All counts a scorer needs for one view and one source entity, computed in
// one pass so repeated lookups are O(1).
class GraphStats {
 public:
  static GraphStats compute(const GraphView& view, EntityId source);

  std::size_t triple_frequency(EntityId s, RelationId p, EntityId o) const;
  std::size_t pair_cooccurrence(EntityId s, EntityId o) const;
  const HopDistances& hops() const { return hops_; }

 private:
  GraphStats(HopDistances hops) : hops_(std::move(hops)) {}

  HopDistances hops_;
  std::unordered_map<TripleKey, std::uint32_t, TripleKeyHash> triples_;
  std::unordered_map<std::uint64_t, std::uint32_t> pairs_;
};

struct DatasetPaths {
  std::filesystem::path train;
  std::filesystem::path valid;
  std::filesystem::path test;
  std::filesystem::path entity_vocab;
  std::filesystem::path relation_vocab;

  // train.txt, valid.txt, test.txt, entity2id.txt, relation2id.txt
  static DatasetPaths in_directory(const std::filesystem::path& dir);
};

struct IngestResult {
  TemporalGraph graph;
  std::vector<std::string> warnings;
};

// Rows are `subject \t relation \t object \t timestamp`; trailing extra
// columns are ignored. Throws ParseError (with line number), VocabularyError
// for ids absent from a vocabulary, IoError for unreadable files.
IngestResult ingest_dataset(const DatasetPaths& paths, Timestamp granularity_delta);

// Split sizes, entity/relation counts, timestamp range; pretty JSON.
std::string stats_json(const TemporalGraph& graph);

}  // namespace tkg
