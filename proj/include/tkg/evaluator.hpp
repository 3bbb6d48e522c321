#pragma once
// Temporal-aware filtered Hits@k and the diagnostic breakdowns: by history
// length, by whether the gold object was in the prompt, and the embedding
// distance between top answer and gold.

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "tkg/gateway.hpp"
#include "tkg/graph_store.hpp"

namespace tkg {

// Stands for a generated label that names no known entity.
inline constexpr EntityId kUnknownEntity{0xFFFFFFFFu};

struct PredictionRecord {
  Query query;
  std::vector<EntityId> ranked;  // best first
  std::vector<EntityId> history_entities;
  std::size_t history_length = 0;

  bool historical() const;
};

enum class FilterScope : std::uint8_t { all_splits, test_only };

std::string_view to_string(FilterScope scope);
// Throws ConfigError.
FilterScope parse_filter_scope(std::string_view name);

// Which (s, p, o, t) are known true, for removing co-true answers.
class TemporalFilter {
 public:
  TemporalFilter(const TemporalGraph& graph, FilterScope scope);
  bool is_true(EntityId s, RelationId p, EntityId o, Timestamp t) const;

 private:
  struct Key {
    std::uint32_t s, p, o;
    Timestamp t;
    friend bool operator==(const Key&, const Key&) = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };
  std::unordered_set<Key, KeyHash> facts_;
};

// 1-based rank of the gold object after dropping duplicates and every other
// entity that is a true answer of (s, p, ?, T); 0 when gold is absent.
// Records must carry a gold answer (ContractError otherwise).
std::size_t filtered_rank(const PredictionRecord& record, const TemporalFilter& filter);

struct HitsRow {
  std::size_t count = 0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;

  friend bool operator==(const HitsRow&, const HitsRow&) = default;
};

inline constexpr std::array<const char*, 4> kHistoryBinLabels{"0-2", "3-9", "10-19", "20-50"};

// Lengths above 50 land in the last bin.
std::size_t history_bin(std::size_t history_length);

struct EvalReport {
  HitsRow overall;
  std::array<HitsRow, 4> bins;
  HitsRow historical;
  HitsRow non_historical;
  std::size_t excluded = 0;  // records without gold

  std::string to_json() const;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Mean over records with gold; records without gold are skipped with a
// warning. Throws ContractError for k < 1.
double hits_at_k(std::span<const PredictionRecord> records, const TemporalFilter& filter,
                 std::size_t k);

std::array<HitsRow, 4> bin_by_history(std::span<const PredictionRecord> records,
                                      const TemporalFilter& filter);

struct HistoricalSplit {
  HitsRow historical;
  HitsRow non_historical;
};

HistoricalSplit split_by_historical(std::span<const PredictionRecord> records,
                                    const TemporalFilter& filter);

EvalReport evaluate(std::span<const PredictionRecord> records, const TemporalFilter& filter);

struct DistancePoint {
  std::size_t count = 0;
  double mean_distance = 0.0;
};

// 1 - cos(E(top-1 label), E(gold label)) averaged per history length.
// Records without gold, without predictions, or whose top answer is unknown
// are skipped.
std::map<std::size_t, DistancePoint> semantic_distance_curve(
    std::span<const PredictionRecord> records, const TemporalGraph& graph,
    EmbeddingClient& embed);

}  // namespace tkg
