#pragma once
// Two-stage history retrieval for a query (s_q, p_q, ?, T).
//
// Stage 1 (rule retrieval) takes every fact of s_q before T whose relation is
// p_q or one of the rule bodies mined for p_q.
//
// Stage 2 fills the remaining M = N - |stage 1| slots from facts before T that
// are not in stage 1 and whose subject differs from s_q. Each candidate gets
//
//   w = w_n * w_f * (w_t + w_c + w_cp)
//
//   w_n  = exp(-g1 * (hop_s + hop_o - 1)), 0 if either end is unreachable
//   w_f  = 1 / (g2 * ln(n_spo) + 1)
//   w_t  = exp(-g3 * (T - t) / delta)
//   w_c  = ln(1 + g4 * n_so) / (1 + ln(1 + g4 * n_so))
//   w_cp = 1 if subject or object occurs in the stage 1 facts, else 0
//
// with hops measured from s_q over the undirected t < T graph. The pool is cut
// to the top pool_multiplier * M candidates by w (ties: newer first, then lower
// fact index) and M facts are drawn without replacement with probability
// proportional to w.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_set>
#include <vector>

#include "tkg/graph_store.hpp"
#include "tkg/hashing.hpp"
#include "tkg/rule_miner.hpp"

namespace tkg {

struct SamplerConfig {
  std::size_t max_history = 50;
  // gamma[0..3]: neighbour decay, frequency scale, time decay, co-occurrence smoothing
  std::array<double, 4> gamma{0.6, 0.6, 0.01, 0.1};
  std::size_t pool_multiplier = 10;
  std::uint64_t rng_seed = 0;

  // Throws ConfigError.
  void validate() const;
};

struct WeightInputs {
  std::optional<std::uint32_t> hop_subject;
  std::optional<std::uint32_t> hop_object;
  std::size_t triple_count = 1;  // n_spo
  std::size_t pair_count = 0;    // n_so
  Timestamp age = 0;             // T - t
  Timestamp granularity_delta = 1;
  bool context_connected = false;
};

struct WeightComponents {
  double neighbor = 0.0;   // w_n
  double frequency = 0.0;  // w_f
  double recency = 0.0;    // w_t
  double cooccurrence = 0.0;  // w_c
  double context = 0.0;    // w_cp
  double composite = 0.0;  // w

  friend bool operator==(const WeightComponents&, const WeightComponents&) = default;
};

// Throws ContractError for n_spo = 0, negative age, non-positive delta, or
// hop_s + hop_o = 0.
WeightComponents weight_components(const WeightInputs& in, const SamplerConfig& config);

struct WeightedCandidate {
  Quadruple quad;
  WeightComponents weights;
};

// Stage 1. Ascending fact indices, all with t < query.time.
std::vector<FactIndex> tlr_retrieve(const TemporalGraph& graph, const RuleBank& rules,
                                    const Query& query);

// Subjects and objects of the given facts.
std::unordered_set<EntityId> context_entities(const TemporalGraph& graph,
                                              std::span<const FactIndex> facts);

// Scores one candidate by scanning the view directly. Throws ContractError if
// quad.time >= query.time or quad.subject == query.subject.
WeightedCandidate score_candidate(const GraphView& view, const Query& query,
                                  const std::unordered_set<EntityId>& context,
                                  const Quadruple& quad, const SamplerConfig& config);

// Same scores as score_candidate, with the view statistics precomputed once.
class CandidateScorer {
 public:
  CandidateScorer(const GraphView& view, const Query& query,
                  std::unordered_set<EntityId> context, const SamplerConfig& config);

  WeightedCandidate score(const Quadruple& quad) const;

 private:
  const GraphView* view_;
  Query query_;
  std::unordered_set<EntityId> context_;
  SamplerConfig config_;
  GraphStats stats_;
};

// Draws `count` distinct indices with probability proportional to weight,
// one at a time: target = u * (sum of remaining weights), then the first
// remaining index (in input order) whose running weight sum exceeds the
// target is taken and removed. Zero weights are never drawn; if fewer than
// `count` weights are positive all of them are returned. Returns indices in
// draw order.
std::vector<std::size_t> weighted_sample_without_replacement(std::span<const double> weights,
                                                             std::size_t count, Rng& rng);

struct SampledHistory {
  std::vector<FactIndex> facts;      // ascending; stage 1 plus expansion
  std::vector<FactIndex> stage1;     // after truncation to max_history
  std::vector<FactIndex> expansion;  // in draw order
};

SampledHistory rbmh_sample(const TemporalGraph& graph, const RuleBank& rules, const Query& query,
                           const SamplerConfig& config);

struct ReachabilityHistogram {
  std::size_t one_hop = 0;  // includes gold == subject (distance 0)
  std::size_t multi_hop = 0;
  std::size_t unreachable = 0;
  std::size_t skipped = 0;  // queries without a gold object

  friend bool operator==(const ReachabilityHistogram&, const ReachabilityHistogram&) = default;
};

// Classifies each gold object by hop distance from the query subject over the
// facts strictly before the query time.
ReachabilityHistogram analyze_reachability(const TemporalGraph& graph,
                                           std::span<const Query> queries);

}  // namespace tkg
