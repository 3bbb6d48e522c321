#pragma once
// Reference implementations used only by tests. Each one recomputes a result
// the slow, obvious way from the raw fact list, sharing no code with the
// library beyond its data types and the Rng.

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tkg/evaluator.hpp"
#include "tkg/graph_store.hpp"
#include "tkg/hashing.hpp"
#include "tkg/history_sampler.hpp"
#include "tkg/inference_filter.hpp"
#include "tkg/rule_miner.hpp"

namespace tkg::testing {

struct RandomGraphSpec {
  std::uint32_t entities = 12;
  std::uint32_t relations = 4;
  std::size_t facts = 120;
  Timestamp max_time = 30;
  Timestamp delta = 1;
};

// Entity labels e0.., relation labels r0..; splits drawn 70/15/15.
TemporalGraph random_graph(Rng& rng, const RandomGraphSpec& spec);

// All-pairs shortest paths over the undirected graph of facts with t < cutoff;
// returns the row of `source`.
std::vector<std::optional<std::uint32_t>> floyd_warshall_row(const TemporalGraph& graph,
                                                             Timestamp cutoff, EntityId source);

std::set<FactIndex> brute_tlr(const TemporalGraph& graph, const RuleBank& rules,
                              const Query& query);

// Direct evaluation of the composite weight and its parts:
// {w_n, w_f, w_t, w_c, w_cp, w}.
std::array<double, 6> closed_form_weight(const std::array<double, 4>& gamma,
                                         std::optional<std::uint32_t> hop_s,
                                         std::optional<std::uint32_t> hop_o, std::size_t n_spo,
                                         std::size_t n_so, Timestamp age, Timestamp delta,
                                         bool context);

struct BruteSample {
  std::set<FactIndex> stage1;
  std::multiset<FactIndex> expansion;
  std::vector<FactIndex> all;  // ascending
};

// Both stages recomputed from scratch: hops by Floyd-Warshall, counts by
// linear scans, the full candidate list sorted, and the draw loop rewritten.
BruteSample brute_rbmh(const TemporalGraph& graph, const RuleBank& rules, const Query& query,
                       const SamplerConfig& config);

// Enumerates every distinct entity of H.
std::string brute_psi_argmax(const std::vector<std::string>& history, double beta);

// Tries every observed value as the threshold, counting from scratch.
std::pair<double, double> grid_calibrate(const std::vector<SimilarityRecord>& records);

// Labels of `digits.label` tokens found with std::regex.
std::vector<std::string> regex_parse(const std::string& text);

// Filtered rank by scanning the fact list; 0 when gold is absent.
std::size_t brute_filtered_rank(const PredictionRecord& record, const TemporalGraph& graph,
                                bool test_only);

}  // namespace tkg::testing
