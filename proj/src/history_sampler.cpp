#include "tkg/history_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "tkg/errors.hpp"

namespace tkg {

void SamplerConfig::validate() const {
  if (max_history < 1) throw ConfigError("max_history must be at least 1");
  if (pool_multiplier < 1) throw ConfigError("pool_multiplier must be at least 1");
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    if (!std::isfinite(gamma[i]) || gamma[i] < 0.0) {
      throw ConfigError("gamma" + std::to_string(i + 1) + " must be finite and non-negative");
    }
  }
}

WeightComponents weight_components(const WeightInputs& in, const SamplerConfig& config) {
  if (in.triple_count == 0) throw ContractError("n_spo must be at least 1");
  if (in.age < 0) throw ContractError("candidate must not be newer than the query");
  if (in.granularity_delta <= 0) throw ContractError("granularity delta must be positive");
  const auto [g1, g2, g3, g4] = config.gamma;

  WeightComponents w;
  if (in.hop_subject && in.hop_object) {
    const auto hops = *in.hop_subject + *in.hop_object;
    if (hops == 0) throw ContractError("candidate cannot have both ends at the query subject");
    w.neighbor = std::exp(-g1 * (static_cast<double>(hops) - 1.0));
  }
  w.frequency = 1.0 / (g2 * std::log(static_cast<double>(in.triple_count)) + 1.0);
  w.recency = std::exp(-g3 * static_cast<double>(in.age) /
                       static_cast<double>(in.granularity_delta));
  const double smoothed = std::log1p(g4 * static_cast<double>(in.pair_count));
  w.cooccurrence = smoothed / (1.0 + smoothed);
  w.context = in.context_connected ? 1.0 : 0.0;
  w.composite = w.neighbor * w.frequency * (w.recency + w.cooccurrence + w.context);
  return w;
}

std::vector<FactIndex> tlr_retrieve(const TemporalGraph& graph, const RuleBank& rules,
                                    const Query& query) {
  const auto view = graph.snapshot_before(query.time);
  std::unordered_set<RelationId> wanted{query.relation};
  for (const auto& rule : rules.rules_for(query.relation)) wanted.insert(rule.body);

  std::vector<FactIndex> out;
  for (auto fi : graph.by_subject(query.subject)) {
    if (!view.contains(fi)) break;
    if (wanted.count(graph.fact(fi).relation)) out.push_back(fi);
  }
  return out;
}

std::unordered_set<EntityId> context_entities(const TemporalGraph& graph,
                                              std::span<const FactIndex> facts) {
  std::unordered_set<EntityId> out;
  for (auto fi : facts) {
    out.insert(graph.fact(fi).subject);
    out.insert(graph.fact(fi).object);
  }
  return out;
}

namespace {

void check_candidate(const Query& query, const Quadruple& quad) {
  if (quad.time >= query.time) {
    throw ContractError("candidate at t=" + std::to_string(quad.time) +
                        " is not before the query time " + std::to_string(query.time));
  }
  if (quad.subject == query.subject) {
    throw ContractError("candidate subject equals the query subject");
  }
}

bool touches(const std::unordered_set<EntityId>& context, const Quadruple& quad) {
  return context.count(quad.subject) || context.count(quad.object);
}

}  // namespace

WeightedCandidate score_candidate(const GraphView& view, const Query& query,
                                  const std::unordered_set<EntityId>& context,
                                  const Quadruple& quad, const SamplerConfig& config) {
  check_candidate(query, quad);
  if (view.cutoff() > query.time) throw ContractError("view extends past the query time");
  const auto hops = hop_distances(view, query.subject);
  WeightInputs in;
  in.hop_subject = hops[quad.subject];
  in.hop_object = hops[quad.object];
  in.triple_count = triple_frequency(view, quad.subject, quad.relation, quad.object);
  in.pair_count = pair_cooccurrence(view, quad.subject, quad.object);
  in.age = query.time - quad.time;
  in.granularity_delta = view.graph().granularity_delta();
  in.context_connected = touches(context, quad);
  return WeightedCandidate{quad, weight_components(in, config)};
}

CandidateScorer::CandidateScorer(const GraphView& view, const Query& query,
                                 std::unordered_set<EntityId> context,
                                 const SamplerConfig& config)
    : view_(&view),
      query_(query),
      context_(std::move(context)),
      config_(config),
      stats_(GraphStats::compute(view, query.subject)) {
  if (view.cutoff() > query.time) throw ContractError("view extends past the query time");
}

WeightedCandidate CandidateScorer::score(const Quadruple& quad) const {
  check_candidate(query_, quad);
  WeightInputs in;
  in.hop_subject = stats_.hops()[quad.subject];
  in.hop_object = stats_.hops()[quad.object];
  in.triple_count = stats_.triple_frequency(quad.subject, quad.relation, quad.object);
  in.pair_count = stats_.pair_cooccurrence(quad.subject, quad.object);
  in.age = query_.time - quad.time;
  in.granularity_delta = view_->graph().granularity_delta();
  in.context_connected = touches(context_, quad);
  return WeightedCandidate{quad, weight_components(in, config_)};
}

std::vector<std::size_t> weighted_sample_without_replacement(std::span<const double> weights,
                                                             std::size_t count, Rng& rng) {
  std::vector<std::size_t> remaining;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] > 0.0) remaining.push_back(i);
  }
  if (remaining.size() <= count) return remaining;

  std::vector<std::size_t> drawn;
  drawn.reserve(count);
  while (drawn.size() < count) {
    double total = 0.0;
    for (auto i : remaining) total += weights[i];
    const double target = rng.uniform() * total;
    std::size_t pick = remaining.size() - 1;  // rounding fallback
    double running = 0.0;
    for (std::size_t j = 0; j < remaining.size(); ++j) {
      running += weights[remaining[j]];
      if (running > target) {
        pick = j;
        break;
      }
    }
    drawn.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return drawn;
}

SampledHistory rbmh_sample(const TemporalGraph& graph, const RuleBank& rules, const Query& query,
                           const SamplerConfig& config) {
  config.validate();
  SampledHistory out;
  out.stage1 = tlr_retrieve(graph, rules, query);
  const auto n = config.max_history;
  if (out.stage1.size() >= n) {
    // Keep the most recent N.
    out.stage1.erase(out.stage1.begin(),
                     out.stage1.end() - static_cast<std::ptrdiff_t>(n));
    out.facts = out.stage1;
    return out;
  }
  const auto slots = n - out.stage1.size();

  const auto view = graph.snapshot_before(query.time);
  std::vector<bool> in_stage1(view.size(), false);
  for (auto fi : out.stage1) in_stage1[fi] = true;

  const CandidateScorer scorer(view, query, context_entities(graph, out.stage1), config);
  struct Scored {
    FactIndex fact;
    double weight;
  };
  std::vector<Scored> pool;
  for (FactIndex fi = 0; fi < view.size(); ++fi) {
    const auto& q = graph.fact(fi);
    if (in_stage1[fi] || q.subject == query.subject) continue;
    pool.push_back(Scored{fi, scorer.score(q).weights.composite});
  }

  const auto keep = std::min(pool.size(), config.pool_multiplier * slots);
  const auto ranked_before = [&](const Scored& a, const Scored& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    const auto ta = graph.fact(a.fact).time, tb = graph.fact(b.fact).time;
    if (ta != tb) return ta > tb;
    return a.fact < b.fact;
  };
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(),
                    ranked_before);
  pool.resize(keep);

  std::vector<double> weights;
  weights.reserve(pool.size());
  for (const auto& c : pool) weights.push_back(c.weight);
  Rng rng(config.rng_seed);
  for (auto i : weighted_sample_without_replacement(weights, slots, rng)) {
    out.expansion.push_back(pool[i].fact);
  }

  out.facts = out.stage1;
  out.facts.insert(out.facts.end(), out.expansion.begin(), out.expansion.end());
  std::sort(out.facts.begin(), out.facts.end());
  return out;
}

ReachabilityHistogram analyze_reachability(const TemporalGraph& graph,
                                           std::span<const Query> queries) {
  ReachabilityHistogram hist;
  for (const auto& q : queries) {
    if (!q.gold) {
      ++hist.skipped;
      continue;
    }
    const auto hops = hop_distances(graph.snapshot_before(q.time), q.subject);
    const auto d = hops[*q.gold];
    if (!d) {
      ++hist.unreachable;
    } else if (*d <= 1) {
      ++hist.one_hop;
    } else {
      ++hist.multi_hop;
    }
  }
  return hist;
}

}  // namespace tkg
