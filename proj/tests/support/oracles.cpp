#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <regex>

namespace tkg::testing {

TemporalGraph random_graph(Rng& rng, const RandomGraphSpec& spec) {
  Vocabulary entities, relations;
  for (std::uint32_t i = 0; i < spec.entities; ++i) entities.add(i, "e" + std::to_string(i));
  for (std::uint32_t i = 0; i < spec.relations; ++i) relations.add(i, "r" + std::to_string(i));
  std::vector<Quadruple> facts;
  std::vector<Split> splits;
  for (std::size_t i = 0; i < spec.facts; ++i) {
    Quadruple q;
    q.subject = EntityId{static_cast<std::uint32_t>(rng.below(spec.entities))};
    q.relation = RelationId{static_cast<std::uint32_t>(rng.below(spec.relations))};
    q.object = EntityId{static_cast<std::uint32_t>(rng.below(spec.entities))};
    q.time = static_cast<Timestamp>(rng.below(static_cast<std::uint64_t>(spec.max_time))) *
             spec.delta;
    facts.push_back(q);
    const auto u = rng.below(100);
    splits.push_back(u < 70 ? Split::train : (u < 85 ? Split::valid : Split::test));
  }
  return TemporalGraph(std::move(facts), std::move(splits), std::move(entities),
                       std::move(relations), spec.delta);
}

std::vector<std::optional<std::uint32_t>> floyd_warshall_row(const TemporalGraph& graph,
                                                             Timestamp cutoff, EntityId source) {
  const auto n = graph.entities().capacity();
  constexpr std::uint32_t inf = 1u << 30;
  std::vector<std::vector<std::uint32_t>> d(n, std::vector<std::uint32_t>(n, inf));
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0;
  for (const auto& q : graph.facts()) {
    if (q.time >= cutoff) continue;
    const auto s = raw(q.subject), o = raw(q.object);
    if (s == o) continue;
    d[s][o] = std::min(d[s][o], 1u);
    d[o][s] = std::min(d[o][s], 1u);
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
      }
    }
  }
  std::vector<std::optional<std::uint32_t>> row(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (d[raw(source)][j] < inf) row[j] = d[raw(source)][j];
  }
  return row;
}

std::set<FactIndex> brute_tlr(const TemporalGraph& graph, const RuleBank& rules,
                              const Query& query) {
  std::set<RelationId> wanted{query.relation};
  for (const auto& [head, list] : rules.all()) {
    if (head != query.relation) continue;
    for (const auto& r : list) wanted.insert(r.body);
  }
  std::set<FactIndex> out;
  for (FactIndex i = 0; i < graph.size(); ++i) {
    const auto& q = graph.fact(i);
    if (q.subject == query.subject && q.time < query.time && wanted.count(q.relation)) {
      out.insert(i);
    }
  }
  return out;
}

std::array<double, 6> closed_form_weight(const std::array<double, 4>& gamma,
                                         std::optional<std::uint32_t> hop_s,
                                         std::optional<std::uint32_t> hop_o, std::size_t n_spo,
                                         std::size_t n_so, Timestamp age, Timestamp delta,
                                         bool context) {
  const double wn =
      (hop_s && hop_o) ? std::exp(-gamma[0] * (double(*hop_s) + double(*hop_o) - 1.0)) : 0.0;
  const double wf = 1.0 / (gamma[1] * std::log(double(n_spo)) + 1.0);
  const double wt = std::exp(-gamma[2] * double(age) / double(delta));
  const double l = std::log(1.0 + gamma[3] * double(n_so));
  const double wc = l / (1.0 + l);
  const double wcp = context ? 1.0 : 0.0;
  return {wn, wf, wt, wc, wcp, wn * wf * (wt + wc + wcp)};
}

namespace {

// Same arithmetic, operation for operation, as the sampler, so that sampled
// sets can be compared exactly.
double bitwise_weight(const std::array<double, 4>& g, std::uint32_t hops, std::size_t n_spo,
                      std::size_t n_so, Timestamp age, Timestamp delta, bool context) {
  const double wn = std::exp(-g[0] * (static_cast<double>(hops) - 1.0));
  const double wf = 1.0 / (g[1] * std::log(static_cast<double>(n_spo)) + 1.0);
  const double wt = std::exp(-g[2] * static_cast<double>(age) / static_cast<double>(delta));
  const double sm = std::log1p(g[3] * static_cast<double>(n_so));
  const double wc = sm / (1.0 + sm);
  return wn * wf * (wt + wc + (context ? 1.0 : 0.0));
}

}  // namespace

BruteSample brute_rbmh(const TemporalGraph& graph, const RuleBank& rules, const Query& query,
                       const SamplerConfig& config) {
  BruteSample out;
  auto stage1 = brute_tlr(graph, rules, query);
  std::vector<FactIndex> s1(stage1.begin(), stage1.end());
  if (s1.size() >= config.max_history) {
    s1.erase(s1.begin(), s1.end() - static_cast<std::ptrdiff_t>(config.max_history));
    out.stage1.insert(s1.begin(), s1.end());
    out.all = s1;
    return out;
  }
  out.stage1.insert(s1.begin(), s1.end());
  const auto slots = config.max_history - s1.size();

  std::set<EntityId> context;
  for (auto i : s1) {
    context.insert(graph.fact(i).subject);
    context.insert(graph.fact(i).object);
  }
  const auto hops = floyd_warshall_row(graph, query.time, query.subject);

  struct Cand {
    FactIndex fact;
    double w;
  };
  std::vector<Cand> cands;
  for (FactIndex i = 0; i < graph.size(); ++i) {
    const auto& q = graph.fact(i);
    if (q.time >= query.time || stage1.count(i) || q.subject == query.subject) continue;
    std::size_t n_spo = 0, n_so = 0;
    for (const auto& o : graph.facts()) {
      if (o.time >= query.time) continue;
      if (o.subject == q.subject && o.relation == q.relation && o.object == q.object) ++n_spo;
      if ((o.subject == q.subject && o.object == q.object) ||
          (o.subject == q.object && o.object == q.subject)) {
        ++n_so;
      }
    }
    double w = 0.0;
    const auto hs = hops[raw(q.subject)], ho = hops[raw(q.object)];
    if (hs && ho) {
      w = bitwise_weight(config.gamma, *hs + *ho, n_spo, n_so, query.time - q.time,
                         graph.granularity_delta(),
                         context.count(q.subject) > 0 || context.count(q.object) > 0);
    }
    cands.push_back({i, w});
  }
  std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
    if (a.w != b.w) return a.w > b.w;
    if (graph.fact(a.fact).time != graph.fact(b.fact).time) {
      return graph.fact(a.fact).time > graph.fact(b.fact).time;
    }
    return a.fact < b.fact;
  });
  const auto keep = std::min(cands.size(), config.pool_multiplier * slots);
  cands.resize(keep);

  std::vector<Cand> live;
  for (const auto& c : cands) {
    if (c.w > 0.0) live.push_back(c);
  }
  if (live.size() <= slots) {
    for (const auto& c : live) out.expansion.insert(c.fact);
  } else {
    Rng rng(config.rng_seed);
    for (std::size_t drawn = 0; drawn < slots; ++drawn) {
      double total = 0.0;
      for (const auto& c : live) total += c.w;
      const double target = rng.uniform() * total;
      double acc = 0.0;
      auto pick = live.size() - 1;
      for (std::size_t j = 0; j < live.size(); ++j) {
        acc += live[j].w;
        if (acc > target) {
          pick = j;
          break;
        }
      }
      out.expansion.insert(live[pick].fact);
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(pick));
    }
  }
  out.all.assign(out.stage1.begin(), out.stage1.end());
  out.all.insert(out.all.end(), out.expansion.begin(), out.expansion.end());
  std::sort(out.all.begin(), out.all.end());
  return out;
}

std::string brute_psi_argmax(const std::vector<std::string>& history, double beta) {
  const double n = static_cast<double>(history.size());
  std::set<std::string> distinct(history.begin(), history.end());
  std::string best;
  double best_psi = -1.0, best_f = -1.0;
  std::size_t best_pos = 0;
  for (const auto& e : distinct) {
    const auto count = std::count(history.begin(), history.end(), e);
    std::size_t pos = 0;
    for (std::size_t i = history.size(); i-- > 0;) {
      if (history[i] == e) {
        pos = history.size() - i;
        break;
      }
    }
    const double f = double(count) / n;
    const double r = 1.0 - double(pos) / n;
    const double psi = beta * f + (1.0 - beta) * r;
    const bool better = psi > best_psi || (psi == best_psi && f > best_f) ||
                        (psi == best_psi && f == best_f && pos < best_pos);
    if (best.empty() || better) {
      best = e;
      best_psi = psi;
      best_f = f;
      best_pos = pos;
    }
  }
  return best;
}

std::pair<double, double> grid_calibrate(const std::vector<SimilarityRecord>& records) {
  double best_tau = 0.0, best_sep = -2.0;
  long long best_num = 0;
  bool any = false;
  std::vector<double> grid;
  for (const auto& r : records) grid.push_back(r.similarity);
  std::sort(grid.begin(), grid.end());
  for (double tau : grid) {
    long long ci = 0, cc = 0, ni = 0, nc = 0;
    for (const auto& r : records) {
      if (r.correct) {
        ++nc;
        cc += r.similarity <= tau;
      } else {
        ++ni;
        ci += r.similarity <= tau;
      }
    }
    // Compare ci/ni - cc/nc exactly via a common denominator.
    const long long num = ci * nc - cc * ni;
    if (!any || num > best_num) {
      any = true;
      best_num = num;
      best_sep = double(ci) / double(ni) - double(cc) / double(nc);
      best_tau = tau;
    }
  }
  return {best_tau, best_sep};
}

std::vector<std::string> regex_parse(const std::string& text) {
  static const std::regex pattern(R"((?:^|[^A-Za-z0-9_.])([0-9]+)\.([^\s,\[\]"]+))");
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), pattern);
       it != std::sregex_iterator(); ++it) {
    std::string label = (*it)[2].str();
    while (!label.empty() && std::string(".,;:!?'").find(label.back()) != std::string::npos) {
      label.pop_back();
    }
    if (!label.empty() && std::find(out.begin(), out.end(), label) == out.end()) {
      out.push_back(label);
    }
  }
  return out;
}

std::size_t brute_filtered_rank(const PredictionRecord& record, const TemporalGraph& graph,
                                bool test_only) {
  const auto& q = record.query;
  std::vector<EntityId> kept;
  for (auto e : record.ranked) {
    if (e != kUnknownEntity && std::find(kept.begin(), kept.end(), e) != kept.end()) continue;
    bool co_true = false;
    if (e != *q.gold && e != kUnknownEntity) {
      for (FactIndex i = 0; i < graph.size(); ++i) {
        const auto& f = graph.fact(i);
        if (test_only && graph.split_of(i) != Split::test) continue;
        if (f.subject == q.subject && f.relation == q.relation && f.object == e &&
            f.time == q.time) {
          co_true = true;
        }
      }
    }
    if (!co_true) kept.push_back(e);
  }
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (kept[i] == *q.gold) return i + 1;
  }
  return 0;
}

}  // namespace tkg::testing
