#include "tkg/evaluator.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <json.hpp>

#include "tkg/errors.hpp"
#include "tkg/hashing.hpp"

namespace tkg {

using nlohmann::json;

bool PredictionRecord::historical() const {
  return query.gold && std::find(history_entities.begin(), history_entities.end(), *query.gold) !=
                           history_entities.end();
}

std::string_view to_string(FilterScope scope) {
  return scope == FilterScope::all_splits ? "all" : "test";
}

FilterScope parse_filter_scope(std::string_view name) {
  if (name == "all") return FilterScope::all_splits;
  if (name == "test") return FilterScope::test_only;
  throw ConfigError("unknown filter scope '" + std::string(name) + "' (expected all or test)");
}

std::size_t TemporalFilter::KeyHash::operator()(const Key& k) const noexcept {
  auto h = splitmix64((std::uint64_t{k.s} << 32) | k.o);
  h = splitmix64(h ^ k.p);
  return static_cast<std::size_t>(splitmix64(h ^ static_cast<std::uint64_t>(k.t)));
}

TemporalFilter::TemporalFilter(const TemporalGraph& graph, FilterScope scope) {
  const auto facts = graph.facts();
  for (std::size_t i = 0; i < facts.size(); ++i) {
    if (scope == FilterScope::test_only && graph.split_of(i) != Split::test) continue;
    const auto& q = facts[i];
    facts_.insert(Key{raw(q.subject), raw(q.relation), raw(q.object), q.time});
  }
}

bool TemporalFilter::is_true(EntityId s, RelationId p, EntityId o, Timestamp t) const {
  return facts_.contains(Key{raw(s), raw(p), raw(o), t});
}

std::size_t filtered_rank(const PredictionRecord& record, const TemporalFilter& filter) {
  if (!record.query.gold) throw ContractError("record has no gold answer");
  const auto gold = *record.query.gold;
  const auto& q = record.query;
  std::unordered_set<std::uint32_t> seen;
  std::size_t rank = 0;
  for (auto e : record.ranked) {
    if (e != kUnknownEntity && !seen.insert(raw(e)).second) continue;
    if (e == gold) return rank + 1;
    if (e != kUnknownEntity && filter.is_true(q.subject, q.relation, e, q.time)) continue;
    ++rank;
  }
  return 0;
}

namespace {

struct Tally {
  std::size_t count = 0, h1 = 0, h3 = 0, h10 = 0;

  void add(std::size_t rank) {
    ++count;
    if (rank == 0) return;
    h1 += rank <= 1;
    h3 += rank <= 3;
    h10 += rank <= 10;
  }

  HitsRow row() const {
    HitsRow r;
    r.count = count;
    if (count == 0) return r;
    const auto n = static_cast<double>(count);
    r.hits1 = static_cast<double>(h1) / n;
    r.hits3 = static_cast<double>(h3) / n;
    r.hits10 = static_cast<double>(h10) / n;
    return r;
  }
};

json row_json(const HitsRow& r) {
  json j = {{"count", r.count}};
  if (r.count == 0) {
    j["hits"] = {{"1", nullptr}, {"3", nullptr}, {"10", nullptr}};
  } else {
    j["hits"] = {{"1", r.hits1}, {"3", r.hits3}, {"10", r.hits10}};
  }
  return j;
}

std::size_t warn_missing_gold(std::span<const PredictionRecord> records) {
  const auto missing = static_cast<std::size_t>(std::count_if(
      records.begin(), records.end(), [](const auto& r) { return !r.query.gold.has_value(); }));
  if (missing > 0) spdlog::warn("{} record(s) without gold answer excluded", missing);
  return missing;
}

}  // namespace

std::size_t history_bin(std::size_t history_length) {
  if (history_length <= 2) return 0;
  if (history_length <= 9) return 1;
  if (history_length <= 19) return 2;
  return 3;
}

double hits_at_k(std::span<const PredictionRecord> records, const TemporalFilter& filter,
                 std::size_t k) {
  if (k < 1) throw ContractError("k must be >= 1");
  warn_missing_gold(records);
  std::size_t n = 0, hits = 0;
  for (const auto& r : records) {
    if (!r.query.gold) continue;
    ++n;
    const auto rank = filtered_rank(r, filter);
    hits += rank != 0 && rank <= k;
  }
  return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
}

std::array<HitsRow, 4> bin_by_history(std::span<const PredictionRecord> records,
                                      const TemporalFilter& filter) {
  std::array<Tally, 4> tallies;
  for (const auto& r : records) {
    if (!r.query.gold) continue;
    tallies[history_bin(r.history_length)].add(filtered_rank(r, filter));
  }
  std::array<HitsRow, 4> out;
  for (std::size_t i = 0; i < 4; ++i) out[i] = tallies[i].row();
  return out;
}

HistoricalSplit split_by_historical(std::span<const PredictionRecord> records,
                                    const TemporalFilter& filter) {
  Tally hist, non;
  for (const auto& r : records) {
    if (!r.query.gold) continue;
    (r.historical() ? hist : non).add(filtered_rank(r, filter));
  }
  return {hist.row(), non.row()};
}

EvalReport evaluate(std::span<const PredictionRecord> records, const TemporalFilter& filter) {
  EvalReport report;
  report.excluded = warn_missing_gold(records);
  Tally overall, hist, non;
  std::array<Tally, 4> bins;
  for (const auto& r : records) {
    if (!r.query.gold) continue;
    const auto rank = filtered_rank(r, filter);
    overall.add(rank);
    bins[history_bin(r.history_length)].add(rank);
    (r.historical() ? hist : non).add(rank);
  }
  report.overall = overall.row();
  for (std::size_t i = 0; i < 4; ++i) report.bins[i] = bins[i].row();
  report.historical = hist.row();
  report.non_historical = non.row();
  return report;
}

std::string EvalReport::to_json() const {
  json bins_json = json::array();
  for (std::size_t i = 0; i < bins.size(); ++i) {
    auto row = row_json(bins[i]);
    row["bin"] = kHistoryBinLabels[i];
    bins_json.push_back(std::move(row));
  }
  const json doc = {{"sample_count", overall.count},
                    {"excluded", excluded},
                    {"overall", row_json(overall)},
                    {"by_history_length", std::move(bins_json)},
                    {"historical", row_json(historical)},
                    {"non_historical", row_json(non_historical)}};
  return doc.dump(2);
}

std::map<std::size_t, DistancePoint> semantic_distance_curve(
    std::span<const PredictionRecord> records, const TemporalGraph& graph,
    EmbeddingClient& embed) {
  std::map<std::size_t, double> sums;
  std::map<std::size_t, DistancePoint> out;
  for (const auto& r : records) {
    if (!r.query.gold || r.ranked.empty() || r.ranked.front() == kUnknownEntity) continue;
    const auto& top = graph.entity_label(r.ranked.front());
    const auto& gold = graph.entity_label(*r.query.gold);
    const double d =
        1.0 - cosine_similarity(embed.embed(top).vector, embed.embed(gold).vector);
    sums[r.history_length] += d;
    ++out[r.history_length].count;
  }
  for (auto& [len, point] : out) point.mean_distance = sums[len] / static_cast<double>(point.count);
  return out;
}

}  // namespace tkg
