#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tkg/errors.hpp"
#include "tkg/history_sampler.hpp"

namespace tkg {
namespace {

using testing::make_graph;
using testing::quad;

WeightInputs inputs(std::optional<std::uint32_t> hs, std::optional<std::uint32_t> ho,
                    std::size_t n_spo, std::size_t n_so, Timestamp age) {
  WeightInputs in;
  in.hop_subject = hs;
  in.hop_object = ho;
  in.triple_count = n_spo;
  in.pair_count = n_so;
  in.age = age;
  return in;
}

TEST(Weights, PointValues) {
  const SamplerConfig cfg;
  const auto w = weight_components(inputs(1, 2, 1, 10, 0), cfg);
  EXPECT_NEAR(w.neighbor, 0.3011942, 1e-7);  // exp(-0.6 * 2)
  EXPECT_DOUBLE_EQ(w.cooccurrence, std::log(2.0) / (1.0 + std::log(2.0)));
  EXPECT_NEAR(w.cooccurrence, 0.4093839, 1e-7);
  EXPECT_EQ(w.frequency, 1.0);
  EXPECT_EQ(w.recency, 1.0);
  EXPECT_EQ(w.context, 0.0);
}

TEST(Weights, IdentityAndZeroCases) {
  const SamplerConfig cfg;
  EXPECT_EQ(weight_components(inputs(1, 0, 1, 0, 0), cfg).neighbor, 1.0);
  EXPECT_EQ(weight_components(inputs(1, 0, 1, 0, 0), cfg).cooccurrence, 0.0);
  EXPECT_EQ(weight_components(inputs(std::nullopt, 1, 1, 0, 0), cfg).composite, 0.0);
  EXPECT_EQ(weight_components(inputs(1, std::nullopt, 3, 2, 7), cfg).composite, 0.0);
  auto ctx = inputs(1, 0, 1, 0, 0);
  ctx.context_connected = true;
  EXPECT_EQ(weight_components(ctx, cfg).composite, 2.0);
}

TEST(Weights, ContractViolations) {
  const SamplerConfig cfg;
  EXPECT_THROW(weight_components(inputs(1, 1, 0, 0, 0), cfg), ContractError);
  EXPECT_THROW(weight_components(inputs(1, 1, 1, 0, -1), cfg), ContractError);
  EXPECT_THROW(weight_components(inputs(0, 0, 1, 0, 0), cfg), ContractError);
}

TEST(Weights, RecencyUsesGranularity) {
  SamplerConfig cfg;
  auto in = inputs(1, 1, 1, 0, 48);
  in.granularity_delta = 24;
  EXPECT_DOUBLE_EQ(weight_components(in, cfg).recency, std::exp(-0.01 * 2));
}

TEST(Config, Validation) {
  SamplerConfig cfg;
  cfg.max_history = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.gamma[2] = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Tlr, SameSubjectRuleRelationsOnly) {
  const auto g = make_graph(4, 3, {quad(0, 0, 1, 1), quad(0, 1, 2, 2), quad(0, 2, 3, 3),
                                   quad(1, 0, 0, 3), quad(0, 0, 3, 5), quad(0, 0, 2, 9)});
  RuleBank rules;
  rules.set_rules(RelationId{0}, {{RelationId{0}, RelationId{1}, 1, 1, 1.0}});
  const auto got = tlr_retrieve(g, rules, Query{EntityId{0}, RelationId{0}, 9, {}});
  // Facts at t < 9 with subject 0 and relation 0 or 1.
  std::vector<FactIndex> want;
  for (FactIndex i = 0; i < g.size(); ++i) {
    const auto& q = g.fact(i);
    if (q.subject == EntityId{0} && q.time < 9 && raw(q.relation) <= 1) want.push_back(i);
  }
  EXPECT_EQ(got, want);
  EXPECT_EQ(got.size(), 3u);
}

TEST(Tlr, MatchesBruteForce) {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = testing::random_graph(rng, {10, 4, 120, 20, 1});
    const auto rules = mine_rules(g.facts(), {3, 2});
    for (const auto& q : g.queries(Split::test)) {
      const auto got = tlr_retrieve(g, rules, q);
      const std::set<FactIndex> got_set(got.begin(), got.end());
      EXPECT_EQ(got_set, testing::brute_tlr(g, rules, q));
    }
  }
}

TEST(Sampler, SkipsZeroWeights) {
  Rng rng(1);
  const std::vector<double> w{0.0, 1.0, 0.0, 2.0, 3.0};
  for (int i = 0; i < 50; ++i) {
    for (auto idx : weighted_sample_without_replacement(w, 2, rng)) EXPECT_GT(w[idx], 0.0);
  }
  EXPECT_EQ(weighted_sample_without_replacement(w, 3, rng), (std::vector<std::size_t>{1, 3, 4}));
  EXPECT_EQ(weighted_sample_without_replacement(w, 10, rng), (std::vector<std::size_t>{1, 3, 4}));
}

TEST(Sampler, FirstDrawProportionalToWeight) {
  Rng rng(99);
  const std::vector<double> w{1.0, 3.0};
  int second = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) second += weighted_sample_without_replacement(w, 1, rng)[0] == 1;
  EXPECT_NEAR(static_cast<double>(second) / n, 0.75, 0.02);
}

TEST(Rbmh, MatchesBruteForce) {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = testing::random_graph(rng, {12, 4, 150, 25, 2});
    const auto rules = mine_rules(g.facts(), {3, 2});
    SamplerConfig cfg;
    cfg.max_history = 10;
    cfg.pool_multiplier = 2;
    for (const auto& q : g.queries(Split::test)) {
      cfg.rng_seed = mix_seed(trial, static_cast<std::uint64_t>(q.time));
      const auto got = rbmh_sample(g, rules, q, cfg);
      const auto want = testing::brute_rbmh(g, rules, q, cfg);
      EXPECT_EQ(std::set<FactIndex>(got.stage1.begin(), got.stage1.end()), want.stage1);
      EXPECT_EQ(std::multiset<FactIndex>(got.expansion.begin(), got.expansion.end()),
                want.expansion);
      EXPECT_EQ(got.facts, want.all);
    }
  }
}

TEST(Rbmh, InvariantsAndDeterminism) {
  Rng rng(77);
  const auto g = testing::random_graph(rng, {20, 5, 200, 40, 1});
  const auto rules = mine_rules(g.facts(), {5, 2});
  SamplerConfig cfg;
  cfg.max_history = 8;
  for (const auto& q : g.queries(Split::valid)) {
    cfg.rng_seed = 5;
    const auto a = rbmh_sample(g, rules, q, cfg);
    const auto b = rbmh_sample(g, rules, q, cfg);
    EXPECT_EQ(a.facts, b.facts);
    EXPECT_LE(a.facts.size(), cfg.max_history);
    for (auto fi : a.facts) EXPECT_LT(g.fact(fi).time, q.time);
    const std::set<FactIndex> all(a.facts.begin(), a.facts.end());
    EXPECT_EQ(all.size(), a.facts.size());
    const auto stage1 = tlr_retrieve(g, rules, q);
    if (stage1.size() <= cfg.max_history) {
      for (auto fi : stage1) EXPECT_TRUE(all.count(fi));
    }
  }
}

TEST(Rbmh, KeepsNewestStage1WhenOverBudget) {
  std::vector<Quadruple> facts;
  for (int t = 1; t <= 6; ++t) facts.push_back(quad(0, 0, 1, t));
  const auto g = make_graph(2, 1, facts);
  SamplerConfig cfg;
  cfg.max_history = 4;
  const auto s = rbmh_sample(g, RuleBank{}, Query{EntityId{0}, RelationId{0}, 7, {}}, cfg);
  ASSERT_EQ(s.facts.size(), 4u);
  EXPECT_EQ(g.fact(s.facts.front()).time, 3);
  EXPECT_TRUE(s.expansion.empty());
}

TEST(Reachability, Buckets) {
  const auto g = make_graph(5, 1, {quad(0, 0, 1, 1), quad(1, 0, 2, 1), quad(0, 0, 1, 5),
                                   quad(0, 0, 2, 5), quad(0, 0, 4, 5), quad(0, 0, 0, 5)});
  std::vector<Query> qs{{EntityId{0}, RelationId{0}, 5, EntityId{1}},
                        {EntityId{0}, RelationId{0}, 5, EntityId{2}},
                        {EntityId{0}, RelationId{0}, 5, EntityId{4}},
                        {EntityId{0}, RelationId{0}, 5, EntityId{0}},
                        {EntityId{0}, RelationId{0}, 5, std::nullopt}};
  const auto h = analyze_reachability(g, qs);
  EXPECT_EQ(h.one_hop, 2u);
  EXPECT_EQ(h.multi_hop, 1u);
  EXPECT_EQ(h.unreachable, 1u);
  EXPECT_EQ(h.skipped, 1u);
}

}  // namespace
}  // namespace tkg
