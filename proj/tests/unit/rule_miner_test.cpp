#include <gtest/gtest.h>

#include <map>
#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tkg/errors.hpp"
#include "tkg/rule_miner.hpp"

namespace tkg {
namespace {

using testing::quad;

TEST(MineRules, PrecedingBodyOnSameSubject) {
  // Subjects 0,1,2 each do r1 then r0; subject 3 does r0 before r1.
  std::vector<Quadruple> facts{quad(0, 1, 5, 1), quad(0, 0, 6, 2), quad(1, 1, 5, 3),
                               quad(1, 0, 6, 4), quad(2, 1, 5, 1), quad(2, 0, 6, 9),
                               quad(3, 0, 6, 1), quad(3, 1, 5, 2)};
  const auto bank = mine_rules(facts, {20, 3});
  const auto rules = bank.rules_for(RelationId{0});
  ASSERT_EQ(rules.size(), 1u);
  EXPECT_EQ(rules[0].body, RelationId{1});
  EXPECT_EQ(rules[0].support, 3u);
  EXPECT_EQ(rules[0].body_count, 4u);
  EXPECT_DOUBLE_EQ(rules[0].confidence, 0.75);
  // r1 <= r0 has support 1 only.
  EXPECT_TRUE(bank.rules_for(RelationId{1}).empty());
}

TEST(MineRules, DuplicatedDataLeavesRulesUnchanged) {
  Rng rng(3);
  const auto g = testing::random_graph(rng, {10, 4, 150, 25, 1});
  std::vector<Quadruple> once(g.facts().begin(), g.facts().end());
  auto twice = once;
  twice.insert(twice.end(), once.begin(), once.end());
  EXPECT_EQ(mine_rules(once, {5, 2}), mine_rules(twice, {5, 2}));
}

// Confidence recounted per (head, body) over subjects.
TEST(MineRules, MatchesSubjectEnumeration) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = testing::random_graph(rng, {8, 4, 100, 20, 1});
    const std::span<const Quadruple> facts = g.facts();
    const auto bank = mine_rules(facts, {100, 1});
    for (std::uint32_t h = 0; h < 4; ++h) {
      for (std::uint32_t b = 0; b < 4; ++b) {
        std::size_t instances = 0, support = 0;
        for (std::uint32_t s = 0; s < 8; ++s) {
          bool has_body = false, supports = false;
          for (const auto& x : facts) {
            if (raw(x.subject) != s || raw(x.relation) != b) continue;
            has_body = true;
            for (const auto& y : facts) {
              if (raw(y.subject) == s && raw(y.relation) == h && x.time < y.time) supports = true;
            }
          }
          instances += has_body;
          support += supports;
        }
        const TemporalRule* found = nullptr;
        for (const auto& r : bank.rules_for(RelationId{h})) {
          if (r.body == RelationId{b}) found = &r;
        }
        if (support == 0) {
          EXPECT_EQ(found, nullptr);
        } else {
          ASSERT_NE(found, nullptr);
          EXPECT_EQ(found->support, support);
          EXPECT_EQ(found->body_count, instances);
        }
      }
    }
  }
}

TEST(RuleBank, SortsAndTruncates) {
  RuleBank bank(2);
  const RelationId h{0};
  bank.set_rules(h, {{h, RelationId{3}, 1, 2, 0.5},
                     {h, RelationId{1}, 2, 4, 0.5},
                     {h, RelationId{2}, 3, 3, 1.0}});
  const auto rules = bank.rules_for(h);
  ASSERT_EQ(rules.size(), 2u);
  EXPECT_EQ(rules[0].body, RelationId{2});
  EXPECT_EQ(rules[1].body, RelationId{1});  // higher support wins the 0.5 tie
}

TEST(RuleBank, SaveLoadRoundTrip) {
  testing::TempDir dir;
  Rng rng(9);
  const auto g = testing::random_graph(rng, {10, 5, 200, 30, 1});
  const auto bank = mine_rules(g.facts(), {3, 2});
  save_rules(bank, dir / "rules.json", R"({"kind":"rules"})");
  EXPECT_EQ(load_rules(dir / "rules.json"), bank);
}

TEST(RuleBank, CorruptFilesAreSchemaErrors) {
  testing::TempDir dir;
  testing::write_text(dir / "a.json", "{not json");
  EXPECT_THROW(load_rules(dir / "a.json"), SchemaError);
  testing::write_text(dir / "b.json", R"({"schema_version":99,"top_k":2,"rules":{}})");
  EXPECT_THROW(load_rules(dir / "b.json"), SchemaError);
  testing::write_text(
      dir / "c.json",
      R"({"schema_version":1,"top_k":2,"rules":{"0":[{"body_id":1,"support":5,"body_count":2,"confidence":2.5}]}})");
  EXPECT_THROW(load_rules(dir / "c.json"), SchemaError);
  EXPECT_THROW(load_rules(dir / "missing.json"), IoError);
}

}  // namespace
}  // namespace tkg
