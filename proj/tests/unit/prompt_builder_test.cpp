#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tkg/errors.hpp"
#include "tkg/prompt_builder.hpp"

namespace tkg {
namespace {

using testing::quad;

TemporalGraph example_graph() {
  Vocabulary e, r;
  e.add(1, "Mehmet Simsek");
  e.add(2, "Nuri al-Maliki");
  e.add(3380, "Joseph Robinette Biden");
  e.add(3990, "Massoud Barzani");
  e.add(5195, "Other Authorities (Turkey)");
  r.add(0, "Make statement");
  r.add(1, "Consult");
  r.add(2, "Make an appeal");
  r.add(3, "Make an appeal or request");
  std::vector<Quadruple> f{quad(1, 0, 5195, 14), quad(2, 1, 3380, 19), quad(3380, 2, 3990, 24)};
  std::vector<Split> s(f.size(), Split::train);
  return TemporalGraph(f, s, e, r, 1);
}

TEST(Prompt, ReproducesExampleLines) {
  const auto g = example_graph();
  const auto fmt = TimeFormat::iso_date("2014-01-01");
  const Query q{EntityId{3380}, RelationId{3}, 31, std::nullopt};
  const auto p = build_prompt(g, q, g.facts(), fmt);
  ASSERT_EQ(p.history_lines.size(), 3u);
  EXPECT_EQ(p.history_lines[0],
            "2014-01-15: [Mehmet_Simsek, Make_statement, 5195.Other_Authorities_(Turkey)]");
  EXPECT_EQ(p.history_lines[1], "2014-01-20: [Nuri_al-Maliki, Consult, 3380.Joseph_Robinette_Biden]");
  EXPECT_EQ(p.history_lines[2],
            "2014-01-25: [Joseph_Robinette_Biden, Make_an_appeal, 3990.Massoud_Barzani]");
  EXPECT_EQ(p.query_line, "2014-02-01: [Joseph_Robinette_Biden, Make_an_appeal_or_request,");
  EXPECT_EQ(p.full_prompt, std::string(kPromptInstruction) + "\n" + p.context());
  EXPECT_EQ(p.history_objects,
            (std::vector<std::string>{"Other_Authorities_(Turkey)", "Joseph_Robinette_Biden",
                                      "Massoud_Barzani"}));
}

TEST(Prompt, FromTextRecoversParts) {
  const auto g = example_graph();
  const auto p = build_prompt(g, Query{EntityId{1}, RelationId{0}, 40, EntityId{3990}}, g.facts(),
                              TimeFormat::iso_date("2014-01-01"));
  EXPECT_EQ(p.gold_answer, "3990.Massoud_Barzani");
  const auto back = PromptRecord::from_text(p.full_prompt, p.gold_answer);
  EXPECT_EQ(back.instruction, p.instruction);
  EXPECT_EQ(back.history_lines, p.history_lines);
  EXPECT_EQ(back.query_line, p.query_line);
  EXPECT_EQ(back.history_objects, p.history_objects);
  EXPECT_EQ(back.context(), p.context());
}

TEST(Prompt, EmptyHistory) {
  const auto g = example_graph();
  const auto p = build_prompt(g, Query{EntityId{1}, RelationId{0}, 5, {}},
                              std::span<const Quadruple>{}, TimeFormat::integer());
  EXPECT_TRUE(p.history_lines.empty());
  EXPECT_EQ(p.query_line, "5: [Mehmet_Simsek, Make_statement,");
  EXPECT_EQ(PromptRecord::from_text(p.full_prompt).history_lines.size(), 0u);
}

TEST(Prompt, RejectsUnorderedHistory) {
  const auto g = example_graph();
  std::vector<Quadruple> h{g.fact(1), g.fact(0)};
  EXPECT_THROW(build_prompt(g, Query{EntityId{1}, RelationId{0}, 40, {}}, h, TimeFormat::integer()),
               ContractError);
}

TEST(TimeFormat, Rendering) {
  const auto iso = TimeFormat::iso_date("2014-01-01");
  EXPECT_EQ(iso.render(0, 24), "2014-01-01");
  EXPECT_EQ(iso.render(23, 24), "2014-01-01");
  EXPECT_EQ(iso.render(24 * 31, 24), "2014-02-01");
  EXPECT_EQ(iso.render(-1, 24), "2013-12-31");
  EXPECT_EQ(TimeFormat::integer("t").render(42, 24), "t42");
  EXPECT_THROW(TimeFormat::iso_date("2014-13-01"), ConfigError);
  EXPECT_THROW(TimeFormat::iso_date("yesterday"), ConfigError);
}

TEST(Parse, ExtractsAnswers) {
  EXPECT_EQ(parse_prediction("3380.Joseph_Robinette_Biden"),
            (std::vector<std::string>{"Joseph_Robinette_Biden"}));
  EXPECT_EQ(parse_prediction("The answer is 12.Iran."), (std::vector<std::string>{"Iran"}));
  EXPECT_EQ(parse_prediction("1.A, 2.B, 1.A]"), (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(parse_prediction("x12.A 3.5 None"), (std::vector<std::string>{"5"}));
  EXPECT_TRUE(parse_prediction("None").empty());
  EXPECT_TRUE(parse_prediction("").empty());
  const auto a = parse_answers("[7.Other_Authorities_(Turkey)]");
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].id, "7");
  EXPECT_EQ(a[0].label, "Other_Authorities_(Turkey)");
}

TEST(Parse, AgreesWithRegexOracle) {
  Rng rng(4);
  const std::vector<std::string> pieces{"1.Alpha", " ", ", ", "x9.Beta", "22.Gamma_(X)", ".",
                                        "Delta", "3.", "]", "[", "4.Eps;", "\n", "7.Alpha"};
  for (int trial = 0; trial < 300; ++trial) {
    std::string text;
    const auto n = rng.below(8);
    for (std::uint64_t i = 0; i < n; ++i) text += pieces[rng.below(pieces.size())];
    EXPECT_EQ(parse_prediction(text), testing::regex_parse(text)) << text;
  }
}

}  // namespace
}  // namespace tkg
