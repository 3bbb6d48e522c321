#pragma once
// Instruction-style forecasting prompts.
//
//   <instruction paragraph>
//   2014-01-15: [Mehmet_Simsek, Make_statement, 5195.Other_Authorities_(Turkey)]
//   2014-01-20: [Nuri_al-Maliki, Consult, 3380.Joseph_Robinette_Biden]
//   2014-02-01: [Joseph_Robinette_Biden, Make_an_appeal_or_request,
//
// Objects carry their entity id as a numeric label ("3380.Joseph_...") so a
// generation can be mapped back to an entity with a simple pattern match.

#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tkg/graph_store.hpp"

namespace tkg {

extern const std::string_view kPromptInstruction;

// How timestamps are printed. Calendar datasets map t / delta days onto an
// epoch date; others print the raw integer after an optional prefix.
class TimeFormat {
 public:
  // `epoch` is YYYY-MM-DD. Throws ConfigError.
  static TimeFormat iso_date(std::string_view epoch);
  static TimeFormat integer(std::string prefix = "");

  std::string render(Timestamp t, Timestamp granularity_delta) const;

  bool is_iso_date() const { return iso_; }
  std::string epoch_string() const;
  const std::string& prefix() const { return prefix_; }

 private:
  TimeFormat() = default;

  bool iso_ = false;
  std::chrono::sys_days epoch_{};
  std::string prefix_;
};

struct PromptRecord {
  std::string instruction;
  std::vector<std::string> history_lines;
  std::string query_line;
  std::string full_prompt;
  std::optional<std::string> gold_answer;  // "id.label"
  // Object labels of the history lines, oldest first, repeats kept.
  std::vector<std::string> history_objects;

  // Everything after the instruction paragraph.
  std::string context() const;

  // Re-splits a rendered prompt: first line instruction, last line query,
  // the rest history. Throws ContractError on an empty prompt.
  static PromptRecord from_text(std::string_view prompt,
                                std::optional<std::string> gold_answer = std::nullopt);
};

std::string render_answer(EntityId id, std::string_view label);

// History must be in ascending time order (ContractError otherwise); ids that
// do not resolve raise VocabularyError.
PromptRecord build_prompt(const TemporalGraph& graph, const Query& query,
                          std::span<const Quadruple> history, const TimeFormat& format);
PromptRecord build_prompt(const TemporalGraph& graph, const Query& query,
                          std::span<const FactIndex> history, const TimeFormat& format);

struct ParsedAnswer {
  std::string id;  // digits as written
  std::string label;
};

// Every `digits.label` occurrence in order of appearance, trailing
// punctuation stripped, first occurrence of each label kept.
std::vector<ParsedAnswer> parse_answers(std::string_view text);

// Labels only.
std::vector<std::string> parse_prediction(std::string_view text);

}  // namespace tkg
