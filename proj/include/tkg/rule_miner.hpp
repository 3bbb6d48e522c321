#pragma once
// Temporal logical rules "head <= body" mined from 1-step temporal walks.
//
// A subject instantiates body relation b if it has at least one b-fact. It
// supports the rule h <= b if, in addition, some b-fact precedes (strictly)
// some h-fact on that same subject. Confidence is supports / instances, both
// counted over distinct subjects, so duplicating the training set leaves every
// rule unchanged.

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "tkg/graph_store.hpp"

namespace tkg {

struct TemporalRule {
  RelationId head{};
  RelationId body{};
  std::size_t support = 0;
  std::size_t body_count = 0;
  double confidence = 0.0;

  friend bool operator==(const TemporalRule&, const TemporalRule&) = default;
};

// Rule lists per head, each sorted by (confidence desc, support desc,
// body id asc) and capped at top_k.
class RuleBank {
 public:
  static constexpr int kSchemaVersion = 1;

  explicit RuleBank(std::size_t top_k = 20);

  // Sorts and truncates. Throws ContractError on a malformed rule.
  void set_rules(RelationId head, std::vector<TemporalRule> rules);

  std::size_t top_k() const { return top_k_; }
  std::span<const TemporalRule> rules_for(RelationId head) const;
  const std::map<RelationId, std::vector<TemporalRule>>& all() const { return by_head_; }
  std::size_t rule_count() const;
  bool empty() const { return by_head_.empty(); }

  friend bool operator==(const RuleBank&, const RuleBank&) = default;

 private:
  std::size_t top_k_;
  std::map<RelationId, std::vector<TemporalRule>> by_head_;
};

struct MiningOptions {
  std::size_t top_k = 20;
  std::size_t min_support = 3;
};

RuleBank mine_rules(std::span<const Quadruple> train, const MiningOptions& options = {});

// JSON: {schema_version, top_k, rules: {head_id: [{body_id, support, body_count, confidence}]}}
// Members of `extra_json` (a JSON object, may be empty) are added at the top
// level. save throws IoError; load throws IoError or SchemaError.
void save_rules(const RuleBank& bank, const std::filesystem::path& path,
                std::string_view extra_json = {});
RuleBank load_rules(const std::filesystem::path& path);

}  // namespace tkg
