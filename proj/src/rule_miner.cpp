#include "tkg/rule_miner.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <json.hpp>

#include "tkg/errors.hpp"
#include "tkg/io.hpp"

namespace tkg {

namespace {

bool rule_order(const TemporalRule& a, const TemporalRule& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.support != b.support) return a.support > b.support;
  return raw(a.body) < raw(b.body);
}

struct TimeSpan {
  Timestamp first;
  Timestamp last;
};

}  // namespace

RuleBank::RuleBank(std::size_t top_k) : top_k_(top_k) {
  if (top_k == 0) throw ContractError("top_k must be positive");
}

void RuleBank::set_rules(RelationId head, std::vector<TemporalRule> rules) {
  for (const auto& r : rules) {
    if (r.head != head) throw ContractError("rule head does not match list head");
    if (r.support == 0 || r.support > r.body_count) {
      throw ContractError("rule needs 0 < support <= body_count");
    }
  }
  std::sort(rules.begin(), rules.end(), rule_order);
  if (rules.size() > top_k_) rules.resize(top_k_);
  if (rules.empty()) {
    by_head_.erase(head);
  } else {
    by_head_[head] = std::move(rules);
  }
}

std::span<const TemporalRule> RuleBank::rules_for(RelationId head) const {
  auto it = by_head_.find(head);
  if (it == by_head_.end()) return {};
  return it->second;
}

std::size_t RuleBank::rule_count() const {
  std::size_t n = 0;
  for (const auto& [head, rules] : by_head_) n += rules.size();
  return n;
}

RuleBank mine_rules(std::span<const Quadruple> train, const MiningOptions& options) {
  // subject -> relation -> first/last timestamp of that relation on the subject
  std::unordered_map<EntityId, std::unordered_map<RelationId, TimeSpan>> spans;
  for (const auto& q : train) {
    auto [it, inserted] = spans[q.subject].try_emplace(q.relation, TimeSpan{q.time, q.time});
    if (!inserted) {
      it->second.first = std::min(it->second.first, q.time);
      it->second.last = std::max(it->second.last, q.time);
    }
  }

  std::unordered_map<RelationId, std::size_t> instances;
  std::map<std::pair<RelationId, RelationId>, std::size_t> supports;  // (head, body)
  for (const auto& [subject, rels] : spans) {
    for (const auto& [body, body_span] : rels) {
      ++instances[body];
      for (const auto& [head, head_span] : rels) {
        // Some body fact strictly precedes some head fact.
        if (body_span.first < head_span.last) ++supports[{head, body}];
      }
    }
  }

  std::map<RelationId, std::vector<TemporalRule>> by_head;
  const auto min_support = std::max<std::size_t>(options.min_support, 1);
  for (const auto& [key, support] : supports) {
    if (support < min_support) continue;
    const auto [head, body] = key;
    const auto count = instances.at(body);
    by_head[head].push_back(TemporalRule{head, body, support, count,
                                         static_cast<double>(support) /
                                             static_cast<double>(count)});
  }

  RuleBank bank(options.top_k);
  for (auto& [head, rules] : by_head) bank.set_rules(head, std::move(rules));
  return bank;
}

void save_rules(const RuleBank& bank, const std::filesystem::path& path,
                std::string_view extra_json) {
  nlohmann::json rules = nlohmann::json::object();
  for (const auto& [head, list] : bank.all()) {
    auto& arr = rules[std::to_string(raw(head))];
    arr = nlohmann::json::array();
    for (const auto& r : list) {
      arr.push_back({{"body_id", raw(r.body)},
                     {"support", r.support},
                     {"body_count", r.body_count},
                     {"confidence", r.confidence}});
    }
  }
  nlohmann::json doc = {
      {"schema_version", RuleBank::kSchemaVersion}, {"top_k", bank.top_k()}, {"rules", rules}};
  if (!extra_json.empty()) {
    const auto extra = nlohmann::json::parse(extra_json);
    for (const auto& [key, value] : extra.items()) doc[key] = value;
  }
  write_file_atomic(path, doc.dump(2) + "\n");
}

RuleBank load_rules(const std::filesystem::path& path) {
  const auto text = read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": not valid JSON: " + e.what());
  }
  try {
    const int version = doc.at("schema_version").get<int>();
    if (version != RuleBank::kSchemaVersion) {
      throw SchemaError(path.string() + ": schema_version " + std::to_string(version) +
                        ", expected " + std::to_string(RuleBank::kSchemaVersion));
    }
    RuleBank bank(doc.at("top_k").get<std::size_t>());
    for (const auto& [key, list] : doc.at("rules").items()) {
      std::size_t consumed = 0;
      const auto head_id = std::stoul(key, &consumed);
      if (consumed != key.size()) throw SchemaError(path.string() + ": bad head id '" + key + "'");
      const RelationId head{static_cast<std::uint32_t>(head_id)};
      std::vector<TemporalRule> rules;
      for (const auto& r : list) {
        TemporalRule rule{head, RelationId{r.at("body_id").get<std::uint32_t>()},
                          r.at("support").get<std::size_t>(),
                          r.at("body_count").get<std::size_t>(),
                          r.at("confidence").get<double>()};
        if (rule.support == 0 || rule.support > rule.body_count ||
            std::abs(rule.confidence - static_cast<double>(rule.support) /
                                           static_cast<double>(rule.body_count)) > 1e-12) {
          throw SchemaError(path.string() + ": inconsistent rule for head " + key);
        }
        rules.push_back(rule);
      }
      if (rules.size() > bank.top_k()) {
        throw SchemaError(path.string() + ": more than top_k rules for head " + key);
      }
      bank.set_rules(head, std::move(rules));
    }
    return bank;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument&) {
    throw SchemaError(path.string() + ": bad head id");
  } catch (const std::out_of_range&) {
    throw SchemaError(path.string() + ": head id out of range");
  } catch (const ContractError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

}  // namespace tkg
