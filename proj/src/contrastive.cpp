#include "tkg/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tkg/errors.hpp"
#include "tkg/hashing.hpp"
#include "tkg/io.hpp"

namespace tkg {

std::string_view to_string(Polarity p) {
  switch (p) {
    case Polarity::positive: return "positive";
    case Polarity::negative: return "negative";
    case Polarity::neutral: return "neutral";
  }
  return "?";
}

RelationPolarityMap RelationPolarityMap::load(const std::filesystem::path& path,
                                              const Vocabulary& relations,
                                              std::vector<std::string>* warnings) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw SchemaError(path.string() + ": expected a JSON object");

  RelationPolarityMap map;
  for (const auto& [label, value] : doc.items()) {
    if (!value.is_string()) throw SchemaError(path.string() + ": '" + label + "' is not a string");
    const auto text = value.get<std::string>();
    Polarity p;
    if (text == "positive") {
      p = Polarity::positive;
    } else if (text == "negative") {
      p = Polarity::negative;
    } else if (text == "neutral") {
      p = Polarity::neutral;
    } else {
      throw SchemaError(path.string() + ": '" + label + "' has unknown polarity '" + text + "'");
    }
    const auto id = relations.find(label);
    if (!id) {
      if (warnings) warnings->push_back("polarity for unknown relation '" + label + "' ignored");
      continue;
    }
    map.set(RelationId{*id}, p);
  }
  for (auto id : relations.ids()) {
    if (!map.map_.count(RelationId{id})) {
      map.set(RelationId{id}, Polarity::neutral);
      if (warnings) {
        warnings->push_back("relation '" + relations.label(id) + "' has no polarity; neutral");
      }
    }
  }
  return map;
}

Polarity RelationPolarityMap::of(RelationId relation) const {
  auto it = map_.find(relation);
  return it == map_.end() ? Polarity::neutral : it->second;
}

std::vector<ContrastiveGroup> build_groups(std::span<const Quadruple> facts,
                                           const RelationPolarityMap& polarity) {
  std::map<EntityId, std::set<EntityId>> pos, neg;
  std::set<EntityId> entities;
  for (const auto& q : facts) {
    entities.insert(q.subject);
    entities.insert(q.object);
    if (q.subject == q.object) continue;
    const auto p = polarity.of(q.relation);
    if (p == Polarity::neutral) continue;
    auto& side = p == Polarity::positive ? pos : neg;
    side[q.subject].insert(q.object);
    side[q.object].insert(q.subject);
  }

  std::vector<ContrastiveGroup> groups;
  for (auto anchor : entities) {
    ContrastiveGroup g{anchor, {}, {}};
    const auto& p = pos[anchor];
    const auto& n = neg[anchor];
    std::set_difference(p.begin(), p.end(), n.begin(), n.end(), std::back_inserter(g.positives));
    std::set_difference(n.begin(), n.end(), p.begin(), p.end(), std::back_inserter(g.negatives));
    if (!g.positives.empty() && !g.negatives.empty()) groups.push_back(std::move(g));
  }
  return groups;
}

namespace {

double dot(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_distance(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void check_finite(const Vector& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw ContractError(std::string(what) + " has a non-finite entry");
  }
}

const Vector& embedding_of(const EntityEmbeddings& embeddings, EntityId e, std::size_t& dim) {
  auto it = embeddings.find(e);
  if (it == embeddings.end()) {
    throw ContractError("no embedding for entity " + std::to_string(raw(e)));
  }
  if (dim == 0) dim = it->second.size();
  if (it->second.size() != dim) throw ContractError("embedding dimensions differ");
  return it->second;
}

}  // namespace

Aggregation aggregate_entity(std::span<const Vector> tokens, const AggregatorParams& params) {
  if (tokens.empty()) throw ContractError("aggregate_entity needs at least one token");
  const auto d = params.score_weights.size();
  check_finite(params.score_weights, "aggregator weights");
  std::vector<double> logits;
  logits.reserve(tokens.size());
  for (const auto& h : tokens) {
    if (h.size() != d) throw ContractError("token dimension differs from aggregator dimension");
    check_finite(h, "token embedding");
    logits.push_back(dot(h, params.score_weights));
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  Aggregation out;
  out.attention.resize(tokens.size());
  double z = 0.0;
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    out.attention[j] = std::exp(logits[j] - top);
    z += out.attention[j];
  }
  for (auto& l : out.attention) l /= z;
  out.embedding.assign(d, 0.0);
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    for (std::size_t i = 0; i < d; ++i) out.embedding[i] += out.attention[j] * tokens[j][i];
  }
  return out;
}

ContrastiveLoss contrastive_loss(std::span<const ContrastiveGroup> groups,
                                 const EntityEmbeddings& embeddings, double margin) {
  ContrastiveLoss out;
  if (groups.empty()) return out;
  std::size_t dim = 0;
  double sum = 0.0;
  for (const auto& g : groups) {
    if (g.positives.empty() || g.negatives.empty()) {
      throw ContractError("contrastive group needs positives and negatives");
    }
    const auto& a = embedding_of(embeddings, g.anchor, dim);
    HardestPair hp;
    hp.anchor = g.anchor;
    hp.positive_distance = -1.0;
    for (auto p : g.positives) {
      const double d = squared_distance(a, embedding_of(embeddings, p, dim));
      if (d > hp.positive_distance) {
        hp.positive_distance = d;
        hp.positive = p;
      }
    }
    bool first = true;
    for (auto n : g.negatives) {
      const double d = squared_distance(a, embedding_of(embeddings, n, dim));
      if (first || d < hp.negative_distance) {
        hp.negative_distance = d;
        hp.negative = n;
        first = false;
      }
    }
    hp.term = std::max(0.0, hp.positive_distance - hp.negative_distance + margin);
    sum += hp.term;
    out.pairs.push_back(hp);
  }
  out.value = sum / static_cast<double>(groups.size());
  return out;
}

double combined_objective(double ce_loss, double contrastive, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ContractError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  return alpha * contrastive + (1.0 - alpha) * ce_loss;
}

LossGradients loss_gradients(std::span<const ContrastiveGroup> groups, const EntityTokens& tokens,
                             const AggregatorParams& params, double margin) {
  const auto d = params.score_weights.size();
  std::map<EntityId, Aggregation> aggregated;
  EntityEmbeddings embeddings;
  for (const auto& [entity, toks] : tokens) {
    auto agg = aggregate_entity(toks, params);
    embeddings.emplace(entity, agg.embedding);
    aggregated.emplace(entity, std::move(agg));
  }

  const auto loss = contrastive_loss(groups, embeddings, margin);
  LossGradients out;
  out.value = loss.value;
  out.params.assign(d, 0.0);
  for (const auto& [entity, toks] : tokens) {
    out.tokens[entity].assign(toks.size(), Vector(d, 0.0));
  }
  if (groups.empty()) return out;

  // d loss / d e for every entity embedding.
  const double scale = 1.0 / static_cast<double>(groups.size());
  std::map<EntityId, Vector> grad_e;
  auto accumulate = [&](EntityId e, const Vector& from, const Vector& to, double factor) {
    auto& g = grad_e.try_emplace(e, Vector(d, 0.0)).first->second;
    for (std::size_t i = 0; i < d; ++i) g[i] += factor * (from[i] - to[i]);
  };
  for (const auto& hp : loss.pairs) {
    if (!(hp.term > 0.0)) continue;
    const auto& a = embeddings.at(hp.anchor);
    const auto& p = embeddings.at(hp.positive);
    const auto& n = embeddings.at(hp.negative);
    accumulate(hp.anchor, n, p, 2.0 * scale);   // 2 (a - p) - 2 (a - n) = 2 (n - p)
    accumulate(hp.positive, p, a, 2.0 * scale);  // -2 (a - p)
    accumulate(hp.negative, a, n, 2.0 * scale);  // 2 (a - n)
  }

  // Back through e = sum lambda_j h_j, lambda = softmax(<h_j, v>).
  for (const auto& [entity, g] : grad_e) {
    const auto& toks = tokens.at(entity);
    const auto& agg = aggregated.at(entity);
    const double e_dot_g = dot(agg.embedding, g);
    auto& grads = out.tokens.at(entity);
    for (std::size_t j = 0; j < toks.size(); ++j) {
      const double lambda = agg.attention[j];
      const double dz = lambda * (dot(toks[j], g) - e_dot_g);
      for (std::size_t i = 0; i < d; ++i) {
        grads[j][i] += lambda * g[i] + dz * params.score_weights[i];
        out.params[i] += dz * toks[j][i];
      }
    }
  }
  return out;
}

std::size_t export_training_pairs(const TemporalGraph& graph, const RuleBank& rules,
                                  const SamplerConfig& sampler, const RelationPolarityMap& polarity,
                                  const TimeFormat& time_format, const PairExportOptions& options,
                                  const std::filesystem::path& out_path) {
  const auto queries = graph.queries(options.split);
  if (options.shots == 0) throw ContractError("shots must be at least 1");
  if (options.shots > queries.size()) {
    throw ContractError("requested " + std::to_string(options.shots) + " shots but the " +
                        std::string(to_string(options.split)) + " split has only " +
                        std::to_string(queries.size()) + " queries available");
  }

  // Partial Fisher-Yates over query positions.
  std::vector<std::size_t> order(queries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(options.seed);
  for (std::size_t i = 0; i < options.shots; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(order.size() - i));
    std::swap(order[i], order[j]);
  }
  order.resize(options.shots);
  std::sort(order.begin(), order.end());

  std::ostringstream out;
  nlohmann::json header = {{"schema_version", 1},
                           {"kind", "training_pairs"},
                           {"shots", options.shots},
                           {"seed", options.seed},
                           {"split", std::string(to_string(options.split))},
                           {"available", queries.size()}};
  if (!options.config_hash.empty()) header["config_hash"] = options.config_hash;
  out << header.dump() << '\n';

  for (auto qi : order) {
    const auto& query = queries[qi];
    auto cfg = sampler;
    cfg.rng_seed = mix_seed(options.seed, qi);
    const auto history = rbmh_sample(graph, rules, query, cfg);
    const auto prompt = build_prompt(graph, query, std::span<const FactIndex>(history.facts),
                                     time_format);
    std::vector<Quadruple> facts;
    for (auto fi : history.facts) facts.push_back(graph.fact(fi));

    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : build_groups(facts, polarity)) {
      nlohmann::json pos = nlohmann::json::array(), neg = nlohmann::json::array();
      for (auto e : g.positives) pos.push_back(graph.entity_label(e));
      for (auto e : g.negatives) neg.push_back(graph.entity_label(e));
      groups.push_back({{"anchor", graph.entity_label(g.anchor)},
                        {"positives", std::move(pos)},
                        {"negatives", std::move(neg)}});
    }
    nlohmann::json rec = {{"query_id", qi},
                          {"prompt", prompt.full_prompt},
                          {"gold", prompt.gold_answer.value_or("")},
                          {"contrastive_groups", std::move(groups)}};
    out << rec.dump() << '\n';
  }
  write_file_atomic(out_path, out.str());
  return options.shots;
}

}  // namespace tkg
