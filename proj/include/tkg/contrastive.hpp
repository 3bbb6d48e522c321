#pragma once
// Relation-polarity contrastive groups and the margin loss over entity
// embeddings, with analytic gradients through an attention aggregator.
//
// Entity embedding from k token vectors h_1..h_k and a score vector v:
//   z_j = <h_j, v>,  lambda = softmax(z),  e = sum_j lambda_j h_j
//
// Loss over N_c groups (a = anchor, P = positives, Q = negatives):
//   pos = argmax_{p in P} |a - p|^2      (hardest positive)
//   neg = argmin_{n in Q} |a - n|^2      (closest negative)
//   L   = 1/N_c * sum max(0, |a - pos|^2 - |a - neg|^2 + m)

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tkg/graph_store.hpp"
#include "tkg/history_sampler.hpp"
#include "tkg/prompt_builder.hpp"
#include "tkg/rule_miner.hpp"

namespace tkg {

enum class Polarity : std::uint8_t { positive, negative, neutral };

std::string_view to_string(Polarity p);

class RelationPolarityMap {
 public:
  RelationPolarityMap() = default;

  // JSON object {relation_label: "positive"|"negative"|"neutral"}. Relations
  // of the vocabulary missing from the file are neutral; each is reported in
  // `warnings` when given. Labels not in the vocabulary are ignored (and
  // reported). Throws IoError / SchemaError.
  static RelationPolarityMap load(const std::filesystem::path& path, const Vocabulary& relations,
                                  std::vector<std::string>* warnings = nullptr);

  void set(RelationId relation, Polarity polarity) { map_[relation] = polarity; }
  Polarity of(RelationId relation) const;

 private:
  std::map<RelationId, Polarity> map_;
};

struct ContrastiveGroup {
  EntityId anchor{};
  std::vector<EntityId> positives;  // ascending ids
  std::vector<EntityId> negatives;  // ascending ids

  friend bool operator==(const ContrastiveGroup&, const ContrastiveGroup&) = default;
};

// One group per entity of the subgraph (ascending anchor id) that has both a
// positive-only and a negative-only neighbour. Neighbours reached through both
// polarities are dropped; neutral edges are ignored; self-loops are ignored.
std::vector<ContrastiveGroup> build_groups(std::span<const Quadruple> facts,
                                           const RelationPolarityMap& polarity);

using Vector = std::vector<double>;

struct AggregatorParams {
  Vector score_weights;
};

struct Aggregation {
  Vector embedding;
  Vector attention;  // lambda, sums to 1
};

// Throws ContractError for no tokens, mismatched dimensions or non-finite
// values.
Aggregation aggregate_entity(std::span<const Vector> tokens, const AggregatorParams& params);

using EntityEmbeddings = std::map<EntityId, Vector>;
using EntityTokens = std::map<EntityId, std::vector<Vector>>;

struct HardestPair {
  EntityId anchor{};
  EntityId positive{};
  EntityId negative{};
  double positive_distance = 0.0;  // squared
  double negative_distance = 0.0;  // squared
  double term = 0.0;
};

struct ContrastiveLoss {
  double value = 0.0;
  std::vector<HardestPair> pairs;  // one per group, same order
};

// Ties in the hardest-pair selection go to the earlier entity in the group's
// list. An empty group list has loss 0. Throws ContractError when a group
// entity has no embedding or dimensions differ.
ContrastiveLoss contrastive_loss(std::span<const ContrastiveGroup> groups,
                                 const EntityEmbeddings& embeddings, double margin);

// alpha * contrastive + (1 - alpha) * ce. Throws ContractError unless
// alpha is in [0, 1].
double combined_objective(double ce_loss, double contrastive_loss, double alpha);

struct LossGradients {
  double value = 0.0;
  std::map<EntityId, std::vector<Vector>> tokens;  // d loss / d h, per entity token
  Vector params;                                   // d loss / d v
};

// Gradients of the loss above with every entity embedding produced by
// aggregate_entity from `tokens`. Inactive hinge terms contribute nothing.
LossGradients loss_gradients(std::span<const ContrastiveGroup> groups, const EntityTokens& tokens,
                             const AggregatorParams& params, double margin);

struct PairExportOptions {
  std::size_t shots = 1;
  std::uint64_t seed = 42;
  Split split = Split::train;
  std::string config_hash;  // recorded in the header when non-empty
};

// JSONL: a header line {schema_version, kind, shots, seed, split, available}
// followed by one {query_id, prompt, gold, contrastive_groups} record per
// selected query. Query selection is a seeded partial shuffle; records are
// written in chronological order. Throws ContractError when shots exceeds the
// number of available queries (the message names the count), IoError on
// write failure. Returns the number of records.
std::size_t export_training_pairs(const TemporalGraph& graph, const RuleBank& rules,
                                  const SamplerConfig& sampler, const RelationPolarityMap& polarity,
                                  const TimeFormat& time_format, const PairExportOptions& options,
                                  const std::filesystem::path& out_path);

}  // namespace tkg
