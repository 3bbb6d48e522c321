#pragma once
// Test-time filtering of generated answers.
//
// For attempt i = 0..k the generator is asked for an answer p:
//   p in H                  -> accept (historical), no embedding needed
//   phi(p, c) >= tau        -> accept (similar)
//   otherwise               -> reject; regenerate while i < k
// When every attempt is rejected the answer falls back to
//   argmax_{h in H} psi(h),  psi = beta * f(h) + (1 - beta) * r(h)
// where f(h) = count(h) / |H| and r(h) = 1 - pos(h) / |H|, pos(h) being the
// 1-based position of h's latest occurrence counted from the newest end.
// Ties on psi prefer higher f, then the newer entity.
//
// H is the object column of the prompt's history lines, oldest first, and c
// is the prompt without its instruction paragraph.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tkg/gateway.hpp"
#include "tkg/prompt_builder.hpp"

namespace tkg {

struct FilterConfig {
  double tau = 0.6;
  int k = 1;  // regenerations after the first attempt
  double beta = 0.6;
  int num_sequences = 1;
  int max_new_tokens = 32;
  double temperature = 1.0;
  std::size_t ranked_limit = 10;
  // Score phi even for historical answers, so calibration sees every answer.
  // Costs one extra embedding per such attempt.
  bool always_score = false;

  // Throws ConfigError.
  void validate() const;
};

enum class Decision : std::uint8_t { accept_historical, accept_similar, reject };

std::string_view to_string(Decision d);
// Throws SchemaError.
Decision parse_decision(std::string_view name);

// One attempt's verdict. `similarity` is ignored when in_history; a missing
// similarity (no prediction parsed, generation failed) rejects.
Decision decide(bool in_history, std::optional<double> similarity, double tau);

enum class NextStep : std::uint8_t { accept, regenerate, fallback };

// `attempt` is 0-based; at most k + 1 attempts are made.
NextStep next_step(Decision decision, int attempt, int k);

struct FilterAttempt {
  std::optional<std::string> prediction;  // entity label, absent if none parsed
  std::vector<std::string> candidates;    // all labels parsed from the generation
  std::optional<double> similarity;
  Decision decision = Decision::reject;
  std::string error;  // generation failure, if any

  friend bool operator==(const FilterAttempt&, const FilterAttempt&) = default;
};

struct FilterTrace {
  std::string query_id;
  std::vector<FilterAttempt> attempts;
  bool fallback_used = false;
  // Fallback needed but H was empty: the final answer is the last parsed
  // prediction (or empty if none parsed).
  bool unresolved = false;
  std::string final_prediction;
  std::vector<std::string> ranked;  // final prediction first, deduplicated
  std::map<std::string, double> fallback_scores;
  std::size_t generation_calls = 0;
  std::size_t similarity_calls = 0;  // phi evaluations (one prediction embedding each)
  std::size_t context_embeddings = 0;

  friend bool operator==(const FilterTrace&, const FilterTrace&) = default;
};

// Cosine of the two texts' embeddings. Throws ContractError on empty text.
double similarity(std::string_view prediction, std::string_view context, EmbeddingClient& embed);

struct FallbackScore {
  std::string entity;
  double frequency = 0.0;  // f
  double recency = 0.0;    // r
  double psi = 0.0;
  std::size_t position = 0;  // pos, 1 = newest
};

// One entry per distinct entity of H, best first (psi desc, f desc, newer
// first). Throws ContractError on empty H or beta outside [0, 1].
std::vector<FallbackScore> rank_fallback(std::span<const std::string> history, double beta);
std::map<std::string, double> fallback_scores(std::span<const std::string> history, double beta);

// `query_seed` fixes the generation seeds of all attempts.
FilterTrace filter_predict(const PromptRecord& prompt, GenerationClient& generator,
                           EmbeddingClient& embed, const FilterConfig& config,
                           std::uint64_t query_seed, std::string query_id = {});

struct SimilarityRecord {
  double similarity = 0.0;
  bool correct = false;
};

struct Calibration {
  double tau = 0.0;
  double separation = 0.0;  // F_I(tau) - F_C(tau)
  std::size_t correct = 0;
  std::size_t incorrect = 0;
};

// tau* = argmax over observed phi of F_I(tau) - F_C(tau) with F the empirical
// CDF P(X <= tau); ties go to the smaller tau. Throws ContractError unless
// both classes are present.
Calibration calibrate_threshold(std::span<const SimilarityRecord> records);

}  // namespace tkg
