#include "tkg/inference_filter.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "tkg/errors.hpp"
#include "tkg/hashing.hpp"

namespace tkg {

void FilterConfig::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("filter tau must lie in [0, 1]");
  if (k < 0) throw ConfigError("filter k must be >= 0");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("filter beta must lie in [0, 1]");
  if (num_sequences < 1) throw ConfigError("num_sequences must be >= 1");
  if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (ranked_limit < 1) throw ConfigError("ranked_limit must be >= 1");
}

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::accept_historical:
      return "accept-historical";
    case Decision::accept_similar:
      return "accept-similar";
    case Decision::reject:
      return "reject";
  }
  return "?";
}

Decision parse_decision(std::string_view name) {
  for (auto d : {Decision::accept_historical, Decision::accept_similar, Decision::reject}) {
    if (to_string(d) == name) return d;
  }
  throw SchemaError("unknown decision '" + std::string(name) + "'");
}

Decision decide(bool in_history, std::optional<double> similarity, double tau) {
  if (in_history) return Decision::accept_historical;
  if (similarity && *similarity >= tau) return Decision::accept_similar;
  return Decision::reject;
}

NextStep next_step(Decision decision, int attempt, int k) {
  if (decision != Decision::reject) return NextStep::accept;
  return attempt < k ? NextStep::regenerate : NextStep::fallback;
}

double similarity(std::string_view prediction, std::string_view context, EmbeddingClient& embed) {
  if (prediction.empty() || context.empty()) throw ContractError("similarity of empty text");
  const auto a = embed.embed(prediction);
  const auto b = embed.embed(context);
  return cosine_similarity(a.vector, b.vector);
}

std::vector<FallbackScore> rank_fallback(std::span<const std::string> history, double beta) {
  if (history.empty()) throw ContractError("fallback over an empty history");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ContractError("beta must lie in [0, 1]");
  const auto n = history.size();
  std::unordered_map<std::string_view, std::size_t> slot;
  std::vector<FallbackScore> out;
  std::vector<std::size_t> counts;
  // Walk newest to oldest so the first sighting fixes pos.
  for (std::size_t back = 0; back < n; ++back) {
    const auto& h = history[n - 1 - back];
    auto [it, fresh] = slot.emplace(h, out.size());
    if (fresh) {
      FallbackScore s;
      s.entity = h;
      s.position = back + 1;
      out.push_back(std::move(s));
      counts.push_back(0);
    }
    ++counts[it->second];
  }
  const auto total = static_cast<double>(n);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& s = out[i];
    s.frequency = static_cast<double>(counts[i]) / total;
    s.recency = 1.0 - static_cast<double>(s.position) / total;
    s.psi = beta * s.frequency + (1.0 - beta) * s.recency;
  }
  std::sort(out.begin(), out.end(), [](const FallbackScore& a, const FallbackScore& b) {
    if (a.psi != b.psi) return a.psi > b.psi;
    if (a.frequency != b.frequency) return a.frequency > b.frequency;
    return a.position < b.position;
  });
  return out;
}

std::map<std::string, double> fallback_scores(std::span<const std::string> history, double beta) {
  std::map<std::string, double> out;
  for (auto& s : rank_fallback(history, beta)) out.emplace(std::move(s.entity), s.psi);
  return out;
}

namespace {

void append_unique(std::vector<std::string>& out, std::unordered_set<std::string>& seen,
                   std::span<const std::string> items, std::size_t limit) {
  for (const auto& item : items) {
    if (out.size() >= limit) return;
    if (seen.insert(item).second) out.push_back(item);
  }
}

}  // namespace

FilterTrace filter_predict(const PromptRecord& prompt, GenerationClient& generator,
                           EmbeddingClient& embed, const FilterConfig& config,
                           std::uint64_t query_seed, std::string query_id) {
  config.validate();
  FilterTrace trace;
  trace.query_id = std::move(query_id);

  const std::unordered_set<std::string> history(prompt.history_objects.begin(),
                                                prompt.history_objects.end());
  const std::string context = prompt.context();
  std::optional<std::vector<double>> context_vec;
  auto phi = [&](const std::string& p) {
    if (!context_vec) {
      context_vec = embed.embed(context).vector;
      ++trace.context_embeddings;
    }
    ++trace.similarity_calls;
    return cosine_similarity(embed.embed(p).vector, *context_vec);
  };

  for (int attempt = 0; attempt <= config.k; ++attempt) {
    FilterAttempt a;
    GenerationRequest req{prompt.full_prompt, config.num_sequences, config.max_new_tokens,
                          config.temperature,
                          mix_seed(query_seed, static_cast<std::uint64_t>(attempt))};
    ++trace.generation_calls;
    try {
      const auto res = generator.generate(req);
      std::unordered_set<std::string> seen;
      for (const auto& text : res.texts) {
        for (auto& label : parse_prediction(text)) {
          if (seen.insert(label).second) a.candidates.push_back(std::move(label));
        }
      }
    } catch (const Error& e) {
      a.error = e.what();
      spdlog::warn("query {} attempt {}: generation failed: {}", trace.query_id, attempt,
                   e.what());
    }
    if (!a.candidates.empty()) a.prediction = a.candidates.front();

    const bool in_history = a.prediction && history.contains(*a.prediction);
    if (a.prediction && (!in_history || config.always_score)) a.similarity = phi(*a.prediction);
    a.decision = decide(in_history, a.similarity, config.tau);
    const auto step = next_step(a.decision, attempt, config.k);
    trace.attempts.push_back(std::move(a));

    if (step == NextStep::accept) {
      const auto& accepted = trace.attempts.back();
      trace.final_prediction = *accepted.prediction;
      std::unordered_set<std::string> seen;
      append_unique(trace.ranked, seen, accepted.candidates, config.ranked_limit);
      return trace;
    }
    if (step == NextStep::fallback) break;
  }

  trace.fallback_used = true;
  const FilterAttempt* last_parsed = nullptr;
  for (const auto& a : trace.attempts) {
    if (a.prediction) last_parsed = &a;
  }
  std::unordered_set<std::string> seen;
  if (!prompt.history_objects.empty()) {
    const auto ranked = rank_fallback(prompt.history_objects, config.beta);
    for (const auto& s : ranked) trace.fallback_scores.emplace(s.entity, s.psi);
    trace.final_prediction = ranked.front().entity;
    for (const auto& s : ranked) {
      if (trace.ranked.size() >= config.ranked_limit) break;
      if (seen.insert(s.entity).second) trace.ranked.push_back(s.entity);
    }
    append_unique(trace.ranked, seen, trace.attempts.back().candidates, config.ranked_limit);
  } else {
    trace.unresolved = true;
    if (last_parsed) {
      trace.final_prediction = *last_parsed->prediction;
      append_unique(trace.ranked, seen, last_parsed->candidates, config.ranked_limit);
    }
  }
  return trace;
}

Calibration calibrate_threshold(std::span<const SimilarityRecord> records) {
  std::vector<double> correct, incorrect;
  for (const auto& r : records) {
    if (!std::isfinite(r.similarity)) throw ContractError("non-finite similarity record");
    (r.correct ? correct : incorrect).push_back(r.similarity);
  }
  if (correct.empty() || incorrect.empty()) {
    throw ContractError("calibration needs both correct and incorrect records (got " +
                        std::to_string(correct.size()) + " correct, " +
                        std::to_string(incorrect.size()) + " incorrect)");
  }
  std::sort(correct.begin(), correct.end());
  std::sort(incorrect.begin(), incorrect.end());
  std::vector<double> candidates;
  candidates.reserve(records.size());
  for (const auto& r : records) candidates.push_back(r.similarity);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  auto at_or_below = [](const std::vector<double>& xs, double tau) {
    return static_cast<std::int64_t>(std::upper_bound(xs.begin(), xs.end(), tau) - xs.begin());
  };
  const auto n_c = static_cast<std::int64_t>(correct.size());
  const auto n_i = static_cast<std::int64_t>(incorrect.size());

  Calibration best;
  best.correct = correct.size();
  best.incorrect = incorrect.size();
  // Separations share the denominator n_i * n_c, so numerators compare exactly.
  std::int64_t best_num = 0;
  bool first = true;
  for (double tau : candidates) {
    const auto below_i = at_or_below(incorrect, tau);
    const auto below_c = at_or_below(correct, tau);
    const std::int64_t num = below_i * n_c - below_c * n_i;
    if (first || num > best_num) {
      best_num = num;
      best.tau = tau;
      best.separation = static_cast<double>(below_i) / static_cast<double>(n_i) -
                        static_cast<double>(below_c) / static_cast<double>(n_c);
      first = false;
    }
  }
  return best;
}

}  // namespace tkg
