#include "tkg/gateway.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <semaphore>
#include <thread>

#include "tkg/errors.hpp"
#include "tkg/hashing.hpp"
#include "tkg/io.hpp"
#include "tkg/prompt_builder.hpp"

namespace tkg {

using nlohmann::json;

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ContractError("cosine of vectors with different lengths " + std::to_string(a.size()) +
                        " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

namespace {

constexpr std::ptrdiff_t kMaxInFlight = 256;

// Shared HTTP plumbing: one POST with retry, in-flight cap and tracing.
class JsonPoster {
 public:
  explicit JsonPoster(HttpClientOptions options)
      : options_(std::move(options)),
        slots_(std::clamp<std::ptrdiff_t>(options_.max_in_flight, 1, kMaxInFlight)) {
    if (options_.base_url.empty()) throw ConfigError("gateway base_url is empty");
    if (options_.retries < 0) throw ConfigError("gateway retries must be >= 0");
    // Fail early on an unusable URL.
    httplib::Client probe(options_.base_url);
    if (!probe.is_valid()) throw ConfigError("invalid gateway base_url '" + options_.base_url + "'");
  }

  json post(const std::string& route, const json& body) {
    const auto payload = body.dump();
    if (options_.trace) options_.trace("request", payload);

    slots_.acquire();
    struct Release {
      std::counting_semaphore<kMaxInFlight>& s;
      ~Release() { s.release(); }
    } release{slots_};

    const int attempts = options_.retries + 1;
    std::string last_problem;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      if (attempt > 1 && options_.retry_backoff_ms > 0) {
        std::this_thread::sleep_for(
            std::chrono::milliseconds(options_.retry_backoff_ms * (attempt - 1)));
      }
      httplib::Client client(options_.base_url);
      const auto timeout = std::chrono::milliseconds(options_.timeout_ms);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      auto res = client.Post(route, payload, "application/json");
      if (!res) {
        last_problem = "transport error: " + httplib::to_string(res.error());
        spdlog::warn("{} {} attempt {}/{}: {}", options_.base_url, route, attempt, attempts,
                     last_problem);
        continue;
      }
      if (res->status >= 500 || res->status == 429) {
        last_problem = "HTTP " + std::to_string(res->status);
        spdlog::warn("{} {} attempt {}/{}: {}", options_.base_url, route, attempt, attempts,
                     last_problem);
        continue;
      }
      if (options_.trace) options_.trace("response", res->body);
      if (res->status < 200 || res->status >= 300) {
        throw ProtocolError(route + " answered HTTP " + std::to_string(res->status) + ": " +
                            res->body.substr(0, 200));
      }
      try {
        return json::parse(res->body);
      } catch (const json::parse_error& e) {
        throw ProtocolError(route + " answered malformed JSON: " + e.what());
      }
    }
    throw TransportError(route + " failed after " + std::to_string(attempts) +
                             " attempts (" + last_problem + ")",
                         attempts);
  }

 private:
  HttpClientOptions options_;
  std::counting_semaphore<kMaxInFlight> slots_;
};

}  // namespace

struct HttpGenerationClient::Impl {
  explicit Impl(HttpClientOptions options) : poster(std::move(options)) {}
  JsonPoster poster;
};

HttpGenerationClient::HttpGenerationClient(HttpClientOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {}

HttpGenerationClient::~HttpGenerationClient() = default;

GenerationResponse HttpGenerationClient::generate(const GenerationRequest& request) {
  if (request.num_sequences < 1) throw ContractError("num_sequences must be >= 1");
  const json body = {{"prompt", request.prompt},
                     {"num_sequences", request.num_sequences},
                     {"max_new_tokens", request.max_new_tokens},
                     {"temperature", request.temperature},
                     {"seed", request.seed}};
  const auto reply = impl_->poster.post("/generate", body);
  if (!reply.is_object() || !reply.contains("texts") || !reply["texts"].is_array()) {
    throw ProtocolError("/generate reply lacks a 'texts' array");
  }
  GenerationResponse out;
  for (const auto& t : reply["texts"]) {
    if (!t.is_string()) throw ProtocolError("/generate reply has a non-string text");
    out.texts.push_back(t.get<std::string>());
  }
  if (out.texts.size() > static_cast<std::size_t>(request.num_sequences)) {
    throw ProtocolError("/generate returned " + std::to_string(out.texts.size()) +
                        " texts for num_sequences " + std::to_string(request.num_sequences));
  }
  return out;
}

struct HttpEmbeddingClient::Impl {
  explicit Impl(HttpClientOptions options) : poster(std::move(options)) {}
  JsonPoster poster;
};

HttpEmbeddingClient::HttpEmbeddingClient(HttpClientOptions options, std::size_t dimension)
    : impl_(std::make_unique<Impl>(std::move(options))), dimension_(dimension) {
  if (dimension_ == 0) throw ConfigError("embedding dimension must be positive");
}

HttpEmbeddingClient::~HttpEmbeddingClient() = default;

EmbeddingResponse HttpEmbeddingClient::embed(std::string_view text) {
  if (text.empty()) throw ContractError("cannot embed empty text");
  const auto reply = impl_->poster.post("/embed", json{{"text", std::string(text)}});
  if (!reply.is_object() || !reply.contains("embedding") || !reply["embedding"].is_array()) {
    throw ProtocolError("/embed reply lacks an 'embedding' array");
  }
  EmbeddingResponse out;
  out.vector.reserve(dimension_);
  for (const auto& v : reply["embedding"]) {
    if (!v.is_number()) throw ProtocolError("/embed reply has a non-numeric component");
    out.vector.push_back(v.get<double>());
  }
  if (out.vector.size() != dimension_) {
    throw ProtocolError("/embed returned dimension " + std::to_string(out.vector.size()) +
                        ", expected " + std::to_string(dimension_));
  }
  return out;
}

CachingEmbeddingClient::CachingEmbeddingClient(std::shared_ptr<EmbeddingClient> inner)
    : inner_(std::move(inner)) {
  if (!inner_) throw ContractError("caching client needs an inner client");
}

EmbeddingResponse CachingEmbeddingClient::embed(std::string_view text) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(std::string(text)); it != cache_.end()) {
      ++hits_;
      return EmbeddingResponse{it->second};
    }
  }
  // Computed outside the lock; a racing duplicate is harmless.
  auto res = inner_->embed(text);
  ++misses_;
  std::lock_guard lock(mutex_);
  cache_.emplace(std::string(text), res.vector);
  return res;
}

void CachingEmbeddingClient::load(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw SchemaError(path.string() + ": embedding cache must be an object");
  std::lock_guard lock(mutex_);
  for (const auto& [text, vec] : doc.items()) {
    if (!vec.is_array()) throw SchemaError(path.string() + ": entry is not an array");
    std::vector<double> v;
    for (const auto& x : vec) {
      if (!x.is_number()) throw SchemaError(path.string() + ": non-numeric component");
      v.push_back(x.get<double>());
    }
    if (v.size() != inner_->dimension()) {
      throw SchemaError(path.string() + ": cached vector has dimension " +
                        std::to_string(v.size()));
    }
    cache_.insert_or_assign(text, std::move(v));
  }
}

void CachingEmbeddingClient::save(const std::filesystem::path& path) const {
  json doc = json::object();
  {
    std::lock_guard lock(mutex_);
    for (const auto& [text, vec] : cache_) doc[text] = vec;
  }
  // json objects keep keys sorted, so the file is stable.
  write_file_atomic(path, doc.dump() + "\n");
}

StubGenerationClient::StubGenerationClient(StubGenerationOptions options)
    : options_(std::move(options)) {
  if (options_.history_bias < 0.0 || options_.history_bias > 1.0) {
    throw ConfigError("stub history_bias must lie in [0, 1]");
  }
}

GenerationResponse StubGenerationClient::generate(const GenerationRequest& request) {
  if (request.num_sequences < 1) throw ContractError("num_sequences must be >= 1");
  GenerationResponse out;
  if (auto it = options_.canned.find(request.prompt); it != options_.canned.end()) {
    out.texts.push_back(it->second);
    return out;
  }

  std::vector<std::string> history;
  for (const auto& a : parse_answers(request.prompt)) history.push_back(a.id + "." + a.label);

  const auto base = mix_seed(mix_seed(options_.seed, fnv1a64(request.prompt)), request.seed);
  for (int i = 0; i < request.num_sequences; ++i) {
    const auto h = mix_seed(base, static_cast<std::uint64_t>(i));
    const double u = unit_interval(h);
    const auto pick = splitmix64(h);
    const bool use_history =
        !history.empty() && (options_.distractors.empty() || u < options_.history_bias);
    if (use_history) {
      out.texts.push_back(history[pick % history.size()]);
    } else if (!options_.distractors.empty()) {
      out.texts.push_back(options_.distractors[pick % options_.distractors.size()]);
    } else {
      out.texts.emplace_back("None");
    }
  }
  return out;
}

HashEmbeddingClient::HashEmbeddingClient(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
  if (dimension_ == 0) throw ConfigError("embedding dimension must be positive");
}

EmbeddingResponse HashEmbeddingClient::embed(std::string_view text) {
  if (text.empty()) throw ContractError("cannot embed empty text");
  std::vector<double> v(dimension_, 0.0);
  auto add = [&](std::string_view feature, double weight) {
    const auto h = mix_seed(seed_, fnv1a64(feature));
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[h % dimension_] += sign * weight;
  };

  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    add("w:" + word, 1.0);
    const std::string padded = "<" + word + ">";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) add("c:" + padded.substr(i, 3), 0.5);
    word.clear();
  };
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || u >= 0x80) {
      word.push_back(static_cast<char>(std::tolower(u)));
    } else {
      flush();
    }
  }
  flush();

  const auto whole = fnv1a64(text);
  for (std::uint64_t k = 0; k < 8; ++k) {
    const auto h = mix_seed(seed_ ^ whole, k);
    v[h % dimension_] += ((h >> 63) ? -1.0 : 1.0) * 0.5;
  }

  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    v[whole % dimension_] = 1.0;
  } else {
    for (double& x : v) x /= norm;
  }
  return EmbeddingResponse{std::move(v)};
}

TableEmbeddingClient::TableEmbeddingClient(std::size_t dimension,
                                           std::map<std::string, std::vector<double>> table,
                                           std::shared_ptr<EmbeddingClient> fallback)
    : dimension_(dimension), fallback_(std::move(fallback)) {
  for (auto& [text, vec] : table) {
    if (vec.size() != dimension_) {
      throw ContractError("table vector for '" + text + "' has dimension " +
                          std::to_string(vec.size()));
    }
    table_.emplace(text, std::move(vec));
  }
  if (fallback_ && fallback_->dimension() != dimension_) {
    throw ContractError("fallback embedding dimension differs from the table");
  }
}

EmbeddingResponse TableEmbeddingClient::embed(std::string_view text) {
  if (auto it = table_.find(text); it != table_.end()) return EmbeddingResponse{it->second};
  if (fallback_) return fallback_->embed(text);
  throw ContractError("no table embedding for '" + std::string(text.substr(0, 80)) + "'");
}

}  // namespace tkg
