#pragma once
// Text generation and sentence embedding behind one interface, with HTTP
// clients for a remote inference service and deterministic in-process stubs.
//
// Wire protocol (JSON over HTTP, see docs/gateway_protocol.md):
//   POST /generate {prompt, num_sequences, max_new_tokens, temperature, seed}
//               -> {texts: [string]}
//   POST /embed    {text} -> {embedding: [number]}
//
// All clients are safe to share across threads.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tkg {

struct GenerationRequest {
  std::string prompt;
  int num_sequences = 1;
  int max_new_tokens = 32;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

struct GenerationResponse {
  std::vector<std::string> texts;  // rank order, at most num_sequences
};

struct EmbeddingResponse {
  std::vector<double> vector;
};

class GenerationClient {
 public:
  virtual ~GenerationClient() = default;
  virtual GenerationResponse generate(const GenerationRequest& request) = 0;
};

class EmbeddingClient {
 public:
  virtual ~EmbeddingClient() = default;
  virtual EmbeddingResponse embed(std::string_view text) = 0;
  virtual std::size_t dimension() const = 0;
};

// Cosine of two equal-length vectors; 0 when either has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Receives ("request" | "response", verbatim JSON body).
using TraceSink = std::function<void(std::string_view direction, std::string_view body)>;

struct HttpClientOptions {
  std::string base_url;  // e.g. http://127.0.0.1:8080
  int timeout_ms = 30000;
  int retries = 2;  // extra attempts after the first
  int retry_backoff_ms = 100;
  int max_in_flight = 4;
  TraceSink trace;
};

// Transport failures and 5xx/429 answers are retried; after the last attempt
// a TransportError carrying the attempt count is thrown. Other non-2xx
// statuses and malformed bodies raise ProtocolError.
class HttpGenerationClient : public GenerationClient {
 public:
  explicit HttpGenerationClient(HttpClientOptions options);
  ~HttpGenerationClient() override;
  GenerationResponse generate(const GenerationRequest& request) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

class HttpEmbeddingClient : public EmbeddingClient {
 public:
  // Vectors whose length differs from `dimension` raise ProtocolError.
  HttpEmbeddingClient(HttpClientOptions options, std::size_t dimension = 768);
  ~HttpEmbeddingClient() override;
  EmbeddingResponse embed(std::string_view text) override;
  std::size_t dimension() const override { return dimension_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::size_t dimension_;
};

// Memoizes another client by exact text. Optionally persisted as a JSON
// object {text: [number]}.
class CachingEmbeddingClient : public EmbeddingClient {
 public:
  explicit CachingEmbeddingClient(std::shared_ptr<EmbeddingClient> inner);

  EmbeddingResponse embed(std::string_view text) override;
  std::size_t dimension() const override { return inner_->dimension(); }

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

  // Throws IoError / SchemaError.
  void load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::shared_ptr<EmbeddingClient> inner_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::vector<double>> cache_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

struct StubGenerationOptions {
  std::uint64_t seed = 0;
  // Exact prompt -> generation text; such prompts always get that text only.
  std::map<std::string, std::string> canned;
  // Rendered answers ("id.label") offered besides those found in the prompt.
  std::vector<std::string> distractors;
  // Chance that a sequence answers with an entity from the prompt's history.
  double history_bias = 0.7;
};

// Sequence i is a pure function of (options.seed, prompt, request.seed, i):
// it names either an object that appears in the prompt's history lines or one
// of the distractors, in the "id.label" form. With neither available it
// answers "None".
class StubGenerationClient : public GenerationClient {
 public:
  explicit StubGenerationClient(StubGenerationOptions options = {});
  GenerationResponse generate(const GenerationRequest& request) override;

 private:
  StubGenerationOptions options_;
};

// Feature-hashed bag of words and character trigrams plus a whole-text
// component, normalized to unit length. Texts sharing words land close
// together; a text's cosine with itself is 1; distinct texts differ in the
// whole-text component.
class HashEmbeddingClient : public EmbeddingClient {
 public:
  explicit HashEmbeddingClient(std::size_t dimension = 768, std::uint64_t seed = 0);
  EmbeddingResponse embed(std::string_view text) override;
  std::size_t dimension() const override { return dimension_; }

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

// Fixed text -> vector table for scripted tests; unknown text goes to the
// fallback client, or raises ContractError without one.
class TableEmbeddingClient : public EmbeddingClient {
 public:
  TableEmbeddingClient(std::size_t dimension, std::map<std::string, std::vector<double>> table,
                       std::shared_ptr<EmbeddingClient> fallback = nullptr);
  EmbeddingResponse embed(std::string_view text) override;
  std::size_t dimension() const override { return dimension_; }

 private:
  std::size_t dimension_;
  std::map<std::string, std::vector<double>, std::less<>> table_;
  std::shared_ptr<EmbeddingClient> fallback_;
};

}  // namespace tkg
