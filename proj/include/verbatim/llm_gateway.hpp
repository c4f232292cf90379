#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "verbatim/embedding_index.hpp"

namespace verbatim {

enum class Role { System, User, Assistant };
std::string_view to_string(Role role);

struct ChatMessage {
  Role role = Role::User;
  std::string content;
};

// Sampling defaults are zero so that repeated runs are reproducible.
struct ChatParams {
  double temperature = 0.0;
  double top_p = 0.0;
  int max_tokens = 1024;
  std::string model = "gpt-4";
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  ChatParams params;

  // Throws InvalidArgument on negative temperature, top_p outside [0,1] or
  // an empty message list.
  void validate() const;
};

struct EmbedRequest {
  std::vector<std::string> texts;
  std::string model;
};

// Canonical (sorted-key) JSON serializations used for fingerprints and
// cassettes.
std::string canonical_json(const ChatRequest& request);
std::string canonical_json(const EmbedRequest& request);
// SHA-256 of the canonical form; invariant under key order of the input.
std::string fingerprint(const ChatRequest& request);
std::string fingerprint(const EmbedRequest& request);
std::string fingerprint_serialized(std::string_view json_text);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string chat(const ChatRequest& request) = 0;
  virtual std::vector<EmbeddingVector> embed(const EmbedRequest& request) = 0;
};

// Deterministic stand-in for a sentence encoder: the sum of seeded
// pseudo-random projections of each token's hash.
class MockEmbedder {
 public:
  explicit MockEmbedder(std::size_t dim = 384, std::uint64_t seed = 0x5eed);

  [[nodiscard]] EmbeddingVector embed(std::string_view text) const;
  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// Pattern -> canned response backend for tests. Rules are tried in
// registration order against the last message of the request; each rule
// walks its response list and then keeps returning the final entry.
class ScriptedBackend : public Backend {
 public:
  using Handler = std::function<std::optional<std::string>(const ChatRequest&)>;

  explicit ScriptedBackend(MockEmbedder embedder = MockEmbedder());

  ScriptedBackend& on(const std::string& pattern,
                      std::vector<std::string> responses);
  // Consulted before the rules; returning nullopt falls through.
  ScriptedBackend& handler(Handler fn);
  // Used when nothing matches.
  ScriptedBackend& otherwise(std::string response);

  std::string chat(const ChatRequest& request) override;
  std::vector<EmbeddingVector> embed(const EmbedRequest& request) override;

  [[nodiscard]] std::size_t chat_calls() const;
  [[nodiscard]] std::vector<ChatRequest> requests() const;

 private:
  struct Rule {
    std::regex pattern;
    std::vector<std::string> responses;
    std::size_t cursor = 0;
  };

  MockEmbedder embedder_;
  mutable std::mutex mutex_;
  std::vector<Rule> rules_;
  std::vector<Handler> handlers_;
  std::optional<std::string> fallback_;
  std::vector<ChatRequest> requests_;
};

struct CassetteEntry {
  std::string fingerprint;
  std::string request;   // canonical JSON
  std::string response;  // JSON: {"content": ...} or {"embeddings": [...]}
};

// Append-only JSONL log of {fingerprint, request, response}.
class Cassette {
 public:
  Cassette() = default;
  explicit Cassette(std::filesystem::path path);

  [[nodiscard]] std::optional<std::string> lookup(
      const std::string& fingerprint) const;
  void append(CassetteEntry entry);
  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] const std::optional<std::filesystem::path>& path() const {
    return path_;
  }

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::string> responses_;
  std::size_t size_ = 0;
};

struct LiveConfig {
  std::string base_url = "https://api.openai.com";
  std::string api_key;
  std::string chat_path = "/v1/chat/completions";
  std::string embeddings_path = "/v1/embeddings";
  std::chrono::milliseconds timeout{60000};
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
};

// OpenAI-compatible HTTP backend. Retries transport failures with
// exponential backoff; HTTP error statuses are never retried.
class LiveBackend : public Backend {
 public:
  explicit LiveBackend(LiveConfig config);
  ~LiveBackend() override;

  std::string chat(const ChatRequest& request) override;
  std::vector<EmbeddingVector> embed(const EmbedRequest& request) override;

 private:
  std::string post(const std::string& path, const std::string& body);

  LiveConfig config_;
};

// Forwards to an inner backend and persists every exchange.
class RecordingBackend : public Backend {
 public:
  RecordingBackend(std::shared_ptr<Backend> inner,
                   std::shared_ptr<Cassette> cassette);

  std::string chat(const ChatRequest& request) override;
  std::vector<EmbeddingVector> embed(const EmbedRequest& request) override;

 private:
  std::shared_ptr<Backend> inner_;
  std::shared_ptr<Cassette> cassette_;
};

// Serves recorded responses only; never touches the network.
class ReplayBackend : public Backend {
 public:
  explicit ReplayBackend(std::shared_ptr<const Cassette> cassette);

  std::string chat(const ChatRequest& request) override;
  std::vector<EmbeddingVector> embed(const EmbedRequest& request) override;

 private:
  std::shared_ptr<const Cassette> cassette_;
};

class TokenBucket {
 public:
  // rate <= 0 disables limiting.
  TokenBucket(double rate_per_second, double burst);
  void acquire();

 private:
  std::mutex mutex_;
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

struct GatewayOptions {
  ChatParams defaults;
  std::string embedding_model = "all-MiniLM-L6-v2";
  double rate_per_second = 0.0;
  double burst = 1.0;
};

struct CallRecord {
  std::string kind;  // "chat" | "embed"
  std::string fingerprint;
};

// The only path to language-model capabilities.
class LlmGateway {
 public:
  explicit LlmGateway(std::shared_ptr<Backend> backend,
                      GatewayOptions options = {});

  std::string chat(const ChatRequest& request);
  // Uses the default parameters.
  std::string chat(std::vector<ChatMessage> messages);
  std::string complete(std::string prompt);

  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts);
  EmbeddingVector embed_one(const std::string& text);

  [[nodiscard]] const ChatParams& defaults() const { return options_.defaults; }
  [[nodiscard]] std::size_t chat_calls() const;
  [[nodiscard]] std::size_t embed_calls() const;
  [[nodiscard]] std::vector<CallRecord> call_log() const;
  [[nodiscard]] std::optional<std::string> last_chat_fingerprint() const;

 private:
  std::shared_ptr<Backend> backend_;
  GatewayOptions options_;
  TokenBucket limiter_;
  mutable std::mutex log_mutex_;
  std::vector<CallRecord> log_;
};

}  // namespace verbatim
