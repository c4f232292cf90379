#include "verbatim/llm_gateway.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "verbatim/error.hpp"
#include "verbatim/text.hpp"

namespace verbatim {

using nlohmann::json;

namespace {

json request_json(const ChatRequest& r) {
  json messages = json::array();
  for (const auto& m : r.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  return {{"kind", "chat"},
          {"model", r.params.model},
          {"params",
           {{"temperature", r.params.temperature},
            {"top_p", r.params.top_p},
            {"max_tokens", r.params.max_tokens}}},
          {"messages", std::move(messages)}};
}

json request_json(const EmbedRequest& r) {
  return {{"kind", "embed"}, {"model", r.model}, {"input", r.texts}};
}

std::vector<EmbeddingVector> embeddings_from_json(const json& arr) {
  std::vector<EmbeddingVector> out;
  for (const auto& v : arr) {
    std::vector<float> values;
    values.reserve(v.size());
    for (const auto& x : v) values.push_back(x.get<float>());
    out.emplace_back(std::move(values));
  }
  return out;
}

json embeddings_to_json(const std::vector<EmbeddingVector>& vectors) {
  json arr = json::array();
  for (const auto& v : vectors) arr.push_back(v.values);
  return arr;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

void ChatRequest::validate() const {
  if (messages.empty()) {
    throw Error(Errc::InvalidArgument, "chat request has no messages");
  }
  if (!(params.temperature >= 0.0)) {
    throw Error(Errc::InvalidArgument, "temperature must be >= 0");
  }
  if (!(params.top_p >= 0.0 && params.top_p <= 1.0)) {
    throw Error(Errc::InvalidArgument, "top_p must be in [0, 1]");
  }
}

std::string canonical_json(const ChatRequest& request) {
  return request_json(request).dump();
}

std::string canonical_json(const EmbedRequest& request) {
  return request_json(request).dump();
}

std::string fingerprint(const ChatRequest& request) {
  return text::sha256_hex(canonical_json(request));
}

std::string fingerprint(const EmbedRequest& request) {
  return text::sha256_hex(canonical_json(request));
}

std::string fingerprint_serialized(std::string_view json_text) {
  return text::sha256_hex(json::parse(json_text).dump());
}

// ---------------------------------------------------------------------------

MockEmbedder::MockEmbedder(std::size_t dim, std::uint64_t seed)
    : dim_(dim), seed_(seed) {
  if (dim_ == 0) throw Error(Errc::InvalidArgument, "embedding dim must be > 0");
}

EmbeddingVector MockEmbedder::embed(std::string_view text) const {
  std::vector<std::string> tokens = text::tokenize(text);
  if (tokens.empty()) tokens.emplace_back(text.empty() ? "<empty>" : text);
  std::vector<double> acc(dim_, 0.0);
  for (const auto& token : tokens) {
    std::uint64_t state = text::fnv1a64(token) ^ seed_;
    for (std::size_t i = 0; i < dim_; ++i) {
      const std::uint64_t bits = splitmix64(state);
      // uniform in [-1, 1)
      acc[i] += static_cast<double>(bits >> 11) * (2.0 / 9007199254740992.0) - 1.0;
    }
  }
  std::vector<float> values(dim_);
  for (std::size_t i = 0; i < dim_; ++i) values[i] = static_cast<float>(acc[i]);
  return EmbeddingVector(std::move(values));
}

// ---------------------------------------------------------------------------

ScriptedBackend::ScriptedBackend(MockEmbedder embedder)
    : embedder_(std::move(embedder)) {}

ScriptedBackend& ScriptedBackend::on(const std::string& pattern,
                                     std::vector<std::string> responses) {
  if (responses.empty()) {
    throw Error(Errc::InvalidArgument, "scripted rule needs a response");
  }
  std::lock_guard lock(mutex_);
  rules_.push_back({std::regex(pattern, std::regex::ECMAScript | std::regex::icase),
                    std::move(responses), 0});
  return *this;
}

ScriptedBackend& ScriptedBackend::handler(Handler fn) {
  std::lock_guard lock(mutex_);
  handlers_.push_back(std::move(fn));
  return *this;
}

ScriptedBackend& ScriptedBackend::otherwise(std::string response) {
  std::lock_guard lock(mutex_);
  fallback_ = std::move(response);
  return *this;
}

std::string ScriptedBackend::chat(const ChatRequest& request) {
  request.validate();
  std::unique_lock lock(mutex_);
  requests_.push_back(request);
  const auto handlers = handlers_;
  lock.unlock();
  for (const auto& h : handlers) {
    if (auto out = h(request)) return *out;
  }
  lock.lock();
  const std::string& last = request.messages.back().content;
  for (auto& rule : rules_) {
    if (std::regex_search(last, rule.pattern)) {
      const std::size_t i = std::min(rule.cursor, rule.responses.size() - 1);
      ++rule.cursor;
      return rule.responses[i];
    }
  }
  if (fallback_) return *fallback_;
  throw Error(Errc::ProviderError,
              "scripted backend has no rule for: " + last.substr(0, 200));
}

std::vector<EmbeddingVector> ScriptedBackend::embed(const EmbedRequest& request) {
  std::vector<EmbeddingVector> out;
  out.reserve(request.texts.size());
  for (const auto& t : request.texts) out.push_back(embedder_.embed(t));
  return out;
}

std::size_t ScriptedBackend::chat_calls() const {
  std::lock_guard lock(mutex_);
  return requests_.size();
}

std::vector<ChatRequest> ScriptedBackend::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

// ---------------------------------------------------------------------------

Cassette::Cassette(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(*path_)) return;
  std::ifstream in(*path_, std::ios::binary);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      responses_[j.at("fingerprint").get<std::string>()] = j.at("response").dump();
      ++size_;
    } catch (const json::exception& e) {
      throw Error(Errc::Io, path_->string() + ":" + std::to_string(line_no) +
                                ": " + e.what());
    }
  }
}

std::optional<std::string> Cassette::lookup(const std::string& fp) const {
  std::lock_guard lock(mutex_);
  auto it = responses_.find(fp);
  if (it == responses_.end()) return std::nullopt;
  return it->second;
}

void Cassette::append(CassetteEntry entry) {
  std::lock_guard lock(mutex_);
  if (responses_.count(entry.fingerprint) > 0) return;
  if (path_) {
    const json line = {{"fingerprint", entry.fingerprint},
                       {"request", json::parse(entry.request)},
                       {"response", json::parse(entry.response)}};
    std::ofstream out(*path_, std::ios::app | std::ios::binary);
    if (!out) throw Error(Errc::Io, "cannot append to " + path_->string());
    out << line.dump() << '\n';
  }
  responses_[entry.fingerprint] = std::move(entry.response);
  ++size_;
}

std::size_t Cassette::size() const {
  std::lock_guard lock(mutex_);
  return size_;
}

// ---------------------------------------------------------------------------

LiveBackend::LiveBackend(LiveConfig config) : config_(std::move(config)) {}

LiveBackend::~LiveBackend() = default;

std::string LiveBackend::post(const std::string& path, const std::string& body) {
  httplib::Client client(config_.base_url);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(
      config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!config_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + config_.api_key);
  }

  auto backoff = config_.initial_backoff;
  httplib::Error last_error = httplib::Error::Success;
  const int attempts = std::max(1, config_.max_attempts);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    auto res = client.Post(path, headers, body, "application/json");
    if (res) {
      if (res->status < 200 || res->status >= 300) {
        throw ProviderError(res->status, res->body);
      }
      return res->body;
    }
    last_error = res.error();
    spdlog::warn("gateway transport error on attempt {}/{}: {}", attempt,
                 attempts, httplib::to_string(last_error));
    if (attempt < attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  if (last_error == httplib::Error::Read || last_error == httplib::Error::Write ||
      last_error == httplib::Error::ConnectionTimeout) {
    throw Error(Errc::Timeout, config_.base_url + path);
  }
  throw ProviderError(0, "transport error: " + httplib::to_string(last_error));
}

std::string LiveBackend::chat(const ChatRequest& request) {
  request.validate();
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  const json body = {{"model", request.params.model},
                     {"messages", std::move(messages)},
                     {"temperature", request.params.temperature},
                     {"top_p", request.params.top_p},
                     {"max_tokens", request.params.max_tokens}};
  const std::string raw = post(config_.chat_path, body.dump());
  try {
    const json j = json::parse(raw);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string() : content.get<std::string>();
  } catch (const json::exception& e) {
    throw ProviderError(200, std::string("unexpected chat response: ") + e.what());
  }
}

std::vector<EmbeddingVector> LiveBackend::embed(const EmbedRequest& request) {
  const json body = {{"model", request.model}, {"input", request.texts}};
  const std::string raw = post(config_.embeddings_path, body.dump());
  try {
    const json j = json::parse(raw);
    std::vector<EmbeddingVector> out(request.texts.size());
    for (const auto& item : j.at("data")) {
      const auto index = item.at("index").get<std::size_t>();
      if (index >= out.size()) throw ProviderError(200, "embedding index out of range");
      out[index] = embeddings_from_json(json::array({item.at("embedding")}))[0];
    }
    return out;
  } catch (const json::exception& e) {
    throw ProviderError(200, std::string("unexpected embedding response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner,
                                   std::shared_ptr<Cassette> cassette)
    : inner_(std::move(inner)), cassette_(std::move(cassette)) {}

std::string RecordingBackend::chat(const ChatRequest& request) {
  std::string content = inner_->chat(request);
  cassette_->append({fingerprint(request), canonical_json(request),
                     json{{"content", content}}.dump()});
  return content;
}

std::vector<EmbeddingVector> RecordingBackend::embed(const EmbedRequest& request) {
  auto vectors = inner_->embed(request);
  cassette_->append({fingerprint(request), canonical_json(request),
                     json{{"embeddings", embeddings_to_json(vectors)}}.dump()});
  return vectors;
}

ReplayBackend::ReplayBackend(std::shared_ptr<const Cassette> cassette)
    : cassette_(std::move(cassette)) {}

std::string ReplayBackend::chat(const ChatRequest& request) {
  request.validate();
  const std::string fp = fingerprint(request);
  auto hit = cassette_->lookup(fp);
  if (!hit) throw Error(Errc::CassetteMiss, fp);
  return json::parse(*hit).at("content").get<std::string>();
}

std::vector<EmbeddingVector> ReplayBackend::embed(const EmbedRequest& request) {
  const std::string fp = fingerprint(request);
  auto hit = cassette_->lookup(fp);
  if (!hit) throw Error(Errc::CassetteMiss, fp);
  return embeddings_from_json(json::parse(*hit).at("embeddings"));
}

// ---------------------------------------------------------------------------

TokenBucket::TokenBucket(double rate_per_second, double burst)
    : rate_(rate_per_second),
      burst_(std::max(1.0, burst)),
      tokens_(std::max(1.0, burst)),
      last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
  if (rate_ <= 0.0) return;
  std::unique_lock lock(mutex_);
  while (true) {
    const auto now = std::chrono::steady_clock::now();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const double wait = (1.0 - tokens_) / rate_;
    // sleeping under the lock serializes bursts
    std::this_thread::sleep_for(std::chrono::duration<double>(wait));
  }
}

// ---------------------------------------------------------------------------

LlmGateway::LlmGateway(std::shared_ptr<Backend> backend, GatewayOptions options)
    : backend_(std::move(backend)),
      options_(std::move(options)),
      limiter_(options_.rate_per_second, options_.burst) {
  if (!backend_) throw Error(Errc::InvalidArgument, "gateway needs a backend");
}

std::string LlmGateway::chat(const ChatRequest& request) {
  request.validate();
  limiter_.acquire();
  {
    std::lock_guard lock(log_mutex_);
    log_.push_back({"chat", fingerprint(request)});
  }
  return backend_->chat(request);
}

std::string LlmGateway::chat(std::vector<ChatMessage> messages) {
  return chat(ChatRequest{std::move(messages), options_.defaults});
}

std::string LlmGateway::complete(std::string prompt) {
  return chat({ChatMessage{Role::User, std::move(prompt)}});
}

std::vector<EmbeddingVector> LlmGateway::embed(
    const std::vector<std::string>& texts) {
  if (texts.empty()) return {};
  EmbedRequest request{texts, options_.embedding_model};
  limiter_.acquire();
  {
    std::lock_guard lock(log_mutex_);
    log_.push_back({"embed", fingerprint(request)});
  }
  auto vectors = backend_->embed(request);
  if (vectors.size() != texts.size()) {
    throw ProviderError(200, "embedding count mismatch");
  }
  for (const auto& v : vectors) {
    if (v.dim() == 0 || v.dim() != vectors.front().dim()) {
      throw ProviderError(200, "embedding dimensions disagree");
    }
  }
  return vectors;
}

EmbeddingVector LlmGateway::embed_one(const std::string& text) {
  return embed({text}).front();
}

std::size_t LlmGateway::chat_calls() const {
  std::lock_guard lock(log_mutex_);
  return static_cast<std::size_t>(std::count_if(
      log_.begin(), log_.end(), [](const auto& c) { return c.kind == "chat"; }));
}

std::size_t LlmGateway::embed_calls() const {
  std::lock_guard lock(log_mutex_);
  return log_.size() - static_cast<std::size_t>(std::count_if(
                           log_.begin(), log_.end(),
                           [](const auto& c) { return c.kind == "chat"; }));
}

std::vector<CallRecord> LlmGateway::call_log() const {
  std::lock_guard lock(log_mutex_);
  return log_;
}

std::optional<std::string> LlmGateway::last_chat_fingerprint() const {
  std::lock_guard lock(log_mutex_);
  for (auto it = log_.rbegin(); it != log_.rend(); ++it) {
    if (it->kind == "chat") return it->fingerprint;
  }
  return std::nullopt;
}

}  // namespace verbatim
