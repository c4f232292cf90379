#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "verbatim/code_generator.hpp"
#include "verbatim/config.hpp"
#include "verbatim/icl_classifier.hpp"
#include "verbatim/jobs.hpp"
#include "verbatim/kernel.hpp"
#include "verbatim/llm_gateway.hpp"
#include "verbatim/qa_planner.hpp"
#include "verbatim/record_store.hpp"
#include "verbatim/topic_modeler.hpp"

namespace verbatim {

enum class SessionStatus { Active, Closed };

struct SessionHandle {
  std::string id;
  Timestamp created_at{};
  std::string snapshot_ref;  // sha256 prefix of the exported snapshot
  SessionStatus status = SessionStatus::Active;

  [[nodiscard]] nlohmann::json to_json() const;
};

struct ArtifactFile {
  std::filesystem::path path;
  std::string content_type;
};

std::string content_type_for(const std::filesystem::path& path);

// Backend chosen by the gateway settings: live, live with recording, or
// cassette replay.
std::shared_ptr<Backend> make_backend(const GatewaySettings& settings);

// Internal API shared by the HTTP server and the CLI. Pipeline state
// (records, round-1 topics, review outcome) persists under the data
// directory; chat sessions live in memory.
class Service {
 public:
  // `backend` and `kernels` override the configured ones (tests, replay
  // tooling).
  explicit Service(ServiceConfig config, std::shared_ptr<Backend> backend = nullptr,
                   KernelFactory kernels = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  [[nodiscard]] const ServiceConfig& config() const { return config_; }
  LlmGateway& gateway() { return *gateway_; }
  RecordStore& store() { return store_; }

  IngestReport ingest(std::string_view data, RecordFormat format);

  // Pipeline jobs; each returns a job id.
  std::string start_classification(const std::string& dimension, std::optional<std::size_t> k);
  std::string start_round_one();
  std::string start_round_two();
  std::string start_eval_classify(const std::string& dimension, std::optional<std::size_t> k,
                                  std::optional<std::uint64_t> seed);
  std::string start_eval_topics();

  [[nodiscard]] JobInfo job(const std::string& id) const;
  JobInfo cancel_job(const std::string& id);
  JobInfo wait_job(const std::string& id);

  // Round-1 topics awaiting review. InvalidArgument before round 1.
  [[nodiscard]] nlohmann::json candidates() const;
  // Applies the decisions, clusters the accepted topics and stores the
  // refined configuration. Throws IncompleteReview.
  nlohmann::json review(const ReviewDecisions& decisions);

  SessionHandle create_session();
  AgentResponse ask(const std::string& session_id, const std::string& question);
  [[nodiscard]] std::vector<Turn> history(const std::string& session_id) const;
  void close_session(const std::string& session_id);
  [[nodiscard]] SessionHandle session(const std::string& session_id) const;

  // Throws UnknownId for unknown or revoked tokens.
  [[nodiscard]] ArtifactFile artifact(const std::string& token) const;

  [[nodiscard]] std::string data_summary() const;
  [[nodiscard]] const std::vector<Dimension>& dimensions() const { return dimensions_; }
  [[nodiscard]] const std::vector<PluginDescriptor>& plugins() const { return plugins_; }

 private:
  struct Session;
  struct TopicState;

  std::shared_ptr<Session> find_session(const std::string& id) const;
  const Dimension& find_dimension(const std::string& name) const;
  TopicConfig base_topic_config() const;
  std::optional<TopicState> load_topic_state() const;
  void save_topic_state(const TopicState& state) const;
  std::unique_ptr<Kernel> make_kernel(const std::string& session_id) const;

  nlohmann::json run_classification(const std::string& dimension, std::size_t k,
                                    const RunControl& control);
  nlohmann::json run_round_one(const RunControl& control);
  nlohmann::json run_round_two(const RunControl& control);
  nlohmann::json run_eval_topics();

  ServiceConfig config_;
  std::shared_ptr<LlmGateway> gateway_;
  KernelFactory kernels_;
  RecordStore store_;
  std::vector<Dimension> dimensions_;
  std::vector<PluginDescriptor> plugins_;
  PlannerPrompts prompts_;

  std::mutex pipeline_mutex_;  // one pipeline stage at a time
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  struct TokenEntry {
    std::string session_id;
    std::filesystem::path path;
  };
  std::map<std::string, TokenEntry> tokens_;

  JobQueue jobs_;  // last: workers stop before the state they use
};

}  // namespace verbatim
