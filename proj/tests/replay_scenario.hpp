#pragma once

// The three recorded sessions (analysis, figure, suggestion) plus one
// classification evaluation, shared by the fixture generator and the replay
// tests.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "fixture_model.hpp"
#include "json.hpp"
#include "verbatim/service.hpp"

namespace vt {

inline verbatim::ServiceConfig replay_config(const std::filesystem::path& fixtures,
                                             const std::filesystem::path& data_dir) {
  verbatim::ServiceConfig c;
  c.data_dir = data_dir;
  c.gateway.mode = verbatim::BackendMode::Replay;
  c.gateway.cassette = fixtures / "cassette.jsonl";
  c.gateway.base_url = "http://127.0.0.1:9";  // never contacted
  c.classification.dimensions = fixtures / "dimensions.json";
  c.kernel.timeout = std::chrono::milliseconds(5000);
  return c;
}

inline nlohmann::json response_listing(const std::string& question, const verbatim::AgentResponse& r) {
  nlohmann::json arts = nlohmann::json::array();
  for (const auto& a : r.artifacts) {
    arts.push_back({{"kind", verbatim::to_string(a.kind)}, {"path", a.path}, {"caption", a.caption}});
  }
  return {{"question", question},
          {"status", verbatim::to_string(r.status)},
          {"text", r.text},
          {"code_shown", r.code_shown ? nlohmann::json(*r.code_shown) : nlohmann::json(nullptr)},
          {"artifacts", arts}};
}

// Ingests the corpus, runs each question in its own session and the
// evaluation; returns the listing compared against the golden file.
inline nlohmann::json run_replay_scenario(verbatim::Service& service, const std::filesystem::path& fixtures) {
  std::ifstream in(fixtures / "feedback.jsonl", std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  service.ingest(ss.str(), verbatim::RecordFormat::Jsonl);
  nlohmann::json sessions = nlohmann::json::array();
  for (const char* q : {kAnalysisQuestion, kFigureQuestion, kSuggestionQuestion}) {
    const auto handle = service.create_session();
    const auto response = service.ask(handle.id, q);
    sessions.push_back(response_listing(q, response));
    service.close_session(handle.id);
  }
  const auto job = service.wait_job(service.start_eval_classify("sentiment", 10, 7));
  return {{"sessions", sessions}, {"eval_classify", job.result}, {"eval_state", verbatim::to_string(job.state)}};
}

}  // namespace vt
