#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace verbatim {

enum class BackendMode { Live, Record, Replay };

struct GatewaySettings {
  BackendMode mode = BackendMode::Replay;
  std::filesystem::path cassette;
  std::string base_url = "https://api.openai.com";
  std::string api_key_env = "OPENAI_API_KEY";
  std::string chat_model = "gpt-4";
  std::string embedding_model = "all-MiniLM-L6-v2";
  double temperature = 0.0;
  double top_p = 0.0;
  int max_tokens = 1024;
  double rate_per_second = 0.0;
};

struct ClassificationSettings {
  std::filesystem::path dimensions;  // dimensions JSON; empty: none declared
  std::size_t k = 10;
  std::uint64_t seed = 7;
  std::size_t fold_top_n = 10;
};

struct TopicSettings {
  std::filesystem::path config;  // topic config JSON
};

struct PlannerSettings {
  int max_replans = 3;
  bool reflection = true;
  std::size_t history_turns = 5;
  std::filesystem::path prompts;  // YAML; empty: built-in wording
};

enum class KernelMode { InProcess, Process };

struct KernelSettings {
  KernelMode mode = KernelMode::InProcess;
  std::vector<std::string> command = {"verbatim-stub-kernel"};
  std::chrono::milliseconds timeout{30000};
  std::uintmax_t workspace_quota = 256ull * 1024 * 1024;
  std::filesystem::path plugins;  // manifest; empty: built-in plugins
};

struct ServerSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t workers = 2;  // job pool size
  std::string token;        // shared bearer token; empty: no auth
};

struct ServiceConfig {
  std::filesystem::path data_dir = "verbatim-data";
  GatewaySettings gateway;
  ClassificationSettings classification;
  TopicSettings topics;
  PlannerSettings planner;
  KernelSettings kernel;
  ServerSettings server;

  // Relative paths in the file resolve against the file's directory.
  // Throws InvalidArgument on malformed documents.
  static ServiceConfig load(const std::filesystem::path& path);
  static ServiceConfig parse(const std::string& yaml_text,
                             const std::filesystem::path& base_dir = {});
};

BackendMode parse_backend_mode(std::string_view name);

}  // namespace verbatim
