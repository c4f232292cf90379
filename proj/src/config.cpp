#include "verbatim/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <sstream>

#include "verbatim/error.hpp"

namespace verbatim {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p(value);
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out) {
  if (node && node[key]) out = node[key].as<T>();
}

void read_path(const YAML::Node& node, const char* key, const std::filesystem::path& base,
               std::filesystem::path& out) {
  if (node && node[key]) out = resolve(base, node[key].as<std::string>());
}

}  // namespace

BackendMode parse_backend_mode(std::string_view name) {
  if (name == "live") return BackendMode::Live;
  if (name == "record") return BackendMode::Record;
  if (name == "replay") return BackendMode::Replay;
  throw Error(Errc::InvalidArgument, "unknown gateway backend '" + std::string(name) +
                                         "' (expected live, record or replay)");
}

ServiceConfig ServiceConfig::parse(const std::string& yaml_text,
                                   const std::filesystem::path& base_dir) {
  ServiceConfig c;
  try {
    const YAML::Node doc = YAML::Load(yaml_text);
    if (doc.IsNull()) return c;
    if (!doc.IsMap()) throw Error(Errc::InvalidArgument, "config must be a mapping");
    read_path(doc, "data_dir", base_dir, c.data_dir);
    if (c.data_dir.is_relative() && !base_dir.empty() && !doc["data_dir"]) {
      c.data_dir = base_dir / c.data_dir;
    }

    if (const auto g = doc["gateway"]) {
      if (g["backend"]) c.gateway.mode = parse_backend_mode(g["backend"].as<std::string>());
      read_path(g, "cassette", base_dir, c.gateway.cassette);
      read(g, "base_url", c.gateway.base_url);
      read(g, "api_key_env", c.gateway.api_key_env);
      read(g, "chat_model", c.gateway.chat_model);
      read(g, "embedding_model", c.gateway.embedding_model);
      read(g, "temperature", c.gateway.temperature);
      read(g, "top_p", c.gateway.top_p);
      read(g, "max_tokens", c.gateway.max_tokens);
      read(g, "rate_per_second", c.gateway.rate_per_second);
    }
    if (const auto cl = doc["classification"]) {
      read_path(cl, "dimensions", base_dir, c.classification.dimensions);
      read(cl, "k", c.classification.k);
      read(cl, "seed", c.classification.seed);
      read(cl, "fold_top_n", c.classification.fold_top_n);
    }
    if (const auto t = doc["topics"]) read_path(t, "config", base_dir, c.topics.config);
    if (const auto p = doc["planner"]) {
      read(p, "max_replans", c.planner.max_replans);
      read(p, "reflection", c.planner.reflection);
      read(p, "history_turns", c.planner.history_turns);
      read_path(p, "prompts", base_dir, c.planner.prompts);
    }
    if (const auto k = doc["kernel"]) {
      if (k["mode"]) {
        const auto mode = k["mode"].as<std::string>();
        if (mode == "in_process") {
          c.kernel.mode = KernelMode::InProcess;
        } else if (mode == "process") {
          c.kernel.mode = KernelMode::Process;
        } else {
          throw Error(Errc::InvalidArgument, "kernel.mode must be in_process or process");
        }
      }
      if (k["command"]) c.kernel.command = k["command"].as<std::vector<std::string>>();
      if (k["timeout_ms"]) c.kernel.timeout = std::chrono::milliseconds(k["timeout_ms"].as<long>());
      if (k["workspace_quota_mb"]) {
        c.kernel.workspace_quota = k["workspace_quota_mb"].as<std::uintmax_t>() * 1024 * 1024;
      }
      read_path(k, "plugins", base_dir, c.kernel.plugins);
    }
    if (const auto s = doc["server"]) {
      read(s, "host", c.server.host);
      read(s, "port", c.server.port);
      read(s, "workers", c.server.workers);
      read(s, "token", c.server.token);
    }
  } catch (const YAML::Exception& e) {
    throw Error(Errc::InvalidArgument, std::string("config: ") + e.what());
  }
  if (c.classification.k > 1000) throw Error(Errc::InvalidArgument, "classification.k is too large");
  if (c.planner.max_replans < 0) throw Error(Errc::InvalidArgument, "planner.max_replans must be >= 0");
  if (c.kernel.command.empty()) throw Error(Errc::InvalidArgument, "kernel.command is empty");
  if (c.kernel.timeout.count() <= 0) throw Error(Errc::InvalidArgument, "kernel.timeout_ms must be > 0");
  if (c.server.workers == 0) throw Error(Errc::InvalidArgument, "server.workers must be > 0");
  return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path());
}

}  // namespace verbatim
