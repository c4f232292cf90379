#include <array>

#include "verbatim/error.hpp"
#include "verbatim/kernel.hpp"
#include "verbatim/text.hpp"

namespace verbatim {

using nlohmann::json;

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view name, const std::array<std::string_view, N>& names,
                std::string_view what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == name) return static_cast<Enum>(i);
  }
  throw Error(Errc::ProtocolError, "unknown " + std::string(what) + " '" + std::string(name) + "'");
}

constexpr std::array<std::string_view, 5> kKinds = {"init", "execute", "result", "reset",
                                                    "shutdown"};
constexpr std::array<std::string_view, 3> kArtifactKinds = {"table", "image", "file"};
constexpr std::array<std::string_view, 4> kStatuses = {"ok", "error", "violation", "timeout"};

}  // namespace

std::string_view to_string(MessageKind kind) { return kKinds[static_cast<std::size_t>(kind)]; }
MessageKind parse_message_kind(std::string_view name) {
  return parse_enum<MessageKind>(name, kKinds, "message kind");
}

std::string_view to_string(ArtifactKind kind) {
  return kArtifactKinds[static_cast<std::size_t>(kind)];
}
ArtifactKind parse_artifact_kind(std::string_view name) {
  return parse_enum<ArtifactKind>(name, kArtifactKinds, "artifact kind");
}

std::string_view to_string(ExecStatus status) {
  return kStatuses[static_cast<std::size_t>(status)];
}
ExecStatus parse_exec_status(std::string_view name) {
  return parse_enum<ExecStatus>(name, kStatuses, "status");
}

std::string KernelMessage::to_line() const {
  json j = {{"kind", to_string(kind)}, {"session_id", session_id}};
  if (cell_id) j["cell_id"] = *cell_id;
  if (code) j["code"] = *code;
  if (!payload.is_null()) j["payload"] = payload;
  return j.dump();
}

KernelMessage KernelMessage::from_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ProtocolError, std::string("malformed message: ") + e.what());
  }
  if (!j.is_object() || !j.contains("kind") || !j.contains("session_id") ||
      !j["kind"].is_string() || !j["session_id"].is_string()) {
    throw Error(Errc::ProtocolError, "message needs string kind and session_id");
  }
  KernelMessage m;
  m.kind = parse_message_kind(j["kind"].get<std::string>());
  m.session_id = j["session_id"].get<std::string>();
  if (j.contains("cell_id")) m.cell_id = j["cell_id"].get<std::string>();
  if (j.contains("code")) m.code = j["code"].get<std::string>();
  if (j.contains("payload")) m.payload = j["payload"];
  return m;
}

json ExecutionResult::to_json() const {
  json arts = json::array();
  for (const auto& a : artifacts) {
    json ja = {{"kind", to_string(a.kind)}, {"path", a.path}};
    if (!a.url.empty()) ja["url"] = a.url;
    if (!a.caption.empty()) ja["caption"] = a.caption;
    arts.push_back(ja);
  }
  json j = {{"status", to_string(status)},
            {"logs", logs},
            {"output", output},
            {"artifacts", arts}};
  j["exception"] = exception ? json(*exception) : json(nullptr);
  return j;
}

ExecutionResult ExecutionResult::from_json(const json& j) {
  ExecutionResult r;
  try {
    r.status = parse_exec_status(j.at("status").get<std::string>());
    r.logs = j.value("logs", std::string());
    r.output = j.value("output", std::string());
    for (const auto& a : j.value("artifacts", json::array())) {
      r.artifacts.push_back({parse_artifact_kind(a.at("kind").get<std::string>()),
                             a.at("path").get<std::string>(), a.value("url", std::string()),
                             a.value("caption", std::string())});
    }
    if (j.contains("exception") && j["exception"].is_string()) {
      r.exception = j["exception"].get<std::string>();
    }
  } catch (const json::exception& e) {
    throw Error(Errc::ProtocolError, std::string("malformed result: ") + e.what());
  }
  if ((r.status == ExecStatus::Error) != r.exception.has_value()) {
    throw Error(Errc::ProtocolError, "status error requires exactly an exception");
  }
  return r;
}

std::string ExecutionResult::failure_text() const {
  if (exception) return *exception;
  std::string tail = text::trim(logs);
  const auto nl = tail.rfind('\n');
  if (nl != std::string::npos) tail = tail.substr(nl + 1);
  return std::string(to_string(status)) + (tail.empty() ? "" : ": " + tail);
}

json KernelInit::to_json() const {
  json j = {{"snapshot", snapshot.string()},
            {"workspace", workspace.string()},
            {"timeout_ms", timeout.count()},
            {"workspace_quota", workspace_quota}};
  j["manifest"] = manifest ? json(manifest->string()) : json(nullptr);
  return j;
}

KernelInit KernelInit::from_json(const json& j) {
  KernelInit init;
  try {
    init.snapshot = j.at("snapshot").get<std::string>();
    init.workspace = j.at("workspace").get<std::string>();
    if (j.contains("manifest") && j["manifest"].is_string()) {
      init.manifest = j["manifest"].get<std::string>();
    }
    init.timeout = std::chrono::milliseconds(j.value("timeout_ms", 30000LL));
    init.workspace_quota = j.value("workspace_quota", init.workspace_quota);
  } catch (const json::exception& e) {
    throw Error(Errc::ProtocolError, std::string("malformed init payload: ") + e.what());
  }
  return init;
}

void expect_ready(const KernelMessage& reply) {
  if (reply.kind != MessageKind::Result) {
    throw Error(Errc::ProtocolError, "expected a result message");
  }
  const json& p = reply.payload;
  const std::string status = p.is_object() ? p.value("status", std::string()) : "";
  if (status == "ready" || status == "bye") return;
  const std::string name = p.is_object() ? p.value("error", std::string()) : "";
  const std::string message = p.is_object() ? p.value("message", std::string()) : "";
  if (auto code = errc_from_string(name)) throw Error(*code, message);
  throw Error(Errc::ProtocolError, "kernel error: " + name + " " + message);
}

// ---------------------------------------------------------------------------

InProcessKernel::InProcessKernel(std::string session_id)
    : session_id_(std::move(session_id)) {}

KernelMessage InProcessKernel::roundtrip(const KernelMessage& request) {
  const auto reply = engine_.handle(KernelMessage::from_line(request.to_line()));
  return KernelMessage::from_line(reply.to_line());
}

void InProcessKernel::init(const KernelInit& init) {
  KernelMessage m;
  m.kind = MessageKind::Init;
  m.session_id = session_id_;
  m.payload = init.to_json();
  expect_ready(roundtrip(m));
}

ExecutionResult InProcessKernel::execute(const std::string& cell_id, const std::string& code) {
  KernelMessage m{MessageKind::Execute, session_id_, cell_id, code, nullptr};
  const auto reply = roundtrip(m);
  if (reply.cell_id != cell_id) throw Error(Errc::ProtocolError, "cell id mismatch");
  if (reply.payload.contains("error")) expect_ready(reply);
  return ExecutionResult::from_json(reply.payload);
}

ExecutionResult InProcessKernel::dry_parse(const std::string& cell_id, const std::string& code) {
  KernelMessage m{MessageKind::Execute, session_id_, cell_id, code, json{{"parse_only", true}}};
  const auto reply = roundtrip(m);
  if (reply.cell_id != cell_id) throw Error(Errc::ProtocolError, "cell id mismatch");
  if (reply.payload.contains("error")) expect_ready(reply);
  return ExecutionResult::from_json(reply.payload);
}

void InProcessKernel::reset() {
  expect_ready(roundtrip({MessageKind::Reset, session_id_, std::nullopt, std::nullopt, nullptr}));
}

void InProcessKernel::shutdown() {
  expect_ready(
      roundtrip({MessageKind::Shutdown, session_id_, std::nullopt, std::nullopt, nullptr}));
}

}  // namespace verbatim
