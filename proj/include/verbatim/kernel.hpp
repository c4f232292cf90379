#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace verbatim {

// --- wire protocol ---------------------------------------------------------
//
// One JSON object per line over the kernel's stdin/stdout:
//   {"kind": "init"|"execute"|"result"|"reset"|"shutdown",
//    "session_id": str, "cell_id": str?, "code": str?, "payload": object?}
// Every request is answered by exactly one "result" carrying the request's
// cell_id (execute) or none (init/reset/shutdown).

enum class MessageKind { Init, Execute, Result, Reset, Shutdown };

std::string_view to_string(MessageKind kind);
MessageKind parse_message_kind(std::string_view name);

struct KernelMessage {
  MessageKind kind = MessageKind::Result;
  std::string session_id;
  std::optional<std::string> cell_id;
  std::optional<std::string> code;
  nlohmann::json payload;  // null when absent

  [[nodiscard]] std::string to_line() const;  // no trailing newline
  // Throws ProtocolError.
  static KernelMessage from_line(std::string_view line);
};

enum class ArtifactKind { Table, Image, File };
std::string_view to_string(ArtifactKind kind);
ArtifactKind parse_artifact_kind(std::string_view name);

struct Artifact {
  ArtifactKind kind = ArtifactKind::File;
  std::string path;  // workspace-relative
  std::string url;   // filled in by the service
  std::string caption;

  friend bool operator==(const Artifact&, const Artifact&) = default;
};

enum class ExecStatus { Ok, Error, Violation, Timeout };
std::string_view to_string(ExecStatus status);
ExecStatus parse_exec_status(std::string_view name);

struct ExecutionResult {
  ExecStatus status = ExecStatus::Ok;
  std::string logs;
  std::string output;
  std::vector<Artifact> artifacts;
  std::optional<std::string> exception;  // present iff status == Error

  [[nodiscard]] nlohmann::json to_json() const;
  static ExecutionResult from_json(const nlohmann::json& j);
  // Exception text, or the log tail for violations and timeouts.
  [[nodiscard]] std::string failure_text() const;
};

struct KernelInit {
  std::filesystem::path snapshot;        // CSV or JSONL export
  std::optional<std::filesystem::path> manifest;
  std::filesystem::path workspace;
  std::chrono::milliseconds timeout{30000};
  std::uintmax_t workspace_quota = 256ull * 1024 * 1024;

  [[nodiscard]] nlohmann::json to_json() const;
  static KernelInit from_json(const nlohmann::json& j);
};

// --- executor interface ----------------------------------------------------

// A per-session execution kernel. Calls are serialized by the caller.
class Kernel {
 public:
  virtual ~Kernel() = default;
  // Throws SnapshotMissing or PluginLoadError.
  virtual void init(const KernelInit& init) = 0;
  virtual ExecutionResult execute(const std::string& cell_id, const std::string& code) = 0;
  // Parses without executing; status error with a SyntaxError exception on
  // failure.
  virtual ExecutionResult dry_parse(const std::string& cell_id, const std::string& code) = 0;
  // Clears interpreter state, keeps workspace files.
  virtual void reset() = 0;
  virtual void shutdown() = 0;
  [[nodiscard]] virtual const std::string& session_id() const = 0;
};

using KernelFactory = std::function<std::unique_ptr<Kernel>(const std::string& session_id)>;

// Message-level kernel engine: a small interpreter for a Python-compatible
// subset used for tests and offline replay. Handles many sessions.
class StubKernelEngine {
 public:
  StubKernelEngine();
  ~StubKernelEngine();
  StubKernelEngine(const StubKernelEngine&) = delete;
  StubKernelEngine& operator=(const StubKernelEngine&) = delete;

  KernelMessage handle(const KernelMessage& request);
  // True once a shutdown message has been handled for every session it
  // initialized (used by the stdio front end).
  [[nodiscard]] bool finished() const { return finished_; }

 private:
  struct Session;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  bool finished_ = false;
};

// Syntax check only, independent of any session.
std::optional<std::string> stub_syntax_error(std::string_view code);

// In-process kernel; messages still round-trip through their wire encoding.
class InProcessKernel : public Kernel {
 public:
  explicit InProcessKernel(std::string session_id);

  void init(const KernelInit& init) override;
  ExecutionResult execute(const std::string& cell_id, const std::string& code) override;
  ExecutionResult dry_parse(const std::string& cell_id, const std::string& code) override;
  void reset() override;
  void shutdown() override;
  [[nodiscard]] const std::string& session_id() const override { return session_id_; }

 private:
  KernelMessage roundtrip(const KernelMessage& request);

  std::string session_id_;
  StubKernelEngine engine_;
};

// Spawns a kernel executable and speaks the wire protocol over its standard
// streams. The client kills the child if a reply does not arrive within the
// cell timeout plus `grace`.
class ProcessKernel : public Kernel {
 public:
  ProcessKernel(std::string session_id, std::vector<std::string> argv,
                std::chrono::milliseconds grace = std::chrono::seconds(5));
  ~ProcessKernel() override;

  void init(const KernelInit& init) override;
  ExecutionResult execute(const std::string& cell_id, const std::string& code) override;
  ExecutionResult dry_parse(const std::string& cell_id, const std::string& code) override;
  void reset() override;
  void shutdown() override;
  [[nodiscard]] const std::string& session_id() const override { return session_id_; }

 private:
  void start();
  void stop();
  KernelMessage roundtrip(const KernelMessage& request,
                          std::chrono::milliseconds deadline);

  std::string session_id_;
  std::vector<std::string> argv_;
  std::chrono::milliseconds grace_;
  std::chrono::milliseconds timeout_{30000};
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

// Interprets a "result" reply to init/reset; throws the carried error.
void expect_ready(const KernelMessage& reply);

}  // namespace verbatim
