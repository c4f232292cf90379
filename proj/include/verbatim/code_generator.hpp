#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "verbatim/kernel.hpp"
#include "verbatim/llm_gateway.hpp"
#include "verbatim/plugin.hpp"
#include "verbatim/sandbox_policy.hpp"

namespace verbatim {

inline constexpr int kMaxCodeAttempts = 3;

struct CGQuery {
  std::string id;
  std::string task_description;
  std::string context;          // digest of prior results
  std::string data_handle = "df";
  std::string constraints;      // output-artifact expectations
};

struct CodeCell {
  std::string source;
  int attempt = 1;
  std::string query_id;
  std::string fingerprint;  // gateway fingerprint of the producing call
};

class PluginRegistry {
 public:
  // Throws DuplicatePlugin.
  void register_plugin(PluginDescriptor descriptor);
  [[nodiscard]] const std::vector<PluginDescriptor>& catalog() const { return plugins_; }
  [[nodiscard]] const PluginDescriptor* find(std::string_view name) const;
  void write_manifest(const std::filesystem::path& path) const;

  static PluginRegistry with_builtins();

 private:
  std::vector<PluginDescriptor> plugins_;
};

std::string catalog_prompt(const std::vector<PluginDescriptor>& catalog);

struct Verification {
  std::vector<PolicyViolation> violations;
  [[nodiscard]] bool ok() const { return violations.empty(); }
  [[nodiscard]] std::string describe() const;
};

// One executed (or rejected) attempt.
struct CellRun {
  CodeCell cell;
  Verification verification;
  std::optional<ExecutionResult> result;  // absent when verification failed
};

struct CGOutcome {
  bool success = false;
  std::vector<CellRun> runs;
  std::string failure;  // last failure text when !success
  std::size_t gateway_calls = 0;

  [[nodiscard]] const CellRun& last() const { return runs.back(); }
};

class CodeGenerator {
 public:
  CodeGenerator(LlmGateway& gateway, std::vector<PluginDescriptor> catalog);

  // One fenced block (multiple fences are concatenated); attempt 1. Re-asks
  // once, then throws NoCodeBlock.
  CodeCell generate(const CGQuery& query);
  // Static denylist scan plus a dry parse, through `kernel` when given.
  Verification verify(const CodeCell& cell, Kernel* kernel = nullptr) const;
  // Throws AttemptsExhausted when cell.attempt is already the maximum, and
  // NoCodeBlock when the completion has no fence (after a re-ask if
  // `allow_reask`).
  CodeCell repair(const CGQuery& query, const CodeCell& cell, const std::string& failure,
                  bool allow_reask = true);

  // Generate, verify, execute and repair until success or three attempts.
  // Cell ids are `<cell_prefix>-a<attempt>`.
  CGOutcome solve(const CGQuery& query, Kernel& kernel, const std::string& cell_prefix);

  [[nodiscard]] std::vector<ChatMessage> generate_messages(const CGQuery& query) const;
  [[nodiscard]] std::vector<ChatMessage> repair_messages(const CGQuery& query,
                                                         const CodeCell& cell,
                                                         const std::string& failure) const;
  [[nodiscard]] std::size_t gateway_calls() const { return calls_; }

 private:
  std::optional<std::string> ask(std::vector<ChatMessage> messages, bool allow_reask,
                                 std::string& fingerprint, bool& reasked);

  LlmGateway& gateway_;
  std::vector<PluginDescriptor> catalog_;
  std::size_t calls_ = 0;
};

// Code of a completion: the fenced blocks joined by newlines.
std::optional<std::string> extract_code(std::string_view completion);

}  // namespace verbatim
