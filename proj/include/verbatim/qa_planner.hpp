#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "verbatim/code_generator.hpp"
#include "verbatim/kernel.hpp"
#include "verbatim/llm_gateway.hpp"

namespace verbatim {

enum class StepStatus { Pending, Dispatched, Done, Failed };
std::string_view to_string(StepStatus status);

struct SubTask {
  std::string description;
  std::vector<std::size_t> depends_on;  // earlier steps only
  bool mergeable = false;
  StepStatus status = StepStatus::Pending;
  std::optional<ExecutionResult> result;
  std::string code;
};

struct Plan {
  std::vector<SubTask> steps;
  int revision = 0;
};

// Parses the fenced plan block: a JSON list of {description, depends_on,
// mergeable} or {"steps": [...]}. Throws PlanParseError.
Plan parse_plan(std::string_view completion);

enum class ResponseStatus { Answered, ClarificationNeeded, Failed };
std::string_view to_string(ResponseStatus status);

struct AgentResponse {
  std::string text;
  std::vector<Artifact> artifacts;
  std::optional<std::string> code_shown;
  ResponseStatus status = ResponseStatus::Answered;

  [[nodiscard]] nlohmann::json to_json() const;
};

struct Turn {
  std::string question;
  AgentResponse response;
};

struct SessionState {
  std::vector<Turn> history;  // append-only
  std::optional<Plan> plan;
  std::filesystem::path workspace;
};

enum class Verdict { Continue, Replan, Clarify, Finish };

struct JudgeDecision {
  Verdict verdict = Verdict::Finish;
  std::string detail;  // replan reason or clarification question
};

// First meaningful line of a judge completion: "finish"/"satisfied",
// "replan: why"/"unsatisfied", "clarify: question", "continue".
JudgeDecision parse_judge(std::string_view completion);

struct PlannerOptions {
  int max_replans = 3;
  bool reflection = true;
  std::size_t history_turns = 5;
};

// Prompt wording shared with the config assets.
struct PlannerPrompts {
  std::string planning;  // instructions and demos
  std::string judging;
  std::string summarizing;

  static PlannerPrompts defaults();
  // YAML with keys planning / judging / summarizing; missing keys keep the
  // defaults.
  static PlannerPrompts load(const std::filesystem::path& path);
};

struct TurnStats {
  std::size_t plan_calls = 0;
  std::size_t reflect_calls = 0;
  std::size_t codegen_calls = 0;
  std::size_t judge_calls = 0;
  std::size_t summarize_calls = 0;
  std::size_t replans = 0;
  std::vector<int> attempts_per_query;
};

class QaPlanner {
 public:
  QaPlanner(LlmGateway& gateway, CodeGenerator& codegen, Kernel& kernel,
            std::string data_summary, PlannerOptions options = {},
            PlannerPrompts prompts = PlannerPrompts::defaults());

  // One re-ask, then PlanParseError.
  Plan plan(const std::string& query, const std::vector<Turn>& history,
            const std::optional<std::string>& failure_note = std::nullopt);
  // Fuses step pairs (i, i+1) where i+1 depends only on i and the reflection
  // completion marks both mergeable. Identity when no such pair exists (no
  // gateway call) or the completion is unusable.
  Plan reflect_merge(const Plan& plan);
  // Throws DependencyUnmet.
  CGQuery dispatch(const Plan& plan, std::size_t step, const std::string& query_id) const;
  JudgeDecision judge(const Plan& plan, const std::string& query);
  AgentResponse summarize(const Plan& plan, const std::string& query,
                          const std::vector<Turn>& history);

  // Full turn: plan, reflect, execute steps with repair, replan on failure,
  // judge, summarize. Appends the turn to `session.history`.
  AgentResponse ask(SessionState& session, const std::string& question);

  [[nodiscard]] const TurnStats& last_stats() const { return stats_; }

 private:
  std::string render_history(const std::vector<Turn>& history) const;
  AgentResponse run_turn(SessionState& session, const std::string& question);

  LlmGateway& gateway_;
  CodeGenerator& codegen_;
  Kernel& kernel_;
  std::string data_summary_;
  PlannerOptions options_;
  PlannerPrompts prompts_;
  TurnStats stats_;
};

// Fuses (i, i+1) pairs left to right without overlap; dependencies are
// renumbered. Exposed for property tests.
Plan merge_steps(const Plan& plan, const std::vector<std::size_t>& mergeable);

// True when some step i+1 depends on exactly {i}.
bool has_chain(const Plan& plan);

}  // namespace verbatim
