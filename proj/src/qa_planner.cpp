#include "verbatim/qa_planner.hpp"

#include <spdlog/spdlog.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <set>

#include "verbatim/error.hpp"
#include "verbatim/text.hpp"

namespace verbatim {

using nlohmann::json;

namespace {

constexpr std::size_t kDigestChars = 600;

constexpr std::string_view kPlanReask =
    "That plan could not be read. Return the plan as a JSON list inside a ```json fenced "
    "block; each item needs description, depends_on and mergeable.";

std::string clip(std::string_view s, std::size_t n) {
  std::string t = text::trim(s);
  if (t.size() <= n) return t;
  return t.substr(0, n) + " ...";
}

std::string artifact_list(const std::vector<Artifact>& artifacts) {
  std::vector<std::string> parts;
  for (const auto& a : artifacts) parts.push_back(a.path + " (" + std::string(to_string(a.kind)) + ")");
  return text::join(parts, ", ");
}

std::string results_digest(const Plan& plan) {
  std::string out;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const SubTask& s = plan.steps[i];
    out += "Step " + std::to_string(i) + ": " + s.description + " [" +
           std::string(to_string(s.status)) + "]\n";
    if (s.result) {
      if (!s.result->output.empty()) out += "Output: " + clip(s.result->output, kDigestChars) + "\n";
      if (!text::trim(s.result->logs).empty()) {
        out += "Logs: " + clip(s.result->logs, kDigestChars) + "\n";
      }
      if (!s.result->artifacts.empty()) out += "Artifacts: " + artifact_list(s.result->artifacts) + "\n";
    }
  }
  return out;
}

json parse_fenced_json(std::string_view completion) {
  for (const auto& block : text::fenced_blocks(completion)) {
    try {
      return json::parse(block);
    } catch (const json::parse_error&) {
    }
  }
  // tolerate a bare JSON document
  const std::string body = text::trim(completion);
  try {
    return json::parse(body);
  } catch (const json::parse_error&) {
  }
  return json();
}

}  // namespace

std::string_view to_string(StepStatus status) {
  switch (status) {
    case StepStatus::Pending: return "pending";
    case StepStatus::Dispatched: return "dispatched";
    case StepStatus::Done: return "done";
    case StepStatus::Failed: return "failed";
  }
  return "pending";
}

std::string_view to_string(ResponseStatus status) {
  switch (status) {
    case ResponseStatus::Answered: return "answered";
    case ResponseStatus::ClarificationNeeded: return "clarification_needed";
    case ResponseStatus::Failed: return "failed";
  }
  return "failed";
}

json AgentResponse::to_json() const {
  json arts = json::array();
  for (const auto& a : artifacts) {
    json ja = {{"kind", to_string(a.kind)}, {"path", a.path}, {"url", a.url}};
    if (!a.caption.empty()) ja["caption"] = a.caption;
    arts.push_back(ja);
  }
  json j = {{"text", text}, {"artifacts", arts}, {"status", to_string(status)}};
  j["code_shown"] = code_shown ? json(*code_shown) : json(nullptr);
  return j;
}

Plan parse_plan(std::string_view completion) {
  json doc = parse_fenced_json(completion);
  if (doc.is_object() && doc.contains("steps")) doc = doc["steps"];
  if (!doc.is_array() || doc.empty()) {
    throw Error(Errc::PlanParseError, "expected a non-empty JSON list of steps");
  }
  Plan plan;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& item = doc[i];
    if (!item.is_object() || !item.contains("description") || !item["description"].is_string() ||
        text::trim(item["description"].get<std::string>()).empty()) {
      throw Error(Errc::PlanParseError, "step " + std::to_string(i) + " needs a description");
    }
    SubTask step;
    step.description = text::trim(item["description"].get<std::string>());
    if (item.contains("depends_on")) {
      if (!item["depends_on"].is_array()) {
        throw Error(Errc::PlanParseError, "step " + std::to_string(i) + ": depends_on must be a list");
      }
      std::set<std::size_t> deps;
      for (const auto& d : item["depends_on"]) {
        if (!d.is_number_integer() || d.get<long long>() < 0 ||
            d.get<long long>() >= static_cast<long long>(i)) {
          throw Error(Errc::PlanParseError,
                      "step " + std::to_string(i) + " may depend on earlier steps only");
        }
        deps.insert(d.get<std::size_t>());
      }
      step.depends_on.assign(deps.begin(), deps.end());
    }
    if (item.contains("mergeable")) {
      if (!item["mergeable"].is_boolean()) {
        throw Error(Errc::PlanParseError, "step " + std::to_string(i) + ": mergeable must be a boolean");
      }
      step.mergeable = item["mergeable"].get<bool>();
    }
    plan.steps.push_back(std::move(step));
  }
  return plan;
}

JudgeDecision parse_judge(std::string_view completion) {
  for (const auto& raw : text::split(completion, '\n')) {
    std::string line = text::trim(raw);
    if (line.empty()) continue;
    const std::string lower = text::to_lower(line);
    auto after_colon = [&line]() {
      const auto c = line.find(':');
      return c == std::string::npos ? std::string() : text::trim(line.substr(c + 1));
    };
    if (text::starts_with(lower, "clarify")) return {Verdict::Clarify, after_colon()};
    if (text::starts_with(lower, "replan") || text::contains(lower, "unsatisfied") ||
        text::contains(lower, "not satisfied")) {
      return {Verdict::Replan, after_colon()};
    }
    if (text::starts_with(lower, "continue")) return {Verdict::Continue, after_colon()};
    if (text::starts_with(lower, "finish") || text::contains(lower, "satisfied")) {
      return {Verdict::Finish, after_colon()};
    }
    break;
  }
  return {Verdict::Finish, "unrecognized verdict"};
}

PlannerPrompts PlannerPrompts::defaults() {
  PlannerPrompts p;
  p.planning =
      "You plan data analysis for questions about user feedback. Split the question into "
      "the fewest sub-tasks that can each be solved by one notebook cell. A sub-task may use "
      "results of earlier sub-tasks; mark it mergeable when it could run in the same cell as "
      "the step it depends on.\n"
      "Return the plan as a JSON list inside a ```json fenced block. Each item has "
      "description (string), depends_on (indices of earlier steps, counting from 0) and "
      "mergeable (true or false).\n\n"
      "Example question: Which topic appears most frequently?\n"
      "```json\n"
      "[{\"description\": \"Count how often each topic occurs, save the counts as a table and "
      "return the top topic\", \"depends_on\": [], \"mergeable\": false}]\n"
      "```\n\n"
      "Example question: Draw an issue river of the top 5 topics.\n"
      "```json\n"
      "[{\"description\": \"Draw an issue river of the 5 most frequent topics over time\", "
      "\"depends_on\": [], \"mergeable\": false}]\n"
      "```\n\n"
      "Example question: Which problems should we fix first for users who gave negative "
      "feedback?\n"
      "```json\n"
      "[{\"description\": \"Count topics among negative feedback and save the table\", "
      "\"depends_on\": [], \"mergeable\": true},\n"
      " {\"description\": \"Collect example texts for the three most frequent negative "
      "topics\", \"depends_on\": [0], \"mergeable\": true}]\n"
      "```";
  p.judging =
      "You check whether analysis results answer a user's question about feedback data. "
      "Reply with exactly one line:\n"
      "finish -- the results answer the question\n"
      "replan: <reason> -- the results do not answer it and another plan is needed\n"
      "clarify: <question> -- the question is ambiguous and the user has to say what they mean";
  p.summarizing =
      "Answer the user's question from the analysis results below. Be brief, quote the "
      "relevant numbers, and refer to attached tables or images by file name. Do not explain "
      "the code.";
  return p;
}

PlannerPrompts PlannerPrompts::load(const std::filesystem::path& path) {
  PlannerPrompts p = defaults();
  try {
    const YAML::Node doc = YAML::LoadFile(path.string());
    if (doc["planning"]) p.planning = doc["planning"].as<std::string>();
    if (doc["judging"]) p.judging = doc["judging"].as<std::string>();
    if (doc["summarizing"]) p.summarizing = doc["summarizing"].as<std::string>();
  } catch (const YAML::Exception& e) {
    throw Error(Errc::InvalidArgument, path.string() + ": " + e.what());
  }
  return p;
}

bool has_chain(const Plan& plan) {
  for (std::size_t i = 0; i + 1 < plan.steps.size(); ++i) {
    const auto& deps = plan.steps[i + 1].depends_on;
    if (deps.size() == 1 && deps.front() == i) return true;
  }
  return false;
}

Plan merge_steps(const Plan& plan, const std::vector<std::size_t>& mergeable) {
  const std::set<std::size_t> marked(mergeable.begin(), mergeable.end());
  const std::size_t n = plan.steps.size();
  std::vector<std::size_t> new_index(n);
  Plan out;
  out.revision = plan.revision;
  for (std::size_t i = 0; i < n; ++i) {
    const SubTask& s = plan.steps[i];
    const bool fuse = i + 1 < n && marked.count(i) > 0 && marked.count(i + 1) > 0 &&
                      plan.steps[i + 1].depends_on.size() == 1 &&
                      plan.steps[i + 1].depends_on.front() == i;
    SubTask merged = s;
    new_index[i] = out.steps.size();
    if (fuse) {
      merged.description = s.description + "; then " + plan.steps[i + 1].description;
      merged.mergeable = false;
      new_index[i + 1] = out.steps.size();
    }
    std::set<std::size_t> deps;
    for (auto d : s.depends_on) deps.insert(new_index[d]);
    merged.depends_on.assign(deps.begin(), deps.end());
    out.steps.push_back(std::move(merged));
    if (fuse) ++i;
  }
  return out;
}

// ---------------------------------------------------------------------------

QaPlanner::QaPlanner(LlmGateway& gateway, CodeGenerator& codegen, Kernel& kernel,
                     std::string data_summary, PlannerOptions options, PlannerPrompts prompts)
    : gateway_(gateway),
      codegen_(codegen),
      kernel_(kernel),
      data_summary_(std::move(data_summary)),
      options_(options),
      prompts_(std::move(prompts)) {}

std::string QaPlanner::render_history(const std::vector<Turn>& history) const {
  if (history.empty()) return "(none)";
  const std::size_t from =
      history.size() > options_.history_turns ? history.size() - options_.history_turns : 0;
  std::string out;
  for (std::size_t i = from; i < history.size(); ++i) {
    out += "User: " + history[i].question + "\nAssistant: " +
           clip(history[i].response.text, kDigestChars) + "\n";
  }
  return text::trim(out);
}

Plan QaPlanner::plan(const std::string& query, const std::vector<Turn>& history,
                     const std::optional<std::string>& failure_note) {
  std::string prompt = prompts_.planning + "\n\nData:\n" + data_summary_ +
                       "\n\nConversation so far:\n" + render_history(history) + "\n\n";
  if (failure_note) prompt += "Previous attempt failed: " + *failure_note + "\nMake a revised plan.\n\n";
  prompt += "Question: " + query + "\nPlan:";
  std::vector<ChatMessage> messages = {{Role::User, prompt}};
  std::string completion = gateway_.chat(messages);
  ++stats_.plan_calls;
  try {
    return parse_plan(completion);
  } catch (const Error& first) {
    spdlog::info("plan unreadable ({}), asking again", first.detail());
  }
  messages.push_back({Role::Assistant, completion});
  messages.push_back({Role::User, std::string(kPlanReask)});
  completion = gateway_.chat(messages);
  ++stats_.plan_calls;
  return parse_plan(completion);
}

Plan QaPlanner::reflect_merge(const Plan& plan) {
  if (!options_.reflection || !has_chain(plan)) return plan;
  std::string prompt =
      "Review this analysis plan. Steps that depend only on the step right before them can "
      "be done in the same notebook cell.\n";
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const auto& s = plan.steps[i];
    std::vector<std::string> deps;
    for (auto d : s.depends_on) deps.push_back(std::to_string(d));
    prompt += std::to_string(i) + ". " + s.description + " (depends on: " +
              (deps.empty() ? "-" : text::join(deps, ", ")) +
              (s.mergeable ? "; proposed mergeable" : "") + ")\n";
  }
  prompt +=
      "List the indices of the steps that should be merged with their neighbour as "
      "```json\n{\"mergeable\": [...]}\n```";
  std::string completion;
  try {
    completion = gateway_.complete(prompt);
    ++stats_.reflect_calls;
  } catch (const Error& e) {
    spdlog::warn("reflection failed: {}", e.what());
    return plan;
  }
  const json doc = parse_fenced_json(completion);
  if (!doc.is_object() || !doc.contains("mergeable") || !doc["mergeable"].is_array()) return plan;
  std::vector<std::size_t> marked;
  for (const auto& v : doc["mergeable"]) {
    if (v.is_number_integer() && v.get<long long>() >= 0 &&
        v.get<long long>() < static_cast<long long>(plan.steps.size())) {
      marked.push_back(v.get<std::size_t>());
    }
  }
  return merge_steps(plan, marked);
}

CGQuery QaPlanner::dispatch(const Plan& plan, std::size_t step, const std::string& query_id) const {
  if (step >= plan.steps.size()) throw Error(Errc::InvalidArgument, "no step " + std::to_string(step));
  const SubTask& s = plan.steps[step];
  std::string context;
  for (auto d : s.depends_on) {
    const SubTask& dep = plan.steps[d];
    if (dep.status != StepStatus::Done) {
      throw Error(Errc::DependencyUnmet,
                  "step " + std::to_string(step) + " needs step " + std::to_string(d));
    }
    context += "Step " + std::to_string(d) + " (" + dep.description + ")";
    if (dep.result && !dep.result->output.empty()) {
      context += " returned: " + clip(dep.result->output, kDigestChars);
    }
    if (dep.result && !dep.result->artifacts.empty()) {
      context += "; saved " + artifact_list(dep.result->artifacts);
    }
    context += "\n";
  }
  CGQuery q;
  q.id = query_id;
  q.task_description = s.description;
  q.context = text::trim(context);
  q.data_handle = "df";
  q.constraints = "tables saved with save_table; images come from plugins";
  return q;
}

JudgeDecision QaPlanner::judge(const Plan& plan, const std::string& query) {
  const std::string prompt = prompts_.judging + "\n\nQuestion: " + query + "\n\nResults:\n" +
                             results_digest(plan) + "\nVerdict:";
  ++stats_.judge_calls;
  return parse_judge(gateway_.complete(prompt));
}

AgentResponse QaPlanner::summarize(const Plan& plan, const std::string& query,
                                   const std::vector<Turn>& history) {
  AgentResponse response;
  std::vector<std::string> code;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const SubTask& s = plan.steps[i];
    if (!s.code.empty()) code.push_back("# step " + std::to_string(i) + ": " + s.description + "\n" + s.code);
    if (s.status != StepStatus::Done || !s.result) continue;
    for (const auto& a : s.result->artifacts) {
      const bool seen = std::any_of(response.artifacts.begin(), response.artifacts.end(),
                                    [&](const Artifact& b) { return b.path == a.path; });
      if (!seen) response.artifacts.push_back(a);
    }
  }
  if (!code.empty()) response.code_shown = text::join(code, "\n\n");
  const std::string prompt = prompts_.summarizing + "\n\nConversation so far:\n" +
                             render_history(history) + "\n\nQuestion: " + query +
                             "\n\nResults:\n" + results_digest(plan) + "\nAnswer:";
  try {
    ++stats_.summarize_calls;
    response.text = text::trim(gateway_.complete(prompt));
    response.status = ResponseStatus::Answered;
  } catch (const Error& e) {
    response.text = std::string("The results could not be summarized: ") + e.what();
    response.status = ResponseStatus::Failed;
  }
  return response;
}

AgentResponse QaPlanner::run_turn(SessionState& session, const std::string& question) {
  const std::string turn = "t" + std::to_string(session.history.size() + 1);
  Plan current;
  try {
    current = plan(question, session.history);
  } catch (const Error& e) {
    if (e.code() != Errc::PlanParseError) throw;
    return {"I could not form an analysis plan for this question (" + e.detail() + ").",
            {}, std::nullopt, ResponseStatus::Failed};
  }
  while (true) {
    current = reflect_merge(current);
    session.plan = current;
    std::optional<std::string> failure;
    for (std::size_t i = 0; i < current.steps.size(); ++i) {
      const std::string prefix = turn + "-r" + std::to_string(current.revision) + "-s" + std::to_string(i);
      const CGQuery q = dispatch(current, i, prefix);
      SubTask& step = current.steps[i];
      step.status = StepStatus::Dispatched;
      const CGOutcome outcome = codegen_.solve(q, kernel_, prefix);
      stats_.codegen_calls += outcome.gateway_calls;
      stats_.attempts_per_query.push_back(outcome.runs.empty() ? 0 : outcome.last().cell.attempt);
      if (!outcome.runs.empty()) {
        step.code = outcome.last().cell.source;
        step.result = outcome.last().result;
      }
      if (outcome.success) {
        step.status = StepStatus::Done;
        continue;
      }
      step.status = StepStatus::Failed;
      failure = "step " + std::to_string(i) + " (" + step.description +
                ") could not be completed: " + outcome.failure;
      break;
    }
    session.plan = current;

    std::string replan_reason;
    if (failure) {
      replan_reason = *failure;
    } else {
      const JudgeDecision decision = judge(current, question);
      if (decision.verdict == Verdict::Clarify) {
        AgentResponse r;
        r.text = decision.detail.empty() ? "Could you clarify the question?" : decision.detail;
        r.status = ResponseStatus::ClarificationNeeded;
        return r;
      }
      if (decision.verdict != Verdict::Replan) return summarize(current, question, session.history);
      replan_reason = "the results did not answer the question" +
                      (decision.detail.empty() ? std::string() : ": " + decision.detail);
    }

    if (current.revision >= options_.max_replans) {
      AgentResponse r;
      r.status = ResponseStatus::Failed;
      r.text = "I could not complete the analysis after " + std::to_string(current.revision) +
               " revised plans (" + std::string(to_string(Errc::ReplanBudgetExhausted)) +
               "). Last problem: " + replan_reason;
      for (const auto& s : current.steps) {
        if (s.status == StepStatus::Done && s.result) {
          r.artifacts.insert(r.artifacts.end(), s.result->artifacts.begin(), s.result->artifacts.end());
        }
      }
      return r;
    }
    const int revision = current.revision + 1;
    try {
      current = plan(question, session.history, replan_reason);
    } catch (const Error& e) {
      if (e.code() != Errc::PlanParseError) throw;
      return {"I could not form a revised plan (" + e.detail() + ").", {}, std::nullopt,
              ResponseStatus::Failed};
    }
    current.revision = revision;
    ++stats_.replans;
  }
}

AgentResponse QaPlanner::ask(SessionState& session, const std::string& question) {
  stats_ = {};
  AgentResponse response;
  try {
    response = run_turn(session, question);
  } catch (const Error& e) {
    response = {std::string("The request could not be completed: ") + e.what(), {}, std::nullopt,
                ResponseStatus::Failed};
  }
  // only artifacts present in the workspace are handed out
  if (!session.workspace.empty()) {
    std::erase_if(response.artifacts, [&](const Artifact& a) {
      return !std::filesystem::is_regular_file(session.workspace / a.path);
    });
  }
  session.history.push_back({question, response});
  return response;
}

}  // namespace verbatim
