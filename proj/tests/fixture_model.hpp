#pragma once

// Deterministic stand-in for the chat model used to record the replay
// fixtures. Replies depend only on request content, never on call order.

#include <memory>
#include <regex>
#include <string>

#include "verbatim/llm_gateway.hpp"

namespace vt {

inline const char* const kAnalysisQuestion = "Which topic appears most frequently?";
inline const char* const kFigureQuestion = "Draw an issue river of the top 5 topics.";
inline const char* const kSuggestionQuestion =
    "Which problems should we fix first for users who gave negative feedback?";

namespace detail {

inline bool has(const std::string& s, const std::string& needle) {
  return s.find(needle) != std::string::npos;
}

inline std::string last_user(const verbatim::ChatRequest& r) {
  for (auto it = r.messages.rbegin(); it != r.messages.rend(); ++it) {
    if (it->role == verbatim::Role::User) return it->content;
  }
  return {};
}

inline std::string between(const std::string& s, const std::string& open, const std::string& close) {
  const auto a = s.rfind(open);
  if (a == std::string::npos) return {};
  const auto b = s.find(close, a + open.size());
  return s.substr(a + open.size(), b == std::string::npos ? std::string::npos : b - a - open.size());
}

inline std::string fence(const std::string& lang, const std::string& body) {
  return "```" + lang + "\n" + body + "\n```";
}

inline std::string plan_reply(const std::string& prompt) {
  const std::string q = between(prompt, "Question: ", "\nPlan:");
  if (has(q, "issue river")) {
    return "The figure comes from the plugin.\n" +
           fence("json", R"([{"description": "Draw an issue river of the 5 most frequent topics over time", "depends_on": [], "mergeable": false}])");
  }
  if (has(q, "negative")) {
    return fence("json",
                 R"([{"description": "Count topics among negative feedback and save the table", "depends_on": [], "mergeable": true},
 {"description": "Collect example texts for the most frequent negative topic", "depends_on": [0], "mergeable": true}])");
  }
  return fence("json",
               R"([{"description": "Count how often each topic occurs, save the counts as a table and return the top topic", "depends_on": [], "mergeable": false}])");
}

inline std::string code_reply(const verbatim::ChatRequest& r) {
  const std::string task = between(r.messages[1].content, "Task: ", "\n");
  const bool repair = r.messages.size() > 2;
  std::string body;
  if (has(task, "issue river")) {
    // first attempt names a missing column; the repair fixes it
    body = repair ? "issue_river(\"topics\", \"timestamp\", top_n=5)"
                  : "issue_river(\"topic\", \"timestamp\", top_n=5)";
  } else if (has(task, "negative")) {
    body =
        "negative = filter_eq(df, \"sentiment\", \"negative\")\n"
        "counts = value_counts(negative, \"topics\")\n"
        "save_table(counts, \"negative_topic_counts.csv\", caption=\"Topics in negative feedback\")\n"
        "top = top_value(counts)\n"
        "examples = filter_contains(negative, \"topics\", top)\n"
        "save_table(head(examples, 3), \"negative_examples.csv\", caption=\"Examples\")\n"
        "top";
  } else {
    body =
        "counts = value_counts(df, \"topics\")\n"
        "save_table(counts, \"topic_counts.csv\", caption=\"Topic frequency\")\n"
        "top_value(counts)";
  }
  return "Thought: use the loaded table.\n" + fence("python", body);
}

inline std::string summary_reply(const std::string& prompt) {
  const std::string q = between(prompt, "Question: ", "\n");
  std::string outputs;
  std::string artifacts;
  static const std::regex out_re("Output: ([^\n]*)");
  static const std::regex art_re("Artifacts: ([^\n]*)");
  for (std::sregex_iterator it(prompt.begin(), prompt.end(), out_re), end; it != end; ++it) {
    std::string v = (*it)[1].str();
    if (v.size() >= 2 && v.front() == '\'' && v.back() == '\'') v = v.substr(1, v.size() - 2);
    outputs += (outputs.empty() ? "" : "; ") + v;
  }
  for (std::sregex_iterator it(prompt.begin(), prompt.end(), art_re), end; it != end; ++it) {
    artifacts += (artifacts.empty() ? "" : "; ") + (*it)[1].str();
  }
  if (has(q, "fix first")) {
    return "Fix \"" + outputs + "\" first: it is the most frequent topic in negative feedback. "
           "Attached: " + artifacts + ".";
  }
  if (has(q, "issue river")) return "The issue river of the top 5 topics is attached: " + artifacts + ".";
  return "The most frequent topic is \"" + outputs + "\". Counts per topic: " + artifacts + ".";
}

inline std::string label_reply(const std::string& prompt) {
  const std::string target = between(prompt, "Feedback: ", "\nLabel:");
  if (has(target, "dark mode")) return "positive";
  if (has(target, "crash") || has(target, "cannot") || has(target, "expensive")) return "negative";
  return "neutral";
}

}  // namespace detail

inline std::string fixture_reply(const verbatim::ChatRequest& r) {
  using detail::has;
  const std::string first = r.messages.front().content;
  if (r.messages.front().role == verbatim::Role::System) return detail::code_reply(r);
  if (first.ends_with("Plan:")) return detail::plan_reply(first);
  if (has(first, "List the indices")) return detail::fence("json", R"({"mergeable": [0, 1]})");
  if (first.ends_with("Verdict:")) return "finish";
  if (first.ends_with("Answer:")) return detail::summary_reply(first);
  if (has(detail::last_user(r), "\nLabel:")) return detail::label_reply(detail::last_user(r));
  return "finish";
}

inline std::shared_ptr<verbatim::ScriptedBackend> fixture_backend() {
  auto b = std::make_shared<verbatim::ScriptedBackend>();
  b->handler([](const verbatim::ChatRequest& r) -> std::optional<std::string> { return fixture_reply(r); });
  return b;
}

}  // namespace vt
