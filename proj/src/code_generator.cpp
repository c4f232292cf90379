#include "verbatim/code_generator.hpp"

#include <spdlog/spdlog.h>

#include <sstream>

#include "verbatim/error.hpp"
#include "verbatim/text.hpp"

namespace verbatim {

namespace {

constexpr std::string_view kCodeReask =
    "Your reply had no code. Reply with the complete cell in one ```python fenced block.";

std::string system_prompt(const std::vector<PluginDescriptor>& catalog) {
  std::ostringstream out;
  out << "You write Python cells for a stateful notebook kernel used to analyze user "
         "feedback. The feedback table is already loaded; variables from earlier cells "
         "persist.\n"
         "Helpers available in the kernel: len(t), head(t, n), columns(t), "
         "value_counts(t, column), filter_eq(t, column, value), filter_contains(t, column, "
         "text), filter_prefix(t, column, prefix), column_values(t, column), top_value(t), "
         "save_table(t, \"name.csv\", caption=\"...\"), save_text(s, \"name.txt\"), print(...).\n"
         "Rules: work only with the loaded table and files in the working directory; do not "
         "use the network, start processes or write elsewhere. Save every table meant for the "
         "user with save_table. End the cell with an expression whose value answers the task.\n"
         "Think step by step: write a short 'Thought:' line first, then the whole cell in one "
         "```python fenced block.\n\n";
  out << catalog_prompt(catalog) << "\n\n";
  out << "Example\n"
         "Task: Find the most frequent topic.\n"
         "Thought: count topic occurrences, keep the table for the user, return the top one.\n"
         "```python\n"
         "counts = value_counts(df, \"topics\")\n"
         "save_table(counts, \"topic_counts.csv\", caption=\"Topic frequency\")\n"
         "top_value(counts)\n"
         "```\n\n"
         "Example\n"
         "Task: How many negative reviews mention login?\n"
         "Thought: filter by sentiment, then by text, and count the remaining rows.\n"
         "```python\n"
         "negative = filter_eq(df, \"sentiment\", \"negative\")\n"
         "login = filter_contains(negative, \"text\", \"login\")\n"
         "len(login)\n"
         "```";
  return out.str();
}

std::string task_message(const CGQuery& q) {
  std::string out = "Task: " + q.task_description + "\nData handle: " + q.data_handle;
  if (!q.context.empty()) out += "\nContext from earlier steps:\n" + q.context;
  if (!q.constraints.empty()) out += "\nExpected output: " + q.constraints;
  return out;
}

}  // namespace

void PluginRegistry::register_plugin(PluginDescriptor descriptor) {
  descriptor.validate();
  if (find(descriptor.name) != nullptr) {
    throw Error(Errc::DuplicatePlugin, "plugin '" + descriptor.name + "' is already registered");
  }
  plugins_.push_back(std::move(descriptor));
}

const PluginDescriptor* PluginRegistry::find(std::string_view name) const {
  for (const auto& p : plugins_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void PluginRegistry::write_manifest(const std::filesystem::path& path) const {
  write_plugin_manifest(path, plugins_);
}

PluginRegistry PluginRegistry::with_builtins() {
  PluginRegistry r;
  for (auto& p : builtin_plugins()) r.register_plugin(std::move(p));
  return r;
}

std::string catalog_prompt(const std::vector<PluginDescriptor>& catalog) {
  if (catalog.empty()) return "Plugins: no plugins available.";
  std::string out = "Plugins (call them like functions; they read the loaded table):";
  for (const auto& p : catalog) {
    out += "\n- " + p.render_signature() + "\n  " + p.doc;
    if (!p.demo.empty()) out += "\n  Example: " + p.demo;
  }
  return out;
}

std::string Verification::describe() const {
  std::vector<std::string> lines;
  for (const auto& v : violations) {
    std::string line = v.kind + ": " + v.detail;
    if (v.line > 0) line += " (line " + std::to_string(v.line) + ")";
    lines.push_back(std::move(line));
  }
  return text::join(lines, "\n");
}

std::optional<std::string> extract_code(std::string_view completion) {
  const auto blocks = text::fenced_blocks(completion);
  if (blocks.empty()) return std::nullopt;
  std::string code = text::join(blocks, "\n");
  if (text::trim(code).empty()) return std::nullopt;
  return code;
}

CodeGenerator::CodeGenerator(LlmGateway& gateway, std::vector<PluginDescriptor> catalog)
    : gateway_(gateway), catalog_(std::move(catalog)) {}

std::vector<ChatMessage> CodeGenerator::generate_messages(const CGQuery& query) const {
  return {{Role::System, system_prompt(catalog_)}, {Role::User, task_message(query)}};
}

std::vector<ChatMessage> CodeGenerator::repair_messages(const CGQuery& query,
                                                        const CodeCell& cell,
                                                        const std::string& failure) const {
  auto messages = generate_messages(query);
  messages.push_back({Role::Assistant, "```python\n" + cell.source + "\n```"});
  messages.push_back(
      {Role::User, "Attempt " + std::to_string(cell.attempt) +
                       " failed. The cell was:\n```python\n" + cell.source +
                       "\n```\nFailure:\n" + failure +
                       "\nFix the cell so that it completes the task. Reply with the whole "
                       "corrected cell in one ```python fenced block."});
  return messages;
}

std::optional<std::string> CodeGenerator::ask(std::vector<ChatMessage> messages,
                                              bool allow_reask, std::string& fingerprint,
                                              bool& reasked) {
  std::string completion = gateway_.chat(messages);
  ++calls_;
  fingerprint = gateway_.last_chat_fingerprint().value_or("");
  if (auto code = extract_code(completion)) return code;
  if (!allow_reask) return std::nullopt;
  reasked = true;
  messages.push_back({Role::Assistant, completion});
  messages.push_back({Role::User, std::string(kCodeReask)});
  completion = gateway_.chat(messages);
  ++calls_;
  fingerprint = gateway_.last_chat_fingerprint().value_or("");
  return extract_code(completion);
}

CodeCell CodeGenerator::generate(const CGQuery& query) {
  std::string fp;
  bool reasked = false;
  auto code = ask(generate_messages(query), true, fp, reasked);
  if (!code) throw Error(Errc::NoCodeBlock, "no code block for query " + query.id);
  return {*code, 1, query.id, fp};
}

Verification CodeGenerator::verify(const CodeCell& cell, Kernel* kernel) const {
  Verification v;
  v.violations = scan_source(cell.source);
  std::optional<std::string> syntax;
  if (kernel != nullptr) {
    const auto r = kernel->dry_parse(cell.query_id + "-parse-a" + std::to_string(cell.attempt),
                                     cell.source);
    if (r.status == ExecStatus::Error && r.exception) syntax = *r.exception;
  } else {
    syntax = stub_syntax_error(cell.source);
  }
  if (syntax) v.violations.push_back({"SyntaxError", *syntax, 0});
  return v;
}

CodeCell CodeGenerator::repair(const CGQuery& query, const CodeCell& cell,
                               const std::string& failure, bool allow_reask) {
  if (cell.attempt >= kMaxCodeAttempts) {
    throw Error(Errc::AttemptsExhausted,
                "query " + query.id + " failed " + std::to_string(cell.attempt) + " times");
  }
  std::string fp;
  bool reasked = false;
  auto code = ask(repair_messages(query, cell, failure), allow_reask, fp, reasked);
  if (!code) throw Error(Errc::NoCodeBlock, "no code block in repair of " + query.id);
  return {*code, cell.attempt + 1, query.id, fp};
}

CGOutcome CodeGenerator::solve(const CGQuery& query, Kernel& kernel,
                               const std::string& cell_prefix) {
  CGOutcome outcome;
  const std::size_t calls_before = calls_;
  bool reask_left = true;
  std::optional<CodeCell> cell;
  try {
    std::string fp;
    bool reasked = false;
    auto code = ask(generate_messages(query), true, fp, reasked);
    reask_left = !reasked;
    if (!code) throw Error(Errc::NoCodeBlock, "no code block for query " + query.id);
    cell = CodeCell{*code, 1, query.id, fp};
    while (true) {
      CellRun run{*cell, verify(*cell, &kernel), std::nullopt};
      std::string failure;
      if (!run.verification.ok()) {
        failure = run.verification.describe();
        spdlog::info("cell {} rejected: {}", cell_prefix, failure);
      } else {
        run.result = kernel.execute(cell_prefix + "-a" + std::to_string(cell->attempt),
                                    cell->source);
        if (run.result->status == ExecStatus::Ok) {
          outcome.runs.push_back(std::move(run));
          outcome.success = true;
          break;
        }
        failure = run.result->failure_text();
      }
      outcome.runs.push_back(std::move(run));
      outcome.failure = failure;
      if (cell->attempt >= kMaxCodeAttempts) {
        outcome.failure = "AttemptsExhausted: " + failure;
        break;
      }
      std::string rfp;
      bool reasked_now = false;
      auto fixed = ask(repair_messages(query, *cell, failure), reask_left, rfp, reasked_now);
      if (reasked_now) reask_left = false;
      if (!fixed) throw Error(Errc::NoCodeBlock, "no code block in repair of " + query.id);
      cell = CodeCell{*fixed, cell->attempt + 1, query.id, rfp};
    }
  } catch (const Error& e) {
    if (e.code() != Errc::NoCodeBlock) throw;
    outcome.success = false;
    outcome.failure = e.what();
  }
  outcome.gateway_calls = calls_ - calls_before;
  return outcome;
}

}  // namespace verbatim
