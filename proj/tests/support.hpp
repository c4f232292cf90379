#pragma once

#include <filesystem>
#include <fstream>
#include <deque>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "verbatim/kernel.hpp"
#include "verbatim/llm_gateway.hpp"
#include "verbatim/plugin.hpp"
#include "verbatim/record_store.hpp"
#include "verbatim/text.hpp"

namespace vt {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("verbatim-test-" + verbatim::text::random_token(6));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

inline fs::path data_dir() { return fs::path(VERBATIM_TEST_DATA); }

struct Scripted {
  std::shared_ptr<verbatim::ScriptedBackend> backend = std::make_shared<verbatim::ScriptedBackend>();
  std::unique_ptr<verbatim::LlmGateway> gateway = std::make_unique<verbatim::LlmGateway>(backend);
};

inline std::string jsonl_record(const std::string& id, const std::string& text,
                                const std::string& timestamp) {
  return "{\"id\":\"" + id + "\",\"text\":\"" + text + "\",\"timestamp\":\"" + timestamp + "\"}\n";
}

// The feedback table used by kernel, planner and service tests: 7 topics
// over April 2024, with sentiment labels.
inline std::string feedback_corpus_jsonl() {
  const std::vector<std::pair<std::string, std::string>> topics = {
      {"login issue", "cannot log in after the update"},
      {"crash", "the app crashes when opening settings"},
      {"performance", "scrolling is slow on my phone"},
      {"feature request", "please add a dark mode"},
      {"pricing", "the subscription is too expensive"},
      {"notifications", "notifications arrive twice"},
      {"sync", "notes do not sync between devices"},
  };
  // counts per topic: 9, 7, 6, 5, 4, 3, 2
  const std::vector<int> counts = {9, 7, 6, 5, 4, 3, 2};
  std::string out;
  int n = 0;
  for (std::size_t t = 0; t < topics.size(); ++t) {
    for (int i = 0; i < counts[t]; ++i) {
      const int day = 1 + (n * 7) % 28;
      char ts[32];
      std::snprintf(ts, sizeof ts, "2024-04-%02dT10:00:00Z", day);
      const std::string sentiment = (t == 3) ? "positive" : (n % 3 == 0 ? "neutral" : "negative");
      out += "{\"id\":\"f" + std::to_string(n + 1) + "\",\"text\":\"" + topics[t].second +
             " (" + std::to_string(i + 1) + ")\",\"timestamp\":\"" + ts +
             "\",\"labels\":{\"sentiment\":\"" + sentiment + "\"},\"topics\":[\"" +
             topics[t].first + "\"],\"topic_round\":2}\n";
      ++n;
    }
  }
  return out;
}

// Replies in order; the last reply repeats once the queue runs dry.
inline void script_sequence(verbatim::ScriptedBackend& backend, std::vector<std::string> replies) {
  auto queue = std::make_shared<std::deque<std::string>>(replies.begin(), replies.end());
  backend.handler([queue](const verbatim::ChatRequest&) -> std::optional<std::string> {
    if (queue->empty()) return std::nullopt;
    std::string r = queue->front();
    if (queue->size() > 1) queue->pop_front();
    return r;
  });
}

inline std::string fenced(const std::string& code) { return "Thought: go.\n```python\n" + code + "\n```"; }

// Stub kernel loaded with the feedback corpus and the built-in plugins.
struct CorpusKernel {
  explicit CorpusKernel(const fs::path& dir, const std::string& session = "s1")
      : kernel(session), workspace(dir / "workspace") {
    write_file(dir / "snapshot.jsonl", feedback_corpus_jsonl());
    verbatim::write_plugin_manifest(dir / "plugins.json", verbatim::builtin_plugins());
    verbatim::KernelInit init;
    init.snapshot = dir / "snapshot.jsonl";
    init.manifest = dir / "plugins.json";
    init.workspace = workspace;
    init.timeout = std::chrono::milliseconds(2000);
    kernel.init(init);
  }
  verbatim::InProcessKernel kernel;
  fs::path workspace;
};

}  // namespace vt
