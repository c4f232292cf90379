#include <gtest/gtest.h>

#include <cstdio>

#include "support.hpp"
#include "verbatim/error.hpp"
#include "verbatim/kernel.hpp"
#include "verbatim/plugin.hpp"
#include "verbatim/sandbox_policy.hpp"

using namespace verbatim;
using nlohmann::json;

namespace {

std::unique_ptr<Kernel> make_kernel(const std::string& mode, const std::string& session) {
  if (mode == "in_process") return std::make_unique<InProcessKernel>(session);
  return std::make_unique<ProcessKernel>(session, std::vector<std::string>{VERBATIM_STUB_KERNEL},
                                         std::chrono::milliseconds(2000));
}

std::string hundred_rows() {
  std::string out;
  for (int i = 0; i < 100; ++i) {
    out += vt::jsonl_record("k" + std::to_string(i), "row " + std::to_string(i), "2024-04-01T00:00:00Z");
  }
  return out;
}

class KernelConformance : public ::testing::TestWithParam<std::string> {
 protected:
  void SetUp() override {
    vt::write_file(dir / "snapshot.jsonl", vt::feedback_corpus_jsonl());
    write_plugin_manifest(dir / "plugins.json", builtin_plugins());
  }

  KernelInit init_for(const std::string& snapshot = "snapshot.jsonl") {
    KernelInit init;
    init.snapshot = dir / snapshot;
    init.manifest = dir / "plugins.json";
    init.workspace = dir / "workspace";
    init.timeout = std::chrono::milliseconds(1500);
    return init;
  }

  std::unique_ptr<Kernel> ready(const std::string& session = "s1") {
    auto k = make_kernel(GetParam(), session);
    k->init(init_for());
    return k;
  }

  vt::TempDir dir;
};

}  // namespace

TEST_P(KernelConformance, LoadsSnapshotAsDf) {
  vt::write_file(dir / "hundred.jsonl", hundred_rows());
  auto k = make_kernel(GetParam(), "s1");
  k->init(init_for("hundred.jsonl"));
  const auto r = k->execute("c1", "len(df)");
  EXPECT_EQ(r.status, ExecStatus::Ok);
  EXPECT_EQ(r.output, "100");
  k->shutdown();
}

TEST_P(KernelConformance, CsvSnapshot) {
  vt::write_file(dir / "t.csv", "id,text,timestamp\na,x,2024-04-01\nb,y,2024-04-02\n");
  auto k = make_kernel(GetParam(), "s1");
  k->init(init_for("t.csv"));
  EXPECT_EQ(k->execute("c1", "len(df)").output, "2");
}

TEST_P(KernelConformance, MissingSnapshot) {
  auto k = make_kernel(GetParam(), "s1");
  try {
    k->init(init_for("nope.jsonl"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SnapshotMissing);
  }
}

TEST_P(KernelConformance, BadPluginModule) {
  auto plugins = builtin_plugins();
  plugins[1].module = "verbatim_plugins.does_not_exist";
  write_plugin_manifest(dir / "plugins.json", plugins);
  auto k = make_kernel(GetParam(), "s1");
  try {
    k->init(init_for());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::PluginLoadError);
    EXPECT_NE(e.detail().find(plugins[1].name), std::string::npos);
  }
}

TEST_P(KernelConformance, StatePersistsAcrossCells) {
  auto k = ready();
  EXPECT_EQ(k->execute("c1", "x = 1").status, ExecStatus::Ok);
  const auto r = k->execute("c2", "x + 1");
  EXPECT_EQ(r.output, "2");
}

TEST_P(KernelConformance, PrintGoesToLogs) {
  auto k = ready();
  const auto r = k->execute("c1", "print(\"hello\")");
  EXPECT_EQ(r.status, ExecStatus::Ok);
  EXPECT_NE(r.logs.find("hello"), std::string::npos);
  EXPECT_EQ(r.output, "");
}

TEST_P(KernelConformance, NetworkIsViolation) {
  auto k = ready();
  for (const std::string code : {"import socket\ns = socket.socket()", "import requests",
                                 "from urllib import request", "import subprocess",
                                 "os.system(\"ls\")"}) {
    const auto r = k->execute("c", code);
    EXPECT_EQ(r.status, ExecStatus::Violation) << code;
    EXPECT_FALSE(r.exception.has_value());
  }
  // the kernel survives
  EXPECT_EQ(k->execute("c9", "1 + 1").output, "2");
}

TEST_P(KernelConformance, ExceptionIsError) {
  auto k = ready();
  const auto r = k->execute("c1", "raise ValueError(\"bad value\")");
  EXPECT_EQ(r.status, ExecStatus::Error);
  ASSERT_TRUE(r.exception);
  EXPECT_NE(r.exception->find("ValueError: bad value"), std::string::npos);
  EXPECT_EQ(k->execute("c2", "undefined_name").exception.value_or(""),
            "NameError: name 'undefined_name' is not defined");
}

TEST_P(KernelConformance, SyntaxErrorIsError) {
  auto k = ready();
  const auto r = k->execute("c1", "x = (1 +");
  EXPECT_EQ(r.status, ExecStatus::Error);
  EXPECT_NE(r.exception.value_or("").find("SyntaxError"), std::string::npos);
}

TEST_P(KernelConformance, DryParseDoesNotExecute) {
  auto k = ready();
  EXPECT_EQ(k->dry_parse("p1", "y = 5").status, ExecStatus::Ok);
  EXPECT_EQ(k->execute("c1", "y").status, ExecStatus::Error);
  EXPECT_EQ(k->dry_parse("p2", "y = = 5").status, ExecStatus::Error);
}

TEST_P(KernelConformance, WallClockTimeout) {
  auto k = ready();
  const auto r = k->execute("c1", "import time\ntime.sleep(10)");
  EXPECT_EQ(r.status, ExecStatus::Timeout);
}

TEST_P(KernelConformance, ResetClearsStateKeepsArtifacts) {
  auto k = ready();
  const auto saved = k->execute("c1", "x = 3\nsave_table(value_counts(df, \"topics\"), \"counts.csv\")");
  ASSERT_EQ(saved.status, ExecStatus::Ok) << saved.failure_text();
  ASSERT_EQ(saved.artifacts.size(), 1u);
  k->reset();
  EXPECT_EQ(k->execute("c2", "x").exception.value_or(""), "NameError: name 'x' is not defined");
  EXPECT_TRUE(std::filesystem::exists(dir / "workspace" / "counts.csv"));
  EXPECT_EQ(k->execute("c3", "len(df)").output, "36");
}

TEST_P(KernelConformance, ArtifactsExistInsideWorkspace) {
  auto k = ready();
  const auto r = k->execute("c1",
                            "t = value_counts(df, \"topics\")\n"
                            "save_table(t, \"topic_counts.csv\", caption=\"Topic counts\")\n"
                            "issue_river(top_n=3)");
  ASSERT_EQ(r.status, ExecStatus::Ok) << r.failure_text();
  ASSERT_EQ(r.artifacts.size(), 2u);
  EXPECT_EQ(r.artifacts[0].kind, ArtifactKind::Table);
  EXPECT_EQ(r.artifacts[0].path, "topic_counts.csv");
  EXPECT_EQ(r.artifacts[0].caption, "Topic counts");
  EXPECT_EQ(r.artifacts[1].kind, ArtifactKind::Image);
  for (const auto& a : r.artifacts) {
    EXPECT_TRUE(std::filesystem::exists(dir / "workspace" / a.path)) << a.path;
  }
  const std::string table = vt::read_file(dir / "workspace" / "topic_counts.csv");
  EXPECT_NE(table.find("login issue,9"), std::string::npos) << table;
}

// Adversarial cells never crash the kernel and never write outside.
TEST_P(KernelConformance, SandboxContainment) {
  auto k = ready();
  const std::vector<std::string> cells = {
      "open(\"/tmp/verbatim-escape.txt\", \"w\")",
      "open(\"../escape.txt\", \"w\")",
      "save_text(\"x\", \"../../escape.txt\")",
      "save_table(df, \"/etc/verbatim.csv\")",
      "import socket",
      "import http.client",
      "import multiprocessing",
      "from os import system",
      "subprocess.run([\"ls\"])",
  };
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto r = k->execute("adv" + std::to_string(i), cells[i]);
    EXPECT_EQ(r.status, ExecStatus::Violation) << cells[i] << " -> " << to_string(r.status) << " "
                                               << r.failure_text();
  }
  EXPECT_FALSE(std::filesystem::exists("/tmp/verbatim-escape.txt"));
  EXPECT_FALSE(std::filesystem::exists(dir / "escape.txt"));
  EXPECT_EQ(k->execute("after", "1").output, "1");
}

TEST_P(KernelConformance, SequentialConsistency) {
  auto k = ready();
  k->execute("c0", "n = 0");
  for (int i = 1; i <= 20; ++i) {
    const auto r = k->execute("c" + std::to_string(i), "n = n + 1\nn");
    EXPECT_EQ(r.output, std::to_string(i));
  }
}

TEST_P(KernelConformance, SessionsAreIsolated) {
  auto a = ready("sa");
  auto b = make_kernel(GetParam(), "sb");
  KernelInit init = init_for();
  init.workspace = dir / "workspace_b";
  b->init(init);
  a->execute("c1", "secret = 42");
  EXPECT_EQ(b->execute("c1", "secret").status, ExecStatus::Error);
}

INSTANTIATE_TEST_SUITE_P(Both, KernelConformance, ::testing::Values("in_process", "process"));

TEST(KernelProtocol, MessageRoundTrip) {
  KernelMessage m;
  m.kind = MessageKind::Execute;
  m.session_id = "s";
  m.cell_id = "c1";
  m.code = "x = 1\nprint(x)";
  const auto back = KernelMessage::from_line(m.to_line());
  EXPECT_EQ(back.kind, MessageKind::Execute);
  EXPECT_EQ(back.cell_id, "c1");
  EXPECT_EQ(back.code, m.code);
  EXPECT_EQ(m.to_line().find('\n'), std::string::npos);
}

TEST(KernelProtocol, MalformedLines) {
  for (const std::string line : {"not json", "[]", R"({"kind":"explode","session_id":"s"})",
                                 R"({"session_id":"s"})"}) {
    try {
      KernelMessage::from_line(line);
      FAIL() << line;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::ProtocolError);
    }
  }
}

TEST(KernelProtocol, ExecutionResultJson) {
  ExecutionResult r;
  r.status = ExecStatus::Error;
  r.exception = "KeyError: 'x'";
  r.artifacts = {{ArtifactKind::Table, "a.csv", "", "cap"}};
  const auto back = ExecutionResult::from_json(r.to_json());
  EXPECT_EQ(back.status, ExecStatus::Error);
  EXPECT_EQ(back.exception, r.exception);
  EXPECT_EQ(back.artifacts, r.artifacts);
}

// Raw NDJSON against the stub executable: one result per request, cell ids
// echoed, unknown sessions answered with an error.
TEST(KernelProtocol, StubExecutableSpeaksNdjson) {
  vt::TempDir dir;
  vt::write_file(dir / "snap.jsonl", vt::feedback_corpus_jsonl());
  KernelInit init;
  init.snapshot = dir / "snap.jsonl";
  init.workspace = dir / "ws";
  std::string input;
  auto msg = [&](MessageKind kind, const std::string& session, std::optional<std::string> cell,
                 std::optional<std::string> code, json payload = nullptr) {
    KernelMessage m{kind, session, std::move(cell), std::move(code), std::move(payload)};
    input += m.to_line() + "\n";
  };
  msg(MessageKind::Init, "s", std::nullopt, std::nullopt, init.to_json());
  msg(MessageKind::Execute, "s", "c1", "x = 2");
  msg(MessageKind::Execute, "s", "c2", "x * 21");
  msg(MessageKind::Execute, "ghost", "c3", "1");
  msg(MessageKind::Reset, "ghost", std::nullopt, std::nullopt);
  msg(MessageKind::Shutdown, "s", std::nullopt, std::nullopt);
  vt::write_file(dir / "in.ndjson", input);
  const std::string cmd = std::string(VERBATIM_STUB_KERNEL) + " < " + (dir / "in.ndjson").string();
  FILE* pipe = popen(cmd.c_str(), "r");
  ASSERT_NE(pipe, nullptr);
  std::string out;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe) != nullptr) out += buf;
  EXPECT_EQ(pclose(pipe), 0);
  std::vector<KernelMessage> replies;
  for (const auto& line : text::split(out, '\n')) {
    if (!text::trim(line).empty()) replies.push_back(KernelMessage::from_line(line));
  }
  ASSERT_EQ(replies.size(), 6u) << out;
  for (const auto& r : replies) EXPECT_EQ(r.kind, MessageKind::Result);
  EXPECT_EQ(replies[0].payload["status"], "ready");
  EXPECT_EQ(replies[1].cell_id, "c1");
  EXPECT_EQ(replies[2].cell_id, "c2");
  EXPECT_EQ(replies[2].payload["output"], "42");
  EXPECT_EQ(replies[3].cell_id, "c3");
  EXPECT_EQ(replies[3].payload["error"], "UnknownSession");
  EXPECT_EQ(replies[4].payload["error"], "UnknownSession");
  EXPECT_EQ(replies[5].payload["status"], "bye");
}

TEST(InProcessKernel, ResetUnknownSessionErrors) {
  InProcessKernel k("never-initialized");
  EXPECT_THROW(k.reset(), Error);
}

TEST(SandboxPolicy, StaticScan) {
  EXPECT_TRUE(scan_source("t = value_counts(df, \"topics\")").empty());
  const auto v = scan_source("import os\nimport socket\nos.system('ls')\nopen('/etc/passwd')");
  std::vector<std::string> kinds;
  for (const auto& x : v) kinds.push_back(x.kind);
  EXPECT_NE(std::find(kinds.begin(), kinds.end(), "NetworkAccess"), kinds.end());
  EXPECT_NE(std::find(kinds.begin(), kinds.end(), "ProcessAccess"), kinds.end());
  EXPECT_NE(std::find(kinds.begin(), kinds.end(), "FilesystemEscape"), kinds.end());
  EXPECT_EQ(v[0].line, 2u);
}

TEST(PluginManifest, RoundTripAndValidation) {
  vt::TempDir dir;
  const auto plugins = builtin_plugins();
  write_plugin_manifest(dir / "m.json", plugins);
  const auto back = load_plugin_manifest(dir / "m.json");
  ASSERT_EQ(back.size(), plugins.size());
  EXPECT_EQ(back[0].name, "issue_river");
  EXPECT_EQ(back[0].render_signature(), plugins[0].render_signature());
  EXPECT_NE(back[0].render_signature().find("top_n: int = 5"), std::string::npos);
  PluginDescriptor bad;
  EXPECT_THROW(bad.validate(), Error);
  vt::write_file(dir / "dup.json", R"({"plugins":[{"name":"a","module":"m"},{"name":"a","module":"m"}]})");
  try {
    load_plugin_manifest(dir / "dup.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DuplicatePlugin);
  }
}
