// verbatim: command-line client of the service API.
#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "verbatim/error.hpp"
#include "verbatim/http_server.hpp"
#include "verbatim/service.hpp"
#include "verbatim/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace verbatim;

namespace {

constexpr int kDomainError = 1;
constexpr int kUsageError = 2;

HttpServer* g_server = nullptr;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit(const json& doc, const std::string& out_path) {
  const std::string text = doc.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + out_path);
  out << text;
}

// Finished job result, or the job's error as a domain error.
json finish(Service& service, const std::string& job_id) {
  const JobInfo info = service.wait_job(job_id);
  if (info.state != JobState::Succeeded) {
    const auto code = errc_from_string(info.error).value_or(Errc::Cancelled);
    throw Error(code, info.message.empty() ? std::string(to_string(info.state)) : info.message);
  }
  return info.result;
}

// A bare kernel command name resolves next to this executable first.
void resolve_kernel_command(ServiceConfig& config) {
  auto& cmd = config.kernel.command.front();
  if (cmd.find('/') != std::string::npos) return;
  std::error_code ec;
  const fs::path self = fs::read_symlink("/proc/self/exe", ec);
  if (ec) return;
  const fs::path sibling = self.parent_path() / cmd;
  if (fs::exists(sibling)) cmd = sibling.string();
}

void print_response(const AgentResponse& r, const fs::path& workspace, bool show_code) {
  std::cout << r.text << "\n";
  if (r.status != ResponseStatus::Answered) std::cout << "[" << to_string(r.status) << "]\n";
  if (show_code && r.code_shown) std::cout << "\n```python\n" << *r.code_shown << "\n```\n";
  if (!r.artifacts.empty()) {
    std::cout << "\nArtifacts:\n";
    for (const auto& a : r.artifacts) {
      std::cout << "  " << to_string(a.kind) << "  " << (workspace / a.path).string();
      if (!a.caption.empty()) std::cout << "  (" << a.caption << ")";
      std::cout << "\n";
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feedback analysis service: classification, topic modeling and question answering."};
  app.require_subcommand(1);

  std::string config_path;
  std::string data_dir;
  std::string backend;
  std::string cassette;
  bool verbose = false;
  app.add_option("-c,--config", config_path, "YAML config (default: ./verbatim.yaml when present)");
  app.add_option("--data-dir", data_dir, "Override the data directory");
  app.add_option("--backend", backend, "Gateway backend: live, record or replay")
      ->check(CLI::IsMember({"live", "record", "replay"}));
  app.add_option("--cassette", cassette, "Cassette file for record/replay");
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  auto* ingest = app.add_subcommand("ingest", "Load feedback records (JSONL or CSV)");
  std::string ingest_file;
  std::string ingest_format;
  ingest->add_option("file", ingest_file, "Input file")->required()->check(CLI::ExistingFile);
  ingest->add_option("--format", ingest_format, "jsonl or csv (default: by extension)")
      ->check(CLI::IsMember({"jsonl", "csv"}));

  auto* classify = app.add_subcommand("classify", "Label unlabeled records along one dimension");
  std::string dimension;
  std::optional<std::size_t> k;
  classify->add_option("-d,--dimension", dimension, "Dimension name")->required();
  classify->add_option("-k,--k", k, "Number of demonstrations");

  auto* topics = app.add_subcommand("topics", "Topic modeling workflow");
  topics->require_subcommand(1);
  auto* round1 = topics->add_subcommand("round1", "Progressive first round");
  auto* candidates = topics->add_subcommand("candidates", "List round-1 topics awaiting review");
  auto* review = topics->add_subcommand("review", "Apply review decisions and refine the topic list");
  std::string decisions_file;
  review->add_option("decisions", decisions_file, "Decisions JSON")->required()->check(CLI::ExistingFile);
  auto* round2 = topics->add_subcommand("round2", "Second round with the refined topics");

  auto* eval = app.add_subcommand("eval", "Evaluation reports");
  eval->require_subcommand(1);
  std::string out_path;
  auto* eval_classify = eval->add_subcommand("classify", "70/30 accuracy evaluation");
  std::optional<std::uint64_t> seed;
  eval_classify->add_option("-d,--dimension", dimension, "Dimension name")->required();
  eval_classify->add_option("-k,--k", k, "Number of demonstrations");
  eval_classify->add_option("--seed", seed, "Split seed");
  eval_classify->add_option("-o,--out", out_path, "Write the report here");
  auto* eval_topics = eval->add_subcommand("topics", "Others rate and coherence of the latest round");
  bool coherence_csv = false;
  eval_topics->add_option("-o,--out", out_path, "Write the report here");
  eval_topics->add_flag("--csv", coherence_csv, "Coherence table as CSV");

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  std::optional<std::string> host;
  std::optional<int> port;
  serve->add_option("--host", host, "Listen address");
  serve->add_option("-p,--port", port, "Listen port (0: any free port)");

  auto* ask = app.add_subcommand("ask", "Ask questions about the data");
  std::string question;
  bool one_shot = false;
  bool show_code = false;
  ask->add_option("question", question, "Question (with --one-shot)");
  ask->add_flag("--one-shot", one_shot, "Answer one question and exit");
  ask->add_flag("--show-code", show_code, "Print the executed code");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageError;
  }
  if (*ask && one_shot && text::trim(question).empty()) {
    std::cerr << "ask --one-shot needs a question\n";
    return kUsageError;
  }

  spdlog::set_default_logger(spdlog::default_logger()->clone("verbatim"));
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    ServiceConfig config;
    if (!config_path.empty()) {
      config = ServiceConfig::load(config_path);
    } else if (fs::exists("verbatim.yaml")) {
      config = ServiceConfig::load("verbatim.yaml");
    }
    if (!data_dir.empty()) config.data_dir = data_dir;
    if (!backend.empty()) config.gateway.mode = parse_backend_mode(backend);
    if (!cassette.empty()) config.gateway.cassette = cassette;
    resolve_kernel_command(config);
    if (serve->parsed()) {
      if (host) config.server.host = *host;
      if (port) config.server.port = *port;
    }

    Service service(config);

    if (*ingest) {
      std::string format = ingest_format;
      if (format.empty()) format = fs::path(ingest_file).extension() == ".csv" ? "csv" : "jsonl";
      const IngestReport r = service.ingest(slurp(ingest_file), *parse_record_format(format));
      json reasons = json::array();
      for (const auto& x : r.rejection_reasons) reasons.push_back({{"line", x.line}, {"reason", x.reason}});
      emit({{"accepted", r.accepted}, {"rejected", r.rejected}, {"rejection_reasons", reasons}}, "");
    } else if (*classify) {
      emit(finish(service, service.start_classification(dimension, k)), "");
    } else if (*round1) {
      emit(finish(service, service.start_round_one()), "");
    } else if (*candidates) {
      emit(service.candidates(), "");
    } else if (*review) {
      emit(service.review(parse_review_decisions(slurp(decisions_file))), "");
    } else if (*round2) {
      emit(finish(service, service.start_round_two()), "");
    } else if (*eval_classify) {
      emit(finish(service, service.start_eval_classify(dimension, k, seed)), out_path);
    } else if (*eval_topics) {
      const json report = finish(service, service.start_eval_topics());
      if (coherence_csv) {
        std::string csv = "topic,support,coherence,keywords\n";
        for (const auto& t : report["topics"]) {
          std::ostringstream line;
          line << t["topic"].get<std::string>() << "," << t["support"].get<std::size_t>() << ","
               << std::fixed << std::setprecision(6) << t["coherence"].get<double>() << ","
               << text::join(t["keywords"].get<std::vector<std::string>>(), " ") << "\n";
          csv += line.str();
        }
        if (out_path.empty()) {
          std::cout << csv;
        } else {
          std::ofstream(out_path) << csv;
        }
      } else {
        emit(report, out_path);
      }
    } else if (*serve) {
      HttpServer server(service, config.server.token);
      const int bound = server.bind(config.server.host, config.server.port);
      std::cout << "listening on http://" << config.server.host << ":" << bound << std::endl;
      g_server = &server;
      std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
      });
      std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
      });
      server.listen();
      g_server = nullptr;
    } else if (*ask) {
      const SessionHandle session = service.create_session();
      const fs::path workspace = config.data_dir / "sessions" / session.id / "workspace";
      int rc = 0;
      if (one_shot) {
        const AgentResponse r = service.ask(session.id, question);
        print_response(r, workspace, show_code);
        rc = r.status == ResponseStatus::Failed ? kDomainError : 0;
      } else {
        if (!text::trim(question).empty()) {
          print_response(service.ask(session.id, question), workspace, show_code);
        }
        std::string line;
        while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
          if (text::trim(line).empty()) continue;
          print_response(service.ask(session.id, line), workspace, show_code);
          std::cout << "\n";
        }
      }
      service.close_session(session.id);
      return rc;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainError;
  }
  return 0;
}
