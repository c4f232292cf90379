#include "verbatim/http_server.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <sstream>

#include "verbatim/error.hpp"
#include "verbatim/text.hpp"

namespace verbatim {

using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, std::string_view kind, const std::string& message) {
  send_json(res, status, {{"error", kind}, {"message", message}});
}

json parse_body(const httplib::Request& req) {
  if (text::trim(req.body).empty()) return json::object();
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw Error(Errc::InvalidArgument, "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw Error(Errc::InvalidArgument, std::string("malformed JSON body: ") + e.what());
  }
}

std::string required_string(const json& body, const char* key) {
  if (!body.contains(key) || !body[key].is_string() || text::trim(body[key].get<std::string>()).empty()) {
    throw Error(Errc::InvalidArgument, std::string("'") + key + "' must be a non-empty string");
  }
  return body[key].get<std::string>();
}

template <typename T>
std::optional<T> optional_unsigned(const json& body, const char* key) {
  if (!body.contains(key) || body[key].is_null()) return std::nullopt;
  if (!body[key].is_number_unsigned()) {
    throw Error(Errc::InvalidArgument, std::string("'") + key + "' must be a non-negative integer");
  }
  return body[key].get<T>();
}

json turn_json(const Turn& t) { return {{"question", t.question}, {"response", t.response.to_json()}}; }

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

}  // namespace

int http_status_for(Errc code) {
  switch (code) {
    case Errc::UnknownId:
    case Errc::UnknownSession:
    case Errc::UnknownDimension:
      return 404;
    case Errc::IncompleteReview:
      return 409;
    case Errc::CassetteMiss:
    case Errc::ProviderError:
    case Errc::Timeout:
    case Errc::ProtocolError:
    case Errc::SnapshotMissing:
    case Errc::PluginLoadError:
    case Errc::Io:
      return 503;
    default:
      return 422;
  }
}

HttpServer::HttpServer(Service& service, std::string token)
    : service_(service), token_(std::move(token)), server_(std::make_unique<httplib::Server>()) {
  routes();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) throw Error(Errc::Io, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_) server_->stop();
}

void HttpServer::routes() {
  auto& s = *server_;
  auto wrap = [](Handler fn) {
    return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, http_status_for(e.code()), to_string(e.code()), e.detail());
      } catch (const std::exception& e) {
        spdlog::error("{} {}: {}", req.method, req.path, e.what());
        send_error(res, 500, "InternalError", e.what());
      }
    };
  };

  s.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (token_.empty() || req.path == "/health") return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") != "Bearer " + token_) {
      send_error(res, 401, "Unauthorized", "missing or wrong bearer token");
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });
  s.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
  });

  s.Get("/health", wrap([this](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, {{"status", "ok"}, {"records", service_.store().size()}});
        }));

  s.Post("/ingest", wrap([this](const httplib::Request& req, httplib::Response& res) {
           std::string data;
           std::string format = req.get_param_value("format");
           std::string filename;
           if (req.is_multipart_form_data()) {
             if (!req.has_file("file")) throw Error(Errc::InvalidArgument, "multipart field 'file' is missing");
             const auto file = req.get_file_value("file");
             data = file.content;
             filename = file.filename;
             if (req.has_file("format")) format = text::trim(req.get_file_value("format").content);
           } else {
             data = req.body;
           }
           if (format.empty()) format = (filename.size() >= 4 && text::to_lower(filename.substr(filename.size() - 4)) == ".csv") ? "csv" : "jsonl";
           const auto parsed = parse_record_format(text::to_lower(format));
           if (!parsed) throw Error(Errc::InvalidArgument, "format must be jsonl or csv");
           const IngestReport report = service_.ingest(data, *parsed);
           json reasons = json::array();
           for (const auto& r : report.rejection_reasons) reasons.push_back({{"line", r.line}, {"reason", r.reason}});
           send_json(res, 200, {{"accepted", report.accepted}, {"rejected", report.rejected},
                                {"rejection_reasons", reasons}});
         }));

  s.Post("/classify/run", wrap([this](const httplib::Request& req, httplib::Response& res) {
           const json body = parse_body(req);
           const auto id = service_.start_classification(required_string(body, "dimension"),
                                                         optional_unsigned<std::size_t>(body, "k"));
           send_json(res, 202, {{"job_id", id}});
         }));

  s.Get(R"(/jobs/([\w-]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, service_.job(req.matches[1]).to_json());
        }));
  s.Post(R"(/jobs/([\w-]+)/cancel)", wrap([this](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 200, service_.cancel_job(req.matches[1]).to_json());
         }));

  s.Post("/topics/round1", wrap([this](const httplib::Request&, httplib::Response& res) {
           send_json(res, 202, {{"job_id", service_.start_round_one()}});
         }));
  s.Get("/topics/candidates", wrap([this](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, {{"candidates", service_.candidates()}});
        }));
  s.Post("/topics/review", wrap([this](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 200, service_.review(parse_review_decisions(req.body)));
         }));
  s.Post("/topics/round2", wrap([this](const httplib::Request&, httplib::Response& res) {
           send_json(res, 202, {{"job_id", service_.start_round_two()}});
         }));

  s.Post("/eval/classify", wrap([this](const httplib::Request& req, httplib::Response& res) {
           const json body = parse_body(req);
           const auto id = service_.start_eval_classify(required_string(body, "dimension"),
                                                        optional_unsigned<std::size_t>(body, "k"),
                                                        optional_unsigned<std::uint64_t>(body, "seed"));
           send_json(res, 202, {{"job_id", id}});
         }));
  s.Post("/eval/topics", wrap([this](const httplib::Request&, httplib::Response& res) {
           send_json(res, 202, {{"job_id", service_.start_eval_topics()}});
         }));

  s.Post("/sessions", wrap([this](const httplib::Request&, httplib::Response& res) {
           send_json(res, 201, service_.create_session().to_json());
         }));
  s.Get(R"(/sessions/([\w-]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, service_.session(req.matches[1]).to_json());
        }));
  s.Post(R"(/sessions/([\w-]+)/ask)", wrap([this](const httplib::Request& req, httplib::Response& res) {
           const json body = parse_body(req);
           const AgentResponse r = service_.ask(req.matches[1], required_string(body, "question"));
           send_json(res, 200, r.to_json());
         }));
  s.Get(R"(/sessions/([\w-]+)/history)", wrap([this](const httplib::Request& req, httplib::Response& res) {
          json turns = json::array();
          for (const auto& t : service_.history(req.matches[1])) turns.push_back(turn_json(t));
          send_json(res, 200, {{"session_id", std::string(req.matches[1])}, {"turns", turns}});
        }));
  s.Delete(R"(/sessions/([\w-]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
             SessionHandle h = service_.session(req.matches[1]);
             service_.close_session(h.id);
             h.status = SessionStatus::Closed;
             send_json(res, 200, h.to_json());
           }));

  s.Get(R"(/artifacts/([\w-]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
          const ArtifactFile file = service_.artifact(req.matches[1]);
          std::ifstream in(file.path, std::ios::binary);
          if (!in) throw Error(Errc::UnknownId, "artifact is no longer available");
          std::stringstream ss;
          ss << in.rdbuf();
          res.status = 200;
          res.set_content(ss.str(), file.content_type);
        }));
}

}  // namespace verbatim
