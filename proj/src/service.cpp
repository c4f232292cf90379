#include "verbatim/service.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "verbatim/error.hpp"
#include "verbatim/text.hpp"

namespace verbatim {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kSummaryTopics = 15;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

json phrase_json(const TopicPhrase& t) {
  return {{"topic", t.normalized}, {"display", t.display}, {"origin", to_string(t.origin)},
          {"status", to_string(t.status)}, {"first_seen", t.first_seen}, {"count", t.count}};
}

TopicOrigin parse_origin(const std::string& s) {
  if (s == "predefined") return TopicOrigin::Predefined;
  if (s == "cluster_summary") return TopicOrigin::ClusterSummary;
  return TopicOrigin::Emergent;
}

TopicStatus parse_status(const std::string& s) {
  if (s == "accepted") return TopicStatus::Accepted;
  if (s == "rejected") return TopicStatus::Rejected;
  return TopicStatus::Candidate;
}

TopicPhrase phrase_from_json(const json& j) {
  TopicPhrase t;
  t.normalized = j.at("topic").get<std::string>();
  t.display = j.value("display", t.normalized);
  t.origin = parse_origin(j.value("origin", std::string("emergent")));
  t.status = parse_status(j.value("status", std::string("candidate")));
  t.first_seen = j.value("first_seen", std::string());
  t.count = j.value("count", std::size_t{0});
  return t;
}

json assignments_json(const std::vector<TopicAssignment>& assignments) {
  json out = json::array();
  for (const auto& a : assignments) out.push_back({{"id", a.record_id}, {"topics", a.topics}});
  return out;
}

std::vector<TopicAssignment> assignments_from_json(const json& j) {
  std::vector<TopicAssignment> out;
  for (const auto& a : j) {
    out.push_back({a.at("id").get<std::string>(), a.at("topics").get<std::vector<std::string>>()});
  }
  return out;
}

json errors_json(const std::vector<RecordError>& errors) {
  json out = json::array();
  for (const auto& e : errors) out.push_back({{"id", e.record_id}, {"message", e.message}});
  return out;
}

json topic_counts(const std::vector<TopicAssignment>& assignments) {
  std::map<std::string, std::size_t> counts;
  for (const auto& a : assignments) {
    for (const auto& t : a.topics) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> sorted(counts.begin(), counts.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  json out = json::array();
  for (const auto& [topic, n] : sorted) out.push_back({{"topic", topic}, {"count", n}});
  return out;
}

void check_cancel(const RunControl& control) {
  if (control.cancelled && control.cancelled()) throw Error(Errc::Cancelled, "run cancelled");
}

}  // namespace

std::string content_type_for(const fs::path& path) {
  const std::string ext = text::to_lower(path.extension().string());
  if (ext == ".csv") return "text/csv";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".txt" || ext == ".md") return "text/plain; charset=utf-8";
  if (ext == ".json") return "application/json";
  if (ext == ".html") return "text/html; charset=utf-8";
  return "application/octet-stream";
}

json SessionHandle::to_json() const {
  return {{"id", id},
          {"created_at", format_rfc3339(created_at)},
          {"snapshot_ref", snapshot_ref},
          {"status", status == SessionStatus::Active ? "active" : "closed"}};
}

std::shared_ptr<Backend> make_backend(const GatewaySettings& settings) {
  auto live = [&settings]() {
    LiveConfig lc;
    lc.base_url = settings.base_url;
    if (const char* key = std::getenv(settings.api_key_env.c_str())) lc.api_key = key;
    if (lc.api_key.empty()) {
      throw Error(Errc::InvalidArgument, "live backend needs an API key in $" + settings.api_key_env);
    }
    return std::make_shared<LiveBackend>(lc);
  };
  switch (settings.mode) {
    case BackendMode::Live:
      return live();
    case BackendMode::Record:
      if (settings.cassette.empty()) throw Error(Errc::InvalidArgument, "record backend needs a cassette path");
      return std::make_shared<RecordingBackend>(live(), std::make_shared<Cassette>(settings.cassette));
    case BackendMode::Replay:
      // nothing recorded: every call misses
      if (settings.cassette.empty()) return std::make_shared<ReplayBackend>(std::make_shared<Cassette>());
      if (!fs::exists(settings.cassette)) {
        throw Error(Errc::Io, "cassette " + settings.cassette.string() + " does not exist");
      }
      return std::make_shared<ReplayBackend>(std::make_shared<Cassette>(settings.cassette));
  }
  throw Error(Errc::InvalidArgument, "unknown backend");
}

// ---------------------------------------------------------------------------

struct Service::Session {
  SessionHandle handle;
  std::mutex turn_mutex;
  SessionState state;
  std::unique_ptr<Kernel> kernel;
  fs::path dir;
  fs::path snapshot;
  fs::path manifest;
  std::string summary;
};

struct Service::TopicState {
  std::vector<TopicPhrase> round_one_topics;
  std::vector<TopicAssignment> round_one;
  std::optional<json> review;
  std::optional<TopicConfig> refined;
  std::vector<TopicAssignment> round_two;
};

Service::Service(ServiceConfig config, std::shared_ptr<Backend> backend, KernelFactory kernels)
    : config_(std::move(config)),
      kernels_(std::move(kernels)),
      store_(config_.data_dir / "records.jsonl"),
      jobs_(config_.server.workers) {
  if (!backend) backend = make_backend(config_.gateway);
  GatewayOptions go;
  go.defaults.model = config_.gateway.chat_model;
  go.defaults.temperature = config_.gateway.temperature;
  go.defaults.top_p = config_.gateway.top_p;
  go.defaults.max_tokens = config_.gateway.max_tokens;
  go.embedding_model = config_.gateway.embedding_model;
  go.rate_per_second = config_.gateway.rate_per_second;
  gateway_ = std::make_shared<LlmGateway>(std::move(backend), go);

  fs::create_directories(config_.data_dir);
  if (!config_.classification.dimensions.empty()) {
    dimensions_ = load_dimensions(config_.classification.dimensions);
  }
  for (const auto& d : dimensions_) store_.declare_dimension(d.schema());
  if (fs::exists(config_.data_dir / "records.jsonl")) store_.load();

  plugins_ = config_.kernel.plugins.empty() ? builtin_plugins()
                                            : load_plugin_manifest(config_.kernel.plugins);
  prompts_ = config_.planner.prompts.empty() ? PlannerPrompts::defaults()
                                             : PlannerPrompts::load(config_.planner.prompts);
}

Service::~Service() {
  std::lock_guard lock(sessions_mutex_);
  for (auto& [id, s] : sessions_) {
    if (s->kernel) {
      try {
        s->kernel->shutdown();
      } catch (const std::exception& e) {
        spdlog::warn("kernel shutdown for {}: {}", id, e.what());
      }
    }
  }
}

IngestReport Service::ingest(std::string_view data, RecordFormat format) {
  std::lock_guard lock(pipeline_mutex_);
  IngestReport report = store_.ingest(data, format);
  store_.save();
  return report;
}

const Dimension& Service::find_dimension(const std::string& name) const {
  const std::string n = text::normalize_label(name);
  for (const auto& d : dimensions_) {
    if (d.name == name || d.name == n) return d;
  }
  throw Error(Errc::UnknownDimension, name);
}

TopicConfig Service::base_topic_config() const {
  if (config_.topics.config.empty()) {
    TopicConfig cfg;
    cfg.task_description = "Summarize the main issues raised in each piece of user feedback.";
    cfg.topic_requirement = "Each topic is a short noun phrase naming one concrete issue.";
    return cfg;
  }
  return TopicConfig::load(config_.topics.config);
}

std::optional<Service::TopicState> Service::load_topic_state() const {
  const fs::path path = config_.data_dir / "topics.json";
  if (!fs::exists(path)) return std::nullopt;
  TopicState state;
  try {
    const json j = json::parse(read_file(path));
    for (const auto& t : j.at("round_one_topics")) state.round_one_topics.push_back(phrase_from_json(t));
    state.round_one = assignments_from_json(j.at("round_one"));
    if (j.contains("review") && !j["review"].is_null()) state.review = j["review"];
    if (j.contains("refined_config") && !j["refined_config"].is_null()) {
      state.refined = TopicConfig::from_json(j["refined_config"].dump());
    }
    if (j.contains("round_two")) state.round_two = assignments_from_json(j["round_two"]);
  } catch (const json::exception& e) {
    throw Error(Errc::Io, path.string() + ": " + e.what());
  }
  return state;
}

void Service::save_topic_state(const TopicState& state) const {
  json j;
  j["round_one_topics"] = json::array();
  for (const auto& t : state.round_one_topics) j["round_one_topics"].push_back(phrase_json(t));
  j["round_one"] = assignments_json(state.round_one);
  j["review"] = state.review ? *state.review : json(nullptr);
  j["refined_config"] = state.refined ? json::parse(state.refined->to_json()) : json(nullptr);
  j["round_two"] = assignments_json(state.round_two);
  write_file(config_.data_dir / "topics.json", j.dump(2) + "\n");
}

// --- pipeline jobs -----------------------------------------------------------

std::string Service::start_classification(const std::string& dimension,
                                          std::optional<std::size_t> k) {
  find_dimension(dimension);
  const std::size_t kk = k.value_or(config_.classification.k);
  return jobs_.submit("classify", [this, dimension, kk](const RunControl& control) {
    return run_classification(dimension, kk, control);
  });
}

json Service::run_classification(const std::string& dimension, std::size_t k,
                                 const RunControl& control) {
  std::lock_guard lock(pipeline_mutex_);
  const Dimension& dim = find_dimension(dimension);
  std::vector<FeedbackRecord> labeled;
  std::vector<FeedbackRecord> targets;
  for (auto& r : store_.query()) {
    (r.annotations.labels.count(dim.name) ? labeled : targets).push_back(std::move(r));
  }
  const DemoPool pool = DemoPool::build(*gateway_, labeled, dim.name);
  std::map<std::string, std::size_t> counts;
  json failures = json::array();
  std::size_t classified = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    check_cancel(control);
    try {
      const auto result = classify(targets[i], dim, k, pool, *gateway_);
      store_.annotate(targets[i].id, dim.name, result.label);
      ++counts[result.label];
      ++classified;
    } catch (const Error& e) {
      if (e.code() != Errc::UnparseableLabel) throw;
      failures.push_back({{"id", targets[i].id}, {"message", e.detail()}});
    }
    if (control.progress) control.progress(static_cast<double>(i + 1) / static_cast<double>(targets.size()));
  }
  store_.save();
  return {{"dimension", dim.name}, {"k", k},          {"already_labeled", labeled.size()},
          {"classified", classified}, {"unparseable", failures}, {"label_counts", counts}};
}

std::string Service::start_round_one() {
  return jobs_.submit("topics.round1", [this](const RunControl& c) { return run_round_one(c); });
}

json Service::run_round_one(const RunControl& control) {
  std::lock_guard lock(pipeline_mutex_);
  const auto records = store_.query({}, Order{"timestamp", true});
  if (records.empty()) throw Error(Errc::InvalidArgument, "no records ingested");
  TopicModeler modeler(*gateway_, base_topic_config());
  RoundResult result = modeler.run_round_one(records, control);
  if (result.assignments.empty() && !result.errors.empty()) {
    // nothing succeeded: surface the first failure instead of an empty round
    const std::string& msg = result.errors.front().message;
    const auto code = errc_from_string(msg.substr(0, msg.find(':'))).value_or(Errc::EmptyTopicOutput);
    throw Error(code, "no record could be assigned topics; first failure on " +
                          result.errors.front().record_id + ": " + msg);
  }
  for (const auto& a : result.assignments) store_.set_topics(a.record_id, a.topics, 1);
  store_.save();
  TopicState state;
  state.round_one_topics = result.topic_list;
  state.round_one = result.assignments;
  save_topic_state(state);
  return {{"records", records.size()},
          {"assigned", result.assignments.size()},
          {"topics", result.topic_list.size()},
          {"errors", errors_json(result.errors)},
          {"gateway_calls", result.gateway_calls}};
}

json Service::candidates() const {
  const auto state = load_topic_state();
  if (!state) throw Error(Errc::InvalidArgument, "no round-1 topics yet; run round 1 first");
  json out = json::array();
  for (const auto& t : review_candidates(state->round_one_topics).candidates) out.push_back(phrase_json(t));
  return out;
}

json Service::review(const ReviewDecisions& decisions) {
  std::lock_guard lock(pipeline_mutex_);
  auto state = load_topic_state();
  if (!state) throw Error(Errc::InvalidArgument, "no round-1 topics yet; run round 1 first");
  const ReviewOutcome outcome = apply_review(review_candidates(state->round_one_topics), decisions);
  const TopicConfig base = base_topic_config();
  TopicModeler modeler(*gateway_, base);
  auto clusters = cluster_topics(outcome.accepted, modeler, base.cluster_threshold);
  std::vector<TopicPhrase> refined;
  json cluster_json = json::array();
  for (auto& c : clusters) {
    c.summary = summarize_cluster(c, *gateway_);
    refined.push_back(*c.summary);
    json members = json::array();
    for (const auto& m : c.members) members.push_back(m.normalized);
    cluster_json.push_back({{"topic", c.summary->normalized}, {"members", members}});
  }
  const auto mapping = refinement_mapping(outcome, clusters);
  const TopicConfig cfg = refine_config(base, refined, mapping);

  json accepted = json::array();
  for (const auto& t : outcome.accepted) accepted.push_back(t.normalized);
  json map_json = json::object();
  for (const auto& [from, to] : mapping) map_json[from] = to ? json(*to) : json(nullptr);
  json refined_json = json::array();
  for (const auto& t : cfg.predefined_topics) refined_json.push_back(t.normalized);
  const json report = {{"accepted", accepted}, {"rejected", outcome.rejected},
                       {"clusters", cluster_json}, {"refined", refined_json},
                       {"mapping", map_json},
                       {"decisions", json::parse(review_decisions_to_json(decisions))}};
  state->review = report;
  state->refined = cfg;
  state->round_two.clear();
  save_topic_state(*state);
  return report;
}

std::string Service::start_round_two() {
  const auto state = load_topic_state();
  if (!state || !state->refined) {
    throw Error(Errc::InvalidArgument, "no reviewed topics yet; submit the review first");
  }
  return jobs_.submit("topics.round2", [this](const RunControl& c) { return run_round_two(c); });
}

json Service::run_round_two(const RunControl& control) {
  std::lock_guard lock(pipeline_mutex_);
  auto state = load_topic_state();
  if (!state || !state->refined) throw Error(Errc::InvalidArgument, "no reviewed topics yet");
  const auto records = store_.query({}, Order{"timestamp", true});
  std::vector<FeedbackRecord> with_round_one;
  std::set<std::string> ids;
  for (const auto& a : state->round_one) ids.insert(a.record_id);
  for (const auto& r : records) {
    if (ids.count(r.id)) with_round_one.push_back(r);
  }
  EmbeddingCosineScorer scorer(*gateway_);
  const auto index = build_round_one_index(with_round_one, state->round_one, *gateway_, scorer);
  check_cancel(control);
  RoundResult result = verbatim::run_round_two(records, *state->refined, index.get(), *gateway_, control);
  for (const auto& a : result.assignments) store_.set_topics(a.record_id, a.topics, 2);
  store_.save();
  state->round_two = result.assignments;
  save_topic_state(*state);
  return {{"records", records.size()},
          {"others_rate", others_rate(result.assignments)},
          {"topic_counts", topic_counts(result.assignments)},
          {"errors", errors_json(result.errors)},
          {"gateway_calls", result.gateway_calls}};
}

std::string Service::start_eval_classify(const std::string& dimension,
                                         std::optional<std::size_t> k,
                                         std::optional<std::uint64_t> seed) {
  const Dimension dim = find_dimension(dimension);
  const std::size_t kk = k.value_or(config_.classification.k);
  const std::uint64_t s = seed.value_or(config_.classification.seed);
  return jobs_.submit("eval.classify", [this, dim, kk, s](const RunControl&) {
    std::vector<FeedbackRecord> dataset;
    for (auto& r : store_.query()) {
      if (r.annotations.labels.count(dim.name)) dataset.push_back(std::move(r));
    }
    EvaluationOptions options;
    options.fold_top_n = config_.classification.fold_top_n;
    const AccuracyReport report = evaluate(dataset, dim, kk, s, *gateway_, options);
    return json::parse(report.to_json());
  });
}

std::string Service::start_eval_topics() {
  return jobs_.submit("eval.topics", [this](const RunControl&) { return run_eval_topics(); });
}

json Service::run_eval_topics() {
  const auto state = load_topic_state();
  if (!state) throw Error(Errc::InvalidArgument, "no topic assignments yet");
  const bool second = !state->round_two.empty();
  const auto& assignments = second ? state->round_two : state->round_one;
  std::map<std::string, std::string> corpus;
  for (const auto& r : store_.query()) corpus[r.id] = r.text;
  const CoherenceReport report = coherence(assignments, corpus);
  json topics = json::array();
  for (const auto& t : report.topics) {
    topics.push_back({{"topic", t.topic}, {"support", t.support}, {"coherence", t.coherence},
                      {"keywords", t.keywords}});
  }
  return {{"round", second ? 2 : 1},
          {"records", assignments.size()},
          {"others_rate", others_rate(assignments)},
          {"mean_coherence", report.mean()},
          {"topics", topics},
          {"skipped", report.skipped}};
}

JobInfo Service::job(const std::string& id) const { return jobs_.info(id); }
JobInfo Service::cancel_job(const std::string& id) { return jobs_.cancel(id); }
JobInfo Service::wait_job(const std::string& id) { return jobs_.wait(id); }

// --- sessions ----------------------------------------------------------------

std::string Service::data_summary() const {
  const std::string csv = store_.export_records({}, RecordFormat::Csv);
  const std::string header = text::trim(csv.substr(0, csv.find('\n')));
  const auto records = store_.query({}, Order{"timestamp", true});
  std::ostringstream out;
  out << "Table df has " << records.size() << " feedback records.\n";
  out << "Columns: " << text::join(text::split(header, ','), ", ") << "\n";
  out << "Label columns can also be named by their dimension, e.g. column \"sentiment\" for "
         "label.sentiment. The topics column holds ';'-separated topics.\n";
  for (const auto& d : dimensions_) {
    out << "Labels for " << d.name << ": " << text::join(d.label_set, ", ") << "\n";
  }
  std::vector<TopicAssignment> assignments;
  for (const auto& r : records) {
    if (!r.annotations.topics.empty()) assignments.push_back({r.id, r.annotations.topics});
  }
  const json counts = topic_counts(assignments);
  if (!counts.empty()) {
    std::vector<std::string> parts;
    for (std::size_t i = 0; i < counts.size() && i < kSummaryTopics; ++i) {
      parts.push_back(counts[i]["topic"].get<std::string>() + " (" +
                      std::to_string(counts[i]["count"].get<std::size_t>()) + ")");
    }
    out << "Most frequent topics: " << text::join(parts, ", ") << "\n";
  }
  if (!records.empty()) {
    out << "Time range: " << format_rfc3339(records.front().timestamp) << " to "
        << format_rfc3339(records.back().timestamp) << "\n";
  }
  return text::trim(out.str());
}

std::unique_ptr<Kernel> Service::make_kernel(const std::string& session_id) const {
  if (kernels_) return kernels_(session_id);
  if (config_.kernel.mode == KernelMode::Process) {
    return std::make_unique<ProcessKernel>(session_id, config_.kernel.command);
  }
  return std::make_unique<InProcessKernel>(session_id);
}

SessionHandle Service::create_session() {
  auto s = std::make_shared<Session>();
  s->handle.id = "s-" + text::random_token(8);
  s->handle.created_at = now_utc();
  s->dir = config_.data_dir / "sessions" / s->handle.id;
  s->state.workspace = s->dir / "workspace";
  s->snapshot = s->dir / "snapshot.csv";
  s->manifest = s->dir / "plugins.json";
  fs::create_directories(s->state.workspace);
  const std::string snapshot = store_.export_records({}, RecordFormat::Csv);
  write_file(s->snapshot, snapshot);
  write_plugin_manifest(s->manifest, plugins_);
  s->handle.snapshot_ref = "sha256:" + text::sha256_hex(snapshot).substr(0, 16);
  s->summary = data_summary();
  std::lock_guard lock(sessions_mutex_);
  sessions_[s->handle.id] = s;
  return s->handle;
}

std::shared_ptr<Service::Session> Service::find_session(const std::string& id) const {
  std::lock_guard lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(Errc::UnknownSession, "no active session " + id);
  return it->second;
}

SessionHandle Service::session(const std::string& session_id) const {
  return find_session(session_id)->handle;
}

AgentResponse Service::ask(const std::string& session_id, const std::string& question) {
  if (text::trim(question).empty()) throw Error(Errc::InvalidArgument, "question is empty");
  auto s = find_session(session_id);
  std::lock_guard turn(s->turn_mutex);
  if (s->handle.status != SessionStatus::Active) {
    throw Error(Errc::UnknownSession, "session " + session_id + " is closed");
  }
  if (!s->kernel) {
    auto kernel = make_kernel(session_id);
    KernelInit init;
    init.snapshot = s->snapshot;
    init.manifest = s->manifest;
    init.workspace = s->state.workspace;
    init.timeout = config_.kernel.timeout;
    init.workspace_quota = config_.kernel.workspace_quota;
    kernel->init(init);
    s->kernel = std::move(kernel);
  }
  CodeGenerator codegen(*gateway_, plugins_);
  PlannerOptions options;
  options.max_replans = config_.planner.max_replans;
  options.reflection = config_.planner.reflection;
  options.history_turns = config_.planner.history_turns;
  QaPlanner planner(*gateway_, codegen, *s->kernel, s->summary, options, prompts_);
  AgentResponse response = planner.ask(s->state, question);
  {
    std::lock_guard lock(sessions_mutex_);
    for (auto& a : response.artifacts) {
      const std::string token = text::random_token(16);
      tokens_[token] = {session_id, s->state.workspace / a.path};
      a.url = "/artifacts/" + token;
    }
  }
  s->state.history.back().response = response;
  return response;
}

std::vector<Turn> Service::history(const std::string& session_id) const {
  auto s = find_session(session_id);
  std::lock_guard turn(s->turn_mutex);
  return s->state.history;
}

void Service::close_session(const std::string& session_id) {
  auto s = find_session(session_id);
  std::lock_guard turn(s->turn_mutex);
  if (s->kernel) {
    try {
      s->kernel->shutdown();
    } catch (const std::exception& e) {
      spdlog::warn("kernel shutdown for {}: {}", session_id, e.what());
    }
    s->kernel.reset();
  }
  s->handle.status = SessionStatus::Closed;
  std::lock_guard lock(sessions_mutex_);
  std::erase_if(tokens_, [&](const auto& kv) { return kv.second.session_id == session_id; });
  sessions_.erase(session_id);
}

ArtifactFile Service::artifact(const std::string& token) const {
  std::lock_guard lock(sessions_mutex_);
  const auto it = tokens_.find(token);
  if (it == tokens_.end() || !fs::is_regular_file(it->second.path)) {
    throw Error(Errc::UnknownId, "no artifact for this token");
  }
  return {it->second.path, content_type_for(it->second.path)};
}

}  // namespace verbatim
