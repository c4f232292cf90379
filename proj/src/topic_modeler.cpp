#include "verbatim/topic_modeler.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "verbatim/csv.hpp"
#include "verbatim/error.hpp"
#include "verbatim/text.hpp"

namespace verbatim {

using nlohmann::json;

namespace {

constexpr std::size_t kEmbedBatch = 256;

std::string topic_reask_suffix() {
  return "\n\nRespond with at least one topic. Separate multiple topics with "
         "\"; \".";
}

std::optional<std::size_t> index_of(const std::vector<TopicPhrase>& list,
                                    std::string_view normalized) {
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (list[i].normalized == normalized) return i;
  }
  return std::nullopt;
}

void check_cancel(const RunControl& control) {
  if (control.cancelled && control.cancelled()) {
    throw Error(Errc::Cancelled, "run cancelled");
  }
}

void report_progress(const RunControl& control, std::size_t done, std::size_t total) {
  if (control.progress && total > 0) {
    control.progress(static_cast<double>(done) / static_cast<double>(total));
  }
}

void require_time_order(const std::vector<FeedbackRecord>& records) {
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].timestamp < records[i - 1].timestamp) {
      throw Error(Errc::InvalidArgument,
                  "records must be ordered by timestamp (record " +
                      records[i].id + " precedes " + records[i - 1].id + ")");
    }
  }
}

// Adds or counts the outcome phrases in the evolving list.
TopicAssignment absorb(const FeedbackRecord& record,
                       const TopicModeler::Outcome& outcome,
                       std::vector<TopicPhrase>& list) {
  TopicAssignment assignment{record.id, {}};
  if (outcome.abstained) {
    assignment.topics.emplace_back(kOthersTopic);
    return assignment;
  }
  for (const auto& phrase : outcome.phrases) {
    if (auto i = index_of(list, phrase.normalized)) {
      ++list[*i].count;
    } else {
      TopicPhrase added = phrase;
      added.first_seen = record.id;
      added.count = 1;
      list.push_back(std::move(added));
    }
    assignment.topics.push_back(phrase.normalized);
  }
  return assignment;
}

}  // namespace

std::string_view to_string(TopicOrigin origin) {
  switch (origin) {
    case TopicOrigin::Predefined: return "predefined";
    case TopicOrigin::Emergent: return "emergent";
    case TopicOrigin::ClusterSummary: return "cluster_summary";
  }
  return "emergent";
}

std::string_view to_string(TopicStatus status) {
  switch (status) {
    case TopicStatus::Candidate: return "candidate";
    case TopicStatus::Accepted: return "accepted";
    case TopicStatus::Rejected: return "rejected";
  }
  return "candidate";
}

TopicPhrase TopicPhrase::make(std::string_view display, TopicOrigin origin) {
  TopicPhrase p;
  p.display = text::truncate_words(text::trim(display), kMaxTopicWords);
  p.normalized = text::truncate_words(text::normalize_phrase(display), kMaxTopicWords);
  if (p.normalized.empty()) {
    throw Error(Errc::InvalidArgument, "empty topic phrase");
  }
  p.origin = origin;
  return p;
}

bool TopicAssignment::is_others() const {
  return topics.size() == 1 && topics.front() == kOthersTopic;
}

void TopicConfig::validate() const {
  if (max_topics_per_record < 1) {
    throw Error(Errc::InvalidArgument, "max_topics_per_record must be >= 1");
  }
  std::set<std::string> seen;
  for (const auto& t : predefined_topics) {
    if (!seen.insert(t.normalized).second) {
      throw Error(Errc::InvalidArgument, "duplicate predefined topic '" + t.normalized + "'");
    }
  }
}

TopicConfig TopicConfig::from_json(std::string_view json_text) {
  TopicConfig cfg;
  try {
    const json j = json::parse(json_text);
    cfg.task_description = j.value("task_description", std::string());
    cfg.topic_requirement = j.value("topic_requirement", std::string());
    for (const auto& t : j.value("predefined_topics", std::vector<std::string>{})) {
      cfg.predefined_topics.push_back(TopicPhrase::make(t, TopicOrigin::Predefined));
    }
    if (j.contains("fixed_demos")) {
      for (const auto& d : j.at("fixed_demos")) {
        TopicDemo demo{d.at("feedback").get<std::string>(), {}};
        for (const auto& t : d.at("topics")) {
          demo.topics.push_back(text::normalize_phrase(t.get<std::string>()));
        }
        cfg.fixed_demos.push_back(std::move(demo));
      }
    }
    cfg.max_topics_per_record = j.value("max_topics_per_record", cfg.max_topics_per_record);
    cfg.n_extra_demos = j.value("n_extra_demos", cfg.n_extra_demos);
    cfg.quality_threshold = j.value("quality_threshold", cfg.quality_threshold);
    cfg.dedupe_threshold = j.value("dedupe_threshold", cfg.dedupe_threshold);
    cfg.cluster_threshold = j.value("cluster_threshold", cfg.cluster_threshold);
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("topic config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string TopicConfig::to_json() const {
  json j;
  j["task_description"] = task_description;
  j["topic_requirement"] = topic_requirement;
  json topics = json::array();
  for (const auto& t : predefined_topics) topics.push_back(t.display);
  j["predefined_topics"] = topics;
  json demos = json::array();
  for (const auto& d : fixed_demos) demos.push_back({{"feedback", d.feedback}, {"topics", d.topics}});
  j["fixed_demos"] = demos;
  j["max_topics_per_record"] = max_topics_per_record;
  j["n_extra_demos"] = n_extra_demos;
  j["quality_threshold"] = quality_threshold;
  j["dedupe_threshold"] = dedupe_threshold;
  j["cluster_threshold"] = cluster_threshold;
  return j.dump(2);
}

TopicConfig TopicConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return from_json(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

// ---------------------------------------------------------------------------

std::vector<std::string> parse_topic_completion(std::string_view completion) {
  std::string body = text::trim(completion);
  const std::string lowered = text::to_lower(body);
  if (text::starts_with(lowered, "topics:")) {
    body = body.substr(7);
  } else if (text::starts_with(lowered, "topic:")) {
    body = body.substr(6);
  }
  for (auto& c : body) {
    if (c == '\n' || c == '\r') c = ';';
  }
  std::vector<std::string> out;
  for (const auto& part : text::split(body, ';')) {
    std::string phrase =
        text::truncate_words(text::normalize_phrase(part), kMaxTopicWords);
    if (phrase.empty()) continue;
    if (std::find(out.begin(), out.end(), phrase) == out.end()) {
      out.push_back(std::move(phrase));
    }
  }
  return out;
}

TopicModeler::TopicModeler(LlmGateway& gateway, TopicConfig config)
    : gateway_(gateway), config_(std::move(config)) {
  config_.validate();
}

void TopicModeler::warm_cache(const std::vector<std::string>& phrases) {
  std::vector<std::string> missing;
  for (const auto& p : phrases) {
    if (cache_.count(p) == 0 &&
        std::find(missing.begin(), missing.end(), p) == missing.end()) {
      missing.push_back(p);
    }
  }
  for (std::size_t start = 0; start < missing.size(); start += kEmbedBatch) {
    const std::size_t end = std::min(missing.size(), start + kEmbedBatch);
    std::vector<std::string> batch(missing.begin() + static_cast<std::ptrdiff_t>(start),
                                   missing.begin() + static_cast<std::ptrdiff_t>(end));
    auto vectors = gateway_.embed(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      cache_.emplace(batch[i], std::move(vectors[i]));
    }
  }
}

const EmbeddingVector& TopicModeler::phrase_embedding(const std::string& normalized) {
  warm_cache({normalized});
  return cache_.at(normalized);
}

std::string TopicModeler::render_prompt(const FeedbackRecord& record,
                                        const std::vector<TopicPhrase>& topic_list,
                                        const std::vector<ExtraDemo>& extra_demos) const {
  std::ostringstream out;
  out << "Task description: " << config_.task_description << "\n";
  out << "Topic requirement: " << config_.topic_requirement << "\n";
  out << "Output format: give one or multiple topics for the feedback, at most "
      << config_.max_topics_per_record
      << ", separated by \"; \". Reuse topics from the predefined topic list "
         "whenever one fits. When none fits, create a new concise topic of at "
         "most "
      << kMaxTopicWords << " words. Answer \"others\" only when no topic applies.\n";
  out << "Predefined topic list: ";
  if (topic_list.empty()) {
    out << "(none yet)";
  } else {
    std::vector<std::string> names;
    names.reserve(topic_list.size());
    for (const auto& t : topic_list) names.push_back(t.normalized);
    out << text::join(names, "; ");
  }
  out << "\n";
  const bool has_demos = !config_.fixed_demos.empty() || !extra_demos.empty();
  if (has_demos) {
    out << "\nExamples:\n";
    for (const auto& d : config_.fixed_demos) {
      out << "\nFeedback: " << d.feedback << "\nTopics: " << text::join(d.topics, "; ") << "\n";
    }
    for (const auto& d : extra_demos) {
      out << "\nFeedback: " << d.feedback << "\nTopics: " << text::join(d.topics, "; ") << "\n";
    }
  }
  out << "\nFeedback: " << record.text << "\nTopics:";
  return out.str();
}

TopicModeler::Outcome TopicModeler::assign_topics(
    const FeedbackRecord& record, const std::vector<TopicPhrase>& topic_list,
    const std::vector<ExtraDemo>& extra_demos) {
  const std::string prompt = render_prompt(record, topic_list, extra_demos);
  Outcome outcome;
  std::vector<std::string> raw = parse_topic_completion(gateway_.complete(prompt));
  outcome.gateway_calls = 1;
  if (raw.empty()) {
    raw = parse_topic_completion(gateway_.complete(prompt + topic_reask_suffix()));
    outcome.gateway_calls = 2;
  }
  if (raw.empty()) {
    throw Error(Errc::EmptyTopicOutput, "no topics for record " + record.id);
  }

  std::vector<std::string> named;
  bool saw_others = false;
  for (auto& p : raw) {
    if (p == kOthersTopic) {
      saw_others = true;
    } else {
      named.push_back(p);
    }
  }
  if (named.empty()) {
    outcome.abstained = saw_others;
    return outcome;
  }

  std::vector<std::string> needs_embedding;
  for (const auto& p : named) {
    if (!index_of(topic_list, p)) needs_embedding.push_back(p);
  }
  if (!needs_embedding.empty()) {
    std::vector<std::string> all = needs_embedding;
    for (const auto& t : topic_list) all.push_back(t.normalized);
    warm_cache(all);
  }

  for (const auto& p : named) {
    if (outcome.phrases.size() >= config_.max_topics_per_record) break;
    std::optional<TopicPhrase> resolved;
    if (auto i = index_of(topic_list, p)) {
      resolved = topic_list[*i];
    } else {
      const EmbeddingVector& v = cache_.at(p);
      double best = -2.0;
      std::optional<TopicPhrase> match;
      auto consider = [&](const TopicPhrase& candidate) {
        const double s = cosine(v, phrase_embedding(candidate.normalized));
        if (s > best) {
          best = s;
          match = candidate;
        }
      };
      for (const auto& t : topic_list) consider(t);
      for (const auto& t : outcome.phrases) consider(t);
      if (match && best >= config_.dedupe_threshold) {
        resolved = match;
      } else {
        resolved = TopicPhrase::make(p, TopicOrigin::Emergent);
      }
    }
    const bool duplicate = std::any_of(
        outcome.phrases.begin(), outcome.phrases.end(),
        [&](const TopicPhrase& t) { return t.normalized == resolved->normalized; });
    if (!duplicate) outcome.phrases.push_back(std::move(*resolved));
  }
  return outcome;
}

RoundResult TopicModeler::run_round_one(const std::vector<FeedbackRecord>& records,
                                        const RunControl& control) {
  require_time_order(records);
  RoundResult result;
  result.topic_list = config_.predefined_topics;
  for (auto& t : result.topic_list) t.count = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    check_cancel(control);
    const FeedbackRecord& record = records[i];
    try {
      const Outcome outcome = assign_topics(record, result.topic_list);
      result.gateway_calls += static_cast<std::size_t>(outcome.gateway_calls);
      result.assignments.push_back(absorb(record, outcome, result.topic_list));
    } catch (const Error& e) {
      if (e.code() == Errc::Cancelled) throw;
      result.errors.push_back({record.id, e.what()});
    }
    result.list_size_trace.push_back(result.topic_list.size());
    report_progress(control, i + 1, records.size());
  }
  return result;
}

// ---------------------------------------------------------------------------

ReviewDecisions parse_review_decisions(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::InvalidArgument, std::string("review decisions: ") + e.what());
  }
  if (!doc.is_object()) {
    throw Error(Errc::InvalidArgument, "review decisions must be a JSON object");
  }
  ReviewDecisions out;
  for (const auto& [topic, value] : doc.items()) {
    if (!value.is_string()) {
      throw Error(Errc::InvalidArgument, "decision for '" + topic + "' must be a string");
    }
    const std::string raw = value.get<std::string>();
    const std::string action = text::to_lower(text::trim(raw));
    ReviewDecision decision;
    if (action == "accept") {
      decision.action = ReviewAction::Accept;
    } else if (action == "reject") {
      decision.action = ReviewAction::Reject;
    } else if (text::starts_with(action, "rename:")) {
      decision.action = ReviewAction::Rename;
      decision.new_name = text::trim(text::trim(raw).substr(7));
      if (text::normalize_phrase(decision.new_name).empty()) {
        throw Error(Errc::InvalidArgument, "rename of '" + topic + "' has no new name");
      }
    } else {
      throw Error(Errc::InvalidArgument,
                  "unknown decision '" + raw + "' for '" + topic + "'");
    }
    out[text::normalize_phrase(topic)] = std::move(decision);
  }
  return out;
}

std::string review_decisions_to_json(const ReviewDecisions& decisions) {
  json doc = json::object();
  for (const auto& [topic, d] : decisions) {
    switch (d.action) {
      case ReviewAction::Accept: doc[topic] = "accept"; break;
      case ReviewAction::Reject: doc[topic] = "reject"; break;
      case ReviewAction::Rename: doc[topic] = "rename:" + d.new_name; break;
    }
  }
  return doc.dump();
}

ReviewSession review_candidates(const std::vector<TopicPhrase>& topic_list) {
  ReviewSession session;
  for (const auto& t : topic_list) {
    if (t.status != TopicStatus::Rejected) session.candidates.push_back(t);
  }
  return session;
}

ReviewOutcome apply_review(const ReviewSession& session,
                           const ReviewDecisions& decisions) {
  std::vector<std::string> missing;
  for (const auto& c : session.candidates) {
    if (decisions.count(c.normalized) == 0) missing.push_back(c.normalized);
  }
  if (!missing.empty()) {
    throw Error(Errc::IncompleteReview, "no decision for: " + text::join(missing, "; "));
  }
  for (const auto& [topic, _] : decisions) {
    if (!index_of(session.candidates, topic)) {
      throw Error(Errc::InvalidArgument, "decision for unknown topic '" + topic + "'");
    }
  }

  ReviewOutcome outcome;
  auto add_accepted = [&outcome](TopicPhrase phrase) {
    phrase.status = TopicStatus::Accepted;
    if (auto i = index_of(outcome.accepted, phrase.normalized)) {
      outcome.accepted[*i].count += phrase.count;
    } else {
      outcome.accepted.push_back(std::move(phrase));
    }
  };
  for (const auto& c : session.candidates) {
    const ReviewDecision& d = decisions.at(c.normalized);
    switch (d.action) {
      case ReviewAction::Accept:
        add_accepted(c);
        outcome.mapping[c.normalized] = c.normalized;
        break;
      case ReviewAction::Reject:
        outcome.rejected.push_back(c.normalized);
        outcome.mapping[c.normalized] = std::nullopt;
        spdlog::info("review rejected topic '{}'", c.normalized);
        break;
      case ReviewAction::Rename: {
        TopicPhrase renamed = TopicPhrase::make(d.new_name, c.origin);
        renamed.first_seen = c.first_seen;
        renamed.count = c.count;
        outcome.mapping[c.normalized] = renamed.normalized;
        add_accepted(std::move(renamed));
        break;
      }
    }
  }
  return outcome;
}

// ---------------------------------------------------------------------------

Agglomeration agglomerate(const std::vector<EmbeddingVector>& points, double threshold) {
  const std::size_t n = points.size();
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      dist[i][j] = dist[j][i] = 1.0 - cosine(points[i], points[j]);
    }
  }
  // Clusters are addressed by their lowest member index.
  std::vector<std::vector<std::size_t>> members(n);
  std::vector<bool> active(n, true);
  for (std::size_t i = 0; i < n; ++i) members[i] = {i};

  Agglomeration result;
  while (true) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = n;
    std::size_t bj = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        if (dist[i][j] < best) {  // strict: first pair in (i, j) order wins ties
          best = dist[i][j];
          bi = i;
          bj = j;
        }
      }
    }
    if (bi == n || !(best < threshold)) break;
    const double wi = static_cast<double>(members[bi].size());
    const double wj = static_cast<double>(members[bj].size());
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      const double d = (wi * dist[bi][k] + wj * dist[bj][k]) / (wi + wj);
      dist[bi][k] = dist[k][bi] = d;
    }
    members[bi].insert(members[bi].end(), members[bj].begin(), members[bj].end());
    std::sort(members[bi].begin(), members[bi].end());
    members[bj].clear();
    active[bj] = false;
    result.trace.push_back({bi, bj, best, members[bi].size()});
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (active[i]) result.clusters.push_back(members[i]);
  }
  return result;
}

std::vector<TopicCluster> cluster_topics(const std::vector<TopicPhrase>& accepted,
                                         TopicModeler& modeler, double threshold) {
  if (accepted.empty()) return {};
  std::vector<EmbeddingVector> points;
  points.reserve(accepted.size());
  for (const auto& t : accepted) points.push_back(modeler.phrase_embedding(t.normalized));
  const Agglomeration agg = agglomerate(points, threshold);
  std::vector<TopicCluster> clusters;
  for (const auto& group : agg.clusters) {
    TopicCluster cluster;
    std::vector<double> centroid(points.front().dim(), 0.0);
    for (std::size_t i : group) {
      cluster.members.push_back(accepted[i]);
      for (std::size_t d = 0; d < centroid.size(); ++d) {
        centroid[d] += points[i].values[d];
      }
    }
    std::vector<float> c(centroid.size());
    for (std::size_t d = 0; d < centroid.size(); ++d) {
      c[d] = static_cast<float>(centroid[d] / static_cast<double>(group.size()));
    }
    cluster.centroid = EmbeddingVector(std::move(c));
    clusters.push_back(std::move(cluster));
  }
  return clusters;
}

TopicPhrase summarize_cluster(const TopicCluster& cluster, LlmGateway& gateway) {
  if (cluster.members.empty()) {
    throw Error(Errc::InvalidArgument, "cannot summarize an empty cluster");
  }
  if (cluster.members.size() == 1) return cluster.members.front();

  std::ostringstream prompt;
  prompt << "The following topic phrases were grouped together because they "
            "describe similar feedback:\n";
  std::size_t total = 0;
  for (const auto& m : cluster.members) {
    prompt << "- " << m.normalized << "\n";
    total += m.count;
  }
  prompt << "Summarize them into one high-level topic phrase of at most "
         << kMaxTopicWords << " words. Reply with the phrase only.";
  const std::string completion = gateway.complete(prompt.str());

  std::string phrase;
  for (const auto& line : text::split(completion, '\n')) {
    phrase = text::truncate_words(text::normalize_phrase(line), kMaxTopicWords);
    if (!phrase.empty()) break;
  }
  TopicPhrase summary = phrase.empty()
                            ? cluster.members.front()
                            : TopicPhrase::make(phrase, TopicOrigin::ClusterSummary);
  summary.origin = TopicOrigin::ClusterSummary;
  summary.status = TopicStatus::Accepted;
  summary.count = total;
  summary.first_seen = cluster.members.front().first_seen;
  return summary;
}

std::map<std::string, std::optional<std::string>> refinement_mapping(
    const ReviewOutcome& review, const std::vector<TopicCluster>& clusters) {
  std::map<std::string, std::string> to_summary;
  for (const auto& c : clusters) {
    const std::string target =
        c.summary ? c.summary->normalized : c.members.front().normalized;
    for (const auto& m : c.members) to_summary[m.normalized] = target;
  }
  std::map<std::string, std::optional<std::string>> mapping;
  for (const auto& [old, renamed] : review.mapping) {
    if (!renamed) {
      mapping[old] = std::nullopt;
      continue;
    }
    auto it = to_summary.find(*renamed);
    mapping[old] = it == to_summary.end() ? *renamed : it->second;
  }
  return mapping;
}

TopicConfig refine_config(
    const TopicConfig& base, const std::vector<TopicPhrase>& refined,
    const std::map<std::string, std::optional<std::string>>& mapping) {
  TopicConfig cfg = base;
  cfg.predefined_topics.clear();
  for (const auto& t : refined) {
    if (index_of(cfg.predefined_topics, t.normalized)) continue;
    TopicPhrase p = t;
    p.status = TopicStatus::Accepted;
    cfg.predefined_topics.push_back(std::move(p));
  }
  cfg.fixed_demos.clear();
  for (const auto& demo : base.fixed_demos) {
    TopicDemo updated{demo.feedback, {}};
    for (const auto& t : demo.topics) {
      std::optional<std::string> mapped = t;
      if (auto it = mapping.find(t); it != mapping.end()) mapped = it->second;
      if (!mapped) continue;
      if (std::find(updated.topics.begin(), updated.topics.end(), *mapped) ==
          updated.topics.end()) {
        updated.topics.push_back(*mapped);
      }
    }
    if (!updated.topics.empty()) cfg.fixed_demos.push_back(std::move(updated));
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------

double EmbeddingCosineScorer::score(std::string_view topic_phrase,
                                    std::string_view feedback) {
  auto vectors = gateway_.embed({std::string(topic_phrase), std::string(feedback)});
  return cosine(vectors[0], vectors[1]);
}

std::shared_ptr<const IndexSnapshot> build_round_one_index(
    const std::vector<FeedbackRecord>& records,
    const std::vector<TopicAssignment>& assignments, LlmGateway& gateway,
    QualityScorer& scorer) {
  std::map<std::string, const TopicAssignment*> by_id;
  for (const auto& a : assignments) {
    if (!a.topics.empty() && !a.is_others()) by_id[a.record_id] = &a;
  }
  std::vector<const FeedbackRecord*> usable;
  for (const auto& r : records) {
    if (by_id.count(r.id) > 0) usable.push_back(&r);
  }
  EmbeddingIndex index;
  for (std::size_t start = 0; start < usable.size(); start += kEmbedBatch) {
    const std::size_t end = std::min(usable.size(), start + kEmbedBatch);
    std::vector<std::string> texts;
    for (std::size_t i = start; i < end; ++i) texts.push_back(usable[i]->text);
    auto vectors = gateway.embed(texts);
    for (std::size_t i = start; i < end; ++i) {
      const FeedbackRecord& r = *usable[i];
      const auto& topics = by_id.at(r.id)->topics;
      const double quality = scorer.score(text::join(topics, "; "), r.text);
      index.add(r.id, std::move(vectors[i - start]), {r.text, {}, topics, quality});
    }
  }
  return index.finalize();
}

std::vector<ExtraDemo> retrieve_extra_demos(const FeedbackRecord& target,
                                            std::size_t n, double quality_threshold,
                                            const IndexSnapshot& round_one,
                                            LlmGateway& gateway) {
  if (n == 0 || round_one.size() == 0) return {};
  const EmbeddingVector query = gateway.embed_one(target.text);
  auto hits = round_one.top_k(query, n, [&](const IndexEntry& e) {
    return e.id != target.id && e.payload.quality >= quality_threshold;
  });
  std::reverse(hits.begin(), hits.end());
  std::vector<ExtraDemo> out;
  out.reserve(hits.size());
  for (const auto& h : hits) {
    const IndexEntry* e = round_one.find(h.id);
    out.push_back({e->id, e->payload.text, e->payload.topics, h.score, e->payload.quality});
  }
  return out;
}

RoundResult run_round_two(const std::vector<FeedbackRecord>& records,
                          const TopicConfig& refined_config,
                          const IndexSnapshot* round_one_index, LlmGateway& gateway,
                          const RunControl& control) {
  require_time_order(records);
  TopicModeler modeler(gateway, refined_config);
  RoundResult result;
  result.topic_list = refined_config.predefined_topics;
  for (auto& t : result.topic_list) t.count = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    check_cancel(control);
    const FeedbackRecord& record = records[i];
    try {
      std::vector<ExtraDemo> extra;
      if (round_one_index != nullptr) {
        extra = retrieve_extra_demos(record, refined_config.n_extra_demos,
                                     refined_config.quality_threshold,
                                     *round_one_index, gateway);
      }
      const auto outcome = modeler.assign_topics(record, result.topic_list, extra);
      result.gateway_calls += static_cast<std::size_t>(outcome.gateway_calls);
      result.assignments.push_back(absorb(record, outcome, result.topic_list));
    } catch (const Error& e) {
      if (e.code() == Errc::Cancelled) throw;
      result.errors.push_back({record.id, e.what()});
      result.assignments.push_back({record.id, {std::string(kOthersTopic)}});
    }
    result.list_size_trace.push_back(result.topic_list.size());
    report_progress(control, i + 1, records.size());
  }
  return result;
}

// ---------------------------------------------------------------------------

double CoherenceReport::mean() const {
  if (topics.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& t : topics) sum += t.coherence;
  return sum / static_cast<double>(topics.size());
}

std::string CoherenceReport::to_csv() const {
  std::string out = csv::format_row({"topic", "support", "coherence", "keywords"});
  for (const auto& t : topics) {
    std::ostringstream value;
    value.precision(6);
    value << std::fixed << t.coherence;
    out += csv::format_row(
        {t.topic, std::to_string(t.support), value.str(), text::join(t.keywords, " ")});
  }
  return out;
}

std::vector<std::string> top_keywords(const std::vector<std::string>& documents,
                                      std::size_t n) {
  std::map<std::string, std::size_t> tf;
  for (const auto& doc : documents) {
    for (const auto& token : text::tokenize(doc)) {
      if (!text::is_stopword(token)) ++tf[token];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(tf.begin(), tf.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < n; ++i) out.push_back(ranked[i].first);
  return out;
}

double npmi_coherence(const std::vector<std::string>& keywords,
                      const std::vector<std::string>& corpus) {
  if (keywords.size() < 2 || corpus.empty()) return 0.0;
  std::vector<std::set<std::string>> docs;
  docs.reserve(corpus.size());
  for (const auto& d : corpus) {
    const auto tokens = text::tokenize(d);
    docs.emplace_back(tokens.begin(), tokens.end());
  }
  const double total = static_cast<double>(docs.size());
  auto doc_freq = [&](const std::string& a, const std::string* b) {
    std::size_t count = 0;
    for (const auto& d : docs) {
      if (d.count(a) > 0 && (b == nullptr || d.count(*b) > 0)) ++count;
    }
    return static_cast<double>(count);
  };
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < keywords.size(); ++i) {
    for (std::size_t j = i + 1; j < keywords.size(); ++j) {
      const double pi = doc_freq(keywords[i], nullptr) / total;
      const double pj = doc_freq(keywords[j], nullptr) / total;
      const double pij = doc_freq(keywords[i], &keywords[j]) / total;
      double npmi = 0.0;
      if (pij == 0.0) {
        npmi = -1.0;
      } else if (pij == 1.0) {
        npmi = 1.0;
      } else {
        npmi = std::log(pij / (pi * pj)) / -std::log(pij);
      }
      sum += npmi;
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

CoherenceReport coherence(const std::vector<TopicAssignment>& assignments,
                          const std::map<std::string, std::string>& corpus,
                          const std::vector<std::string>& topics) {
  std::map<std::string, std::vector<std::string>> support;
  std::vector<std::string> order;
  for (const auto& a : assignments) {
    if (a.is_others()) continue;
    auto doc = corpus.find(a.record_id);
    if (doc == corpus.end()) continue;
    for (const auto& t : a.topics) {
      if (support.count(t) == 0) order.push_back(t);
      support[t].push_back(doc->second);
    }
  }
  if (!topics.empty()) order = topics;

  std::vector<std::string> all_docs;
  all_docs.reserve(corpus.size());
  for (const auto& [_, text] : corpus) all_docs.push_back(text);

  CoherenceReport report;
  for (const auto& topic : order) {
    auto it = support.find(topic);
    if (it == support.end() || it->second.empty()) {
      spdlog::warn("topic '{}' has no supporting records; skipped", topic);
      report.skipped.push_back(topic);
      continue;
    }
    TopicCoherence tc;
    tc.topic = topic;
    tc.support = it->second.size();
    tc.keywords = top_keywords(it->second, 10);
    tc.coherence = npmi_coherence(tc.keywords, all_docs);
    report.topics.push_back(std::move(tc));
  }
  return report;
}

double others_rate(const std::vector<TopicAssignment>& assignments) {
  if (assignments.empty()) return 0.0;
  const auto others = std::count_if(assignments.begin(), assignments.end(),
                                    [](const auto& a) { return a.is_others(); });
  return static_cast<double>(others) / static_cast<double>(assignments.size());
}

}  // namespace verbatim
