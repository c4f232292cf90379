#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "verbatim/embedding_index.hpp"
#include "verbatim/llm_gateway.hpp"
#include "verbatim/record_store.hpp"

namespace verbatim {

inline constexpr std::size_t kMaxTopicWords = 8;
inline constexpr std::string_view kOthersTopic = "others";

enum class TopicOrigin { Predefined, Emergent, ClusterSummary };
enum class TopicStatus { Candidate, Accepted, Rejected };

std::string_view to_string(TopicOrigin origin);
std::string_view to_string(TopicStatus status);

struct TopicPhrase {
  std::string normalized;
  std::string display;
  TopicOrigin origin = TopicOrigin::Emergent;
  TopicStatus status = TopicStatus::Candidate;
  std::string first_seen;  // record id, empty for predefined topics
  std::size_t count = 0;

  // Normalizes and caps the phrase at kMaxTopicWords words.
  static TopicPhrase make(std::string_view display,
                          TopicOrigin origin = TopicOrigin::Emergent);
};

struct TopicDemo {
  std::string feedback;
  std::vector<std::string> topics;
};

struct TopicConfig {
  std::string task_description;
  std::string topic_requirement;
  std::vector<TopicPhrase> predefined_topics;
  std::vector<TopicDemo> fixed_demos;
  std::size_t max_topics_per_record = 3;
  std::size_t n_extra_demos = 5;
  double quality_threshold = 0.3;
  double dedupe_threshold = 0.90;
  double cluster_threshold = 0.25;

  void validate() const;
  static TopicConfig load(const std::filesystem::path& path);
  static TopicConfig from_json(std::string_view json_text);
  [[nodiscard]] std::string to_json() const;
};

// Cancellation and progress hooks for long runs.
struct RunControl {
  std::function<void(double)> progress;
  std::function<bool()> cancelled;
};

struct ExtraDemo {
  std::string id;
  std::string feedback;
  std::vector<std::string> topics;
  double similarity = 0.0;
  double quality = 0.0;
};

struct TopicAssignment {
  std::string record_id;
  std::vector<std::string> topics;  // normalized; {"others"} on abstention

  [[nodiscard]] bool is_others() const;
};

struct RecordError {
  std::string record_id;
  std::string message;
};

struct RoundResult {
  std::vector<TopicAssignment> assignments;
  std::vector<TopicPhrase> topic_list;
  std::vector<std::size_t> list_size_trace;  // list size after each record
  std::vector<RecordError> errors;
  std::size_t gateway_calls = 0;
};

// Embedding-based canonicalization and prompt assembly. Holds a cache of
// phrase embeddings keyed by normalized phrase.
class TopicModeler {
 public:
  TopicModeler(LlmGateway& gateway, TopicConfig config);

  [[nodiscard]] const TopicConfig& config() const { return config_; }

  struct Outcome {
    std::vector<TopicPhrase> phrases;  // canonical or new, duplicate-free
    bool abstained = false;
    int gateway_calls = 0;
  };

  // Predicts 1..max_topics_per_record topics for `record` given the current
  // list. Phrases within the dedupe threshold of an existing entry resolve
  // to that entry; others come back with origin emergent. Throws
  // EmptyTopicOutput after one re-ask.
  Outcome assign_topics(const FeedbackRecord& record,
                        const std::vector<TopicPhrase>& topic_list,
                        const std::vector<ExtraDemo>& extra_demos = {});

  [[nodiscard]] std::string render_prompt(
      const FeedbackRecord& record, const std::vector<TopicPhrase>& topic_list,
      const std::vector<ExtraDemo>& extra_demos) const;

  // Sequential progressive pass. `records` must be in timestamp order.
  RoundResult run_round_one(const std::vector<FeedbackRecord>& records,
                            const RunControl& control = {});

  const EmbeddingVector& phrase_embedding(const std::string& normalized);

 private:
  void warm_cache(const std::vector<std::string>& phrases);

  LlmGateway& gateway_;
  TopicConfig config_;
  std::unordered_map<std::string, EmbeddingVector> cache_;
};

// Splits a completion on ';' and line breaks into normalized, word-capped
// phrases (no canonicalization).
std::vector<std::string> parse_topic_completion(std::string_view completion);

// --- human review --------------------------------------------------------

enum class ReviewAction { Accept, Reject, Rename };

struct ReviewDecision {
  ReviewAction action = ReviewAction::Accept;
  std::string new_name;
};

using ReviewDecisions = std::map<std::string, ReviewDecision>;

// {"topic": "accept" | "reject" | "rename:<new phrase>", ...}
ReviewDecisions parse_review_decisions(std::string_view json_text);
std::string review_decisions_to_json(const ReviewDecisions& decisions);

struct ReviewSession {
  std::vector<TopicPhrase> candidates;
};

struct ReviewOutcome {
  std::vector<TopicPhrase> accepted;
  std::vector<std::string> rejected;
  // old normalized phrase -> new normalized phrase (nullopt: removed)
  std::map<std::string, std::optional<std::string>> mapping;
};

ReviewSession review_candidates(const std::vector<TopicPhrase>& topic_list);
// Throws IncompleteReview naming the topics without a decision.
ReviewOutcome apply_review(const ReviewSession& session,
                           const ReviewDecisions& decisions);

// --- clustering ------------------------------------------------------------

struct MergeStep {
  std::size_t left = 0;   // lowest member index of each merged cluster
  std::size_t right = 0;
  double distance = 0.0;
  std::size_t size = 0;   // size after the merge
};

struct Agglomeration {
  std::vector<std::vector<std::size_t>> clusters;  // sorted by first member
  std::vector<MergeStep> trace;
};

// Average-linkage agglomeration over cosine distance. Merges while the
// closest pair is strictly below `threshold`; ties go to the
// lexicographically smallest (left, right) pair.
Agglomeration agglomerate(const std::vector<EmbeddingVector>& points,
                          double threshold);

struct TopicCluster {
  std::vector<TopicPhrase> members;
  EmbeddingVector centroid;
  std::optional<TopicPhrase> summary;
};

std::vector<TopicCluster> cluster_topics(const std::vector<TopicPhrase>& accepted,
                                         TopicModeler& modeler, double threshold);

// Singletons keep their phrase without a gateway call.
TopicPhrase summarize_cluster(const TopicCluster& cluster, LlmGateway& gateway);

// Combined mapping from reviewed round-1 topics to the refined set.
std::map<std::string, std::optional<std::string>> refinement_mapping(
    const ReviewOutcome& review, const std::vector<TopicCluster>& clusters);

// Predefined list := refined topics; fixed demo topics are remapped and
// demos left without topics are dropped.
TopicConfig refine_config(
    const TopicConfig& base, const std::vector<TopicPhrase>& refined,
    const std::map<std::string, std::optional<std::string>>& mapping);

// --- quality scoring and extra demonstrations ---------------------------

class QualityScorer {
 public:
  virtual ~QualityScorer() = default;
  virtual double score(std::string_view topic_phrase, std::string_view feedback) = 0;
};

// Stand-in for BARTScore: cosine between phrase and feedback embeddings.
class EmbeddingCosineScorer : public QualityScorer {
 public:
  explicit EmbeddingCosineScorer(LlmGateway& gateway) : gateway_(gateway) {}
  double score(std::string_view topic_phrase, std::string_view feedback) override;

 private:
  LlmGateway& gateway_;
};

class FunctionScorer : public QualityScorer {
 public:
  explicit FunctionScorer(std::function<double(std::string_view, std::string_view)> fn)
      : fn_(std::move(fn)) {}
  double score(std::string_view topic_phrase, std::string_view feedback) override {
    return fn_(topic_phrase, feedback);
  }

 private:
  std::function<double(std::string_view, std::string_view)> fn_;
};

// Vector store over round-1 results: text embeddings with the round-1
// topics and their quality score as payload.
std::shared_ptr<const IndexSnapshot> build_round_one_index(
    const std::vector<FeedbackRecord>& records,
    const std::vector<TopicAssignment>& assignments, LlmGateway& gateway,
    QualityScorer& scorer);

// Top-n entries by cosine among those with quality >= threshold, excluding
// the target itself; returned in ascending similarity.
std::vector<ExtraDemo> retrieve_extra_demos(const FeedbackRecord& target,
                                            std::size_t n, double quality_threshold,
                                            const IndexSnapshot& round_one,
                                            LlmGateway& gateway);

// Second pass with the refined config plus retrieved demonstrations. Failed
// or abstaining records are assigned "others".
RoundResult run_round_two(const std::vector<FeedbackRecord>& records,
                          const TopicConfig& refined_config,
                          const IndexSnapshot* round_one_index,
                          LlmGateway& gateway, const RunControl& control = {});

// --- metrics ---------------------------------------------------------------

struct TopicCoherence {
  std::string topic;
  std::size_t support = 0;
  std::vector<std::string> keywords;
  double coherence = 0.0;
};

struct CoherenceReport {
  std::vector<TopicCoherence> topics;
  std::vector<std::string> skipped;  // topics without supporting records
  [[nodiscard]] double mean() const;
  [[nodiscard]] std::string to_csv() const;
};

// Top-n keywords by term frequency over `documents` after stopword removal;
// ties broken alphabetically.
std::vector<std::string> top_keywords(const std::vector<std::string>& documents,
                                      std::size_t n = 10);

// Mean pairwise NPMI of `keywords` with document-level co-occurrence counted
// over `corpus`. Pairs that never co-occur score -1.
double npmi_coherence(const std::vector<std::string>& keywords,
                      const std::vector<std::string>& corpus);

// Per-topic coherence over the topic's supporting records. `topics`, when
// given, lists topics to score; those without support are skipped.
CoherenceReport coherence(const std::vector<TopicAssignment>& assignments,
                          const std::map<std::string, std::string>& corpus,
                          const std::vector<std::string>& topics = {});

double others_rate(const std::vector<TopicAssignment>& assignments);

}  // namespace verbatim
