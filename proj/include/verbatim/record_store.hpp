#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "verbatim/time.hpp"

namespace verbatim {

struct AnnotationSet {
  std::map<std::string, std::string> labels;  // dimension -> label
  std::vector<std::string> topics;            // normalized topic phrases
  int topic_round = 0;                        // 0 until topics are assigned
};

struct FeedbackRecord {
  std::string id;
  std::string text;
  Timestamp timestamp{};
  std::string language = "und";
  std::string source;
  std::map<std::string, std::string> meta;
  AnnotationSet annotations;
};

// Meta key set on records whose timestamp was missing at ingest.
inline constexpr std::string_view kImputedTimestampKey = "timestamp_imputed";

struct DimensionSchema {
  std::string name;
  std::vector<std::string> labels;        // normalized
  std::map<std::string, double> scores;   // optional label -> numeric score
};

enum class RecordFormat { Jsonl, Csv };
std::optional<RecordFormat> parse_record_format(std::string_view name);

struct Rejection {
  std::size_t line = 0;
  std::string reason;
};

struct IngestReport {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::vector<Rejection> rejection_reasons;
};

struct AuditEntry {
  std::string id;
  std::string field;  // "label.<dim>" or "topics"
  std::string previous;
  std::string current;
  Timestamp at{};
};

enum class FilterOp { Eq, Ne, Contains, Lt, Le, Gt, Ge };

struct FilterClause {
  std::string field;
  FilterOp op = FilterOp::Eq;
  std::string value;
};

// Conjunction of clauses. Fields: id, text, timestamp, language, source,
// meta.<key>, topic, topic_round, and any declared dimension (optionally
// written label.<dimension>).
struct Filter {
  std::vector<FilterClause> clauses;

  // "topic=bug&sentiment=negative&timestamp>=2024-04-01". Operators:
  // = != ~ (contains) < <= > >=.
  static Filter parse(std::string_view expr);
};

struct Order {
  std::string field;  // empty: insertion order
  bool ascending = true;
};

// Append-only store of feedback records. Concurrent readers, one writer.
class RecordStore {
 public:
  RecordStore() = default;
  // Records persist to `file` as JSONL; audit entries append to
  // `<file>.audit.jsonl`.
  explicit RecordStore(std::filesystem::path file);

  RecordStore(const RecordStore&) = delete;
  RecordStore& operator=(const RecordStore&) = delete;

  void declare_dimension(DimensionSchema schema);
  [[nodiscard]] std::vector<DimensionSchema> dimensions() const;
  [[nodiscard]] std::optional<DimensionSchema> dimension(
      std::string_view name) const;

  IngestReport ingest(std::string_view data, RecordFormat format);

  [[nodiscard]] std::vector<FeedbackRecord> query(
      const Filter& filter = {}, const Order& order = {},
      std::optional<std::size_t> limit = std::nullopt) const;
  [[nodiscard]] std::optional<FeedbackRecord> get(std::string_view id) const;
  [[nodiscard]] std::size_t size() const;

  FeedbackRecord annotate(std::string_view id, std::string_view dimension,
                          std::string_view value);
  FeedbackRecord set_topics(std::string_view id,
                            const std::vector<std::string>& topics, int round);

  // Serialized export of the records matching `filter`.
  [[nodiscard]] std::string export_records(const Filter& filter,
                                           RecordFormat format) const;

  [[nodiscard]] std::vector<AuditEntry> audit_log() const;

  // Rewrites the backing file (no-op without one).
  void save() const;
  void load();

 private:
  void validate_filter(const Filter& filter) const;
  bool matches(const FeedbackRecord& r, const Filter& filter) const;
  void append_audit(AuditEntry entry);
  std::optional<std::string> validate_annotations(
      const AnnotationSet& annotations) const;
  std::string add_record(FeedbackRecord record);

  mutable std::shared_mutex mutex_;
  std::optional<std::filesystem::path> file_;
  std::vector<FeedbackRecord> records_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::map<std::string, DimensionSchema> dimensions_;
  std::vector<AuditEntry> audit_;
};

// Serialization shared with the service and kernel snapshot code.
std::string to_jsonl_line(const FeedbackRecord& record);

}  // namespace verbatim
