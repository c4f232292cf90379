#include "verbatim/record_store.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "verbatim/csv.hpp"
#include "verbatim/error.hpp"
#include "verbatim/text.hpp"

namespace verbatim {

using nlohmann::json;

namespace {

constexpr std::string_view kLabelPrefix = "label.";
constexpr std::string_view kMetaPrefix = "meta.";
constexpr std::string_view kScorePrefix = "score.";

// Row parse outcome: a record or a rejection reason.
struct ParsedRow {
  std::optional<FeedbackRecord> record;
  std::string reason;
};

ParsedRow reject(std::string reason) { return {std::nullopt, std::move(reason)}; }

std::vector<std::string> normalize_topics(const std::vector<std::string>& in) {
  std::vector<std::string> out;
  for (const auto& t : in) {
    std::string n = text::normalize_phrase(t);
    if (n.empty()) continue;
    if (std::find(out.begin(), out.end(), n) == out.end()) {
      out.push_back(std::move(n));
    }
  }
  return out;
}

std::vector<std::string> split_topics(std::string_view joined) {
  std::vector<std::string> parts;
  for (auto& p : text::split(joined, ';')) {
    std::string t = text::trim(p);
    if (!t.empty()) parts.push_back(std::move(t));
  }
  return parts;
}

std::string scalar_to_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

// Shared by JSONL ingest and store load.
ParsedRow parse_json_record(const json& row, Timestamp ingest_time) {
  if (!row.is_object()) return reject("MalformedRow(not an object)");
  FeedbackRecord r;

  auto id_it = row.find("id");
  if (id_it == row.end() || id_it->is_null()) return reject("MissingField(id)");
  if (!id_it->is_string()) return reject("InvalidField(id)");
  r.id = text::trim(id_it->get<std::string>());
  if (r.id.empty()) return reject("MissingField(id)");

  auto text_it = row.find("text");
  if (text_it == row.end() || text_it->is_null()) {
    return reject("MissingField(text)");
  }
  if (!text_it->is_string()) return reject("InvalidField(text)");
  r.text = text_it->get<std::string>();
  if (text::trim(r.text).empty()) return reject("MissingField(text)");

  auto ts_it = row.find("timestamp");
  if (ts_it == row.end() || ts_it->is_null() ||
      (ts_it->is_string() && text::trim(ts_it->get<std::string>()).empty())) {
    r.timestamp = ingest_time;
    r.meta[std::string(kImputedTimestampKey)] = "true";
  } else {
    if (!ts_it->is_string()) return reject("InvalidField(timestamp)");
    auto ts = parse_rfc3339(text::trim(ts_it->get<std::string>()));
    if (!ts) return reject("InvalidField(timestamp)");
    r.timestamp = *ts;
  }

  if (auto it = row.find("language"); it != row.end() && !it->is_null()) {
    if (!it->is_string()) return reject("InvalidField(language)");
    const std::string lang = text::trim(it->get<std::string>());
    r.language = lang.empty() ? "und" : lang;
  }
  if (auto it = row.find("source"); it != row.end() && !it->is_null()) {
    if (!it->is_string()) return reject("InvalidField(source)");
    r.source = it->get<std::string>();
  }
  if (auto it = row.find("meta"); it != row.end() && !it->is_null()) {
    if (!it->is_object()) return reject("InvalidField(meta)");
    for (const auto& [k, v] : it->items()) {
      if (v.is_object() || v.is_array()) return reject("InvalidField(meta)");
      if (v.is_null()) continue;
      r.meta[k] = scalar_to_string(v);
    }
  }
  if (auto it = row.find("labels"); it != row.end() && !it->is_null()) {
    if (!it->is_object()) return reject("InvalidField(labels)");
    for (const auto& [k, v] : it->items()) {
      if (!v.is_string()) return reject("InvalidField(labels)");
      const std::string label = text::normalize_label(v.get<std::string>());
      if (!label.empty()) r.annotations.labels[k] = label;
    }
  }
  if (auto it = row.find("topics"); it != row.end() && !it->is_null()) {
    std::vector<std::string> topics;
    if (it->is_string()) {
      topics = split_topics(it->get<std::string>());
    } else if (it->is_array()) {
      for (const auto& t : *it) {
        if (!t.is_string()) return reject("InvalidField(topics)");
        topics.push_back(t.get<std::string>());
      }
    } else {
      return reject("InvalidField(topics)");
    }
    r.annotations.topics = normalize_topics(topics);
  }
  if (auto it = row.find("topic_round"); it != row.end() && !it->is_null()) {
    if (!it->is_number_integer()) return reject("InvalidField(topic_round)");
    r.annotations.topic_round = it->get<int>();
  }
  if (!r.annotations.topics.empty() && r.annotations.topic_round == 0) {
    r.annotations.topic_round = 1;
  }
  return {std::move(r), {}};
}

// Converts a CSV row into the JSON row shape so both formats share one parser.
json csv_row_to_json(const std::vector<std::string>& header,
                     const std::vector<std::string>& fields) {
  json row = json::object();
  json meta = json::object();
  json labels = json::object();
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string& col = header[i];
    const std::string& value = fields[i];
    if (text::starts_with(col, kMetaPrefix)) {
      if (!value.empty()) meta[col.substr(kMetaPrefix.size())] = value;
    } else if (text::starts_with(col, kLabelPrefix)) {
      if (!value.empty()) labels[col.substr(kLabelPrefix.size())] = value;
    } else if (text::starts_with(col, kScorePrefix)) {
      continue;
    } else if (col == "topic_round") {
      if (!value.empty()) {
        try {
          row[col] = std::stoi(value);
        } catch (const std::exception&) {
          row[col] = value;  // rejected by the shared parser
        }
      }
    } else if (col == "id" || col == "text" || col == "timestamp" ||
               col == "language" || col == "source" || col == "topics") {
      if (!value.empty() || col == "id" || col == "text") row[col] = value;
    }
  }
  if (!meta.empty()) row["meta"] = std::move(meta);
  if (!labels.empty()) row["labels"] = std::move(labels);
  return row;
}

json record_to_json(const FeedbackRecord& r) {
  json j = json::object();
  j["id"] = r.id;
  j["text"] = r.text;
  j["timestamp"] = format_rfc3339(r.timestamp);
  j["language"] = r.language;
  j["source"] = r.source;
  j["meta"] = r.meta;
  if (!r.annotations.labels.empty()) j["labels"] = r.annotations.labels;
  if (!r.annotations.topics.empty()) {
    j["topics"] = r.annotations.topics;
    j["topic_round"] = r.annotations.topic_round;
  }
  return j;
}

int compare_strings(std::string_view a, std::string_view b) {
  return a < b ? -1 : (b < a ? 1 : 0);
}

bool apply_op(FilterOp op, int cmp) {
  switch (op) {
    case FilterOp::Eq: return cmp == 0;
    case FilterOp::Ne: return cmp != 0;
    case FilterOp::Lt: return cmp < 0;
    case FilterOp::Le: return cmp <= 0;
    case FilterOp::Gt: return cmp > 0;
    case FilterOp::Ge: return cmp >= 0;
    case FilterOp::Contains: return false;
  }
  return false;
}

bool is_builtin_field(std::string_view f) {
  return f == "id" || f == "text" || f == "timestamp" || f == "language" ||
         f == "source" || f == "topic" || f == "topic_round";
}

std::string dimension_of(std::string_view field) {
  if (text::starts_with(field, kLabelPrefix)) {
    return std::string(field.substr(kLabelPrefix.size()));
  }
  return std::string(field);
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + tmp);
    out << content;
    if (!out) throw Error(Errc::Io, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::optional<RecordFormat> parse_record_format(std::string_view name) {
  const std::string n = text::to_lower(name);
  if (n == "jsonl" || n == "json") return RecordFormat::Jsonl;
  if (n == "csv") return RecordFormat::Csv;
  return std::nullopt;
}

Filter Filter::parse(std::string_view expr) {
  Filter filter;
  const std::string trimmed = text::trim(expr);
  if (trimmed.empty()) return filter;
  for (const auto& part : text::split(trimmed, '&')) {
    const std::string clause_text = text::trim(part);
    if (clause_text.empty()) continue;
    // longest operators first
    static constexpr std::pair<std::string_view, FilterOp> kOps[] = {
        {">=", FilterOp::Ge}, {"<=", FilterOp::Le}, {"!=", FilterOp::Ne},
        {"=", FilterOp::Eq},  {"~", FilterOp::Contains},
        {"<", FilterOp::Lt},  {">", FilterOp::Gt},
    };
    std::size_t best_pos = std::string::npos;
    std::size_t best_len = 0;
    FilterOp best_op = FilterOp::Eq;
    for (const auto& [token, op] : kOps) {
      const std::size_t pos = clause_text.find(token);
      if (pos == std::string::npos) continue;
      if (pos < best_pos || (pos == best_pos && token.size() > best_len)) {
        best_pos = pos;
        best_len = token.size();
        best_op = op;
      }
    }
    if (best_pos == std::string::npos || best_pos == 0) {
      throw Error(Errc::InvalidArgument, "malformed filter clause '" +
                                             clause_text + "'");
    }
    filter.clauses.push_back(
        {text::trim(clause_text.substr(0, best_pos)), best_op,
         text::trim(clause_text.substr(best_pos + best_len))});
  }
  return filter;
}

RecordStore::RecordStore(std::filesystem::path file) : file_(std::move(file)) {}

void RecordStore::declare_dimension(DimensionSchema schema) {
  std::unique_lock lock(mutex_);
  std::vector<std::string> labels;
  for (const auto& l : schema.labels) {
    std::string n = text::normalize_label(l);
    if (n.empty()) throw Error(Errc::InvalidArgument, "empty label");
    if (std::find(labels.begin(), labels.end(), n) != labels.end()) {
      throw Error(Errc::InvalidArgument, "duplicate label '" + n + "'");
    }
    labels.push_back(std::move(n));
  }
  if (labels.empty()) {
    throw Error(Errc::InvalidArgument,
                "dimension '" + schema.name + "' has no labels");
  }
  schema.labels = std::move(labels);
  std::map<std::string, double> scores;
  for (const auto& [k, v] : schema.scores) scores[text::normalize_label(k)] = v;
  schema.scores = std::move(scores);
  dimensions_[schema.name] = std::move(schema);
}

std::vector<DimensionSchema> RecordStore::dimensions() const {
  std::shared_lock lock(mutex_);
  std::vector<DimensionSchema> out;
  for (const auto& [_, d] : dimensions_) out.push_back(d);
  return out;
}

std::optional<DimensionSchema> RecordStore::dimension(
    std::string_view name) const {
  std::shared_lock lock(mutex_);
  auto it = dimensions_.find(std::string(name));
  if (it == dimensions_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> RecordStore::validate_annotations(
    const AnnotationSet& annotations) const {
  for (const auto& [dim, label] : annotations.labels) {
    auto it = dimensions_.find(dim);
    if (it == dimensions_.end()) return "UnknownDimension(" + dim + ")";
    const auto& set = it->second.labels;
    if (std::find(set.begin(), set.end(), label) == set.end()) {
      return "LabelNotInSet(" + dim + "=" + label + ")";
    }
  }
  if (annotations.topic_round < 0 || annotations.topic_round > 2) {
    return "InvalidField(topic_round)";
  }
  return std::nullopt;
}

std::string RecordStore::add_record(FeedbackRecord record) {
  if (by_id_.count(record.id) > 0) return "DuplicateId(" + record.id + ")";
  if (auto problem = validate_annotations(record.annotations)) return *problem;
  by_id_.emplace(record.id, records_.size());
  records_.push_back(std::move(record));
  return {};
}

IngestReport RecordStore::ingest(std::string_view data, RecordFormat format) {
  if (!text::is_valid_utf8(data)) {
    throw Error(Errc::UndecodableStream, "input is not valid UTF-8");
  }
  const Timestamp ingest_time = now_utc();
  IngestReport report;
  auto count = [&report](std::size_t line, const std::string& problem) {
    if (problem.empty()) {
      ++report.accepted;
    } else {
      ++report.rejected;
      report.rejection_reasons.push_back({line, problem});
    }
  };

  std::unique_lock lock(mutex_);
  if (format == RecordFormat::Jsonl) {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= data.size()) {
      std::size_t end = data.find('\n', start);
      if (end == std::string_view::npos) end = data.size();
      ++line_no;
      std::string_view line = data.substr(start, end - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      start = end + 1;
      if (text::trim(line).empty()) {
        if (end == data.size()) break;
        continue;
      }
      json row;
      try {
        row = json::parse(line);
      } catch (const json::parse_error&) {
        count(line_no, "MalformedRow(invalid JSON)");
        continue;
      }
      ParsedRow parsed = parse_json_record(row, ingest_time);
      count(line_no,
            parsed.record ? add_record(std::move(*parsed.record)) : parsed.reason);
      if (end == data.size()) break;
    }
  } else {
    csv::Reader reader(data);
    std::optional<std::vector<std::string>> header;
    while (true) {
      std::optional<csv::Row> row;
      std::size_t failed_line = 0;
      try {
        row = reader.next();
      } catch (const std::exception&) {
        failed_line = header ? 0 : 1;
        count(failed_line, "MalformedRow(unterminated quoted field)");
        break;
      }
      if (!row) break;
      if (row->fields.size() == 1 && text::trim(row->fields[0]).empty()) {
        continue;
      }
      if (!header) {
        header = row->fields;
        for (auto& h : *header) h = text::trim(h);
        continue;
      }
      if (row->fields.size() != header->size()) {
        count(row->line, "MalformedRow(expected " +
                             std::to_string(header->size()) + " fields, got " +
                             std::to_string(row->fields.size()) + ")");
        continue;
      }
      ParsedRow parsed =
          parse_json_record(csv_row_to_json(*header, row->fields), ingest_time);
      count(row->line,
            parsed.record ? add_record(std::move(*parsed.record)) : parsed.reason);
    }
  }
  lock.unlock();
  if (report.accepted > 0) save();
  return report;
}

void RecordStore::validate_filter(const Filter& filter) const {
  for (const auto& c : filter.clauses) {
    if (is_builtin_field(c.field)) {
      if (c.field == "timestamp" && !parse_rfc3339(c.value)) {
        throw Error(Errc::InvalidArgument,
                    "timestamp filter value '" + c.value + "' is not RFC 3339");
      }
      if (c.field == "topic_round") {
        try {
          (void)std::stoi(c.value);
        } catch (const std::exception&) {
          throw Error(Errc::InvalidArgument, "topic_round must be an integer");
        }
      }
      continue;
    }
    if (text::starts_with(c.field, kMetaPrefix)) continue;
    if (dimensions_.count(dimension_of(c.field)) == 0) {
      throw Error(Errc::UnknownDimension, c.field);
    }
  }
}

bool RecordStore::matches(const FeedbackRecord& r, const Filter& filter) const {
  for (const auto& c : filter.clauses) {
    bool ok = false;
    if (c.field == "timestamp") {
      const auto value = *parse_rfc3339(c.value);
      const int cmp = r.timestamp < value ? -1 : (value < r.timestamp ? 1 : 0);
      ok = c.op == FilterOp::Contains ? false : apply_op(c.op, cmp);
    } else if (c.field == "topic_round") {
      const int value = std::stoi(c.value);
      const int round = r.annotations.topic_round;
      ok = apply_op(c.op, round < value ? -1 : (round > value ? 1 : 0));
    } else if (c.field == "topic") {
      const std::string value = text::normalize_phrase(c.value);
      const auto& topics = r.annotations.topics;
      switch (c.op) {
        case FilterOp::Eq:
          ok = std::find(topics.begin(), topics.end(), value) != topics.end();
          break;
        case FilterOp::Ne:
          ok = std::find(topics.begin(), topics.end(), value) == topics.end();
          break;
        case FilterOp::Contains:
          ok = std::any_of(topics.begin(), topics.end(), [&](const auto& t) {
            return text::contains(t, value);
          });
          break;
        default:
          ok = std::any_of(topics.begin(), topics.end(), [&](const auto& t) {
            return apply_op(c.op, compare_strings(t, value));
          });
      }
    } else {
      std::optional<std::string> actual;
      std::string value = c.value;
      if (c.field == "id") {
        actual = r.id;
      } else if (c.field == "text") {
        actual = r.text;
      } else if (c.field == "language") {
        actual = r.language;
      } else if (c.field == "source") {
        actual = r.source;
      } else if (text::starts_with(c.field, kMetaPrefix)) {
        auto it = r.meta.find(c.field.substr(kMetaPrefix.size()));
        if (it != r.meta.end()) actual = it->second;
      } else {
        auto it = r.annotations.labels.find(dimension_of(c.field));
        if (it != r.annotations.labels.end()) actual = it->second;
        value = text::normalize_label(value);
      }
      if (!actual) {
        ok = c.op == FilterOp::Ne;
      } else if (c.op == FilterOp::Contains) {
        ok = text::contains(*actual, value);
      } else {
        ok = apply_op(c.op, compare_strings(*actual, value));
      }
    }
    if (!ok) return false;
  }
  return true;
}

std::vector<FeedbackRecord> RecordStore::query(
    const Filter& filter, const Order& order,
    std::optional<std::size_t> limit) const {
  std::shared_lock lock(mutex_);
  validate_filter(filter);
  const std::string& of = order.field;
  if (!of.empty() && !is_builtin_field(of) &&
      !text::starts_with(of, kMetaPrefix) &&
      dimensions_.count(dimension_of(of)) == 0) {
    throw Error(Errc::UnknownDimension, of);
  }

  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (matches(records_[i], filter)) idx.push_back(i);
  }
  if (!of.empty()) {
    auto key_cmp = [&](const FeedbackRecord& a, const FeedbackRecord& b) {
      if (of == "timestamp") {
        return a.timestamp < b.timestamp ? -1 : (b.timestamp < a.timestamp ? 1 : 0);
      }
      if (of == "topic_round") {
        return a.annotations.topic_round - b.annotations.topic_round;
      }
      auto field_of = [&](const FeedbackRecord& r) -> std::string {
        if (of == "id") return r.id;
        if (of == "text") return r.text;
        if (of == "language") return r.language;
        if (of == "source") return r.source;
        if (of == "topic") {
          return r.annotations.topics.empty() ? "" : r.annotations.topics[0];
        }
        if (text::starts_with(of, kMetaPrefix)) {
          auto it = r.meta.find(of.substr(kMetaPrefix.size()));
          return it == r.meta.end() ? "" : it->second;
        }
        auto it = r.annotations.labels.find(dimension_of(of));
        return it == r.annotations.labels.end() ? "" : it->second;
      };
      return compare_strings(field_of(a), field_of(b));
    };
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const int cmp = key_cmp(records_[a], records_[b]);
      return order.ascending ? cmp < 0 : cmp > 0;
    });
  }
  if (limit && idx.size() > *limit) idx.resize(*limit);
  std::vector<FeedbackRecord> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(records_[i]);
  return out;
}

std::optional<FeedbackRecord> RecordStore::get(std::string_view id) const {
  std::shared_lock lock(mutex_);
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return records_[it->second];
}

std::size_t RecordStore::size() const {
  std::shared_lock lock(mutex_);
  return records_.size();
}

FeedbackRecord RecordStore::annotate(std::string_view id,
                                     std::string_view dimension,
                                     std::string_view value) {
  std::unique_lock lock(mutex_);
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) throw Error(Errc::UnknownId, std::string(id));
  auto dim = dimensions_.find(std::string(dimension));
  if (dim == dimensions_.end()) {
    throw Error(Errc::UnknownDimension, std::string(dimension));
  }
  const std::string label = text::normalize_label(value);
  const auto& set = dim->second.labels;
  if (std::find(set.begin(), set.end(), label) == set.end()) {
    throw Error(Errc::LabelNotInSet,
                std::string(dimension) + "=" + std::string(value));
  }
  FeedbackRecord& r = records_[it->second];
  auto& slot = r.annotations.labels[std::string(dimension)];
  append_audit({r.id, "label." + std::string(dimension), slot, label, now_utc()});
  slot = label;
  return r;
}

FeedbackRecord RecordStore::set_topics(std::string_view id,
                                       const std::vector<std::string>& topics,
                                       int round) {
  if (round != 1 && round != 2) {
    throw Error(Errc::InvalidArgument, "topic round must be 1 or 2");
  }
  std::unique_lock lock(mutex_);
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) throw Error(Errc::UnknownId, std::string(id));
  FeedbackRecord& r = records_[it->second];
  std::vector<std::string> normalized = normalize_topics(topics);
  append_audit({r.id, "topics", text::join(r.annotations.topics, "; "),
                text::join(normalized, "; "), now_utc()});
  r.annotations.topics = std::move(normalized);
  r.annotations.topic_round = round;
  return r;
}

void RecordStore::append_audit(AuditEntry entry) {
  if (file_) {
    json j = {{"id", entry.id},
              {"field", entry.field},
              {"previous", entry.previous},
              {"current", entry.current},
              {"at", format_rfc3339(entry.at)}};
    std::ofstream out(file_->string() + ".audit.jsonl", std::ios::app);
    out << j.dump() << '\n';
  }
  audit_.push_back(std::move(entry));
}

std::vector<AuditEntry> RecordStore::audit_log() const {
  std::shared_lock lock(mutex_);
  return audit_;
}

std::string RecordStore::export_records(const Filter& filter,
                                        RecordFormat format) const {
  const std::vector<FeedbackRecord> rows = query(filter);
  std::ostringstream out;
  if (format == RecordFormat::Jsonl) {
    for (const auto& r : rows) out << to_jsonl_line(r) << '\n';
    return out.str();
  }
  std::vector<DimensionSchema> dims = dimensions();
  std::set<std::string> meta_keys;
  for (const auto& r : rows) {
    for (const auto& [k, _] : r.meta) meta_keys.insert(k);
  }
  std::vector<std::string> header = {"id", "text", "timestamp", "language",
                                     "source"};
  for (const auto& k : meta_keys) header.push_back(std::string(kMetaPrefix) + k);
  for (const auto& d : dims) {
    header.push_back(std::string(kLabelPrefix) + d.name);
    if (!d.scores.empty()) header.push_back(std::string(kScorePrefix) + d.name);
  }
  header.emplace_back("topics");
  header.emplace_back("topic_round");
  out << csv::format_row(header);
  for (const auto& r : rows) {
    std::vector<std::string> fields = {r.id, r.text, format_rfc3339(r.timestamp),
                                       r.language, r.source};
    for (const auto& k : meta_keys) {
      auto it = r.meta.find(k);
      fields.push_back(it == r.meta.end() ? "" : it->second);
    }
    for (const auto& d : dims) {
      auto it = r.annotations.labels.find(d.name);
      const std::string label = it == r.annotations.labels.end() ? "" : it->second;
      fields.push_back(label);
      if (!d.scores.empty()) {
        auto s = d.scores.find(label);
        if (s == d.scores.end()) {
          fields.emplace_back();
        } else {
          std::ostringstream num;
          num << s->second;
          fields.push_back(num.str());
        }
      }
    }
    fields.push_back(text::join(r.annotations.topics, "; "));
    fields.push_back(r.annotations.topics.empty()
                         ? ""
                         : std::to_string(r.annotations.topic_round));
    out << csv::format_row(fields);
  }
  return out.str();
}

void RecordStore::save() const {
  if (!file_) return;
  std::shared_lock lock(mutex_);
  std::string content;
  for (const auto& r : records_) {
    content += to_jsonl_line(r);
    content.push_back('\n');
  }
  lock.unlock();
  write_file_atomic(*file_, content);
}

void RecordStore::load() {
  if (!file_ || !std::filesystem::exists(*file_)) return;
  std::ifstream in(*file_, std::ios::binary);
  std::string line;
  std::unique_lock lock(mutex_);
  records_.clear();
  by_id_.clear();
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    ParsedRow parsed;
    try {
      parsed = parse_json_record(json::parse(line), now_utc());
    } catch (const json::parse_error& e) {
      throw Error(Errc::Io, file_->string() + ":" + std::to_string(line_no) +
                                ": " + e.what());
    }
    if (!parsed.record) {
      throw Error(Errc::Io, file_->string() + ":" + std::to_string(line_no) +
                                ": " + parsed.reason);
    }
    by_id_.emplace(parsed.record->id, records_.size());
    records_.push_back(std::move(*parsed.record));
  }
}

std::string to_jsonl_line(const FeedbackRecord& record) {
  return record_to_json(record).dump();
}

}  // namespace verbatim
