#include "verbatim/csv.hpp"

#include <stdexcept>

namespace verbatim::csv {

std::optional<Row> Reader::next() {
  if (pos_ >= data_.size()) return std::nullopt;
  Row row;
  row.line = line_;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  while (pos_ < data_.size()) {
    const char c = data_[pos_];
    if (quoted) {
      if (c == '"') {
        if (pos_ + 1 < data_.size() && data_[pos_ + 1] == '"') {
          field.push_back('"');
          pos_ += 2;
        } else {
          quoted = false;
          ++pos_;
        }
      } else {
        if (c == '\n') ++line_;
        field.push_back(c);
        ++pos_;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
      ++pos_;
    } else if (c == ',') {
      row.fields.push_back(std::move(field));
      field.clear();
      field_started = false;
      ++pos_;
    } else if (c == '\r' && pos_ + 1 < data_.size() && data_[pos_ + 1] == '\n') {
      pos_ += 2;
      ++line_;
      row.fields.push_back(std::move(field));
      return row;
    } else if (c == '\n') {
      ++pos_;
      ++line_;
      row.fields.push_back(std::move(field));
      return row;
    } else {
      field.push_back(c);
      field_started = true;
      ++pos_;
    }
  }
  if (quoted) {
    throw std::runtime_error("unterminated quoted field starting on line " +
                             std::to_string(row.line));
  }
  row.fields.push_back(std::move(field));
  return row;
}

std::string escape(std::string_view field) {
  const bool needs_quotes =
      field.find_first_of(",\"\r\n") != std::string_view::npos ||
      (!field.empty() && (field.front() == ' ' || field.back() == ' '));
  if (!needs_quotes) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out.push_back(',');
    out += escape(fields[i]);
  }
  out.push_back('\n');
  return out;
}

}  // namespace verbatim::csv
