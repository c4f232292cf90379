#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace verbatim::csv {

struct Row {
  std::size_t line = 0;  // 1-based line on which the row starts
  std::vector<std::string> fields;
};

// RFC 4180 reader: quoted fields may contain separators, doubled quotes and
// line breaks. Accepts LF and CRLF line endings.
class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  // Next row, or nullopt at end of input. Throws std::runtime_error on an
  // unterminated quoted field.
  std::optional<Row> next();

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

std::string escape(std::string_view field);
std::string format_row(const std::vector<std::string>& fields);

}  // namespace verbatim::csv
