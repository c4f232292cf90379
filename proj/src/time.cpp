#include "verbatim/time.hpp"

#include <cctype>
#include <cstdio>

namespace verbatim {

namespace {

// Howard Hinnant's days_from_civil.
constexpr long long days_from_civil(long long y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

struct Civil {
  long long y;
  unsigned m;
  unsigned d;
};

constexpr Civil civil_from_days(long long z) {
  z += 719468;
  const long long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long long y = static_cast<long long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

bool is_leap(long long y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

unsigned days_in_month(long long y, unsigned m) {
  static constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30,
                                       31, 31, 30, 31, 30, 31};
  return m == 2 && is_leap(y) ? 29 : kDays[m - 1];
}

class Cursor {
 public:
  explicit Cursor(std::string_view s) : s_(s) {}

  bool digits(std::size_t n, int& out) {
    if (pos_ + n > s_.size()) return false;
    int v = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const char c = s_[pos_ + i];
      if (!std::isdigit(static_cast<unsigned char>(c))) return false;
      v = v * 10 + (c - '0');
    }
    pos_ += n;
    out = v;
    return true;
  }

  bool expect(char c) {
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  bool expect_any(std::string_view set) {
    if (pos_ < s_.size() && set.find(s_[pos_]) != std::string_view::npos) {
      ++pos_;
      return true;
    }
    return false;
  }

  [[nodiscard]] bool done() const { return pos_ == s_.size(); }
  [[nodiscard]] char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  void advance() { ++pos_; }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::optional<Timestamp> parse_rfc3339(std::string_view s) {
  Cursor c(s);
  int year = 0, month = 0, day = 0;
  if (!c.digits(4, year) || !c.expect('-') || !c.digits(2, month) ||
      !c.expect('-') || !c.digits(2, day)) {
    return std::nullopt;
  }
  if (month < 1 || month > 12 || day < 1 ||
      static_cast<unsigned>(day) > days_in_month(year, month)) {
    return std::nullopt;
  }
  int hour = 0, minute = 0, second = 0;
  long long millis = 0;
  long long offset_minutes = 0;
  if (!c.done()) {
    if (!c.expect_any("Tt ")) return std::nullopt;
    if (!c.digits(2, hour) || !c.expect(':') || !c.digits(2, minute) ||
        !c.expect(':') || !c.digits(2, second)) {
      return std::nullopt;
    }
    if (hour > 23 || minute > 59 || second > 60) return std::nullopt;
    if (c.expect('.')) {
      int scale = 100;
      bool any = false;
      while (std::isdigit(static_cast<unsigned char>(c.peek()))) {
        millis += (c.peek() - '0') * scale;
        scale /= 10;
        any = true;
        c.advance();
      }
      if (!any) return std::nullopt;
    }
    if (c.expect_any("Zz")) {
      offset_minutes = 0;
    } else if (c.peek() == '+' || c.peek() == '-') {
      const int sign = c.peek() == '-' ? -1 : 1;
      c.advance();
      int oh = 0, om = 0;
      if (!c.digits(2, oh) || !c.expect(':') || !c.digits(2, om)) {
        return std::nullopt;
      }
      if (oh > 23 || om > 59) return std::nullopt;
      offset_minutes = sign * (oh * 60 + om);
    } else {
      return std::nullopt;
    }
    if (!c.done()) return std::nullopt;
  }
  if (second == 60) second = 59;  // leap second clamps
  const long long days = days_from_civil(year, month, day);
  const long long secs = days * 86400LL + hour * 3600LL + minute * 60LL +
                         second - offset_minutes * 60LL;
  return Timestamp(std::chrono::milliseconds(secs * 1000LL + millis));
}

std::string format_rfc3339(Timestamp t) {
  const long long total_ms = t.time_since_epoch().count();
  long long secs = total_ms / 1000;
  long long ms = total_ms % 1000;
  if (ms < 0) {
    ms += 1000;
    --secs;
  }
  long long days = secs / 86400;
  long long rem = secs % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const Civil civil = civil_from_days(days);
  char buf[64];
  if (ms != 0) {
    std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld:%02lld.%03lldZ",
                  civil.y, civil.m, civil.d, rem / 3600, (rem / 60) % 60,
                  rem % 60, ms);
  } else {
    std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                  civil.y, civil.m, civil.d, rem / 3600, (rem / 60) % 60,
                  rem % 60);
  }
  return buf;
}

Timestamp now_utc() {
  return std::chrono::time_point_cast<std::chrono::milliseconds>(
      std::chrono::system_clock::now());
}

}  // namespace verbatim
