#include "verbatim/text.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <stdexcept>
#include <unordered_set>

namespace verbatim::text {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }

bool is_word_byte(unsigned char c) {
  return std::isalnum(c) != 0 || c == '_' || c == '-' || c >= 0x80;
}

bool is_token_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> words = {
      "a",       "about",  "above",   "after",  "again",  "against", "all",
      "am",      "an",     "and",     "any",    "are",    "as",      "at",
      "be",      "because", "been",   "before", "being",  "below",   "between",
      "both",    "but",    "by",      "can",    "could",  "did",     "do",
      "does",    "doing",  "don",     "down",   "during", "each",    "few",
      "for",     "from",   "further", "had",    "has",    "have",    "having",
      "he",      "her",    "here",    "hers",   "herself", "him",    "himself",
      "his",     "how",    "i",       "if",     "in",     "into",    "is",
      "it",      "its",    "itself",  "just",   "me",     "more",    "most",
      "my",      "myself", "no",      "nor",    "not",    "now",     "of",
      "off",     "on",     "once",    "only",   "or",     "other",   "our",
      "ours",    "ourselves", "out",  "over",   "own",    "s",       "same",
      "she",     "should", "so",      "some",   "such",   "t",       "than",
      "that",    "the",    "their",   "theirs", "them",   "themselves",
      "then",    "there",  "these",   "they",   "this",   "those",   "through",
      "to",      "too",    "under",   "until",  "up",     "very",    "was",
      "we",      "were",   "what",    "when",   "where",  "which",   "while",
      "who",     "whom",   "why",     "will",   "with",   "would",   "you",
      "your",    "yours",  "yourself", "yourselves", "im", "dont",   "cant",
      "please",  "also",   "get",     "got",    "its",    "ve",      "ll",
      "re",      "d",      "m",
  };
  return words;
}

}  // namespace

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // overlong encodings, surrogates, out of range
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
        (len == 4 && cp < 0x10000) || cp > 0x10FFFF ||
        (cp >= 0xD800 && cp <= 0xDFFF)) {
      return false;
    }
    i += len;
  }
  return true;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    if (is_space(static_cast<unsigned char>(c))) {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

std::string normalize_label(std::string_view s) {
  std::string out = collapse_whitespace(to_lower(s));
  while (!out.empty()) {
    const char c = out.back();
    if (c == '.' || c == '!' || c == '?' || c == ',' || c == ';' ||
        c == ':') {
      out.pop_back();
      while (!out.empty() && out.back() == ' ') out.pop_back();
    } else {
      break;
    }
  }
  return out;
}

std::string normalize_phrase(std::string_view s) {
  std::string out = normalize_label(s);
  auto strip_pair = [&out](char open, char close) {
    if (out.size() >= 2 && out.front() == open && out.back() == close) {
      out = trim(out.substr(1, out.size() - 2));
      return true;
    }
    return false;
  };
  bool changed = true;
  while (changed) {
    changed = strip_pair('"', '"') || strip_pair('\'', '\'') ||
              strip_pair('[', ']') || strip_pair('(', ')') ||
              strip_pair('`', '`');
    if (starts_with(out, "- ") || starts_with(out, "* ")) {
      out = trim(out.substr(2));
      changed = true;
    }
    std::size_t digits = 0;
    while (digits < out.size() &&
           std::isdigit(static_cast<unsigned char>(out[digits]))) {
      ++digits;
    }
    if (digits > 0 && digits + 1 < out.size() &&
        (out[digits] == '.' || out[digits] == ')') && out[digits + 1] == ' ') {
      out = trim(out.substr(digits + 2));
      changed = true;
    }
    const std::string relabeled = normalize_label(out);
    if (relabeled != out) {
      out = relabeled;
      changed = true;
    }
  }
  return out;
}

std::size_t word_count(std::string_view s) {
  std::size_t count = 0;
  bool in_word = false;
  for (char c : s) {
    if (is_space(static_cast<unsigned char>(c))) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++count;
    }
  }
  return count;
}

std::string truncate_words(std::string_view s, std::size_t max_words) {
  const std::string collapsed = collapse_whitespace(s);
  std::size_t words = 0;
  for (std::size_t i = 0; i < collapsed.size(); ++i) {
    if (collapsed[i] == ' ') {
      if (++words == max_words) return collapsed.substr(0, i);
    }
  }
  return collapsed;
}

std::vector<std::string> split(std::string_view s, char delim) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(delim, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(s.substr(start));
      break;
    }
    parts.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

bool contains(std::string_view haystack, std::string_view needle) {
  return haystack.find(needle) != std::string_view::npos;
}

std::size_t find_whole_phrase(std::string_view haystack,
                              std::string_view phrase, std::size_t from) {
  if (phrase.empty()) return std::string_view::npos;
  std::size_t pos = haystack.find(phrase, from);
  while (pos != std::string_view::npos) {
    const bool left_ok =
        pos == 0 || !is_word_byte(static_cast<unsigned char>(haystack[pos - 1]));
    const std::size_t end = pos + phrase.size();
    const bool right_ok =
        end == haystack.size() ||
        !is_word_byte(static_cast<unsigned char>(haystack[end]));
    if (left_ok && right_ok) return pos;
    pos = haystack.find(phrase, pos + 1);
  }
  return std::string_view::npos;
}

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_token_byte(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

bool is_stopword(std::string_view token) {
  return stopwords().count(std::string(token)) > 0;
}

std::vector<std::string> fenced_blocks(std::string_view s) {
  std::vector<std::string> blocks;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = s.find("```", pos);
    if (open == std::string_view::npos) break;
    // skip the info string up to end of line
    std::size_t body = s.find('\n', open + 3);
    if (body == std::string_view::npos) break;
    ++body;
    const std::size_t close = s.find("```", body);
    if (close == std::string_view::npos) break;
    std::string block(s.substr(body, close - body));
    while (!block.empty() && (block.back() == '\n' || block.back() == '\r')) {
      block.pop_back();
    }
    blocks.push_back(std::move(block));
    pos = close + 3;
  }
  return blocks;
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(),
                 nullptr) != 1) {
    throw std::runtime_error("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0x0F]);
  }
  return out;
}

std::string random_token(std::size_t bytes) {
  std::vector<unsigned char> buf(bytes);
  if (RAND_bytes(buf.data(), static_cast<int>(buf.size())) != 1) {
    throw std::runtime_error("RAND_bytes failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes * 2);
  for (unsigned char b : buf) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0x0F]);
  }
  return out;
}

}  // namespace verbatim::text
