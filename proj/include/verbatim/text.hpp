#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace verbatim::text {

bool is_valid_utf8(std::string_view s);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string collapse_whitespace(std::string_view s);

// Lowercase, trim, collapse internal whitespace, strip terminal punctuation.
std::string normalize_label(std::string_view s);

// normalize_label plus removal of wrapping quotes/brackets and list markers
// such as "- " or "1. ".
std::string normalize_phrase(std::string_view s);

std::size_t word_count(std::string_view s);
// First `max_words` whitespace-separated words.
std::string truncate_words(std::string_view s, std::size_t max_words);

std::vector<std::string> split(std::string_view s, char delim);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool starts_with(std::string_view s, std::string_view prefix);
bool contains(std::string_view haystack, std::string_view needle);

// True when `phrase` occurs in `haystack` delimited by non-word characters
// (or string ends) on both sides. Both arguments are expected normalized.
// '-' counts as a word character so "informative" does not match inside
// "non-informative".
std::size_t find_whole_phrase(std::string_view haystack,
                              std::string_view phrase,
                              std::size_t from = 0);

// Lowercased alphanumeric tokens. Bytes >= 0x80 are treated as word bytes.
std::vector<std::string> tokenize(std::string_view s);

bool is_stopword(std::string_view token);

// Contents of fenced ``` blocks in order of appearance; empty when none.
std::vector<std::string> fenced_blocks(std::string_view s);

std::uint64_t fnv1a64(std::string_view s);

std::string sha256_hex(std::string_view data);
// Hex encoding of `bytes` bytes from the OS CSPRNG.
std::string random_token(std::size_t bytes = 16);

}  // namespace verbatim::text
