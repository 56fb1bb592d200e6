#include "lirex/text.hpp"

#include <cctype>

namespace lirex {

namespace {

bool is_word_char(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '_' || c == '\'';
}

// Matches one of the special token literals at position i, returning its
// length or 0.
std::size_t special_at(const std::string& s, std::size_t i) {
  for (const char* lit : {kSepText, kUnkText, kEotText}) {
    std::size_t n = std::char_traits<char>::length(lit);
    if (s.compare(i, n, lit) == 0) return n;
  }
  return 0;
}

}  // namespace

TokenSeq tokenize_words(const std::string& text) {
  TokenSeq out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    char c = text[i];
    if (c == '\n') {
      out.push_back({std::string(1, c), i, i + 1, false});
      ++i;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (std::size_t len = special_at(text, i); len > 0) {
      out.push_back({text.substr(i, len), i, i + len, false});
      i += len;
      continue;
    }
    if (is_word_char(c)) {
      std::size_t j = i + 1;
      while (j < n && is_word_char(text[j])) ++j;
      out.push_back({text.substr(i, j - i), i, j, false});
      i = j;
      continue;
    }
    out.push_back({std::string(1, c), i, i + 1, false});
    ++i;
  }
  return out;
}

TokenSeq whitespace_words(const std::string& text) {
  TokenSeq out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < n && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    out.push_back({text.substr(i, j - i), i, j, false});
    i = j;
  }
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  bool at_line_start = true;
  for (const auto& t : tokens) {
    if (t == "\n") {
      out += '\n';
      at_line_start = true;
      continue;
    }
    if (!at_line_start) out += ' ';
    out += t;
    at_line_start = false;
  }
  return out;
}

std::string normalize_whitespace(const std::string& text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

std::string normalize_for_containment(const std::string& text) {
  std::string mapped;
  mapped.reserve(text.size());
  for (char c : text) {
    unsigned char u = static_cast<unsigned char>(c);
    mapped += std::isalnum(u) ? static_cast<char>(std::tolower(u)) : ' ';
  }
  return normalize_whitespace(mapped);
}

bool contains_normalized(const std::string& haystack, const std::string& needle) {
  std::string h = normalize_for_containment(haystack);
  std::string n = normalize_for_containment(needle);
  if (n.empty()) return false;
  return h.find(n) != std::string::npos;
}

}  // namespace lirex
