#pragma once

#include <string>
#include <vector>

#include "lirex/types.hpp"

namespace lirex {

// Special token surface forms shared by the tiny backends.
inline constexpr const char* kSepText = "<s>";
inline constexpr const char* kUnkText = "<unk>";
inline constexpr const char* kEotText = "<eot>";
inline constexpr const char* kNewlineText = "\n";

// Word-level tokenizer with character offsets. Rules:
//  - runs of [A-Za-z0-9_'] form one token,
//  - '\n' is its own token (other whitespace only separates),
//  - any other character is a single-character token,
//  - the literals "<s>", "<unk>", "<eot>" are kept whole.
// Every returned token satisfies text == source.substr(begin, end - begin).
TokenSeq tokenize_words(const std::string& text);

// Whitespace-delimited words with character offsets (no further splitting).
TokenSeq whitespace_words(const std::string& text);

// Joins token texts with single spaces; newline tokens are emitted verbatim
// without surrounding spaces.
std::string detokenize(const std::vector<std::string>& tokens);

// Trims and collapses all interior whitespace (including newlines) to single
// spaces.
std::string normalize_whitespace(const std::string& text);

// Lowercases, replaces every non-alphanumeric character with a space, then
// collapses whitespace. Used for fuzzy containment tests between fields.
std::string normalize_for_containment(const std::string& text);

// True when the normalized form of `needle` occurs as a contiguous substring
// of the normalized form of `haystack`. Empty normalized needles never match.
bool contains_normalized(const std::string& haystack, const std::string& needle);

}  // namespace lirex
