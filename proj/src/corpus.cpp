#include "lirex/corpus.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "lirex/io_util.hpp"
#include "lirex/text.hpp"

namespace lirex {

namespace fs = std::filesystem;

void CorpusSplit::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& inst : instances) {
    inst.base.validate();
    if (!seen.insert(inst.base.instance_id).second)
      throw ConsistencyError("split '" + name + "': duplicate instance id '" +
                             inst.base.instance_id + "'");
  }
}

// ------------------------------ delimited parsing ------------------------------

namespace {

// Splits one record with RFC-style quoting: fields may be wrapped in double
// quotes, inside which the delimiter is literal and "" is an escaped quote.
std::vector<std::string> split_delimited(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

// Parses "a-b;c-d" (or space-separated) inclusive word ranges. Returns false
// on malformed text.
bool parse_spans(const std::string& text, std::vector<HighlightSpan>& out) {
  out.clear();
  std::string token;
  auto flush = [&]() -> bool {
    if (token.empty()) return true;
    std::size_t dash = token.find('-');
    if (dash == std::string::npos || dash == 0 || dash + 1 >= token.size()) return false;
    try {
      int a = std::stoi(token.substr(0, dash));
      int b = std::stoi(token.substr(dash + 1));
      if (a < 0 || b < a) return false;
      out.push_back({a, b});
    } catch (const std::exception&) {
      return false;
    }
    token.clear();
    return true;
  };
  for (char c : text) {
    if (c == ';' || c == ' ' || c == ',') {
      if (!flush()) return false;
    } else {
      token += c;
    }
  }
  return flush();
}

// Sorts by start and merges overlapping ranges.
std::vector<HighlightSpan> normalize_spans(std::vector<HighlightSpan> spans) {
  std::sort(spans.begin(), spans.end(), [](const HighlightSpan& a, const HighlightSpan& b) {
    return a.start_word != b.start_word ? a.start_word < b.start_word : a.end_word < b.end_word;
  });
  std::vector<HighlightSpan> out;
  for (const auto& s : spans) {
    if (!out.empty() && s.start_word <= out.back().end_word) {
      out.back().end_word = std::max(out.back().end_word, s.end_word);
    } else {
      out.push_back(s);
    }
  }
  return out;
}

struct HeaderIndex {
  std::unordered_map<std::string, std::size_t> by_name;
  std::size_t require(const std::string& name, const fs::path& file) const {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw FormatError("file '" + file.string() + "': missing required column '" + name + "'");
    return it->second;
  }
  bool has(const std::string& name) const { return by_name.count(name) > 0; }
};

CorpusSplit load_delimited(const fs::path& file, const std::string& split_name,
                           const ColumnMap& columns, bool annotated) {
  std::vector<std::string> lines = read_lines(file);
  if (lines.empty()) throw FormatError("file '" + file.string() + "': empty (no header row)");

  std::string header = strip_cr(lines[0]);
  char delim = header.find('\t') != std::string::npos ? '\t' : ',';
  std::vector<std::string> names = split_delimited(header, delim);
  HeaderIndex idx;
  for (std::size_t i = 0; i < names.size(); ++i) idx.by_name.emplace(names[i], i);

  std::size_t col_premise = idx.require(columns.premise, file);
  std::size_t col_hypothesis = idx.require(columns.hypothesis, file);
  std::size_t col_label = idx.require(columns.label, file);
  std::size_t col_explanation = annotated ? idx.require(columns.explanation, file) : 0;
  bool has_highlights = annotated && idx.has(columns.highlights);
  std::size_t col_highlights = has_highlights ? idx.by_name.at(columns.highlights) : 0;
  bool has_id = idx.has(columns.instance_id);
  std::size_t col_id = has_id ? idx.by_name.at(columns.instance_id) : 0;

  CorpusSplit split;
  split.name = split_name;
  std::unordered_set<std::string> seen_ids;

  for (std::size_t row = 1; row < lines.size(); ++row) {
    std::string line = strip_cr(lines[row]);
    if (line.empty()) continue;
    std::vector<std::string> fields = split_delimited(line, delim);
    if (fields.size() != names.size()) {
      ++split.skipped_rows;
      continue;
    }
    std::string label_text = normalize_whitespace(fields[col_label]);
    if (!is_label_string(label_text)) {  // covers "-" (no annotator consensus) and blanks
      ++split.skipped_rows;
      continue;
    }
    AnnotatedInstance inst;
    inst.base.premise = normalize_whitespace(fields[col_premise]);
    inst.base.hypothesis = normalize_whitespace(fields[col_hypothesis]);
    inst.base.gold_label = label_from_string(label_text);
    inst.base.instance_id = has_id ? normalize_whitespace(fields[col_id]) : "r" + std::to_string(row);
    if (inst.base.premise.empty() || inst.base.hypothesis.empty() ||
        inst.base.instance_id.empty()) {
      ++split.skipped_rows;
      continue;
    }
    if (annotated) {
      inst.gold_explanation = normalize_whitespace(fields[col_explanation]);
      if (inst.gold_explanation.empty()) {
        ++split.skipped_rows;
        continue;
      }
      if (has_highlights) {
        std::vector<HighlightSpan> spans;
        if (!parse_spans(normalize_whitespace(fields[col_highlights]), spans)) {
          ++split.skipped_rows;
          continue;
        }
        int word_count = static_cast<int>(whitespace_words(inst.base.hypothesis).size());
        bool in_bounds = true;
        for (const auto& s : spans) in_bounds = in_bounds && s.end_word < word_count;
        if (!in_bounds) {
          ++split.skipped_rows;
          continue;
        }
        inst.highlight_spans = normalize_spans(std::move(spans));
      }
    }
    if (!seen_ids.insert(inst.base.instance_id).second) {
      ++split.skipped_rows;
      continue;
    }
    split.instances.push_back(std::move(inst));
  }
  split.validate();
  return split;
}

}  // namespace

CorpusSplit load_esnli(const fs::path& file, const std::string& split_name,
                       const ColumnMap& columns) {
  return load_delimited(file, split_name, columns, /*annotated=*/true);
}

CorpusSplit load_nli(const fs::path& file, const std::string& split_name,
                     const ColumnMap& columns) {
  return load_delimited(file, split_name, columns, /*annotated=*/false);
}

// ------------------------------ filtering ------------------------------

FilterResult filter_noninformative(const CorpusSplit& split) {
  FilterResult result;
  result.kept.name = split.name;
  result.held_out.name = split.name + "-held-out";
  for (const auto& inst : split.instances) {
    bool noninformative =
        !inst.gold_explanation.empty() &&
        (contains_normalized(inst.gold_explanation, inst.base.premise) ||
         contains_normalized(inst.gold_explanation, inst.base.hypothesis));
    (noninformative ? result.held_out : result.kept).instances.push_back(inst);
  }
  return result;
}

// ------------------------------ highlight masks ------------------------------

RationaleMask mask_from_highlights(const AnnotatedInstance& instance,
                                   const TokenSeq& hypothesis_tokens) {
  const std::string& hyp = instance.base.hypothesis;
  TokenSeq words = whitespace_words(hyp);

  // Character ranges covered by the highlighted words.
  std::vector<std::pair<std::size_t, std::size_t>> char_ranges;
  for (const HighlightSpan& s : instance.highlight_spans) {
    if (s.start_word < 0 || s.end_word < s.start_word ||
        s.end_word >= static_cast<int>(words.size()))
      throw ConsistencyError("instance '" + instance.base.instance_id +
                             "': highlight span outside hypothesis word bounds");
    char_ranges.emplace_back(words[s.start_word].begin, words[s.end_word].end);
  }

  RationaleMask mask;
  mask.token_labels.reserve(hypothesis_tokens.size());
  mask.token_probs.reserve(hypothesis_tokens.size());
  for (const Token& tok : hypothesis_tokens) {
    if (tok.separator) {
      mask.token_labels.push_back(0);
      mask.token_probs.push_back(0.0);
      continue;
    }
    if (tok.end > hyp.size() || hyp.compare(tok.begin, tok.end - tok.begin, tok.text) != 0)
      throw ConsistencyError("instance '" + instance.base.instance_id +
                             "': tokenization does not match the hypothesis text");
    bool hit = false;
    for (const auto& [lo, hi] : char_ranges) hit = hit || (tok.begin < hi && tok.end > lo);
    mask.token_labels.push_back(hit ? 1 : 0);
    mask.token_probs.push_back(hit ? 1.0 : 0.0);
  }
  mask.validate();
  return mask;
}

// ------------------------------ canonical records ------------------------------

void write_jsonl(const CorpusSplit& split, const fs::path& file) {
  std::string body;
  for (const auto& inst : split.instances) {
    body += to_json(inst).dump();
    body += '\n';
  }
  atomic_write(file, body);
}

CorpusSplit read_jsonl(const fs::path& file, const std::string& split_name) {
  CorpusSplit split;
  split.name = split_name;
  for (const std::string& line : read_lines(file)) {
    if (line.empty()) continue;
    try {
      split.instances.push_back(instance_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("file '" + file.string() + "': bad record: " + e.what());
    }
  }
  split.validate();
  return split;
}

}  // namespace lirex
