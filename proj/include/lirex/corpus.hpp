#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lirex/types.hpp"

namespace lirex {

// One dataset split. Instances keep their file order; loading is
// deterministic. skipped_rows counts malformed or unusable input rows.
struct CorpusSplit {
  std::string name;  // train / dev / test / dev_matched / dev_mismatched
  std::vector<AnnotatedInstance> instances;
  std::size_t skipped_rows = 0;

  // Enforces unique instance ids and per-instance validity.
  void validate() const;
};

// Column names in a delimited input file. The highlight column carries
// inclusive word-index ranges over the hypothesis, formatted like "1-2;5-5"
// (empty for none).
struct ColumnMap {
  std::string instance_id = "instance_id";  // synthesized as "r<row>" when absent
  std::string premise = "premise";
  std::string hypothesis = "hypothesis";
  std::string label = "gold_label";
  std::string explanation = "gold_explanation";
  std::string highlights = "highlight_spans";
};

// Loads an annotated split (explanations + rationale highlights) from a
// comma- or tab-delimited file with a header row. Rows with missing or "-"
// labels, empty text fields, empty explanations, malformed highlight spans,
// or duplicate ids are counted in skipped_rows and dropped. Throws IoError
// when the file cannot be read and FormatError when required columns are
// missing from the header.
CorpusSplit load_esnli(const std::filesystem::path& file, const std::string& split_name = "train",
                       const ColumnMap& columns = {});

// Loads a plain NLI split (no explanation/highlight columns required).
CorpusSplit load_nli(const std::filesystem::path& file, const std::string& split_name = "train",
                     const ColumnMap& columns = {});

// Splits instances into (kept, held_out): an instance is held out when its
// normalized explanation contains the full normalized premise or hypothesis
// as a contiguous substring. Held-out instances are excluded from generator
// training only.
struct FilterResult {
  CorpusSplit kept;
  CorpusSplit held_out;
};
FilterResult filter_noninformative(const CorpusSplit& split);

// Converts word-index highlight spans into a token-level mask over the given
// hypothesis tokenization: a token is labeled 1 iff its character span
// overlaps a highlighted word range; separator tokens are always 0. The
// tokenization must map every non-separator token onto the hypothesis text
// exactly, and spans must lie within the hypothesis word count (throws
// ConsistencyError otherwise).
RationaleMask mask_from_highlights(const AnnotatedInstance& instance,
                                   const TokenSeq& hypothesis_tokens);

// Canonical record format: one serialized instance object per line.
void write_jsonl(const CorpusSplit& split, const std::filesystem::path& file);
CorpusSplit read_jsonl(const std::filesystem::path& file, const std::string& split_name);

}  // namespace lirex
