#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vulndet {

struct CorpusSample {
  std::string code;
  bool vulnerable = false;
  std::optional<std::string> cwe;  // present iff vulnerable
  std::string source_id;
};

/// True for "CWE-" followed by one or more digits.
bool is_well_formed_cwe(std::string_view cwe);

struct LineDiagnostic {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct LoadedCorpus {
  std::vector<CorpusSample> samples;
  std::vector<LineDiagnostic> rejected;
};

/// Parses one JSONL record; throws MalformedLine describing the problem.
CorpusSample parse_corpus_line(std::string_view line, std::size_t line_number);

/// Reads a JSONL corpus: {"code": str, "vulnerable": 0|1, "cwe": str, "id": str}.
/// Bad lines are collected in `rejected`; loading fails with MalformedLine
/// once more than `max_rejected` lines are bad, and with EmptyCorpus when no
/// line is valid.
LoadedCorpus load_corpus(const std::string& path, std::size_t max_rejected = 1000);
LoadedCorpus parse_corpus(std::string_view text, std::size_t max_rejected = 1000);

/// Bijective CWE <-> class-index table, indexed by descending frequency with
/// lexicographic tie-breaking.
class LabelMap {
 public:
  LabelMap() = default;
  explicit LabelMap(std::vector<std::string> cwes);

  static LabelMap build(std::span<const CorpusSample> samples);

  static LabelMap from_text(std::string_view text);
  static LabelMap load(const std::string& path);
  std::string to_text() const;
  void save(const std::string& path) const;

  std::size_t size() const { return index_to_cwe_.size(); }
  std::optional<std::size_t> index_of(const std::string& cwe) const;
  const std::string& cwe_of(std::size_t index) const;
  const std::vector<std::string>& cwes() const { return index_to_cwe_; }

  friend bool operator==(const LabelMap& a, const LabelMap& b) {
    return a.index_to_cwe_ == b.index_to_cwe_;
  }

 private:
  std::vector<std::string> index_to_cwe_;
  std::map<std::string, std::size_t> cwe_to_index_;
};

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 42;
  bool stratified = true;
};

struct Split {
  std::vector<std::size_t> train;  // indices into the input, ascending
  std::vector<std::size_t> test;
};

/// Seeded shuffle split. Stratification groups by CWE (or the non-vulnerable
/// label) and takes round(fraction * n) of every group for training.
Split split(std::span<const CorpusSample> samples, const SplitSpec& spec);

struct ClassStats {
  std::size_t total = 0;
  std::size_t non_vulnerable = 0;
  std::size_t vulnerable = 0;
  std::map<std::string, std::size_t> per_cwe;
  double binary_imbalance = 0.0;  // majority / minority, 0 when a side is empty
  std::optional<std::string> largest_cwe;
  std::optional<std::string> smallest_cwe;
  double cwe_imbalance = 0.0;
};

ClassStats class_stats(std::span<const CorpusSample> samples);
std::string format_stats_table(const ClassStats& stats);
std::string stats_to_json(const ClassStats& stats);

}  // namespace vulndet
