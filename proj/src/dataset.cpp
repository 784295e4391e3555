#include "vulndet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "vulndet/error.hpp"

namespace vulndet {

using nlohmann::json;

bool is_well_formed_cwe(std::string_view cwe) {
  if (cwe.size() <= 4 || cwe.substr(0, 4) != "CWE-") return false;
  return std::all_of(cwe.begin() + 4, cwe.end(), [](char c) { return c >= '0' && c <= '9'; });
}

CorpusSample parse_corpus_line(std::string_view line, std::size_t line_number) {
  auto fail = [&](const std::string& why) -> CorpusSample {
    throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_number) + ": " + why);
  };
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error& e) {
    return fail(std::string("invalid JSON (") + e.what() + ")");
  }
  if (!record.is_object()) return fail("record is not a JSON object");

  CorpusSample sample;
  auto code = record.find("code");
  if (code == record.end() || !code->is_string()) return fail("missing string field 'code'");
  sample.code = code->get<std::string>();

  auto flag = record.find("vulnerable");
  if (flag == record.end()) return fail("missing field 'vulnerable'");
  if (flag->is_boolean()) {
    sample.vulnerable = flag->get<bool>();
  } else if (flag->is_number_integer() && (*flag == 0 || *flag == 1)) {
    sample.vulnerable = *flag == 1;
  } else {
    return fail("field 'vulnerable' must be 0 or 1");
  }

  auto cwe = record.find("cwe");
  const bool has_cwe = cwe != record.end() && !cwe->is_null();
  if (sample.vulnerable) {
    if (!has_cwe || !cwe->is_string()) return fail("vulnerable sample needs a string field 'cwe'");
    const auto text = cwe->get<std::string>();
    if (!is_well_formed_cwe(text)) return fail("malformed CWE id '" + text + "'");
    sample.cwe = text;
  } else if (has_cwe) {
    return fail("non-vulnerable sample must not carry a 'cwe'");
  }

  auto id = record.find("id");
  if (id != record.end() && id->is_string()) {
    sample.source_id = id->get<std::string>();
  } else if (id != record.end() && id->is_number_integer()) {
    sample.source_id = std::to_string(id->get<long long>());
  } else {
    sample.source_id = "line-" + std::to_string(line_number);
  }
  return sample;
}

LoadedCorpus parse_corpus(std::string_view text, std::size_t max_rejected) {
  LoadedCorpus corpus;
  std::size_t line_number = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      corpus.samples.push_back(parse_corpus_line(line, line_number));
    } catch (const Error& e) {
      corpus.rejected.push_back({line_number, e.what()});
      if (corpus.rejected.size() > max_rejected) {
        throw Error(ErrorCode::MalformedLine, "more than " + std::to_string(max_rejected) +
                                                  " malformed lines; last: " + e.what());
      }
    }
  }
  if (corpus.samples.empty()) throw Error(ErrorCode::EmptyCorpus, "corpus has no valid samples");
  return corpus;
}

LoadedCorpus load_corpus(const std::string& path, std::size_t max_rejected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open corpus '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str(), max_rejected);
}

// ------------------------------------------------------------------ LabelMap

LabelMap::LabelMap(std::vector<std::string> cwes) : index_to_cwe_(std::move(cwes)) {
  for (std::size_t i = 0; i < index_to_cwe_.size(); ++i) {
    if (!cwe_to_index_.emplace(index_to_cwe_[i], i).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate label '" + index_to_cwe_[i] + "'");
    }
  }
}

LabelMap LabelMap::build(std::span<const CorpusSample> samples) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : samples) {
    if (s.vulnerable && s.cwe) ++counts[*s.cwe];
  }
  if (counts.empty()) throw Error(ErrorCode::NoVulnerableSamples, "no vulnerable samples to label");
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> cwes;
  for (auto& [cwe, n] : ranked) cwes.push_back(cwe);
  return LabelMap(std::move(cwes));
}

LabelMap LabelMap::from_text(std::string_view text) {
  std::vector<std::string> cwes;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!is_well_formed_cwe(line)) throw Error(ErrorCode::InvalidArgument, "malformed label '" + line + "'");
    cwes.push_back(std::move(line));
  }
  return LabelMap(std::move(cwes));
}

LabelMap LabelMap::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open label map '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

std::string LabelMap::to_text() const {
  std::string out;
  for (const auto& c : index_to_cwe_) out += c + "\n";
  return out;
}

void LabelMap::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write label map '" + path + "'");
  out << to_text();
}

std::optional<std::size_t> LabelMap::index_of(const std::string& cwe) const {
  auto it = cwe_to_index_.find(cwe);
  if (it == cwe_to_index_.end()) return std::nullopt;
  return it->second;
}

const std::string& LabelMap::cwe_of(std::size_t index) const {
  if (index >= index_to_cwe_.size()) {
    throw Error(ErrorCode::IndexOutOfRange, "class index " + std::to_string(index) + " >= " +
                                                std::to_string(index_to_cwe_.size()));
  }
  return index_to_cwe_[index];
}

// --------------------------------------------------------------------- split

Split split(std::span<const CorpusSample> samples, const SplitSpec& spec) {
  if (samples.size() < 2) throw Error(ErrorCode::TooFewSamples, "need at least 2 samples to split");
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "train fraction must lie strictly between 0 and 1");
  }
  std::mt19937_64 rng(spec.seed);
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string key = spec.stratified ? samples[i].cwe.value_or("") : "";
    groups[key].push_back(i);
  }
  Split out;
  for (auto& [key, members] : groups) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_train = static_cast<std::size_t>(
        std::lround(spec.train_fraction * static_cast<double>(members.size())));
    out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
  }
  // Both sides must be non-empty.
  if (out.test.empty()) {
    out.test.push_back(out.train.back());
    out.train.pop_back();
  } else if (out.train.empty()) {
    out.train.push_back(out.test.back());
    out.test.pop_back();
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

// --------------------------------------------------------------------- stats

ClassStats class_stats(std::span<const CorpusSample> samples) {
  ClassStats stats;
  stats.total = samples.size();
  for (const auto& s : samples) {
    if (s.vulnerable) {
      ++stats.vulnerable;
      if (s.cwe) ++stats.per_cwe[*s.cwe];
    } else {
      ++stats.non_vulnerable;
    }
  }
  const auto lo = std::min(stats.vulnerable, stats.non_vulnerable);
  const auto hi = std::max(stats.vulnerable, stats.non_vulnerable);
  if (lo > 0) stats.binary_imbalance = static_cast<double>(hi) / static_cast<double>(lo);
  std::size_t largest = 0, smallest = 0;
  for (const auto& [cwe, n] : stats.per_cwe) {
    if (!stats.largest_cwe || n > largest) {
      stats.largest_cwe = cwe;
      largest = n;
    }
    if (!stats.smallest_cwe || n < smallest) {
      stats.smallest_cwe = cwe;
      smallest = n;
    }
  }
  if (smallest > 0) stats.cwe_imbalance = static_cast<double>(largest) / static_cast<double>(smallest);
  return stats;
}

std::string format_stats_table(const ClassStats& stats) {
  std::ostringstream out;
  out << "label               count\n";
  out << "------------------  --------\n";
  auto row = [&](const std::string& label, std::size_t n) {
    out << label << std::string(label.size() < 20 ? 20 - label.size() : 1, ' ') << n << "\n";
  };
  row("total", stats.total);
  row("non-vulnerable", stats.non_vulnerable);
  row("vulnerable", stats.vulnerable);
  std::vector<std::pair<std::string, std::size_t>> ranked(stats.per_cwe.begin(), stats.per_cwe.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [cwe, n] : ranked) row("  " + cwe, n);
  out << "binary imbalance (majority/minority): " << stats.binary_imbalance << "\n";
  out << "CWE classes: " << stats.per_cwe.size();
  if (stats.largest_cwe) {
    out << " (largest " << *stats.largest_cwe << ", smallest " << *stats.smallest_cwe
        << ", ratio " << stats.cwe_imbalance << ")";
  }
  out << "\n";
  return out.str();
}

std::string stats_to_json(const ClassStats& stats) {
  json j;
  j["total"] = stats.total;
  j["non_vulnerable"] = stats.non_vulnerable;
  j["vulnerable"] = stats.vulnerable;
  j["per_cwe"] = stats.per_cwe;
  j["binary_imbalance"] = stats.binary_imbalance;
  j["cwe_imbalance"] = stats.cwe_imbalance;
  j["largest_cwe"] = stats.largest_cwe ? json(*stats.largest_cwe) : json(nullptr);
  j["smallest_cwe"] = stats.smallest_cwe ? json(*stats.smallest_cwe) : json(nullptr);
  return j.dump(2);
}

}  // namespace vulndet
