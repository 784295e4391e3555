#include "vulndet/vocab.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vulndet/error.hpp"

namespace vulndet {

Vocabulary::Vocabulary() {
  push(std::string(kPadToken));
  push(std::string(kUnkToken));
}

void Vocabulary::push(std::string token) {
  const auto id = static_cast<std::uint32_t>(id_to_token_.size());
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const NormalizedSample> corpus, std::size_t min_freq) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot build a vocabulary from no samples");
  if (min_freq < 1) throw Error(ErrorCode::InvalidArgument, "minFreq must be at least 1");

  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& sample : corpus) {
    for (const auto& tok : sample.tokens) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (n >= min_freq && tok != kPadToken && tok != kUnkToken) ranked.emplace_back(tok, n);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  Vocabulary vocab;
  for (auto& [tok, n] : ranked) vocab.push(tok);
  return vocab;
}

Vocabulary Vocabulary::from_text(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  if (lines.size() < 2 || lines[0] != kPadToken || lines[1] != kUnkToken) {
    throw Error(ErrorCode::InvalidArgument, "vocabulary must start with <PAD> and <UNK> lines");
  }
  Vocabulary vocab;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (vocab.token_to_id_.contains(lines[i])) {
      throw Error(ErrorCode::InvalidArgument, "duplicate vocabulary token on line " + std::to_string(i));
    }
    vocab.push(lines[i]);
  }
  return vocab;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open vocabulary '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (const auto& tok : id_to_token_) {
    out += tok;
    out.push_back('\n');
  }
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write vocabulary '" + path + "'");
  out << to_text();
}

std::uint32_t Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(std::uint32_t id) const {
  if (id >= id_to_token_.size()) {
    throw Error(ErrorCode::IdOutOfRange,
                "id " + std::to_string(id) + " >= vocabulary size " + std::to_string(size()));
  }
  return id_to_token_[id];
}

std::string Vocabulary::hash() const { return crc32_hex(to_text()); }

std::string crc32_hex(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

EncodedSample encode(const NormalizedSample& sample, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 1) throw Error(ErrorCode::InvalidArgument, "maxLen must be at least 1");
  EncodedSample out;
  out.true_length = std::min(sample.tokens.size(), max_len);
  out.ids.assign(max_len, kPadId);
  for (std::size_t i = 0; i < out.true_length; ++i) out.ids[i] = vocab.id_of(sample.tokens[i]);
  return out;
}

std::vector<std::string> decode(const EncodedSample& sample, const Vocabulary& vocab) {
  std::vector<std::string> tokens;
  for (auto id : sample.ids) {
    if (id >= vocab.size()) {
      throw Error(ErrorCode::IdOutOfRange,
                  "id " + std::to_string(id) + " >= vocabulary size " + std::to_string(vocab.size()));
    }
    if (id == kPadId) break;
    tokens.push_back(vocab.token_of(id));
  }
  return tokens;
}

}  // namespace vulndet
