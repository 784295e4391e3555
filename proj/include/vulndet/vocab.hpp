#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vulndet/normalizer.hpp"

namespace vulndet {

inline constexpr std::uint32_t kPadId = 0;
inline constexpr std::uint32_t kUnkId = 1;
inline constexpr std::string_view kPadToken = "<PAD>";
inline constexpr std::string_view kUnkToken = "<UNK>";

/// Token <-> id table. Ids 0 and 1 are PAD and UNK; the rest are assigned by
/// descending corpus frequency with lexicographic tie-breaking.
class Vocabulary {
 public:
  Vocabulary();

  static Vocabulary build(std::span<const NormalizedSample> corpus, std::size_t min_freq = 1);

  /// Parses the one-token-per-line text format.
  static Vocabulary from_text(std::string_view text);
  static Vocabulary load(const std::string& path);

  std::string to_text() const;
  void save(const std::string& path) const;

  std::size_t size() const { return id_to_token_.size(); }
  std::uint32_t id_of(const std::string& token) const;  // kUnkId when absent
  const std::string& token_of(std::uint32_t id) const;
  bool contains(const std::string& token) const { return token_to_id_.contains(token); }

  /// 8-hex-digit CRC-32 of the text serialization; ties archives and models to a vocabulary.
  std::string hash() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.id_to_token_ == b.id_to_token_;
  }

 private:
  void push(std::string token);

  std::unordered_map<std::string, std::uint32_t> token_to_id_;
  std::vector<std::string> id_to_token_;
};

struct EncodedSample {
  std::vector<std::uint32_t> ids;  // always exactly maxLen long
  std::size_t true_length = 0;     // min(token count, maxLen)
};

/// Maps the first maxLen tokens through the vocabulary and right-pads with PAD.
EncodedSample encode(const NormalizedSample& sample, const Vocabulary& vocab, std::size_t max_len);

/// Inverse of encode, stopping at the first PAD. Throws IdOutOfRange.
std::vector<std::string> decode(const EncodedSample& sample, const Vocabulary& vocab);

std::string crc32_hex(std::string_view bytes);

}  // namespace vulndet
