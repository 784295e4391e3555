#pragma once

// Encoded-dataset archive. Little-endian byte layout, version 1:
//
//   offset  size            field
//   0       4               magic "VDEA"
//   4       4   u32         format version
//   8       4   u32         maxLen
//   12      8   ascii       vocabulary hash (8 lowercase hex digits)
//   20      8   u64         sample count N
//   28      N*(4+4*maxLen)  rows: u32 trueLength, then maxLen u32 ids
//   ...     N*5             labels: u8 vulnerable (0/1), i32 class index (-1 = none)

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vulndet/vocab.hpp"

namespace vulndet {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct EncodedArchive {
  std::uint32_t max_len = 0;
  std::string vocab_hash;
  std::vector<EncodedSample> samples;
  std::vector<std::uint8_t> vulnerable;
  std::vector<std::int32_t> class_index;

  std::size_t size() const { return samples.size(); }
  void add(EncodedSample sample, bool is_vulnerable, std::int32_t label);
};

std::string serialize_archive(const EncodedArchive& archive);
/// Throws VersionMismatch, SpecCorrupt (bad magic / truncated / inconsistent).
EncodedArchive deserialize_archive(std::string_view bytes);

void save_archive(const EncodedArchive& archive, const std::string& path);
EncodedArchive load_archive(const std::string& path);

}  // namespace vulndet
