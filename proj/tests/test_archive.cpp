#include <gtest/gtest.h>

#include "vulndet/archive.hpp"
#include "vulndet/error.hpp"

using namespace vulndet;

namespace {

EncodedArchive sample_archive() {
  EncodedArchive a;
  a.max_len = 3;
  a.vocab_hash = "0badf00d";
  a.add({{2, 3, 0}, 2}, true, 1);
  a.add({{4, 4, 5}, 3}, false, -1);
  return a;
}

ErrorCode code_of(std::string_view bytes) {
  try {
    deserialize_archive(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Archive, ByteLayout) {
  const auto bytes = serialize_archive(sample_archive());
  ASSERT_EQ(bytes.size(), 28u + 2 * (4 + 4 * 3) + 2 * 5);
  EXPECT_EQ(bytes.substr(0, 4), "VDEA");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 3);
  EXPECT_EQ(bytes.substr(12, 8), "0badf00d");
  EXPECT_EQ(bytes[20], 2);
  EXPECT_EQ(bytes[28], 2);  // first trueLength
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 1]), 0xFF);  // -1 little-endian
}

TEST(Archive, RoundTrip) {
  const auto a = sample_archive();
  const auto b = deserialize_archive(serialize_archive(a));
  EXPECT_EQ(b.max_len, a.max_len);
  EXPECT_EQ(b.vocab_hash, a.vocab_hash);
  ASSERT_EQ(b.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(b.samples[i].ids, a.samples[i].ids);
    EXPECT_EQ(b.samples[i].true_length, a.samples[i].true_length);
  }
  EXPECT_EQ(b.vulnerable, a.vulnerable);
  EXPECT_EQ(b.class_index, a.class_index);
}

TEST(Archive, EmptyArchive) {
  EncodedArchive a;
  a.max_len = 400;
  a.vocab_hash = "00000000";
  const auto b = deserialize_archive(serialize_archive(a));
  EXPECT_EQ(b.size(), 0u);
  EXPECT_EQ(b.max_len, 400u);
}

TEST(Archive, Corruption) {
  auto bytes = serialize_archive(sample_archive());
  EXPECT_EQ(code_of(bytes.substr(0, bytes.size() - 1)), ErrorCode::SpecCorrupt);
  EXPECT_EQ(code_of(bytes + "x"), ErrorCode::SpecCorrupt);
  EXPECT_EQ(code_of("XXXX"), ErrorCode::SpecCorrupt);
  bytes[4] = 2;
  EXPECT_EQ(code_of(bytes), ErrorCode::VersionMismatch);
}

TEST(Archive, RejectsWrongLength) {
  EncodedArchive a;
  a.max_len = 3;
  EXPECT_THROW(a.add({{1, 2}, 2}, false, -1), Error);
}
