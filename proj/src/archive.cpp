#include "vulndet/archive.hpp"

#include <fstream>
#include <type_traits>
#include <sstream>

#include "vulndet/error.hpp"

namespace vulndet {

namespace {

constexpr std::string_view kMagic = "VDEA";

template <typename T>
void put(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::SpecCorrupt, "archive is truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void EncodedArchive::add(EncodedSample sample, bool is_vulnerable, std::int32_t label) {
  if (sample.ids.size() != max_len) {
    throw Error(ErrorCode::LengthMismatch, "sample of length " + std::to_string(sample.ids.size()) +
                                               " in an archive of maxLen " + std::to_string(max_len));
  }
  samples.push_back(std::move(sample));
  vulnerable.push_back(is_vulnerable ? 1 : 0);
  class_index.push_back(label);
}

std::string serialize_archive(const EncodedArchive& archive) {
  if (archive.vocab_hash.size() != 8) throw Error(ErrorCode::InvalidArgument, "vocabulary hash must be 8 hex digits");
  std::string out;
  out.reserve(28 + archive.size() * (9 + 4 * std::size_t{archive.max_len}));
  out += kMagic;
  put<std::uint32_t>(out, kArchiveVersion);
  put<std::uint32_t>(out, archive.max_len);
  out += archive.vocab_hash;
  put<std::uint64_t>(out, archive.size());
  for (const auto& s : archive.samples) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.true_length));
    for (auto id : s.ids) put<std::uint32_t>(out, id);
  }
  for (std::size_t i = 0; i < archive.size(); ++i) {
    put<std::uint8_t>(out, archive.vulnerable[i]);
    put<std::int32_t>(out, archive.class_index[i]);
  }
  return out;
}

EncodedArchive deserialize_archive(std::string_view bytes) {
  Reader in(bytes);
  if (bytes.size() < kMagic.size() || in.take(kMagic.size()) != kMagic) {
    throw Error(ErrorCode::SpecCorrupt, "not an encoded archive (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kArchiveVersion) {
    throw Error(ErrorCode::VersionMismatch, "archive version " + std::to_string(version) +
                                                ", reader supports " + std::to_string(kArchiveVersion));
  }
  EncodedArchive archive;
  archive.max_len = in.get<std::uint32_t>();
  archive.vocab_hash = std::string(in.take(8));
  const auto count = in.get<std::uint64_t>();
  if (archive.max_len == 0 && count > 0) throw Error(ErrorCode::SpecCorrupt, "archive maxLen is zero");
  if (count > bytes.size()) throw Error(ErrorCode::SpecCorrupt, "archive sample count exceeds file size");
  archive.samples.resize(count);
  for (auto& s : archive.samples) {
    s.true_length = in.get<std::uint32_t>();
    if (s.true_length > archive.max_len) throw Error(ErrorCode::SpecCorrupt, "trueLength exceeds maxLen");
    s.ids.resize(archive.max_len);
    for (auto& id : s.ids) id = in.get<std::uint32_t>();
  }
  archive.vulnerable.resize(count);
  archive.class_index.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    archive.vulnerable[i] = in.get<std::uint8_t>();
    archive.class_index[i] = in.get<std::int32_t>();
  }
  if (!in.done()) throw Error(ErrorCode::SpecCorrupt, "trailing bytes after archive labels");
  return archive;
}

void save_archive(const EncodedArchive& archive, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write archive '" + path + "'");
  const auto bytes = serialize_archive(archive);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

EncodedArchive load_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open archive '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_archive(buf.str());
}

}  // namespace vulndet
