#include <cstring>
#include <fstream>
#include <sstream>

#include "vulndet/model.hpp"
#include "vulndet/vocab.hpp"

namespace vulndet {

namespace {

constexpr std::string_view kMagicLine = "VULNDET-MODEL";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(std::string_view bytes, std::size_t& pos, std::size_t width) {
  if (bytes.size() - pos < width) throw Error(ErrorCode::ChecksumMismatch, "payload ends early");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  }
  pos += width;
  return v;
}

// Reads "key value" from the next header line.
std::string expect_field(std::istringstream& header, const std::string& key) {
  std::string line;
  if (!std::getline(header, line)) throw Error(ErrorCode::SpecCorrupt, "header ends before '" + key + "'");
  const auto space = line.find(' ');
  const std::string found = line.substr(0, space);
  if (found != key) throw Error(ErrorCode::SpecCorrupt, "expected '" + key + "', found '" + line + "'");
  return space == std::string::npos ? "" : line.substr(space + 1);
}

std::size_t to_count(const std::string& text, const std::string& key) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw Error(ErrorCode::SpecCorrupt, "bad number '" + text + "' for '" + key + "'");
  }
}

}  // namespace

std::string serialize_model(const Model& model) {
  const ModelSpec& spec = model.spec();
  std::string payload;
  const auto tensors = model.state_tensors();
  for (const Tensor* t : tensors) {
    put_u32(payload, static_cast<std::uint32_t>(t->rank()));
    for (auto e : t->shape()) put_u64(payload, e);
    for (double v : t->values()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      put_u64(payload, bits);
    }
  }

  std::ostringstream header;
  header << kMagicLine << "\n";
  header << "format_version " << kModelFormatVersion << "\n";
  header << "stage " << spec.stage << "\n";
  header << "vocab_hash " << model.vocab_hash << "\n";
  header << "input_length " << spec.input_length << "\n";
  header << "vocab_size " << spec.vocab_size << "\n";
  header << "embedding_dim " << spec.embedding_dim << "\n";
  header << "layers " << spec.layers.size() << "\n";
  for (const auto& l : spec.layers) header << "layer " << l.to_text() << "\n";
  header << "labels " << model.labels.size() << "\n";
  for (const auto& c : model.labels.cwes()) header << "label " << c << "\n";
  header << "tensors " << tensors.size() << "\n";
  header << "payload_bytes " << payload.size() << "\n";
  header << "end\n";

  std::string out = header.str();
  out += payload;
  out += "crc32 " + crc32_hex(payload) + "\n";
  return out;
}

Model deserialize_model(std::string_view bytes) {
  const auto end_marker = bytes.find("\nend\n");
  if (bytes.substr(0, kMagicLine.size()) != kMagicLine) {
    throw Error(ErrorCode::SpecCorrupt, "not a model file (bad magic)");
  }
  if (end_marker == std::string_view::npos) throw Error(ErrorCode::SpecCorrupt, "model header is incomplete");
  std::istringstream header{std::string(bytes.substr(0, end_marker + 1))};
  std::string line;
  std::getline(header, line);  // magic

  const std::string version = expect_field(header, "format_version");
  if (version != std::to_string(kModelFormatVersion)) {
    throw Error(ErrorCode::VersionMismatch, "model file has format version " + version +
                                                ", this build reads version " +
                                                std::to_string(kModelFormatVersion));
  }
  ModelSpec spec;
  const auto stage = to_count(expect_field(header, "stage"), "stage");
  if (stage != 1 && stage != 2) throw Error(ErrorCode::SpecCorrupt, "stage must be 1 or 2");
  spec.stage = static_cast<int>(stage);
  const std::string vocab_hash = expect_field(header, "vocab_hash");
  spec.input_length = to_count(expect_field(header, "input_length"), "input_length");
  spec.vocab_size = to_count(expect_field(header, "vocab_size"), "vocab_size");
  spec.embedding_dim = to_count(expect_field(header, "embedding_dim"), "embedding_dim");
  const auto n_layers = to_count(expect_field(header, "layers"), "layers");
  for (std::size_t i = 0; i < n_layers; ++i) spec.layers.push_back(LayerSpec::parse(expect_field(header, "layer")));
  const auto n_labels = to_count(expect_field(header, "labels"), "labels");
  std::vector<std::string> cwes;
  for (std::size_t i = 0; i < n_labels; ++i) cwes.push_back(expect_field(header, "label"));
  const auto n_tensors = to_count(expect_field(header, "tensors"), "tensors");
  const auto payload_bytes = to_count(expect_field(header, "payload_bytes"), "payload_bytes");

  Model model;
  try {
    model = Model::build(spec, 0);
  } catch (const Error& e) {
    throw Error(ErrorCode::SpecCorrupt, std::string("stored spec is invalid: ") + e.what());
  }
  model.vocab_hash = vocab_hash;
  model.labels = LabelMap(std::move(cwes));

  const std::size_t payload_start = end_marker + 5;
  const std::string_view rest = bytes.substr(payload_start);
  if (rest.size() < payload_bytes) {
    throw Error(ErrorCode::ChecksumMismatch, "payload truncated: header declares " +
                                                 std::to_string(payload_bytes) + " bytes, file holds " +
                                                 std::to_string(rest.size()));
  }
  const std::string_view payload = rest.substr(0, payload_bytes);
  const std::string_view trailer = rest.substr(payload_bytes);
  const std::string expected = "crc32 " + crc32_hex(payload) + "\n";
  if (trailer != expected) {
    throw Error(ErrorCode::ChecksumMismatch, trailer.size() < expected.size()
                                                 ? "checksum trailer missing or truncated"
                                                 : "payload checksum does not match");
  }

  auto tensors = model.state_tensors();
  if (tensors.size() != n_tensors) {
    throw Error(ErrorCode::SpecCorrupt, "spec implies " + std::to_string(tensors.size()) +
                                            " tensors, file declares " + std::to_string(n_tensors));
  }
  std::size_t pos = 0;
  for (Tensor* t : tensors) {
    const auto rank = get_u64(payload, pos, 4);
    Shape shape(rank);
    for (auto& e : shape) e = get_u64(payload, pos, 8);
    if (shape != t->shape()) {
      throw Error(ErrorCode::SpecCorrupt, "stored tensor " + shape_string(shape) + " does not match spec " +
                                              shape_string(t->shape()));
    }
    for (auto& v : t->values()) {
      const std::uint64_t bits = get_u64(payload, pos, 8);
      std::memcpy(&v, &bits, sizeof v);
    }
  }
  if (pos != payload.size()) throw Error(ErrorCode::SpecCorrupt, "unused bytes in payload");
  return model;
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write model '" + path + "'");
  const auto bytes = serialize_model(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open model '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

}  // namespace vulndet
