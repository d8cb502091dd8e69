#include "seqsum/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

namespace seqsum {

namespace {

constexpr std::string_view kMagic = "SEQSUMCK";
constexpr std::size_t kDigestSize = 32;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::array<unsigned char, kDigestSize> sha256_raw(std::string_view bytes) {
  std::array<unsigned char, kDigestSize> out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != kDigestSize)
    throw Error("sha256: digest failed");
  return out;
}

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
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
    if (bytes_.size() - pos_ < n) throw Error("checkpoint truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : sha256_raw(bytes)) {
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 0xf]);
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("file not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::string encode_checkpoint(const CheckpointData& data) {
  std::string out(kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, data.config_json.size());
  out += data.config_json;
  put<std::uint64_t>(out, data.tensors.size());
  for (const auto& t : data.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put<std::uint8_t>(out, t.trainable ? 1 : 0);
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.cols()));
    for (Eigen::Index r = 0; r < t.value.rows(); ++r)
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) put<double>(out, t.value(r, c));
  }
  const auto digest = sha256_raw(out);
  out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  return out;
}

CheckpointData decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + kDigestSize || bytes.substr(0, kMagic.size()) != kMagic)
    throw Error("not a checkpoint (bad magic)");
  const std::string_view body = bytes.substr(0, bytes.size() - kDigestSize);
  const auto expected = sha256_raw(body);
  if (std::memcmp(expected.data(), bytes.data() + body.size(), kDigestSize) != 0)
    throw Error("checkpoint checksum mismatch");

  Reader in(body.substr(kMagic.size()));
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw Error("unsupported checkpoint version " + std::to_string(version));
  CheckpointData data;
  data.config_json = std::string(in.take(in.get<std::uint64_t>()));
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = std::string(in.take(in.get<std::uint32_t>()));
    t.trainable = in.get<std::uint8_t>() != 0;
    const auto rank = in.get<std::uint32_t>();
    if (rank != 2) throw Error("checkpoint tensor \"" + t.name + "\" has unsupported rank " + std::to_string(rank));
    const auto rows = static_cast<Eigen::Index>(in.get<std::uint64_t>());
    const auto cols = static_cast<Eigen::Index>(in.get<std::uint64_t>());
    t.value.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) t.value(r, c) = in.get<double>();
    data.tensors.push_back(std::move(t));
  }
  if (!in.done()) throw Error("checkpoint has trailing bytes");
  return data;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
  write_file(path, encode_checkpoint(data));
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("checkpoint not found: " + path.string());
  return decode_checkpoint(read_file(path));
}

}  // namespace seqsum
