#include "mghl/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mghl {

namespace {

constexpr char kMagic[4] = {'M', 'G', 'H', 'L'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <typename T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void real(double v) { uint(std::bit_cast<std::uint64_t>(v)); }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : buf_(b) {}

  template <typename T>
  T uint() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(buf_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  double real() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw CheckpointError("checkpoint body ends early");
  }

  std::span<const std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> b) {
  return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), b.data(), static_cast<uInt>(b.size())));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParamSet& params) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.uint<std::uint16_t>(kCheckpointVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t d : t.shape()) w.uint<std::uint64_t>(d);
    for (double v : t.data()) w.real(v);
  }
  w.uint<std::uint32_t>(crc_of(w.out));
  return std::move(w.out);
}

ParamSet decode_checkpoint(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kHeader = sizeof kMagic + 2;
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("not an MGHL checkpoint");
  }
  const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
  if (version != kCheckpointVersion) throw VersionMismatchError(version);
  if (bytes.size() < kHeader + 4 + 4) throw ChecksumError("checkpoint truncated");

  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  if (tail.uint<std::uint32_t>() != crc_of(body)) throw ChecksumError("checkpoint checksum mismatch");

  Reader r(body.subspan(kHeader));
  const auto count = r.uint<std::uint32_t>();
  ParamSet out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.uint<std::uint32_t>());
    Shape shape(r.uint<std::uint32_t>());
    std::size_t n = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.uint<std::uint64_t>());
      n *= d;
    }
    if (n > r.remaining() / 8) throw CheckpointError("tensor '" + name + "' larger than file");
    Tensor t(shape);
    for (double& v : t.data()) v = r.real();
    if (!out.emplace(std::move(name), std::move(t)).second) throw CheckpointError("duplicate tensor name");
  }
  if (r.remaining() != 0) throw CheckpointError("trailing bytes after last tensor");
  return out;
}

void save_checkpoint(const ParamSet& params, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace mghl
