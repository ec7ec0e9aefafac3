#include "archive.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "errors.hpp"
#include "rng.hpp"

namespace tsdn {

namespace {

constexpr char kMagic[8] = {'T', 'S', 'D', 'N', 'A', 'R', 'C', '\0'};
constexpr std::uint8_t kNativeTag = std::endian::native == std::endian::little ? 1 : 2;
constexpr std::uint8_t kFloat64 = 1;

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

template <typename T>
T byteswap(T v) {
  auto* p = reinterpret_cast<unsigned char*>(&v);
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
  return v;
}

class Reader {
 public:
  Reader(const std::string& data, std::string where) : data_(data), where_(std::move(where)) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return swap_ ? byteswap(v) : v;
  }
  void bytes(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  void set_swap(bool s) { swap_ = s; }
  bool swap() const { return swap_; }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) fail(ErrorCode::Schema, "corrupt archive (truncated): " + where_);
  }
  const std::string& data_;
  std::string where_;
  std::size_t pos_ = 0;
  bool swap_ = false;
};

}  // namespace

void write_archive(const std::filesystem::path& path, const std::vector<NamedTensor>& entries) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kArchiveVersion);
  w.put<std::uint8_t>(kNativeTag);
  w.put<std::uint8_t>(0);
  w.put<std::uint8_t>(0);
  w.put<std::uint8_t>(0);
  w.put<std::uint64_t>(entries.size());
  for (const NamedTensor& e : entries) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.put<std::uint8_t>(kFloat64);
    w.put<std::uint8_t>(0);
    w.put<std::uint8_t>(0);
    w.put<std::uint8_t>(0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.tensor.rank()));
    for (std::size_t d : e.tensor.shape()) w.put<std::uint64_t>(d);
    w.bytes(e.tensor.data(), e.tensor.size() * sizeof(double));
  }
  w.put<std::uint64_t>(fnv1a(w.buffer()));

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write archive " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

std::vector<NamedTensor> read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open archive " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string();
  if (data.size() < sizeof kMagic + 24 || std::memcmp(data.data(), kMagic, sizeof kMagic) != 0)
    fail(ErrorCode::Schema, "not a tensor archive: " + where);

  // Endian tag sits after the version; read it first to know how to decode the rest.
  const auto tag = static_cast<std::uint8_t>(data[sizeof kMagic + 4]);
  if (tag != 1 && tag != 2) fail(ErrorCode::Schema, "corrupt archive (bad endian tag): " + where);
  Reader r(data, where);
  r.set_swap(tag != kNativeTag);
  char magic[8];
  r.bytes(magic, sizeof magic);
  const auto version = r.get<std::uint32_t>();
  if (version != kArchiveVersion)
    fail(ErrorCode::Version, "archive version " + std::to_string(version) + " unsupported (expected " +
                                 std::to_string(kArchiveVersion) + "): " + where);

  std::uint64_t stored;
  std::memcpy(&stored, data.data() + data.size() - 8, 8);
  if (r.swap()) stored = byteswap(stored);
  if (stored != fnv1a(std::string_view(data).substr(0, data.size() - 8)))
    fail(ErrorCode::Schema, "corrupt archive (checksum mismatch): " + where);

  for (int i = 0; i < 4; ++i) r.get<std::uint8_t>();
  const auto count = r.get<std::uint64_t>();
  std::vector<NamedTensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor e;
    const auto len = r.get<std::uint32_t>();
    e.name.resize(len);
    r.bytes(e.name.data(), len);
    const auto dtype = r.get<std::uint8_t>();
    if (dtype != kFloat64) fail(ErrorCode::Schema, "archive entry " + e.name + " has unsupported dtype");
    for (int p = 0; p < 3; ++p) r.get<std::uint8_t>();
    const auto rank = r.get<std::uint32_t>();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    e.tensor = Tensor(shape);
    for (double& v : e.tensor.values()) v = r.get<double>();
    out.push_back(std::move(e));
  }
  if (r.pos() != data.size() - 8) fail(ErrorCode::Schema, "corrupt archive (trailing bytes): " + where);
  return out;
}

}  // namespace tsdn
