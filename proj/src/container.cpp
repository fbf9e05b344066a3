#include "voxgan/container.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace voxgan {

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_all(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to '" + path.string() + "'");
}

namespace container {

namespace {

std::size_t dtype_width(DType d) {
  switch (d) {
    case DType::F64: return 8;
    case DType::F32: return 4;
    case DType::U8: return 1;
    case DType::I64: return 8;
  }
  throw FormatError("unknown dtype tag " + std::to_string(static_cast<int>(d)));
}

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

class Reader {
 public:
  explicit Reader(std::string_view s) : s_(s) {}
  template <typename U>
  U read() {
    need(sizeof(U));
    U v = get_le<U>(reinterpret_cast<const std::uint8_t*>(s_.data() + pos_));
    pos_ += sizeof(U);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto v = s_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  std::size_t remaining() const { return s_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw FormatError("container: truncated file");
  }
  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32(std::string_view bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  c = ::crc32(c, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(c);
}

Block Block::from_doubles(std::string name, std::vector<std::uint64_t> extents, std::span<const double> v) {
  Block b{std::move(name), DType::F64, std::move(extents), {}};
  b.raw.reserve(v.size() * 8);
  for (double d : v) put_le(b.raw, std::bit_cast<std::uint64_t>(d));
  return b;
}

Block Block::from_floats(std::string name, std::vector<std::uint64_t> extents, std::span<const float> v) {
  Block b{std::move(name), DType::F32, std::move(extents), {}};
  b.raw.reserve(v.size() * 4);
  for (float f : v) put_le(b.raw, std::bit_cast<std::uint32_t>(f));
  return b;
}

Block Block::from_i64(std::string name, std::span<const std::int64_t> v) {
  Block b{std::move(name), DType::I64, {v.size()}, {}};
  for (auto x : v) put_le(b.raw, static_cast<std::uint64_t>(x));
  return b;
}

Block Block::from_tensor(std::string name, const Tensor& t) {
  std::vector<std::uint64_t> ext(t.shape().begin(), t.shape().end());
#ifdef VOXGAN_FLOAT32
  return from_floats(std::move(name), std::move(ext), t.span());
#else
  return from_doubles(std::move(name), std::move(ext), t.span());
#endif
}

std::uint64_t Block::element_count() const {
  std::uint64_t n = 1;
  for (auto e : extents) n *= e;
  return n;
}

std::vector<double> Block::to_doubles() const {
  std::vector<double> out(element_count());
  const auto* p = raw.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (dtype) {
      case DType::F64: out[i] = std::bit_cast<double>(get_le<std::uint64_t>(p + 8 * i)); break;
      case DType::F32: out[i] = std::bit_cast<float>(get_le<std::uint32_t>(p + 4 * i)); break;
      case DType::U8: out[i] = p[i]; break;
      case DType::I64: out[i] = static_cast<double>(static_cast<std::int64_t>(get_le<std::uint64_t>(p + 8 * i))); break;
    }
  }
  return out;
}

std::vector<std::int64_t> Block::to_i64() const {
  if (dtype != DType::I64) throw FormatError("block '" + name + "' is not an integer block");
  std::vector<std::int64_t> out(element_count());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::int64_t>(get_le<std::uint64_t>(raw.data() + 8 * i));
  return out;
}

Tensor Block::to_tensor() const {
  Shape s(extents.begin(), extents.end());
  Tensor t(s);
  auto v = to_doubles();
  for (std::size_t i = 0; i < v.size(); ++i) t[static_cast<std::int64_t>(i)] = static_cast<Real>(v[i]);
  return t;
}

const Block* File::find(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return &b;
  return nullptr;
}

const Block& File::block(const std::string& name) const {
  if (const auto* b = find(name)) return *b;
  throw FormatError("container: missing block '" + name + "'");
}

std::string encode(const File& f) {
  std::string out(kMagic, 4);
  put_le(out, f.version);
  put_le(out, static_cast<std::uint32_t>(f.metadata.size()));
  out += f.metadata;
  for (const auto& b : f.blocks) {
    if (b.raw.size() != b.element_count() * dtype_width(b.dtype))
      throw FormatError("container: block '" + b.name + "' payload does not match its extents");
    put_le(out, static_cast<std::uint32_t>(b.name.size()));
    out += b.name;
    out.push_back(static_cast<char>(b.dtype));
    put_le(out, static_cast<std::uint32_t>(b.extents.size()));
    for (auto e : b.extents) put_le(out, e);
    out.append(reinterpret_cast<const char*>(b.raw.data()), b.raw.size());
  }
  put_le(out, crc32(out));
  return out;
}

File decode(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("container: bad magic (expected VXGN)");
  if (bytes.size() < 4 + 2 + 4 + 4) throw FormatError("container: truncated file");
  const std::string_view body(bytes.data(), bytes.size() - 4);
  const auto stored = get_le<std::uint32_t>(reinterpret_cast<const std::uint8_t*>(bytes.data() + body.size()));

  Reader r(body);
  (void)r.bytes(4);
  File f;
  f.version = r.read<std::uint16_t>();
  if (f.version != kVersion)
    throw FormatError("container: unsupported format version " + std::to_string(f.version) + " (expected " +
                      std::to_string(kVersion) + ")");
  const auto meta_len = r.read<std::uint32_t>();
  f.metadata = std::string(r.bytes(meta_len));
  while (r.remaining() > 0) {
    Block b;
    const auto name_len = r.read<std::uint32_t>();
    b.name = std::string(r.bytes(name_len));
    b.dtype = static_cast<DType>(r.read<std::uint8_t>());
    const auto width = dtype_width(b.dtype);
    const auto rank = r.read<std::uint32_t>();
    if (rank > 16) throw FormatError("container: implausible rank in block '" + b.name + "'");
    for (std::uint32_t i = 0; i < rank; ++i) b.extents.push_back(r.read<std::uint64_t>());
    const auto n = b.element_count() * width;
    if (n > r.remaining()) throw FormatError("container: truncated file");
    auto payload = r.bytes(n);
    b.raw.assign(payload.begin(), payload.end());
    f.blocks.push_back(std::move(b));
  }
  if (crc32(body) != stored) throw ChecksumError("container: CRC32 mismatch, file is corrupted");
  return f;
}

void write_file(const File& f, const std::filesystem::path& path) { write_all(path, encode(f)); }

File read_file(const std::filesystem::path& path) { return decode(read_all(path)); }

}  // namespace container
}  // namespace voxgan
