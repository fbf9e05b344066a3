#pragma once

#include "voxgan/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace voxgan {

/// Versioned binary container shared by checkpoints and .vxg grids.
///
///   "VXGN" | u16 version | u32 metadata length | metadata bytes
///   | blocks... | u32 CRC32 of everything before it
///
/// block: u32 name length | name | u8 dtype | u32 rank | u64 extents[rank]
///        | raw little-endian elements
namespace container {

inline constexpr char kMagic[4] = {'V', 'X', 'G', 'N'};
inline constexpr std::uint16_t kVersion = 1;

enum class DType : std::uint8_t { F64 = 0, F32 = 1, U8 = 2, I64 = 3 };

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

struct Block {
  std::string name;
  DType dtype = DType::F64;
  std::vector<std::uint64_t> extents;
  std::vector<std::uint8_t> raw;  // little-endian element bytes

  static Block from_tensor(std::string name, const Tensor& t);
  static Block from_doubles(std::string name, std::vector<std::uint64_t> extents, std::span<const double> v);
  static Block from_floats(std::string name, std::vector<std::uint64_t> extents, std::span<const float> v);
  static Block from_i64(std::string name, std::span<const std::int64_t> v);

  std::uint64_t element_count() const;
  /// Decodes any floating dtype; the stored shape becomes the tensor shape.
  Tensor to_tensor() const;
  std::vector<double> to_doubles() const;
  std::vector<std::int64_t> to_i64() const;
};

struct File {
  std::uint16_t version = kVersion;
  std::string metadata;
  std::vector<Block> blocks;

  const Block& block(const std::string& name) const;
  const Block* find(const std::string& name) const;
};

std::string encode(const File& f);
File decode(const std::string& bytes);

void write_file(const File& f, const std::filesystem::path& path);
File read_file(const std::filesystem::path& path);

std::uint32_t crc32(std::string_view bytes);

}  // namespace container

std::string read_all(const std::filesystem::path& path);
void write_all(const std::filesystem::path& path, const std::string& bytes);

}  // namespace voxgan
