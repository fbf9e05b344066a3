#pragma once

#include "voxgan/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace voxgan {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cubic occupancy lattice, stored x-major: index = (x * N + y) * N + z.
/// y is the vertical axis for orientation purposes.
class VoxelGrid {
 public:
  VoxelGrid() = default;
  explicit VoxelGrid(std::int64_t extent, bool binary = true);

  std::int64_t extent() const { return extent_; }
  std::int64_t size() const { return extent_ * extent_ * extent_; }
  bool binary() const { return binary_; }

  std::int64_t index(std::int64_t x, std::int64_t y, std::int64_t z) const { return (x * extent_ + y) * extent_ + z; }
  float operator()(std::int64_t x, std::int64_t y, std::int64_t z) const { return data_[static_cast<std::size_t>(index(x, y, z))]; }
  bool occupied(std::int64_t x, std::int64_t y, std::int64_t z) const { return (*this)(x, y, z) > 0.5f; }
  void set(std::int64_t x, std::int64_t y, std::int64_t z, float v);

  const std::vector<float>& values() const { return data_; }
  std::int64_t count() const;
  double fraction() const { return size() ? static_cast<double>(count()) / static_cast<double>(size()) : 0.0; }

  /// Soft grid from values clamped to [0, 1].
  static VoxelGrid soft(std::int64_t extent, std::vector<float> values);
  /// Occupancy >= threshold -> 1.
  VoxelGrid binarized(float threshold = 0.5f) const;
  /// True when every occupied voxel of this grid is occupied in other.
  bool subset_of(const VoxelGrid& other) const;

  bool operator==(const VoxelGrid& o) const { return extent_ == o.extent_ && data_ == o.data_; }

  std::string class_tag;
  std::optional<int> orientation;  // 0..11 when present

  // binvox header fields, kept verbatim for byte-exact round trips
  std::string binvox_translate = "0 0 0";
  std::string binvox_scale = "1";

 private:
  std::int64_t extent_ = 0;
  bool binary_ = true;
  std::vector<float> data_;
};

/// Occupancy {0,1} -> {-1,+1}, shaped [1, N, N, N].
Tensor to_signed_tensor(const VoxelGrid& g);
/// Stacks grids into [B, 1, N, N, N] signed tensors.
Tensor stack_signed(std::span<const VoxelGrid> grids);
/// Inverse of the signed mapping for one sample of a [B, 1, N, N, N] tensor:
/// occupancy (v + 1) / 2, clamped.
VoxelGrid from_signed_tensor(const Tensor& t, std::int64_t sample = 0);

VoxelGrid read_binvox(const std::filesystem::path& path);
void write_binvox(const VoxelGrid& grid, const std::filesystem::path& path);
VoxelGrid parse_binvox(const std::string& bytes);
std::string encode_binvox(const VoxelGrid& grid);

/// Ray direction for an orthographic scan.
enum class View { PosX, NegX, PosY, NegY, PosZ, NegZ };
const char* view_name(View v);
View parse_view(const std::string& s);
int view_axis(View v);

struct DepthMap {
  static constexpr std::int32_t kNoHit = -1;
  std::int64_t width = 0;   // second remaining axis
  std::int64_t height = 0;  // first remaining axis
  View view = View::PosZ;
  std::vector<std::int32_t> depth;  // row-major [height][width]

  std::int32_t at(std::int64_t row, std::int64_t col) const { return depth[static_cast<std::size_t>(row * width + col)]; }
  std::int64_t hits() const;
};

/// First occupied voxel along each ray, counted from the face the ray enters.
DepthMap depth_scan(const VoxelGrid& grid, View view);
/// The visible shell: one voxel per non-sentinel pixel.
VoxelGrid occlude_to_grid(const DepthMap& depth, std::int64_t extent);

struct Image {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<float> pixels;  // row-major, [0, 1]
  float at(std::int64_t row, std::int64_t col) const { return pixels[static_cast<std::size_t>(row * width + col)]; }
};

/// Intensity 1 - depth / N on hit pixels, 0 elsewhere.
Image render_silhouette(const VoxelGrid& grid, View view);
/// Stacks images into [B, 1, H, W].
Tensor stack_images(std::span<const Image> images);

/// P5, maxval 255; sentinel -> 0, hits -> 255 - floor(255 * depth / N).
std::string encode_pgm(const DepthMap& depth, std::int64_t extent);
void write_pgm(const DepthMap& depth, std::int64_t extent, const std::filesystem::path& path);

/// Exact quarter-turn rotation about axis 0 (x), 1 (y) or 2 (z).
VoxelGrid rotate90(const VoxelGrid& grid, int axis, int quarter_turns);

// `.vxg`: the checkpoint container holding one "occupancy" block.
void write_vxg(const VoxelGrid& grid, const std::filesystem::path& path);
VoxelGrid read_vxg(const std::filesystem::path& path);

}  // namespace voxgan
