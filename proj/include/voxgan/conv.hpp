#pragma once

#include "voxgan/tensor.hpp"

#include <array>

namespace voxgan {

/// Per-axis geometry of a 3-d convolution (depth, height, width). A 2-d
/// convolution is the special case kernel[0] == 1, stride[0] == 1, pad[0] == 0
/// applied to a depth-1 volume.
struct ConvGeometry {
  std::array<std::int64_t, 3> kernel{4, 4, 4};
  std::array<std::int64_t, 3> stride{2, 2, 2};
  std::array<std::int64_t, 3> pad{1, 1, 1};

  static ConvGeometry cube(std::int64_t k, std::int64_t s, std::int64_t p) {
    return {{k, k, k}, {s, s, s}, {p, p, p}};
  }
  static ConvGeometry planar(std::int64_t k, std::int64_t s, std::int64_t p) {
    return {{1, k, k}, {1, s, s}, {0, p, p}};
  }

  std::int64_t kernel_volume() const { return kernel[0] * kernel[1] * kernel[2]; }

  /// floor((n + 2p - k) / s) + 1; throws when the padded input is smaller than the kernel.
  std::array<std::int64_t, 3> conv_extent(std::span<const std::int64_t, 3> in) const;
  /// (n - 1) s - 2p + k
  std::array<std::int64_t, 3> transpose_extent(std::span<const std::int64_t, 3> in) const;

  bool operator==(const ConvGeometry&) const = default;
};

/// Cross-correlation. x: [B, Cin, D, H, W], w: [Cout, Cin, kd, kh, kw].
template <typename Scalar>
BasicTensor<Scalar> conv3d(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& w, const ConvGeometry& g);

/// Adjoint of conv3d in its input: y: [B, Cout, ...], w as for conv3d, returns
/// [B, Cin, out_extent...]. Pass out_extent to disambiguate; an empty span
/// uses transpose_extent.
template <typename Scalar>
BasicTensor<Scalar> conv_transpose3d(const BasicTensor<Scalar>& y, const BasicTensor<Scalar>& w,
                                     const ConvGeometry& g, std::span<const std::int64_t> out_extent = {});

/// Adjoint of conv3d in its kernel: sum_b dy_b (x) im2col(x_b), shaped like w.
template <typename Scalar>
BasicTensor<Scalar> conv3d_weight_grad(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& dy,
                                       const ConvGeometry& g);

/// Number of worker threads used for batch-parallel convolution loops. Read
/// once from VOXGAN_THREADS (default 1). Results do not depend on it.
int conv_threads();
void set_conv_threads(int n);

}  // namespace voxgan
