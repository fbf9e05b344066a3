#include "voxgan/conv.hpp"

#include <atomic>
#include <cstdlib>
#include <sstream>
#include <thread>

namespace voxgan {

std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

BroadcastPlan broadcast_plan(const Shape& big, const Shape& small, const char* op) {
  auto fail = [&] {
    throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(small) + " to " + to_string(big));
  };
  if (small.size() > big.size()) fail();
  if (numel(small) == 1) {
    // scalar-like operands expand everywhere
    return {1, 1, numel(big)};
  }
  const std::size_t lead = big.size() - small.size();
  BroadcastPlan p;
  for (std::size_t i = 0; i < lead; ++i) p.outer *= big[i];
  std::size_t i = 0;
  for (; i < small.size() && small[i] == big[lead + i]; ++i) p.mid *= small[i];
  for (; i < small.size(); ++i) {
    if (small[i] != 1) fail();
    p.inner *= big[lead + i];
  }
  return p;
}

Shape broadcast_result(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return a;
  (void)broadcast_plan(a, b, op);
  return a;
}

namespace {

std::atomic<int> g_threads{0};

int threads_from_env() {
  if (const char* env = std::getenv("VOXGAN_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

template <typename F>
void parallel_for(std::int64_t n, F f) {
  const int t = std::min<std::int64_t>(conv_threads(), n);
  if (t <= 1) {
    for (std::int64_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (int w = 0; w < t; ++w)
    pool.emplace_back([&, w] {
      for (std::int64_t i = w; i < n; i += t) f(i);
    });
  for (auto& th : pool) th.join();
}

struct Extents {
  std::array<std::int64_t, 3> in;
  std::array<std::int64_t, 3> out;
};

// col[(c, kd, kh, kw), (od, oh, ow)]
template <typename Scalar>
void im2col(const Scalar* x, std::int64_t channels, const Extents& e, const ConvGeometry& g, Scalar* col) {
  const auto [D, H, W] = e.in;
  const auto [OD, OH, OW] = e.out;
  const std::int64_t osp = OD * OH * OW;
  for (std::int64_t c = 0; c < channels; ++c)
    for (std::int64_t kd = 0; kd < g.kernel[0]; ++kd)
      for (std::int64_t kh = 0; kh < g.kernel[1]; ++kh)
        for (std::int64_t kw = 0; kw < g.kernel[2]; ++kw) {
          Scalar* row = col;
          col += osp;
          for (std::int64_t od = 0; od < OD; ++od) {
            const std::int64_t id = od * g.stride[0] - g.pad[0] + kd;
            for (std::int64_t oh = 0; oh < OH; ++oh) {
              const std::int64_t ih = oh * g.stride[1] - g.pad[1] + kh;
              for (std::int64_t ow = 0; ow < OW; ++ow) {
                const std::int64_t iw = ow * g.stride[2] - g.pad[2] + kw;
                const bool inside = id >= 0 && id < D && ih >= 0 && ih < H && iw >= 0 && iw < W;
                *row++ = inside ? x[((c * D + id) * H + ih) * W + iw] : Scalar(0);
              }
            }
          }
        }
}

template <typename Scalar>
void col2im(const Scalar* col, std::int64_t channels, const Extents& e, const ConvGeometry& g, Scalar* x) {
  const auto [D, H, W] = e.in;
  const auto [OD, OH, OW] = e.out;
  const std::int64_t osp = OD * OH * OW;
  for (std::int64_t c = 0; c < channels; ++c)
    for (std::int64_t kd = 0; kd < g.kernel[0]; ++kd)
      for (std::int64_t kh = 0; kh < g.kernel[1]; ++kh)
        for (std::int64_t kw = 0; kw < g.kernel[2]; ++kw) {
          const Scalar* row = col;
          col += osp;
          for (std::int64_t od = 0; od < OD; ++od) {
            const std::int64_t id = od * g.stride[0] - g.pad[0] + kd;
            for (std::int64_t oh = 0; oh < OH; ++oh) {
              const std::int64_t ih = oh * g.stride[1] - g.pad[1] + kh;
              for (std::int64_t ow = 0; ow < OW; ++ow, ++row) {
                const std::int64_t iw = ow * g.stride[2] - g.pad[2] + kw;
                if (id >= 0 && id < D && ih >= 0 && ih < H && iw >= 0 && iw < W)
                  x[((c * D + id) * H + ih) * W + iw] += *row;
              }
            }
          }
        }
}

void require_rank5(const Shape& s, const char* op, const char* what) {
  if (s.size() != 5)
    throw ShapeError(std::string(op) + ": " + what + " must be rank 5, got " + to_string(s));
}

std::array<std::int64_t, 3> spatial(const Shape& s) { return {s[2], s[3], s[4]}; }

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

int conv_threads() {
  int t = g_threads.load();
  if (t == 0) {
    t = threads_from_env();
    g_threads.store(t);
  }
  return t;
}

void set_conv_threads(int n) { g_threads.store(std::max(1, n)); }

std::array<std::int64_t, 3> ConvGeometry::conv_extent(std::span<const std::int64_t, 3> in) const {
  std::array<std::int64_t, 3> out{};
  for (int d = 0; d < 3; ++d) {
    const std::int64_t padded = in[d] + 2 * pad[d];
    if (padded < kernel[d] || stride[d] < 1)
      throw ShapeError("conv3d: extent underflow, input " + std::to_string(in[d]) + " with kernel " +
                       std::to_string(kernel[d]) + " and pad " + std::to_string(pad[d]));
    out[d] = (padded - kernel[d]) / stride[d] + 1;
  }
  return out;
}

std::array<std::int64_t, 3> ConvGeometry::transpose_extent(std::span<const std::int64_t, 3> in) const {
  std::array<std::int64_t, 3> out{};
  for (int d = 0; d < 3; ++d) {
    out[d] = (in[d] - 1) * stride[d] - 2 * pad[d] + kernel[d];
    if (out[d] < 1)
      throw ShapeError("conv_transpose3d: non-positive output extent from input " + std::to_string(in[d]));
  }
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> conv3d(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& w, const ConvGeometry& g) {
  require_rank5(x.shape(), "conv3d", "input");
  require_rank5(w.shape(), "conv3d", "kernel");
  const std::int64_t B = x.dim(0), cin = x.dim(1), cout = w.dim(0);
  if (w.dim(1) != cin || w.dim(2) != g.kernel[0] || w.dim(3) != g.kernel[1] || w.dim(4) != g.kernel[2])
    throw ShapeError("conv3d: input " + to_string(x.shape()) + " incompatible with kernel " + to_string(w.shape()));
  Extents e{spatial(x.shape()), {}};
  e.out = g.conv_extent(e.in);
  const std::int64_t isp = e.in[0] * e.in[1] * e.in[2];
  const std::int64_t osp = e.out[0] * e.out[1] * e.out[2];
  const std::int64_t K = cin * g.kernel_volume();

  BasicTensor<Scalar> y(Shape{B, cout, e.out[0], e.out[1], e.out[2]});
  const auto wm = w.matrix(cout);
  parallel_for(B, [&](std::int64_t b) {
    RowMat<Scalar> col(K, osp);
    im2col(x.data() + b * cin * isp, cin, e, g, col.data());
    Eigen::Map<RowMat<Scalar>> yb(y.data() + b * cout * osp, cout, osp);
    yb.noalias() = wm * col;
  });
  return y;
}

template <typename Scalar>
BasicTensor<Scalar> conv_transpose3d(const BasicTensor<Scalar>& y, const BasicTensor<Scalar>& w,
                                     const ConvGeometry& g, std::span<const std::int64_t> out_extent) {
  require_rank5(y.shape(), "conv_transpose3d", "input");
  require_rank5(w.shape(), "conv_transpose3d", "kernel");
  const std::int64_t B = y.dim(0), cout = y.dim(1), cin = w.dim(1);
  if (w.dim(0) != cout || w.dim(2) != g.kernel[0] || w.dim(3) != g.kernel[1] || w.dim(4) != g.kernel[2])
    throw ShapeError("conv_transpose3d: input " + to_string(y.shape()) + " incompatible with kernel " +
                     to_string(w.shape()));
  Extents e;
  if (out_extent.empty()) {
    e.in = g.transpose_extent(spatial(y.shape()));
  } else {
    if (out_extent.size() != 3) throw ShapeError("conv_transpose3d: output extent must have 3 entries");
    e.in = {out_extent[0], out_extent[1], out_extent[2]};
  }
  e.out = g.conv_extent(e.in);
  if (e.out != spatial(y.shape()))
    throw ShapeError("conv_transpose3d: output extent inconsistent with input " + to_string(y.shape()));
  const std::int64_t isp = e.in[0] * e.in[1] * e.in[2];
  const std::int64_t osp = e.out[0] * e.out[1] * e.out[2];
  const std::int64_t K = cin * g.kernel_volume();

  BasicTensor<Scalar> x(Shape{B, cin, e.in[0], e.in[1], e.in[2]});
  const auto wm = w.matrix(cout);
  parallel_for(B, [&](std::int64_t b) {
    RowMat<Scalar> col(K, osp);
    Eigen::Map<const RowMat<Scalar>> yb(y.data() + b * cout * osp, cout, osp);
    col.noalias() = wm.transpose() * yb;
    col2im(col.data(), cin, e, g, x.data() + b * cin * isp);
  });
  return x;
}

template <typename Scalar>
BasicTensor<Scalar> conv3d_weight_grad(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& dy,
                                       const ConvGeometry& g) {
  require_rank5(x.shape(), "conv3d_weight_grad", "input");
  require_rank5(dy.shape(), "conv3d_weight_grad", "output gradient");
  const std::int64_t B = x.dim(0), cin = x.dim(1), cout = dy.dim(1);
  if (dy.dim(0) != B) throw ShapeError("conv3d_weight_grad: batch mismatch");
  Extents e{spatial(x.shape()), {}};
  e.out = g.conv_extent(e.in);
  if (e.out != spatial(dy.shape()))
    throw ShapeError("conv3d_weight_grad: output gradient " + to_string(dy.shape()) + " inconsistent with input " +
                     to_string(x.shape()));
  const std::int64_t isp = e.in[0] * e.in[1] * e.in[2];
  const std::int64_t osp = e.out[0] * e.out[1] * e.out[2];
  const std::int64_t K = cin * g.kernel_volume();

  std::vector<RowMat<Scalar>> partial(static_cast<std::size_t>(B));
  parallel_for(B, [&](std::int64_t b) {
    RowMat<Scalar> col(K, osp);
    im2col(x.data() + b * cin * isp, cin, e, g, col.data());
    Eigen::Map<const RowMat<Scalar>> dyb(dy.data() + b * cout * osp, cout, osp);
    partial[static_cast<std::size_t>(b)].noalias() = dyb * col.transpose();
  });
  BasicTensor<Scalar> dw(Shape{cout, cin, g.kernel[0], g.kernel[1], g.kernel[2]});
  auto dwm = dw.matrix(cout);
  for (const auto& p : partial) dwm += p;  // fixed order keeps results thread-count independent
  return dw;
}

#define VOXGAN_INSTANTIATE_CONV(S)                                                                        \
  template BasicTensor<S> conv3d(const BasicTensor<S>&, const BasicTensor<S>&, const ConvGeometry&);     \
  template BasicTensor<S> conv_transpose3d(const BasicTensor<S>&, const BasicTensor<S>&, const ConvGeometry&, \
                                           std::span<const std::int64_t>);                                \
  template BasicTensor<S> conv3d_weight_grad(const BasicTensor<S>&, const BasicTensor<S>&, const ConvGeometry&);

VOXGAN_INSTANTIATE_CONV(float)
VOXGAN_INSTANTIATE_CONV(double)

}  // namespace voxgan
