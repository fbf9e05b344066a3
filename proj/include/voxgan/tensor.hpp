#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace voxgan {

#ifdef VOXGAN_FLOAT32
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<std::int64_t>;

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::int64_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::int64_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& s);

/// Dense row-major N-d array. Storage is an Eigen column vector so that
/// whole-buffer arithmetic stays expression-friendly.
template <typename Scalar>
class BasicTensor {
 public:
  using scalar_type = Scalar;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  BasicTensor() : shape_{0}, data_() {}

  explicit BasicTensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_ = Vector::Constant(numel(shape_), fill);
  }

  BasicTensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (numel(shape_) != data_.size())
      throw ShapeError("tensor: shape " + to_string(shape_) + " does not match " +
                       std::to_string(data_.size()) + " elements");
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape), Vector(Eigen::Map<const Vector>(values.begin(),
                                                                     static_cast<Eigen::Index>(values.size())))) {}

  static BasicTensor scalar(Scalar v) { return BasicTensor(Shape{}, v); }

  const Shape& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t dim(std::int64_t i) const { return shape_.at(static_cast<std::size_t>(i < 0 ? rank() + i : i)); }
  std::int64_t size() const { return data_.size(); }

  Vector& vec() { return data_; }
  const Vector& vec() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> span() { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const Scalar> span() const { return {data_.data(), static_cast<std::size_t>(data_.size())}; }

  Scalar& operator[](std::int64_t i) { return data_[i]; }
  Scalar operator[](std::int64_t i) const { return data_[i]; }

  std::int64_t offset(std::span<const std::int64_t> index) const {
    if (static_cast<std::int64_t>(index.size()) != rank()) throw ShapeError("tensor: index rank mismatch");
    std::int64_t off = 0;
    for (std::size_t d = 0; d < index.size(); ++d) {
      if (index[d] < 0 || index[d] >= shape_[d]) throw std::out_of_range("tensor: index out of range");
      off = off * shape_[d] + index[d];
    }
    return off;
  }
  Scalar at(std::initializer_list<std::int64_t> index) const {
    return data_[offset(std::span<const std::int64_t>(index.begin(), index.size()))];
  }
  Scalar& at(std::initializer_list<std::int64_t> index) {
    return data_[offset(std::span<const std::int64_t>(index.begin(), index.size()))];
  }

  Scalar item() const {
    if (size() != 1) throw ShapeError("tensor: item() on tensor of shape " + to_string(shape_));
    return data_[0];
  }

  /// View as a 2-d row-major matrix of the given rows; columns inferred.
  MatrixMap matrix(std::int64_t rows) {
    return MatrixMap(data_.data(), rows, rows == 0 ? 0 : size() / rows);
  }
  ConstMatrixMap matrix(std::int64_t rows) const {
    return ConstMatrixMap(data_.data(), rows, rows == 0 ? 0 : size() / rows);
  }

  BasicTensor reshaped(Shape s) const {
    if (numel(s) != size())
      throw ShapeError("reshape: " + to_string(shape_) + " -> " + to_string(s));
    return BasicTensor(std::move(s), data_);
  }

  template <typename Other>
  BasicTensor<Other> cast() const {
    return BasicTensor<Other>(shape_, data_.template cast<Other>());
  }

  bool operator==(const BasicTensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

 private:
  static void check_shape(const Shape& s) {
    for (auto e : s)
      if (e < 0) throw ShapeError("tensor: negative extent in " + to_string(s));
  }

  Shape shape_;
  Vector data_;
};

using Tensor = BasicTensor<Real>;

// ---------------------------------------------------------------------------
// Broadcasting. The second operand may drop leading dimensions and may have
// size-1 trailing dimensions; nothing else expands.
// ---------------------------------------------------------------------------

struct BroadcastPlan {
  std::int64_t outer = 1;  // leading dims absent from the small operand
  std::int64_t mid = 1;    // dims that match
  std::int64_t inner = 1;  // trailing dims that are 1 in the small operand
};

/// Returns the plan for expanding `small` to `big`, or throws ShapeError naming `op`.
BroadcastPlan broadcast_plan(const Shape& big, const Shape& small, const char* op);

/// Shape of the result of a binary elementwise op under the broadcast rule.
Shape broadcast_result(const Shape& a, const Shape& b, const char* op);

template <typename Scalar>
BasicTensor<Scalar> broadcast_to(const BasicTensor<Scalar>& x, const Shape& target) {
  if (x.shape() == target) return x;
  auto p = broadcast_plan(target, x.shape(), "broadcast_to");
  BasicTensor<Scalar> out(target);
  Scalar* o = out.data();
  const Scalar* s = x.data();
  for (std::int64_t a = 0; a < p.outer; ++a)
    for (std::int64_t m = 0; m < p.mid; ++m) {
      const Scalar v = s[m];
      for (std::int64_t i = 0; i < p.inner; ++i) *o++ = v;
    }
  return out;
}

/// Adjoint of broadcast_to: sums `x` down to `target`.
template <typename Scalar>
BasicTensor<Scalar> sum_to(const BasicTensor<Scalar>& x, const Shape& target) {
  if (x.shape() == target) return x;
  auto p = broadcast_plan(x.shape(), target, "sum_to");
  BasicTensor<Scalar> out(target);
  Scalar* o = out.data();
  const Scalar* s = x.data();
  for (std::int64_t a = 0; a < p.outer; ++a)
    for (std::int64_t m = 0; m < p.mid; ++m) {
      Scalar acc = 0;
      for (std::int64_t i = 0; i < p.inner; ++i) acc += *s++;
      o[m] += acc;
    }
  return out;
}

template <typename Scalar, typename F>
BasicTensor<Scalar> binary_broadcast(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b, F f,
                                     const char* op) {
  if (a.shape() == b.shape()) {
    BasicTensor<Scalar> out(a.shape());
    out.vec() = a.vec().binaryExpr(b.vec(), f);
    return out;
  }
  const Shape out_shape = broadcast_result(a.shape(), b.shape(), op);
  const auto ea = broadcast_to(a, out_shape);
  const auto eb = broadcast_to(b, out_shape);
  BasicTensor<Scalar> out(out_shape);
  out.vec() = ea.vec().binaryExpr(eb.vec(), f);
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> matmul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  BasicTensor<Scalar> out(Shape{a.dim(0), b.dim(1)});
  out.matrix(a.dim(0)).noalias() = a.matrix(a.dim(0)) * b.matrix(b.dim(0));
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> transpose(const BasicTensor<Scalar>& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expects rank 2, got " + to_string(a.shape()));
  BasicTensor<Scalar> out(Shape{a.dim(1), a.dim(0)});
  out.matrix(a.dim(1)) = a.matrix(a.dim(0)).transpose();
  return out;
}

template <typename Scalar>
Scalar dot(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.shape() != b.shape()) throw ShapeError("dot: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  return a.vec().dot(b.vec());
}

}  // namespace voxgan
