#pragma once

#include "voxgan/conv.hpp"
#include "voxgan/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace voxgan {

class Tape;

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  AddScalar,
  MulScalar,
  MatMul,
  Transpose,
  Reshape,
  BroadcastTo,
  SumTo,
  Sum,
  Exp,
  Log,
  Sqrt,
  Square,
  Tanh,
  Sigmoid,
  Relu,
  LeakyRelu,
  ClampMin,
  Conv3d,
  ConvTranspose3d,
  Conv3dWeightGrad,
  Narrow,
  Embed,
};

const char* op_name(Op op);

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::int32_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::int32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::int32_t id_ = -1;
};

struct GraphNode {
  Op op = Op::Leaf;
  std::vector<std::int32_t> parents;
  Tensor value;
  bool requires_grad = false;
  // op attributes
  Real scalar = 0;
  Shape shape;
  ConvGeometry geometry;
  std::int64_t axis = 0;
  std::int64_t start = 0;
  std::string name;
};

enum class GradMode {
  Detached,  // returned gradients are constants
  Graph,     // returned gradients are recorded and can be differentiated again
};

/// Reverse-mode tape. Every forward op appends a node; grad() walks the tape
/// backwards and expresses each vector-Jacobian product with the same
/// recorded primitives, so gradients can themselves be differentiated.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false, std::string name = {});
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  Var parameter(Tensor value, std::string name = {}) { return leaf(std::move(value), true, std::move(name)); }

  const GraphNode& node(std::int32_t id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }

  bool recording() const { return recording_; }

  /// d(output)/d(wrt[i]). output must hold exactly one element. Nodes absent
  /// from the output's ancestry get zeros, or an error when strict is set.
  std::vector<Var> grad(Var output, std::span<const Var> wrt, GradMode mode = GradMode::Detached,
                        bool strict = false);
  std::vector<Tensor> grad_values(Var output, std::span<const Var> wrt);

  Var record(Op op, std::vector<std::int32_t> parents, Tensor value, GraphNode attrs = {});

 private:
  friend class NoGradGuard;
  std::vector<Var> vjp(std::int32_t id, Var g, const std::vector<char>& live);

  std::vector<GraphNode> nodes_;
  bool recording_ = true;
};

/// Within scope, new nodes are recorded as constants. Values are unaffected.
class NoGradGuard {
 public:
  explicit NoGradGuard(Tape& t) : tape_(t), prev_(t.recording_) { t.recording_ = false; }
  ~NoGradGuard() { tape_.recording_ = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape& tape_;
  bool prev_;
};

class GradError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Elementwise arithmetic. For binary ops the right operand may broadcast.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, Real c);
Var operator-(Var a, Real c);
Var operator*(Var a, Real c);
inline Var operator*(Real c, Var a) { return a * c; }
inline Var operator+(Real c, Var a) { return a + c; }
Var operator-(Real c, Var a);

Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape s);
Var broadcast_to(Var a, Shape s);
Var sum_to(Var a, Shape s);
Var sum(Var a);
Var mean(Var a);

Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var leaky_relu(Var a, Real alpha);
Var clamp_min(Var a, Real floor);

Var conv3d(Var x, Var w, const ConvGeometry& g);
Var conv_transpose3d(Var y, Var w, const ConvGeometry& g, std::span<const std::int64_t> out_extent = {});
Var conv3d_weight_grad(Var x, Var dy, const ConvGeometry& g);

/// Slice [start, start+len) along axis; embed is its adjoint (zero-fill).
Var narrow(Var a, std::int64_t axis, std::int64_t start, std::int64_t len);
Var embed(Var a, Shape full, std::int64_t axis, std::int64_t start);

/// Per-sample sum over all but the leading axis, shaped [B, 1, ..., 1].
Var sum_per_sample(Var a);

}  // namespace voxgan
