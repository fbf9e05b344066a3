#include "voxgan/autograd.hpp"

#include <cmath>
#include <optional>

namespace voxgan {

namespace {

template <typename F>
Tensor unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  out.vec() = a.vec().unaryExpr(f);
  return out;
}

Tensor mask(const Tensor& a, Real threshold, Real below) {
  return unary(a, [=](Real v) { return v > threshold ? Real(1) : below; });
}

struct SliceLayout {
  std::int64_t outer = 1, full = 1, inner = 1;
};

SliceLayout slice_layout(const Shape& s, std::int64_t axis) {
  SliceLayout l;
  for (std::int64_t i = 0; i < axis; ++i) l.outer *= s[static_cast<std::size_t>(i)];
  l.full = s[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) l.inner *= s[i];
  return l;
}

Tensor narrow_value(const Tensor& a, std::int64_t axis, std::int64_t start, std::int64_t len) {
  if (axis < 0 || axis >= a.rank() || start < 0 || len < 0 || start + len > a.dim(axis))
    throw ShapeError("narrow: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                     ") invalid for axis " + std::to_string(axis) + " of " + to_string(a.shape()));
  auto l = slice_layout(a.shape(), axis);
  Shape s = a.shape();
  s[static_cast<std::size_t>(axis)] = len;
  Tensor out(s);
  for (std::int64_t o = 0; o < l.outer; ++o)
    std::copy_n(a.data() + (o * l.full + start) * l.inner, len * l.inner, out.data() + o * len * l.inner);
  return out;
}

Tensor embed_value(const Tensor& a, const Shape& full, std::int64_t axis, std::int64_t start) {
  auto l = slice_layout(full, axis);
  const std::int64_t len = a.dim(axis);
  Shape expect = full;
  expect[static_cast<std::size_t>(axis)] = len;
  if (expect != a.shape() || start + len > l.full)
    throw ShapeError("embed: " + to_string(a.shape()) + " into " + to_string(full));
  Tensor out(full);
  for (std::int64_t o = 0; o < l.outer; ++o)
    std::copy_n(a.data() + o * len * l.inner, len * l.inner, out.data() + (o * l.full + start) * l.inner);
  return out;
}

std::array<std::int64_t, 3> spatial_of(const Shape& s) { return {s[2], s[3], s[4]}; }

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::AddScalar: return "add_scalar";
    case Op::MulScalar: return "mul_scalar";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Reshape: return "reshape";
    case Op::BroadcastTo: return "broadcast_to";
    case Op::SumTo: return "sum_to";
    case Op::Sum: return "sum";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::Square: return "square";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Relu: return "relu";
    case Op::LeakyRelu: return "leaky_relu";
    case Op::ClampMin: return "clamp_min";
    case Op::Conv3d: return "conv3d";
    case Op::ConvTranspose3d: return "conv_transpose3d";
    case Op::Conv3dWeightGrad: return "conv3d_weight_grad";
    case Op::Narrow: return "narrow";
    case Op::Embed: return "embed";
  }
  return "?";
}

const Tensor& Var::value() const { return tape_->node(id_).value; }
bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

Var Tape::leaf(Tensor value, bool requires_grad, std::string name) {
  GraphNode n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.name = std::move(name);
  nodes_.push_back(std::move(n));
  return {this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::record(Op op, std::vector<std::int32_t> parents, Tensor value, GraphNode attrs) {
  bool rg = false;
  for (auto p : parents) rg = rg || nodes_.at(static_cast<std::size_t>(p)).requires_grad;
  attrs.value = std::move(value);
  if (recording_ && rg) {
    attrs.op = op;
    attrs.parents = std::move(parents);
    attrs.requires_grad = true;
  } else {
    attrs.op = Op::Leaf;
    attrs.parents.clear();
    attrs.requires_grad = false;
  }
  nodes_.push_back(std::move(attrs));
  return {this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) throw GradError(std::string(op) + ": operands live on different tapes");
  return a.tape();
}

template <typename F>
Var binary(Op op, Var a, Var b, F f, const char* name) {
  Tape& t = same_tape(a, b, name);
  return t.record(op, {a.id(), b.id()}, binary_broadcast(a.value(), b.value(), f, name));
}

Var with_scalar(Op op, Var a, Real c, Tensor v) {
  GraphNode attrs;
  attrs.scalar = c;
  return a.tape().record(op, {a.id()}, std::move(v), std::move(attrs));
}

}  // namespace

Var operator+(Var a, Var b) { return binary(Op::Add, a, b, std::plus<Real>(), "add"); }
Var operator-(Var a, Var b) { return binary(Op::Sub, a, b, std::minus<Real>(), "sub"); }
Var operator*(Var a, Var b) { return binary(Op::Mul, a, b, std::multiplies<Real>(), "mul"); }
Var operator/(Var a, Var b) { return binary(Op::Div, a, b, std::divides<Real>(), "div"); }

Var operator-(Var a) { return a.tape().record(Op::Neg, {a.id()}, unary(a.value(), std::negate<Real>())); }

Var operator+(Var a, Real c) {
  return with_scalar(Op::AddScalar, a, c, unary(a.value(), [c](Real v) { return v + c; }));
}
Var operator-(Var a, Real c) { return a + (-c); }
Var operator*(Var a, Real c) {
  return with_scalar(Op::MulScalar, a, c, unary(a.value(), [c](Real v) { return v * c; }));
}
Var operator-(Real c, Var a) { return (-a) + c; }

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  return t.record(Op::MatMul, {a.id(), b.id()}, voxgan::matmul(a.value(), b.value()));
}

Var transpose(Var a) { return a.tape().record(Op::Transpose, {a.id()}, voxgan::transpose(a.value())); }

Var reshape(Var a, Shape s) {
  GraphNode attrs;
  attrs.shape = s;
  return a.tape().record(Op::Reshape, {a.id()}, a.value().reshaped(std::move(s)), std::move(attrs));
}

Var broadcast_to(Var a, Shape s) {
  if (a.shape() == s) return a;
  GraphNode attrs;
  attrs.shape = s;
  return a.tape().record(Op::BroadcastTo, {a.id()}, voxgan::broadcast_to(a.value(), s), std::move(attrs));
}

Var sum_to(Var a, Shape s) {
  if (a.shape() == s) return a;
  GraphNode attrs;
  attrs.shape = s;
  return a.tape().record(Op::SumTo, {a.id()}, voxgan::sum_to(a.value(), s), std::move(attrs));
}

Var sum(Var a) { return a.tape().record(Op::Sum, {a.id()}, Tensor::scalar(a.value().vec().sum())); }

Var mean(Var a) {
  const auto n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return sum(a) * (Real(1) / static_cast<Real>(n));
}

Var exp(Var a) { return a.tape().record(Op::Exp, {a.id()}, unary(a.value(), [](Real v) { return std::exp(v); })); }
Var log(Var a) { return a.tape().record(Op::Log, {a.id()}, unary(a.value(), [](Real v) { return std::log(v); })); }
Var sqrt(Var a) {
  return a.tape().record(Op::Sqrt, {a.id()}, unary(a.value(), [](Real v) { return std::sqrt(v); }));
}
Var square(Var a) { return a.tape().record(Op::Square, {a.id()}, unary(a.value(), [](Real v) { return v * v; })); }
Var tanh(Var a) {
  return a.tape().record(Op::Tanh, {a.id()}, unary(a.value(), [](Real v) { return std::tanh(v); }));
}
Var sigmoid(Var a) {
  return a.tape().record(Op::Sigmoid, {a.id()}, unary(a.value(), [](Real v) {
    return v >= 0 ? Real(1) / (Real(1) + std::exp(-v)) : std::exp(v) / (Real(1) + std::exp(v));
  }));
}
Var relu(Var a) {
  return a.tape().record(Op::Relu, {a.id()}, unary(a.value(), [](Real v) { return v > 0 ? v : Real(0); }));
}
Var leaky_relu(Var a, Real alpha) {
  return with_scalar(Op::LeakyRelu, a, alpha, unary(a.value(), [alpha](Real v) { return v > 0 ? v : alpha * v; }));
}
Var clamp_min(Var a, Real floor) {
  return with_scalar(Op::ClampMin, a, floor, unary(a.value(), [floor](Real v) { return v > floor ? v : floor; }));
}

Var conv3d(Var x, Var w, const ConvGeometry& g) {
  Tape& t = same_tape(x, w, "conv3d");
  GraphNode attrs;
  attrs.geometry = g;
  return t.record(Op::Conv3d, {x.id(), w.id()}, voxgan::conv3d(x.value(), w.value(), g), std::move(attrs));
}

Var conv_transpose3d(Var y, Var w, const ConvGeometry& g, std::span<const std::int64_t> out_extent) {
  Tape& t = same_tape(y, w, "conv_transpose3d");
  GraphNode attrs;
  attrs.geometry = g;
  return t.record(Op::ConvTranspose3d, {y.id(), w.id()}, voxgan::conv_transpose3d(y.value(), w.value(), g, out_extent),
                  std::move(attrs));
}

Var conv3d_weight_grad(Var x, Var dy, const ConvGeometry& g) {
  Tape& t = same_tape(x, dy, "conv3d_weight_grad");
  GraphNode attrs;
  attrs.geometry = g;
  return t.record(Op::Conv3dWeightGrad, {x.id(), dy.id()}, voxgan::conv3d_weight_grad(x.value(), dy.value(), g),
                  std::move(attrs));
}

Var narrow(Var a, std::int64_t axis, std::int64_t start, std::int64_t len) {
  GraphNode attrs;
  attrs.axis = axis;
  attrs.start = start;
  return a.tape().record(Op::Narrow, {a.id()}, narrow_value(a.value(), axis, start, len), std::move(attrs));
}

Var embed(Var a, Shape full, std::int64_t axis, std::int64_t start) {
  GraphNode attrs;
  attrs.axis = axis;
  attrs.start = start;
  attrs.shape = full;
  return a.tape().record(Op::Embed, {a.id()}, embed_value(a.value(), full, axis, start), std::move(attrs));
}

Var sum_per_sample(Var a) {
  Shape s(a.shape().size(), 1);
  s[0] = a.shape()[0];
  return sum_to(a, std::move(s));
}

// ---------------------------------------------------------------------------
// Reverse pass
// ---------------------------------------------------------------------------

std::vector<Var> Tape::vjp(std::int32_t id, Var g, const std::vector<char>& live) {
  // Copy what we need: recording below may reallocate nodes_.
  const GraphNode n = nodes_[static_cast<std::size_t>(id)];
  auto parent = [&](std::size_t i) { return Var(this, n.parents[i]); };
  auto need = [&](std::size_t i) { return live[static_cast<std::size_t>(n.parents[i])] != 0; };
  const Var self(this, id);
  switch (n.op) {
    case Op::Leaf: return {};
    case Op::Add: return {g, need(1) ? sum_to(g, parent(1).shape()) : Var{}};
    case Op::Sub: return {g, need(1) ? -sum_to(g, parent(1).shape()) : Var{}};
    case Op::Mul: {
      Var a = parent(0), b = parent(1);
      return {need(0) ? g * b : Var{}, need(1) ? sum_to(g * a, b.shape()) : Var{}};
    }
    case Op::Div: {
      Var a = parent(0), b = parent(1);
      return {need(0) ? g / b : Var{}, need(1) ? -sum_to((g * a) / square(b), b.shape()) : Var{}};
    }
    case Op::Neg: return {-g};
    case Op::AddScalar: return {g};
    case Op::MulScalar: return {g * n.scalar};
    case Op::MatMul: {
      Var a = parent(0), b = parent(1);
      return {need(0) ? voxgan::matmul(g, voxgan::transpose(b)) : Var{},
              need(1) ? voxgan::matmul(voxgan::transpose(a), g) : Var{}};
    }
    case Op::Transpose: return {voxgan::transpose(g)};
    case Op::Reshape: return {reshape(g, parent(0).shape())};
    case Op::BroadcastTo: return {sum_to(g, parent(0).shape())};
    case Op::SumTo: return {broadcast_to(g, parent(0).shape())};
    case Op::Sum: return {broadcast_to(g, parent(0).shape())};
    case Op::Exp: return {g * self};
    case Op::Log: return {g / parent(0)};
    case Op::Sqrt: return {g / (self * Real(2))};
    case Op::Square: return {g * parent(0) * Real(2)};
    case Op::Tanh: return {g - g * square(self)};
    case Op::Sigmoid: return {g * (self - square(self))};
    case Op::Relu: return {g * constant(mask(parent(0).value(), 0, 0))};
    case Op::LeakyRelu: return {g * constant(mask(parent(0).value(), 0, n.scalar))};
    case Op::ClampMin: return {g * constant(mask(parent(0).value(), n.scalar, 0))};
    case Op::Conv3d: {
      Var x = parent(0), w = parent(1);
      const auto ext = spatial_of(x.shape());
      return {need(0) ? voxgan::conv_transpose3d(g, w, n.geometry, ext) : Var{},
              need(1) ? voxgan::conv3d_weight_grad(x, g, n.geometry) : Var{}};
    }
    case Op::ConvTranspose3d: {
      Var y = parent(0), w = parent(1);
      return {need(0) ? voxgan::conv3d(g, w, n.geometry) : Var{},
              need(1) ? voxgan::conv3d_weight_grad(g, y, n.geometry) : Var{}};
    }
    case Op::Conv3dWeightGrad: {
      Var x = parent(0), dy = parent(1);
      const auto ext = spatial_of(x.shape());
      return {need(0) ? voxgan::conv_transpose3d(dy, g, n.geometry, ext) : Var{},
              need(1) ? voxgan::conv3d(x, g, n.geometry) : Var{}};
    }
    case Op::Narrow: return {embed(g, parent(0).shape(), n.axis, n.start)};
    case Op::Embed: return {narrow(g, n.axis, n.start, parent(0).shape()[static_cast<std::size_t>(n.axis)])};
  }
  throw GradError(std::string("vjp: unsupported op ") + op_name(n.op));
}

std::vector<Var> Tape::grad(Var output, std::span<const Var> wrt, GradMode mode, bool strict) {
  if (&output.tape() != this) throw GradError("grad: output belongs to another tape");
  if (output.value().size() != 1)
    throw GradError("grad: output must be scalar, got shape " + to_string(output.shape()));

  const auto root = static_cast<std::size_t>(output.id());
  // Ancestry of the root restricted to nodes that carry gradient.
  std::vector<char> live(root + 1, 0);
  live[root] = nodes_[root].requires_grad;
  for (std::size_t i = root + 1; i-- > 0;) {
    if (!live[i]) continue;
    for (auto p : nodes_[i].parents)
      if (nodes_[static_cast<std::size_t>(p)].requires_grad) live[static_cast<std::size_t>(p)] = 1;
  }

  std::optional<NoGradGuard> guard;
  if (mode == GradMode::Detached) guard.emplace(*this);

  std::vector<std::optional<Var>> adj(root + 1);
  if (live[root]) adj[root] = constant(Tensor(output.shape(), Real(1)));

  for (std::size_t i = root + 1; i-- > 0;) {
    if (!live[i] || !adj[i] || nodes_[i].op == Op::Leaf) continue;
    const auto parents = nodes_[i].parents;
    auto grads = vjp(static_cast<std::int32_t>(i), *adj[i], live);
    for (std::size_t k = 0; k < parents.size(); ++k) {
      const auto p = static_cast<std::size_t>(parents[k]);
      if (!live[p]) continue;
      adj[p] = adj[p] ? *adj[p] + grads[k] : grads[k];
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    const auto id = static_cast<std::size_t>(w.id());
    if (id <= root && adj[id]) {
      out.push_back(*adj[id]);
    } else {
      if (strict)
        throw GradError("grad: node " + std::to_string(w.id()) + " is not in the output's differentiable ancestry");
      out.push_back(constant(Tensor(w.shape(), Real(0))));
    }
  }
  return out;
}

std::vector<Tensor> Tape::grad_values(Var output, std::span<const Var> wrt) {
  auto gs = grad(output, wrt, GradMode::Detached);
  std::vector<Tensor> out;
  out.reserve(gs.size());
  for (auto& g : gs) out.push_back(g.value());
  return out;
}

}  // namespace voxgan
