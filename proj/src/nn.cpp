#include "voxgan/nn.hpp"

#include <cmath>

namespace voxgan::nn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Shape of per-channel statistics for an input of the given shape.
Shape stat_shape(const Shape& x) {
  if (x.size() < 2) throw ShapeError("batchnorm: input must have a channel axis, got " + to_string(x));
  Shape s(x.size() - 1, 1);
  s[0] = x[1];
  return s;
}

}  // namespace

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

std::string layer_name(const Layer& l) {
  return std::visit(overloaded{
                        [](const Dense&) -> std::string { return "dense"; },
                        [](const Conv& c) -> std::string { return c.planar ? "conv2d" : "conv3d"; },
                        [](const ConvTranspose&) -> std::string { return "conv_transpose3d"; },
                        [](const BatchNorm&) -> std::string { return "batchnorm"; },
                        [](const Act& a) -> std::string { return activation_name(a.kind); },
                        [](const Unflatten&) -> std::string { return "unflatten"; },
                        [](const Flatten&) -> std::string { return "flatten"; },
                    },
                    l);
}

Tensor truncated_normal(Rng& rng, const Shape& shape, Real std) {
  Tensor t(shape);
  for (auto& v : t.span()) {
    double z;
    do z = rng.normal();
    while (std::abs(z) > 2.0);
    v = static_cast<Real>(z) * std;
  }
  return t;
}

Dense make_dense(std::int64_t in, std::int64_t out, Rng& rng, const InitOptions& init) {
  return {{"weight", truncated_normal(rng, {in, out}, init.weight_std)}, {"bias", Tensor({out})}};
}

Conv make_conv3d(std::int64_t in, std::int64_t out, const ConvGeometry& g, Rng& rng, const InitOptions& init) {
  return {{"weight", truncated_normal(rng, {out, in, g.kernel[0], g.kernel[1], g.kernel[2]}, init.weight_std)},
          {"bias", Tensor({out})},
          g,
          false};
}

Conv make_conv2d(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride, std::int64_t pad, Rng& rng,
                 const InitOptions& init) {
  auto g = ConvGeometry::planar(k, stride, pad);
  return {{"weight", truncated_normal(rng, {out, in, 1, k, k}, init.weight_std)}, {"bias", Tensor({out})}, g, true};
}

ConvTranspose make_conv_transpose3d(std::int64_t in, std::int64_t out, const ConvGeometry& g, Rng& rng,
                                    const InitOptions& init) {
  return {{"weight", truncated_normal(rng, {in, out, g.kernel[0], g.kernel[1], g.kernel[2]}, init.weight_std)},
          {"bias", Tensor({out})},
          g};
}

BatchNorm make_batchnorm(std::int64_t channels) {
  BatchNorm bn;
  bn.gamma = {"gamma", Tensor({channels}, Real(1))};
  bn.beta = {"beta", Tensor({channels})};
  bn.running_mean = Tensor({channels});
  bn.running_var = Tensor({channels}, Real(1));
  return bn;
}

// ---------------------------------------------------------------------------

Var dense(Var x, Var w, Var b) {
  if (x.shape().size() != 2 || w.shape().size() != 2 || x.shape()[1] != w.shape()[0])
    throw ShapeError("dense: input " + to_string(x.shape()) + " incompatible with weight " + to_string(w.shape()));
  return matmul(x, w) + b;
}

Var conv_layer(Var x, Var w, Var b, const ConvGeometry& g, bool planar) {
  if (planar) {
    if (x.shape().size() != 4) throw ShapeError("conv2d: input must be [B, C, H, W], got " + to_string(x.shape()));
    const auto& s = x.shape();
    Var y = conv_layer(reshape(x, {s[0], s[1], 1, s[2], s[3]}), w, b, g, false);
    const auto& t = y.shape();
    return reshape(y, {t[0], t[1], t[3], t[4]});
  }
  const std::int64_t cout = w.shape()[0];
  return conv3d(x, w, g) + reshape(b, {cout, 1, 1, 1});
}

Var conv_transpose_layer(Var x, Var w, Var b, const ConvGeometry& g) {
  const std::int64_t cout = w.shape()[1];
  return conv_transpose3d(x, w, g) + reshape(b, {cout, 1, 1, 1});
}

Var batchnorm_train(Var x, Var gamma, Var beta, Real eps, Tensor* batch_mean, Tensor* batch_var) {
  const auto& s = x.shape();
  if (s.empty() || s[0] < 2)
    throw ShapeError("batchnorm: train mode needs a batch of at least 2, got " + to_string(s));
  const Shape st = stat_shape(s);
  const Real m = static_cast<Real>(x.value().size() / st[0]);
  Var mu = sum_to(x, st) * (Real(1) / m);
  Var xc = x - mu;
  Var var = sum_to(square(xc), st) * (Real(1) / m);
  if (batch_mean) *batch_mean = mu.value().reshaped({st[0]});
  if (batch_var) *batch_var = var.value().reshaped({st[0]});
  Var xhat = xc / sqrt(var + eps);
  return xhat * reshape(gamma, st) + reshape(beta, st);
}

Var batchnorm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean, const Tensor& running_var, Real eps) {
  const Shape st = stat_shape(x.shape());
  Tape& t = x.tape();
  Var mu = t.constant(running_mean.reshaped(st));
  Var sd = t.constant(running_var.reshaped(st));
  return (x - mu) / sqrt(sd + eps) * reshape(gamma, st) + reshape(beta, st);
}

Var activate(Var x, const Act& a) {
  switch (a.kind) {
    case Activation::Relu: return relu(x);
    case Activation::LeakyRelu: return leaky_relu(x, a.alpha);
    case Activation::Tanh: return tanh(x);
    case Activation::Sigmoid: return sigmoid(x);
  }
  throw std::logic_error("activate: unknown activation");
}

// ---------------------------------------------------------------------------

Network& Network::add(Layer l) {
  layers_.push_back(std::move(l));
  rename();
  return *this;
}

void Network::rename() {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string prefix = name_ + "." + std::to_string(i) + ".";
    std::visit(overloaded{
                   [&](Dense& d) {
                     d.weight.name = prefix + "weight";
                     d.bias.name = prefix + "bias";
                   },
                   [&](Conv& c) {
                     c.weight.name = prefix + "weight";
                     c.bias.name = prefix + "bias";
                   },
                   [&](ConvTranspose& c) {
                     c.weight.name = prefix + "weight";
                     c.bias.name = prefix + "bias";
                   },
                   [&](BatchNorm& b) {
                     b.gamma.name = prefix + "gamma";
                     b.beta.name = prefix + "beta";
                   },
                   [](auto&) {},
               },
               layers_[i]);
  }
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_)
    std::visit(overloaded{
                   [&](Dense& d) { out.insert(out.end(), {&d.weight, &d.bias}); },
                   [&](Conv& c) { out.insert(out.end(), {&c.weight, &c.bias}); },
                   [&](ConvTranspose& c) { out.insert(out.end(), {&c.weight, &c.bias}); },
                   [&](BatchNorm& b) { out.insert(out.end(), {&b.gamma, &b.beta}); },
                   [](auto&) {},
               },
               l);
  return out;
}

std::vector<const Parameter*> Network::parameters() const {
  auto ps = const_cast<Network*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

std::vector<std::pair<std::string, Tensor*>> Network::buffers() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (auto* b = std::get_if<BatchNorm>(&layers_[i])) {
      const std::string prefix = name_ + "." + std::to_string(i) + ".";
      out.emplace_back(prefix + "running_mean", &b->running_mean);
      out.emplace_back(prefix + "running_var", &b->running_var);
    }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> Network::buffers() const {
  auto bs = const_cast<Network*>(this)->buffers();
  return {bs.begin(), bs.end()};
}

std::int64_t Network::parameter_count() const {
  std::int64_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

Tensor Network::infer(const Tensor& x, Mode mode) {
  Tape tape;
  Bound b(*this, tape, false);
  return b.forward(tape.constant(x), mode).value();
}

Bound::Bound(Network& net, Tape& tape, bool trainable) : net_(&net), tape_(&tape) {
  for (auto* p : net.parameters()) params_.push_back(tape.leaf(p->value, trainable, p->name));
}

Var Bound::forward(Var x, Mode mode) {
  std::size_t k = 0;
  auto next = [&] { return params_.at(k++); };
  for (auto& layer : net_->layers()) {
    x = std::visit(
        overloaded{
            [&](Dense&) {
              Var w = next(), b = next();
              return dense(x, w, b);
            },
            [&](Conv& c) {
              Var w = next(), b = next();
              return conv_layer(x, w, b, c.geometry, c.planar);
            },
            [&](ConvTranspose& c) {
              Var w = next(), b = next();
              return conv_transpose_layer(x, w, b, c.geometry);
            },
            [&](BatchNorm& bn) {
              Var g = next(), b = next();
              if (mode == Mode::Eval) return batchnorm_eval(x, g, b, bn.running_mean, bn.running_var, bn.eps);
              Tensor bm, bv;
              Var y = batchnorm_train(x, g, b, bn.eps, &bm, &bv);
              const Real m = static_cast<Real>(x.value().size() / bm.size());
              bn.running_mean.vec() = bn.momentum * bn.running_mean.vec() + (1 - bn.momentum) * bm.vec();
              bn.running_var.vec() =
                  bn.momentum * bn.running_var.vec() + (1 - bn.momentum) * (m / (m - 1)) * bv.vec();
              return y;
            },
            [&](Act& a) { return activate(x, a); },
            [&](Unflatten& u) {
              Shape s{x.shape()[0]};
              s.insert(s.end(), u.extents.begin(), u.extents.end());
              return reshape(x, std::move(s));
            },
            [&](Flatten&) {
              const auto b = x.shape()[0];
              return reshape(x, {b, b == 0 ? 0 : x.value().size() / b});
            },
        },
        layer);
  }
  return x;
}

}  // namespace voxgan::nn
