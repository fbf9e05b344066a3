#pragma once

#include "voxgan/autograd.hpp"
#include "voxgan/rng.hpp"

#include <string>
#include <variant>
#include <vector>

namespace voxgan::nn {

enum class Mode { Train, Eval };

enum class Activation { Relu, LeakyRelu, Tanh, Sigmoid };

const char* activation_name(Activation a);

struct Parameter {
  std::string name;
  Tensor value;
};

/// y = x W + b; W is [in, out].
struct Dense {
  Parameter weight;
  Parameter bias;
};

/// Cross-correlation. weight is [out, in, k, k, k], or [out, in, 1, k, k] when
/// planar (inputs and outputs are then [B, C, H, W]).
struct Conv {
  Parameter weight;
  Parameter bias;
  ConvGeometry geometry;
  bool planar = false;
};

/// Adjoint of Conv in its input. weight is the kernel of the convolution this
/// layer transposes: [in, out, k, k, k].
struct ConvTranspose {
  Parameter weight;
  Parameter bias;
  ConvGeometry geometry;
};

/// Per-channel normalization over every axis but 1.
struct BatchNorm {
  Parameter gamma;
  Parameter beta;
  Tensor running_mean;
  Tensor running_var;
  Real eps = Real(1e-5);
  Real momentum = Real(0.9);
};

struct Act {
  Activation kind;
  Real alpha = Real(0.2);
};

/// [B, n] -> [B, extents...]
struct Unflatten {
  Shape extents;
};

/// [B, ...] -> [B, prod(...)]
struct Flatten {};

using Layer = std::variant<Dense, Conv, ConvTranspose, BatchNorm, Act, Unflatten, Flatten>;

std::string layer_name(const Layer& l);

struct InitOptions {
  Real weight_std = Real(0.02);  // truncated at two standard deviations
};

Tensor truncated_normal(Rng& rng, const Shape& shape, Real std);

Dense make_dense(std::int64_t in, std::int64_t out, Rng& rng, const InitOptions& init = {});
Conv make_conv3d(std::int64_t in, std::int64_t out, const ConvGeometry& g, Rng& rng, const InitOptions& init = {});
Conv make_conv2d(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride, std::int64_t pad, Rng& rng,
                 const InitOptions& init = {});
ConvTranspose make_conv_transpose3d(std::int64_t in, std::int64_t out, const ConvGeometry& g, Rng& rng,
                                    const InitOptions& init = {});
BatchNorm make_batchnorm(std::int64_t channels);

/// An ordered layer stack with value semantics.
class Network {
 public:
  Network() = default;
  explicit Network(std::string name) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }

  Network& add(Layer l);
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  /// Parameters in a fixed order; names are "<network>.<index>.<role>".
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  /// Non-trainable state (batch-norm running statistics), same naming.
  std::vector<std::pair<std::string, Tensor*>> buffers();
  std::vector<std::pair<std::string, const Tensor*>> buffers() const;

  std::int64_t parameter_count() const;
  template <typename T>
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += std::holds_alternative<T>(l);
    return n;
  }

  /// Forward with constant parameters; convenient for inference.
  Tensor infer(const Tensor& x, Mode mode = Mode::Eval);

 private:
  void rename();

  std::string name_;
  std::vector<Layer> layers_;
};

/// A network's parameters placed on a tape. Forward calls share the same
/// parameter nodes, so gradients from several applications accumulate.
class Bound {
 public:
  Bound(Network& net, Tape& tape, bool trainable = true);

  Var operator()(Var x, Mode mode = Mode::Train) { return forward(x, mode); }
  Var forward(Var x, Mode mode = Mode::Train);

  const std::vector<Var>& params() const { return params_; }
  Network& network() { return *net_; }
  Tape& tape() { return *tape_; }

 private:
  Network* net_;
  Tape* tape_;
  std::vector<Var> params_;
};

// Single-layer functional forms, exposed for gradient checks.
Var dense(Var x, Var w, Var b);
Var conv_layer(Var x, Var w, Var b, const ConvGeometry& g, bool planar);
Var conv_transpose_layer(Var x, Var w, Var b, const ConvGeometry& g);
/// Train-mode batch normalization; writes the batch statistics to the outputs if given.
Var batchnorm_train(Var x, Var gamma, Var beta, Real eps, Tensor* batch_mean = nullptr, Tensor* batch_var = nullptr);
Var batchnorm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean, const Tensor& running_var, Real eps);
Var activate(Var x, const Act& a);

}  // namespace voxgan::nn
