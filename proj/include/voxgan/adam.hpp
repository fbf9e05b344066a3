#pragma once

#include "voxgan/nn.hpp"

#include <span>
#include <stdexcept>
#include <vector>

namespace voxgan {

struct AdamConfig {
  Real learning_rate = Real(1e-4);
  Real beta1 = Real(0.5);
  Real beta2 = Real(0.9);
  Real epsilon = Real(1e-8);
};

class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(const std::string& param, std::int64_t step)
      : std::runtime_error("adam: non-finite gradient for '" + param + "' at step " + std::to_string(step)),
        param_(param),
        step_(step) {}
  const std::string& parameter() const { return param_; }
  std::int64_t step() const { return step_; }

 private:
  std::string param_;
  std::int64_t step_;
};

/// Bias-corrected Adam over a fixed, ordered parameter list. Moments are
/// created lazily on the first step to mirror the parameter shapes.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update. grads[i] must match params[i] in shape. Nothing is
  /// modified if any gradient is non-finite.
  void step(std::span<nn::Parameter* const> params, std::span<const Tensor> grads);

  const AdamConfig& config() const { return cfg_; }
  AdamConfig& config() { return cfg_; }
  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::int64_t t_ = 0;
};

}  // namespace voxgan
