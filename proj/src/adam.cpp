#include "voxgan/adam.hpp"

#include <cmath>

namespace voxgan {

void Adam::step(std::span<nn::Parameter* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw ShapeError("adam: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.shape() != grads[i].shape())
      throw ShapeError("adam: gradient " + to_string(grads[i].shape()) + " does not match parameter '" +
                       params[i]->name + "' " + to_string(params[i]->value.shape()));
    if (!grads[i].vec().allFinite()) throw NonFiniteGradient(params[i]->name, t_ + 1);
  }
  if (m_.empty()) {
    for (auto* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  } else if (m_.size() != params.size()) {
    throw ShapeError("adam: parameter list changed between steps");
  }

  ++t_;
  const Real b1 = cfg_.beta1, b2 = cfg_.beta2;
  const Real c1 = Real(1) - std::pow(b1, static_cast<Real>(t_));
  const Real c2 = Real(1) - std::pow(b2, static_cast<Real>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = m_[i].vec();
    auto& v = v_[i].vec();
    const auto& g = grads[i].vec();
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.cwiseProduct(g);
    params[i]->value.vec().array() -=
        cfg_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.epsilon);
  }
}

}  // namespace voxgan
