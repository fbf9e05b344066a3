#include "voxgan/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace voxgan {

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: empty range");
  // rejection keeps the draw unbiased
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do v = engine_();
  while (v >= limit);
  return v % n;
}

Tensor Rng::sample_normal(const Shape& shape) {
  Tensor t(shape);
  for (auto& v : t.span()) v = static_cast<Real>(normal());
  return t;
}

Tensor Rng::sample_uniform(const Shape& shape) {
  Tensor t(shape);
  for (auto& v : t.span()) v = static_cast<Real>(uniform());
  return t;
}

Rng Rng::split(std::uint64_t stream) const {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed_ + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return Rng(z ^ (z >> 31));
}

std::string Rng::state() const {
  std::ostringstream os;
  os << seed_ << ' ' << engine_;
  return os.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream is(state);
  is >> seed_ >> engine_;
  if (!is) throw std::runtime_error("Rng::restore: malformed state");
}

}  // namespace voxgan
