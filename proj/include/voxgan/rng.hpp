#pragma once

#include "voxgan/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>

namespace voxgan {

/// Seeded Mersenne Twister (mt19937_64). Uniforms use the top 53 bits; normals
/// use Box-Muller with no cached second value, so the whole stream state is
/// the engine state.
class Rng {
 public:
  static constexpr const char* algorithm = "mt19937_64/box-muller";

  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  /// U[0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  Tensor sample_normal(const Shape& shape);
  Tensor sample_uniform(const Shape& shape);

  /// Independent stream derived deterministically from this stream's seed.
  Rng split(std::uint64_t stream) const;

  std::string state() const;
  void restore(const std::string& state);

  bool operator==(const Rng& o) const { return engine_ == o.engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace voxgan
