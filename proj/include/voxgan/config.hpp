#pragma once

#include "voxgan/adam.hpp"
#include "voxgan/models.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace voxgan {

enum class TrainMode { IWGan, VaeIWGan, VanillaGan };

const char* mode_name(TrainMode m);
TrainMode parse_mode(const std::string& s);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  TrainMode mode = TrainMode::IWGan;
  std::int64_t batch_size = 16;
  std::int64_t epochs = 10;
  std::int64_t gen_interval = 5;  // generator learns every n-th batch
  Real lambda = 10;
  Real delta = 100;
  Real lr_generator = Real(1e-4);
  Real lr_discriminator = Real(1e-4);
  Real lr_encoder = Real(1e-4);
  Real beta1 = Real(0.5);
  Real beta2 = Real(0.9);
  Real adam_epsilon = Real(1e-8);
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;  // epochs; 0 writes only the final checkpoint
  bool adversarial_on_reconstruction = false;

  AdamConfig adam(Real lr) const { return {lr, beta1, beta2, adam_epsilon}; }
  void validate() const;
};

/// Everything a run depends on. Serializes to a `key = value` file with a
/// fixed key order; unknown keys are errors.
struct RunConfig {
  TrainConfig train;
  ModelSpec model;
  NetworkBase encoder = NetworkBase::VoxelEncoder;  // condition modality in vae-iwgan mode

  /// "toy:<kind>" or a directory of .binvox/.vxg files
  std::string data = "toy:mixed";
  std::int64_t data_count = 4;   // toy shapes per dataset
  int data_orientations = 4;     // quarter turns per toy shape
  std::uint64_t data_seed = 1;
  std::string out = "run";

  std::string serialize() const;
  /// Applies one key. `where` prefixes error messages (e.g. "run.cfg:12").
  void set(const std::string& key, const std::string& value, const std::string& where = "");
  void validate() const;
};

RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Exact text form of a real (round-trips bit-for-bit).
std::string format_real(double v);

}  // namespace voxgan
