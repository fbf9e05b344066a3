#pragma once

#include "voxgan/nn.hpp"

#include <string>
#include <vector>

namespace voxgan {

enum class NetworkBase { Generator, Discriminator, ImageEncoder, VoxelEncoder };

const char* base_name(NetworkBase b);
NetworkBase parse_base(const std::string& s);

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Declarative description shared by all four network builders. A width of 0
/// picks the default schedule: 32 at resolutions above 16, 16 otherwise, so
/// the 32^3 generator is 256 -> 128 -> 64 -> 32 -> 1 behind a 2048-node dense.
struct ModelSpec {
  std::int64_t resolution = 32;
  std::int64_t latent_dim = 200;
  std::int64_t width = 0;
  NetworkBase base = NetworkBase::Generator;
  Real leaky_slope = Real(0.2);
  Real init_std = Real(0.02);

  std::int64_t encoder_output_dim() const { return 2 * latent_dim; }
  std::int64_t effective_width() const { return width > 0 ? width : (resolution > 16 ? 32 : 16); }

  /// Number of stride-2 stages and the coarsest extent they start from:
  /// start * 2^stages == resolution.
  std::int64_t stages() const;
  std::int64_t base_extent() const { return resolution >> stages(); }

  /// Channel count after each generator deconvolution, preceded by the
  /// reshape channel count (e.g. {256, 128, 64, 32, 1}).
  std::vector<std::int64_t> generator_channels() const;
  /// Channel count after each discriminator convolution (e.g. {32, 64, 128, 256}).
  std::vector<std::int64_t> discriminator_channels() const;
  /// Image encoder conv channels, four stride-2 k=5 stages.
  std::vector<std::int64_t> image_encoder_channels() const;

  void validate() const;
};

nn::Network build_generator(const ModelSpec& spec, Rng& rng);
nn::Network build_discriminator(const ModelSpec& spec, Rng& rng);
/// base must be ImageEncoder ([B, 1, res, res] inputs) or VoxelEncoder ([B, 1, res, res, res]).
nn::Network build_encoder(const ModelSpec& spec, Rng& rng);

/// Discriminator with a sigmoid read-out, for the minimax baseline.
nn::Network with_sigmoid_readout(nn::Network d);

/// True when the layer list has no batch normalization and ends in an affine layer.
bool is_linear_readout_critic(const nn::Network& net);

struct LatentCode {
  Var mu;
  Var log_var;
  Var sample;
  Tensor noise;
};

/// Splits an encoder output [B, 2L] into (mu, log_var) and draws
/// sample = mu + exp(log_var / 2) * noise.
LatentCode reparameterize(Var encoded, Rng& rng);
LatentCode reparameterize(Var encoded, const Tensor& noise);

std::vector<Tensor> interpolate_latents(const Tensor& a, const Tensor& b, std::int64_t steps);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct CriticTerms {
  Real critic_fake = 0;     // mean D(fake)
  Real critic_real = 0;     // mean D(real)
  Real penalty = 0;         // lambda * mean (|grad| - 1)^2
  Real grad_norm_mean = 0;  // mean |grad D(x_hat)|
  /// Negated critic objective without the penalty: mean D(real) - mean D(fake).
  Real wasserstein_estimate() const { return critic_real - critic_fake; }
};

struct CriticLoss {
  Var loss;
  Var penalty;
  CriticTerms terms;
};

/// Per-sample straight-line mixes eps * real + (1 - eps) * fake, eps ~ U[0, 1).
Tensor sample_interpolates(const Tensor& real, const Tensor& fake, Rng& rng);

/// lambda * mean_i (|grad_x D(x_i)|_2 - 1)^2 at the given points; the result
/// is differentiable with respect to D's parameters.
Var gradient_penalty(nn::Bound& critic, const Tensor& points, Real lambda, Real* grad_norm_mean = nullptr);

/// mean D(fake) - mean D(real) + gradient penalty on fresh interpolates.
CriticLoss wgan_gp_disc_loss(nn::Bound& critic, Var real, Var fake, Rng& rng, Real lambda = 10);

/// -mean D(fake)
Var wgan_gen_loss(nn::Bound& critic, Var fake);

struct MinimaxLosses {
  Var disc;
  Var gen;
};

/// critic must already end in a sigmoid. Logs are clamped at 1e-7.
MinimaxLosses vanilla_gan_losses(nn::Bound& critic, nn::Bound& generator, Var real, Var z);
MinimaxLosses vanilla_gan_losses(nn::Bound& critic, Var real, Var fake);

/// 0.5 * sum (exp(log_var) + mu^2 - 1 - log_var), averaged over the batch.
Var kl_to_standard_normal(Var mu, Var log_var);
/// Squared Euclidean distance per sample, averaged over the batch.
Var reconstruction_error(Var reconstruction, Var target);

struct VaeOptions {
  Real delta = 100;
  /// Apply the adversarial term to the reconstruction instead of a prior sample.
  bool adversarial_on_reconstruction = false;
  /// Skip the adversarial forward pass when only the encoder loss is needed.
  bool need_generator_loss = true;
};

struct VaeLosses {
  Var encoder;    // reconstruction + KL
  Var generator;  // -mean D(x_z) + delta * reconstruction
  Var reconstruction;
  Var kl;
  Var adversarial;
  Var decoded;  // reconstruction of the target from the condition
  LatentCode code;
  bool generator_uses_reconstruction = true;
};

VaeLosses vae_losses(nn::Bound& encoder, nn::Bound& generator, nn::Bound& critic, Var condition, Var target,
                     Rng& rng, const VaeOptions& opts = {});

}  // namespace voxgan
