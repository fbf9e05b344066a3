#include "voxgan/models.hpp"

#include <cmath>

namespace voxgan {

const char* base_name(NetworkBase b) {
  switch (b) {
    case NetworkBase::Generator: return "generator";
    case NetworkBase::Discriminator: return "discriminator";
    case NetworkBase::ImageEncoder: return "image-encoder";
    case NetworkBase::VoxelEncoder: return "voxel-encoder";
  }
  return "?";
}

NetworkBase parse_base(const std::string& s) {
  for (auto b : {NetworkBase::Generator, NetworkBase::Discriminator, NetworkBase::ImageEncoder,
                 NetworkBase::VoxelEncoder})
    if (s == base_name(b)) return b;
  throw SpecError("unknown network base '" + s + "'");
}

std::int64_t ModelSpec::stages() const {
  if (resolution < 2) throw SpecError("model spec: resolution must be at least 2");
  std::int64_t n = 0;
  while (n < 4 && resolution % (std::int64_t{2} << n) == 0 && (resolution >> (n + 1)) >= 2) ++n;
  if (n == 0) throw SpecError("model spec: resolution " + std::to_string(resolution) + " has no stride-2 ladder");
  return n;
}

std::vector<std::int64_t> ModelSpec::generator_channels() const {
  const auto n = stages();
  std::vector<std::int64_t> c{effective_width() << (n - 1)};
  for (std::int64_t i = 1; i < n; ++i) c.push_back(c.back() / 2);
  c.push_back(1);
  return c;
}

std::vector<std::int64_t> ModelSpec::discriminator_channels() const {
  std::vector<std::int64_t> c;
  for (std::int64_t i = 0; i < stages(); ++i) c.push_back(effective_width() << i);
  return c;
}

std::vector<std::int64_t> ModelSpec::image_encoder_channels() const {
  const auto w = effective_width();
  return {2 * w, 4 * w, 8 * w, 16 * w};
}

void ModelSpec::validate() const {
  if (latent_dim < 1) throw SpecError("model spec: latent_dim must be positive");
  if (width < 0) throw SpecError("model spec: width must be non-negative");
  (void)stages();
  for (auto c : generator_channels())
    if (c < 1) throw SpecError("model spec: inconsistent channel schedule for width " + std::to_string(width));
  if (base_extent() << stages() != resolution) throw SpecError("model spec: reshape extent does not reach resolution");
}

namespace {

const ConvGeometry kStride2 = ConvGeometry::cube(4, 2, 1);

void add_critic_trunk(nn::Network& net, const ModelSpec& spec, Rng& rng, const nn::InitOptions& init) {
  std::int64_t in = 1;
  for (auto c : spec.discriminator_channels()) {
    net.add(nn::make_conv3d(in, c, kStride2, rng, init));
    net.add(nn::Act{nn::Activation::LeakyRelu, spec.leaky_slope});
    in = c;
  }
  net.add(nn::Flatten{});
}

std::int64_t critic_features(const ModelSpec& spec) {
  const auto s = spec.base_extent();
  return spec.discriminator_channels().back() * s * s * s;
}

}  // namespace

nn::Network build_generator(const ModelSpec& spec, Rng& rng) {
  spec.validate();
  const nn::InitOptions init{spec.init_std};
  const auto ch = spec.generator_channels();
  const auto s = spec.base_extent();
  nn::Network net("generator");
  net.add(nn::make_dense(spec.latent_dim, ch[0] * s * s * s, rng, init));
  net.add(nn::Unflatten{{ch[0], s, s, s}});
  for (std::size_t i = 0; i + 1 < ch.size(); ++i) {
    net.add(nn::make_conv_transpose3d(ch[i], ch[i + 1], kStride2, rng, init));
    if (i + 2 < ch.size()) {
      net.add(nn::make_batchnorm(ch[i + 1]));
      net.add(nn::Act{nn::Activation::Relu});
    } else {
      net.add(nn::Act{nn::Activation::Tanh});
    }
  }
  return net;
}

nn::Network build_discriminator(const ModelSpec& spec, Rng& rng) {
  spec.validate();
  const nn::InitOptions init{spec.init_std};
  nn::Network net("discriminator");
  add_critic_trunk(net, spec, rng, init);
  net.add(nn::make_dense(critic_features(spec), 1, rng, init));
  return net;
}

nn::Network build_encoder(const ModelSpec& spec, Rng& rng) {
  spec.validate();
  const nn::InitOptions init{spec.init_std};
  nn::Network net("encoder");
  if (spec.base == NetworkBase::VoxelEncoder) {
    add_critic_trunk(net, spec, rng, init);
    net.add(nn::make_dense(critic_features(spec), spec.encoder_output_dim(), rng, init));
    return net;
  }
  if (spec.base != NetworkBase::ImageEncoder)
    throw SpecError(std::string("build_encoder: base must be an encoder, got ") + base_name(spec.base));
  std::int64_t in = 1, extent = spec.resolution;
  for (auto c : spec.image_encoder_channels()) {
    net.add(nn::make_conv2d(in, c, 5, 2, 2, rng, init));
    net.add(nn::Act{nn::Activation::LeakyRelu, spec.leaky_slope});
    in = c;
    extent = (extent + 4 - 5) / 2 + 1;
  }
  net.add(nn::Flatten{});
  net.add(nn::make_dense(in * extent * extent, spec.encoder_output_dim(), rng, init));
  return net;
}

nn::Network with_sigmoid_readout(nn::Network d) {
  d.add(nn::Act{nn::Activation::Sigmoid});
  return d;
}

bool is_linear_readout_critic(const nn::Network& net) {
  if (net.count<nn::BatchNorm>() != 0 || net.layers().empty()) return false;
  return std::holds_alternative<nn::Dense>(net.layers().back());
}

LatentCode reparameterize(Var encoded, const Tensor& noise) {
  const auto& s = encoded.shape();
  if (s.size() != 2 || s[1] % 2 != 0)
    throw ShapeError("reparameterize: encoder output must be [B, 2L], got " + to_string(s));
  const auto L = s[1] / 2;
  if (noise.shape() != Shape{s[0], L})
    throw ShapeError("reparameterize: noise " + to_string(noise.shape()) + " does not match latent size");
  LatentCode code;
  code.mu = narrow(encoded, 1, 0, L);
  code.log_var = narrow(encoded, 1, L, L);
  code.noise = noise;
  code.sample = code.mu + exp(code.log_var * Real(0.5)) * encoded.tape().constant(noise);
  return code;
}

LatentCode reparameterize(Var encoded, Rng& rng) {
  const auto& s = encoded.shape();
  if (s.size() != 2) throw ShapeError("reparameterize: encoder output must be rank 2");
  return reparameterize(encoded, rng.sample_normal({s[0], s[1] / 2}));
}

std::vector<Tensor> interpolate_latents(const Tensor& a, const Tensor& b, std::int64_t steps) {
  if (steps < 2) throw std::invalid_argument("interpolate_latents: steps must be at least 2");
  if (a.shape() != b.shape())
    throw ShapeError("interpolate_latents: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  std::vector<Tensor> out;
  for (std::int64_t i = 0; i < steps; ++i) {
    const Real t = static_cast<Real>(i) / static_cast<Real>(steps - 1);
    Tensor z(a.shape());
    z.vec() = a.vec() + t * (b.vec() - a.vec());
    out.push_back(std::move(z));
  }
  return out;
}

// ---------------------------------------------------------------------------

Tensor sample_interpolates(const Tensor& real, const Tensor& fake, Rng& rng) {
  if (real.shape() != fake.shape())
    throw ShapeError("interpolates: real " + to_string(real.shape()) + " vs fake " + to_string(fake.shape()));
  const auto B = real.dim(0);
  const auto per = B == 0 ? 0 : real.size() / B;
  Tensor out(real.shape());
  for (std::int64_t b = 0; b < B; ++b) {
    const Real eps = static_cast<Real>(rng.uniform());
    out.vec().segment(b * per, per) = eps * real.vec().segment(b * per, per) + (1 - eps) * fake.vec().segment(b * per, per);
  }
  return out;
}

Var gradient_penalty(nn::Bound& critic, const Tensor& points, Real lambda, Real* grad_norm_mean) {
  Tape& tape = critic.tape();
  Var x = tape.leaf(points, true, "interpolates");
  Var scores = critic(x);
  Var g = tape.grad(sum(scores), std::span<const Var>(&x, 1), GradMode::Graph).front();
  // The tiny offset keeps the square root differentiable at a zero gradient.
  Var norms = sqrt(sum_per_sample(square(g)) + Real(1e-24));
  if (grad_norm_mean) *grad_norm_mean = norms.value().vec().mean();
  return mean(square(norms - Real(1))) * lambda;
}

CriticLoss wgan_gp_disc_loss(nn::Bound& critic, Var real, Var fake, Rng& rng, Real lambda) {
  if (real.shape() != fake.shape())
    throw ShapeError("wgan_gp_disc_loss: real " + to_string(real.shape()) + " vs fake " + to_string(fake.shape()));
  CriticLoss out;
  Var d_real = mean(critic(real));
  Var d_fake = mean(critic(fake));
  const Tensor points = sample_interpolates(real.value(), fake.value(), rng);
  out.penalty = gradient_penalty(critic, points, lambda, &out.terms.grad_norm_mean);
  out.loss = d_fake - d_real + out.penalty;
  out.terms.critic_fake = d_fake.value().item();
  out.terms.critic_real = d_real.value().item();
  out.terms.penalty = out.penalty.value().item();
  return out;
}

Var wgan_gen_loss(nn::Bound& critic, Var fake) { return -mean(critic(fake)); }

MinimaxLosses vanilla_gan_losses(nn::Bound& critic, Var real, Var fake) {
  constexpr Real floor = Real(1e-7);
  Var p_real = critic(real);
  Var p_fake = critic(fake);
  Var log_real = log(clamp_min(p_real, floor));
  Var log_not_fake = log(clamp_min(Real(1) - p_fake, floor));
  return {-mean(log_real) - mean(log_not_fake), mean(log_not_fake)};
}

MinimaxLosses vanilla_gan_losses(nn::Bound& critic, nn::Bound& generator, Var real, Var z) {
  return vanilla_gan_losses(critic, real, generator(z));
}

Var kl_to_standard_normal(Var mu, Var log_var) {
  const auto B = static_cast<Real>(mu.shape()[0]);
  Var terms = exp(log_var) + square(mu) - Real(1) - log_var;
  return sum(terms) * (Real(0.5) / B);
}

Var reconstruction_error(Var reconstruction, Var target) {
  if (reconstruction.shape() != target.shape())
    throw ShapeError("reconstruction_error: " + to_string(reconstruction.shape()) + " vs " +
                     to_string(target.shape()));
  const auto B = static_cast<Real>(target.shape()[0]);
  return sum(square(reconstruction - target)) * (Real(1) / B);
}

VaeLosses vae_losses(nn::Bound& encoder, nn::Bound& generator, nn::Bound& critic, Var condition, Var target,
                     Rng& rng, const VaeOptions& opts) {
  const auto& in = condition.shape();
  const bool voxel_encoder = std::holds_alternative<nn::Conv>(encoder.network().layers().front()) &&
                             !std::get<nn::Conv>(encoder.network().layers().front()).planar;
  if ((voxel_encoder && in.size() != 5) || (!voxel_encoder && in.size() != 4))
    throw ShapeError("vae_losses: condition " + to_string(in) + " does not match the " +
                     (voxel_encoder ? "voxel" : "image") + " encoder");

  VaeLosses out;
  out.code = reparameterize(encoder(condition), rng);
  out.decoded = generator(out.code.sample);
  out.reconstruction = reconstruction_error(out.decoded, target);
  out.kl = kl_to_standard_normal(out.code.mu, out.code.log_var);
  out.encoder = out.reconstruction + out.kl;
  if (!opts.need_generator_loss) return out;

  Tape& tape = condition.tape();
  if (opts.adversarial_on_reconstruction) {
    out.adversarial = wgan_gen_loss(critic, out.decoded);
  } else {
    const auto B = condition.shape()[0];
    const auto L = out.code.mu.shape()[1];
    Var z = tape.constant(rng.sample_normal({B, L}));
    out.adversarial = wgan_gen_loss(critic, generator(z));
  }
  out.generator_uses_reconstruction = opts.delta != 0;
  out.generator = out.generator_uses_reconstruction ? out.adversarial + out.reconstruction * opts.delta
                                                    : out.adversarial;
  return out;
}

}  // namespace voxgan
