#include "oracles.hpp"

#include "voxgan/models.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace voxgan;
using oracle::random_tensor;

namespace {

ModelSpec tiny(std::int64_t res = 8, std::int64_t latent = 4, std::int64_t width = 2) {
  ModelSpec s;
  s.resolution = res;
  s.latent_dim = latent;
  s.width = width;
  s.init_std = Real(0.3);  // large weights keep finite-difference signals well above noise
  return s;
}

nn::Network make(ModelSpec s, NetworkBase b, Rng& rng) {
  s.base = b;
  switch (b) {
    case NetworkBase::Generator: return build_generator(s, rng);
    case NetworkBase::Discriminator: return build_discriminator(s, rng);
    default: return build_encoder(s, rng);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Architecture
// ---------------------------------------------------------------------------

TEST(Architecture, Generator32) {
  Rng rng(0);
  ModelSpec s;
  nn::Network g = build_generator(s, rng);
  const auto& d = std::get<nn::Dense>(g.layers()[0]);
  EXPECT_EQ(d.weight.value.shape(), (Shape{200, 2048}));
  EXPECT_EQ(s.generator_channels(), (std::vector<std::int64_t>{256, 128, 64, 32, 1}));
  EXPECT_EQ(g.count<nn::ConvTranspose>(), 4u);
  EXPECT_EQ(g.count<nn::BatchNorm>(), 3u);
  Tensor x = g.infer(rng.sample_normal({2, 200}));
  EXPECT_EQ(x.shape(), (Shape{2, 1, 32, 32, 32}));
  EXPECT_LE(x.vec().cwiseAbs().maxCoeff(), 1.0);
  // tanh read-out after the last deconvolution
  const auto& last = std::get<nn::Act>(g.layers().back());
  EXPECT_EQ(last.kind, nn::Activation::Tanh);
}

TEST(Architecture, Discriminator32) {
  Rng rng(0);
  ModelSpec s;
  s.base = NetworkBase::Discriminator;
  nn::Network d = build_discriminator(s, rng);
  EXPECT_EQ(d.count<nn::Conv>(), 4u);
  EXPECT_EQ(d.count<nn::BatchNorm>(), 0u);
  EXPECT_TRUE(is_linear_readout_critic(d));
  EXPECT_EQ(s.discriminator_channels(), (std::vector<std::int64_t>{32, 64, 128, 256}));
  for (const auto& l : d.layers())
    if (auto* c = std::get_if<nn::Conv>(&l)) {
      EXPECT_EQ(c->geometry, ConvGeometry::cube(4, 2, 1));
    } else if (auto* a = std::get_if<nn::Act>(&l)) {
      EXPECT_EQ(a->kind, nn::Activation::LeakyRelu);
      EXPECT_DOUBLE_EQ(a->alpha, 0.2);
    }
  EXPECT_EQ(d.infer(Tensor({3, 1, 32, 32, 32})).shape(), (Shape{3, 1}));
  EXPECT_FALSE(is_linear_readout_critic(with_sigmoid_readout(d)));
}

TEST(Architecture, Encoders) {
  Rng rng(0);
  ModelSpec s;
  s.resolution = 20;
  s.base = NetworkBase::VoxelEncoder;
  EXPECT_EQ(build_encoder(s, rng).infer(Tensor({2, 1, 20, 20, 20})).shape(), (Shape{2, 400}));
  s.base = NetworkBase::ImageEncoder;
  nn::Network e = build_encoder(s, rng);
  EXPECT_EQ(e.count<nn::Conv>(), 4u);
  EXPECT_EQ(e.infer(Tensor({2, 1, 20, 20})).shape(), (Shape{2, 400}));
  s.base = NetworkBase::Generator;
  EXPECT_THROW(build_encoder(s, rng), SpecError);
}

TEST(Architecture, StageLadder) {
  struct Row {
    std::int64_t res, stages, base;
  };
  for (auto r : {Row{32, 4, 2}, Row{16, 3, 2}, Row{8, 2, 2}, Row{20, 2, 5}, Row{64, 4, 4}}) {
    ModelSpec s;
    s.resolution = r.res;
    EXPECT_EQ(s.stages(), r.stages) << r.res;
    EXPECT_EQ(s.base_extent(), r.base) << r.res;
    Rng rng(1);
    s.latent_dim = 8;
    s.width = 2;
    EXPECT_EQ(build_generator(s, rng).infer(Tensor({2, 8})).shape(), (Shape{2, 1, r.res, r.res, r.res}));
    s.base = NetworkBase::Discriminator;
    EXPECT_EQ(build_discriminator(s, rng).infer(Tensor({2, 1, r.res, r.res, r.res})).shape(), (Shape{2, 1}));
  }
  ModelSpec bad;
  bad.resolution = 3;
  EXPECT_THROW(bad.validate(), SpecError);
  bad.resolution = 7;
  EXPECT_THROW(bad.validate(), SpecError);
}

TEST(Architecture, DefaultWidth) {
  ModelSpec s;
  EXPECT_EQ(s.effective_width(), 32);
  s.resolution = 16;
  EXPECT_EQ(s.effective_width(), 16);
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

TEST(Losses, LinearCriticPenaltyIsAnalytic) {
  const std::int64_t dim = 3 * 4;
  for (double a : {0.0, 1.0 / std::sqrt(double(dim)), 2.0}) {
    nn::Network d("critic");
    nn::Dense layer{{"w", Tensor({dim, 1}, Real(a))}, {"b", Tensor({1})}};
    d.add(nn::Flatten{}).add(layer);
    Tape t;
    nn::Bound b(d, t, true);
    Rng rng(1);
    Var p = gradient_penalty(b, random_tensor(rng, {5, 3, 4}), 10);
    const double want = 10 * std::pow(std::abs(a) * std::sqrt(double(dim)) - 1, 2);
    EXPECT_NEAR(p.value().item(), want, 1e-9) << a;
  }
}

TEST(Losses, InterpolatesLieOnSegments) {
  Rng rng(2);
  Tensor real = random_tensor(rng, {4, 3}), fake = random_tensor(rng, {4, 3});
  Tensor x = sample_interpolates(real, fake, rng);
  for (std::int64_t b = 0; b < 4; ++b) {
    const double eps = (x.at({b, 0}) - fake.at({b, 0})) / (real.at({b, 0}) - fake.at({b, 0}));
    EXPECT_GE(eps, 0);
    EXPECT_LT(eps, 1);
    for (std::int64_t j = 1; j < 3; ++j)
      EXPECT_NEAR(x.at({b, j}), eps * real.at({b, j}) + (1 - eps) * fake.at({b, j}), 1e-12);
  }
}

TEST(Losses, CriticLossGradients) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    nn::Network d = make(tiny(), NetworkBase::Discriminator, rng);
    Tensor real = random_tensor(rng, {3, 1, 8, 8, 8}), fake = random_tensor(rng, {3, 1, 8, 8, 8});
    const double err = oracle::gradcheck_network(d, [&](Tape& t, nn::Bound& b) {
      Rng eps(seed);  // same interpolates on every evaluation
      return wgan_gp_disc_loss(b, t.constant(real), t.constant(fake), eps, 10).loss;
    });
    EXPECT_LT(err, 1e-4) << seed;
  }
}

TEST(Losses, GeneratorLossGradients) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    nn::Network g = make(tiny(), NetworkBase::Generator, rng);
    nn::Network d = make(tiny(), NetworkBase::Discriminator, rng);
    Tensor z = random_tensor(rng, {3, 4});
    const double err = oracle::gradcheck_network(g, [&](Tape& t, nn::Bound& b) {
      nn::Bound critic(d, t, false);
      return wgan_gen_loss(critic, b(t.constant(z)));
    });
    EXPECT_LT(err, 1e-4) << seed;
  }
}

TEST(Losses, MinimaxGradients) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    nn::Network d = with_sigmoid_readout(make(tiny(), NetworkBase::Discriminator, rng));
    nn::Network g = make(tiny(), NetworkBase::Generator, rng);
    Tensor real = random_tensor(rng, {3, 1, 8, 8, 8}), z = random_tensor(rng, {3, 4});
    EXPECT_LT(oracle::gradcheck_network(d,
                                        [&](Tape& t, nn::Bound& b) {
                                          nn::Bound gen(g, t, false);
                                          return vanilla_gan_losses(b, gen, t.constant(real), t.constant(z)).disc;
                                        }),
              1e-4)
        << seed;
    EXPECT_LT(oracle::gradcheck_network(g,
                                        [&](Tape& t, nn::Bound& b) {
                                          nn::Bound critic(d, t, false);
                                          return vanilla_gan_losses(critic, b, t.constant(real), t.constant(z)).gen;
                                        }),
              1e-4)
        << seed;
  }
}

TEST(Losses, MinimaxValues) {
  // D == 0.5 everywhere: disc = -2 log 0.5, gen = log 0.5
  nn::Network d("d");
  d.add(nn::Flatten{}).add(nn::Dense{{"w", Tensor({2, 1})}, {"b", Tensor({1})}}).add(nn::Act{nn::Activation::Sigmoid});
  Tape t;
  nn::Bound b(d, t);
  auto l = vanilla_gan_losses(b, t.constant(Tensor({2, 2}, 1)), t.constant(Tensor({2, 2})));
  EXPECT_NEAR(l.disc.value().item(), 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(l.gen.value().item(), -std::log(2.0), 1e-12);
}

TEST(Losses, KlAndReconstruction) {
  Tape t;
  Var mu = t.constant(Tensor({2, 2}));
  Var lv = t.constant(Tensor({2, 2}));
  EXPECT_DOUBLE_EQ(kl_to_standard_normal(mu, lv).value().item(), 0);
  Var mu1 = t.constant(Tensor({1, 1}, {2}));
  Var lv1 = t.constant(Tensor({1, 1}, {std::log(3.0)}));
  EXPECT_NEAR(kl_to_standard_normal(mu1, lv1).value().item(), 0.5 * (3 + 4 - 1 - std::log(3.0)), 1e-12);
  Var a = t.constant(Tensor({2, 3}, {1, 1, 1, 0, 0, 0}));
  Var b = t.constant(Tensor({2, 3}, {0, 1, 1, 0, 0, 2}));
  EXPECT_DOUBLE_EQ(reconstruction_error(a, b).value().item(), (1.0 + 4.0) / 2);
}

TEST(Losses, VaeGradients) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    ModelSpec s = tiny();
    nn::Network e = make(s, NetworkBase::VoxelEncoder, rng);
    nn::Network g = make(s, NetworkBase::Generator, rng);
    nn::Network d = make(s, NetworkBase::Discriminator, rng);
    Tensor cond = random_tensor(rng, {3, 1, 8, 8, 8}), target = random_tensor(rng, {3, 1, 8, 8, 8});
    auto loss = [&](bool encoder_loss) {
      return [&, encoder_loss](Tape& t, nn::Bound& b) {
        nn::Bound enc = encoder_loss ? b : nn::Bound(e, t, false);
        nn::Bound gen = encoder_loss ? nn::Bound(g, t, false) : b;
        nn::Bound critic(d, t, false);
        Rng noise(seed);
        auto l = vae_losses(enc, gen, critic, t.constant(cond), t.constant(target), noise, {Real(1.5)});
        return encoder_loss ? l.encoder : l.generator;
      };
    };
    EXPECT_LT(oracle::gradcheck_network(e, loss(true)), 1e-4) << "encoder " << seed;
    EXPECT_LT(oracle::gradcheck_network(g, loss(false)), 1e-4) << "generator " << seed;
  }
}

TEST(Losses, VaeDeltaZeroDropsReconstruction) {
  Rng rng(3);
  ModelSpec s = tiny();
  nn::Network e = make(s, NetworkBase::VoxelEncoder, rng), g = make(s, NetworkBase::Generator, rng),
              d = make(s, NetworkBase::Discriminator, rng);
  Tape t;
  nn::Bound be(e, t), bg(g, t), bd(d, t, false);
  Var cond = t.constant(random_tensor(rng, {2, 1, 8, 8, 8}));
  auto l = vae_losses(be, bg, bd, cond, cond, rng, {Real(0)});
  EXPECT_FALSE(l.generator_uses_reconstruction);
  EXPECT_EQ(l.generator.id(), l.adversarial.id());
  auto l2 = vae_losses(be, bg, bd, cond, cond, rng, {Real(100)});
  EXPECT_TRUE(l2.generator_uses_reconstruction);
  Var image = t.constant(Tensor({2, 1, 8, 8}));
  EXPECT_THROW(vae_losses(be, bg, bd, image, cond, rng), ShapeError);
}

// The penalty's gradient with respect to the critic parameters requires
// differentiating through grad_x D.
TEST(DoubleBackward, PenaltyMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    nn::Network d = make(tiny(), NetworkBase::Discriminator, rng);
    Tensor points = random_tensor(rng, {3, 1, 8, 8, 8});
    const double err = oracle::gradcheck_network(d, [&](Tape&, nn::Bound& b) { return gradient_penalty(b, points, 10); });
    EXPECT_LT(err, 1e-4) << seed;
  }
}

TEST(Latent, Reparameterization) {
  Tape t;
  Var enc = t.constant(Tensor({1, 4}, {1, 2, 0, std::log(4.0)}));
  auto code = reparameterize(enc, Tensor({1, 2}, {0.5, -1}));
  EXPECT_EQ(code.mu.value(), Tensor({1, 2}, {1, 2}));
  EXPECT_NEAR(code.sample.value()[0], 1 + 0.5, 1e-12);
  EXPECT_NEAR(code.sample.value()[1], 2 - 2, 1e-12);
  EXPECT_THROW(reparameterize(t.constant(Tensor({1, 3})), Tensor({1, 1})), ShapeError);
}

TEST(Latent, Interpolation) {
  Tensor a({1, 2}, {0, 0}), b({1, 2}, {4, -4});
  auto path = interpolate_latents(a, b, 5);
  ASSERT_EQ(path.size(), 5u);
  EXPECT_EQ(path.front(), a);
  EXPECT_EQ(path.back(), b);
  EXPECT_EQ(path[1], Tensor({1, 2}, {1, -1}));
  EXPECT_THROW(interpolate_latents(a, b, 1), std::invalid_argument);
}
