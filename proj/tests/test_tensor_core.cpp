#include "oracles.hpp"

#include "voxgan/autograd.hpp"
#include "voxgan/conv.hpp"

#include <gtest/gtest.h>

using namespace voxgan;
using oracle::random_tensor;

TEST(Tensor, ShapeAndItem) {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.size(), 6);
  EXPECT_EQ(t.at({1, 2}), 6);
  EXPECT_THROW(t.item(), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(t.reshaped({4}), ShapeError);
  EXPECT_EQ(Tensor::scalar(3).item(), 3);
}

TEST(Tensor, MatmulAndTranspose) {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({3, 1}, {1, 0, -1});
  EXPECT_EQ(matmul(a, b), Tensor({2, 1}, {-2, -2}));
  EXPECT_EQ(transpose(a), Tensor({3, 2}, {1, 4, 2, 5, 3, 6}));
  EXPECT_THROW(matmul(a, a), ShapeError);
}

TEST(Tensor, BroadcastTrailingAndLeading) {
  Tensor bias({3}, {1, 2, 3});
  Tensor big = broadcast_to(bias, {2, 3});
  EXPECT_EQ(big, Tensor({2, 3}, {1, 2, 3, 1, 2, 3}));
  EXPECT_EQ(sum_to(big, {3}), Tensor({3}, {2, 4, 6}));

  Tensor per_channel({2, 1, 1}, {10, 20});
  Tensor out = broadcast_to(per_channel, {2, 2, 1, 1});
  EXPECT_EQ(out.vec()(3), 20);

  EXPECT_THROW(broadcast_to(Tensor({2}), {3}), ShapeError);
  EXPECT_THROW(broadcast_to(Tensor({2, 3}), {3, 2}), ShapeError);
}

TEST(Tensor, SumToIsAdjointOfBroadcast) {
  Rng rng(1);
  for (int seed = 0; seed < 20; ++seed) {
    Tensor small = random_tensor(rng, {3, 1, 1});
    Tensor big = random_tensor(rng, {2, 3, 4, 5});
    EXPECT_NEAR(dot(broadcast_to(small, big.shape()), big), dot(small, sum_to(big, small.shape())), 1e-10);
  }
}

// ---------------------------------------------------------------------------
// Convolution trio
// ---------------------------------------------------------------------------

TEST(Conv, MatchesDirectLoop) {
  Rng rng(2);
  for (auto g : {ConvGeometry::cube(4, 2, 1), ConvGeometry::cube(3, 1, 1), ConvGeometry::cube(2, 2, 0),
                 ConvGeometry::planar(5, 2, 2)}) {
    const Shape xs = g.kernel[0] == 1 ? Shape{2, 3, 1, 7, 6} : Shape{2, 3, 6, 5, 4};
    Tensor x = random_tensor(rng, xs);
    Tensor w = random_tensor(rng, {4, 3, g.kernel[0], g.kernel[1], g.kernel[2]});
    Tensor got = conv3d(x, w, g), want = oracle::conv3d(x, w, g);
    ASSERT_EQ(got.shape(), want.shape());
    EXPECT_LT((got.vec() - want.vec()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Conv, OutputExtent) {
  // 32 -> 16 for k=4, s=2, p=1; the transpose inverts it
  std::array<std::int64_t, 3> in{32, 32, 32};
  auto g = ConvGeometry::cube(4, 2, 1);
  EXPECT_EQ(g.conv_extent(in)[0], 16);
  std::array<std::int64_t, 3> half{16, 16, 16};
  EXPECT_EQ(g.transpose_extent(half)[0], 32);
  EXPECT_THROW(conv3d(Tensor({1, 1, 2, 2, 2}), Tensor({1, 1, 5, 5, 5}), ConvGeometry::cube(5, 1, 0)), ShapeError);
  EXPECT_THROW(conv3d(Tensor({1, 2, 4, 4, 4}), Tensor({1, 3, 2, 2, 2}), ConvGeometry::cube(2, 1, 0)), ShapeError);
}

// <conv(x, w), y> == <x, convT(y, w)> == <w, wgrad(x, y)>
TEST(Conv, TrioIsAdjoint) {
  Rng rng(3);
  for (int seed = 0; seed < 20; ++seed) {
    const auto g = seed % 2 ? ConvGeometry::cube(4, 2, 1) : ConvGeometry::cube(3, 1, 1);
    Tensor x = random_tensor(rng, {2, 2, 6, 6, 6});
    Tensor w = random_tensor(rng, {3, 2, g.kernel[0], g.kernel[1], g.kernel[2]});
    Tensor y = random_tensor(rng, conv3d(x, w, g).shape());
    const std::array<std::int64_t, 3> ext{6, 6, 6};
    const double lhs = dot(conv3d(x, w, g), y);
    EXPECT_NEAR(lhs, dot(x, conv_transpose3d(y, w, g, ext)), 1e-9);
    EXPECT_NEAR(lhs, dot(w, conv3d_weight_grad(x, y, g)), 1e-9);
  }
}

TEST(Conv, ThreadCountDoesNotChangeResults) {
  Rng rng(4);
  Tensor x = random_tensor(rng, {5, 2, 6, 6, 6});
  Tensor w = random_tensor(rng, {3, 2, 4, 4, 4});
  const auto g = ConvGeometry::cube(4, 2, 1);
  Tensor dy = random_tensor(rng, conv3d(x, w, g).shape());
  set_conv_threads(1);
  Tensor y1 = conv3d(x, w, g), t1 = conv_transpose3d(dy, w, g), g1 = conv3d_weight_grad(x, dy, g);
  set_conv_threads(3);
  Tensor y3 = conv3d(x, w, g), t3 = conv_transpose3d(dy, w, g), g3 = conv3d_weight_grad(x, dy, g);
  set_conv_threads(1);
  EXPECT_EQ(y1, y3);
  EXPECT_EQ(t1, t3);
  EXPECT_EQ(g1, g3);
}

// ---------------------------------------------------------------------------
// Autograd against finite differences
// ---------------------------------------------------------------------------

namespace {

struct OpCase {
  const char* name;
  std::vector<Shape> shapes;
  oracle::Fn f;
  bool positive = false;  // inputs shifted away from zero (log, sqrt, div)
};

// Weighted sums keep every output element in play.
Var weighted(Var y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(y * y.tape().constant(random_tensor(rng, y.shape())));
}

std::vector<OpCase> op_cases() {
  const auto g4 = ConvGeometry::cube(4, 2, 1);
  const auto g3 = ConvGeometry::cube(3, 1, 1);
  return {
      {"add", {{3, 4}, {4}}, [](Tape&, auto& v) { return weighted(v[0] + v[1], 1); }},
      {"sub", {{3, 4}, {3, 1}}, [](Tape&, auto& v) { return weighted(v[0] - v[1], 2); }},
      {"mul", {{2, 3, 2}, {3, 1}}, [](Tape&, auto& v) { return weighted(v[0] * v[1], 3); }},
      {"div", {{3, 4}, {4}}, [](Tape&, auto& v) { return weighted(v[0] / v[1], 4); }, true},
      {"neg_scalar", {{5}}, [](Tape&, auto& v) { return weighted(-(v[0] * Real(3)) + Real(2), 5); }},
      {"matmul", {{3, 4}, {4, 2}}, [](Tape&, auto& v) { return weighted(matmul(v[0], v[1]), 6); }},
      {"transpose", {{3, 4}}, [](Tape&, auto& v) { return weighted(transpose(v[0]), 7); }},
      {"reshape", {{3, 4}}, [](Tape&, auto& v) { return weighted(reshape(v[0], {2, 6}), 8); }},
      {"broadcast_to", {{3, 1}}, [](Tape&, auto& v) { return weighted(broadcast_to(v[0], {2, 3, 4}), 9); }},
      {"sum_to", {{2, 3, 4}}, [](Tape&, auto& v) { return weighted(sum_to(v[0], {3, 1}), 10); }},
      {"mean", {{4, 5}}, [](Tape&, auto& v) { return mean(v[0] * v[0]); }},
      {"exp", {{6}}, [](Tape&, auto& v) { return weighted(exp(v[0]), 11); }},
      {"log", {{6}}, [](Tape&, auto& v) { return weighted(log(v[0]), 12); }, true},
      {"sqrt", {{6}}, [](Tape&, auto& v) { return weighted(sqrt(v[0]), 13); }, true},
      {"square", {{6}}, [](Tape&, auto& v) { return weighted(square(v[0]), 14); }},
      {"tanh", {{6}}, [](Tape&, auto& v) { return weighted(tanh(v[0]), 15); }},
      {"sigmoid", {{6}}, [](Tape&, auto& v) { return weighted(sigmoid(v[0]), 16); }},
      {"relu", {{8}}, [](Tape&, auto& v) { return weighted(relu(v[0]), 17); }},
      {"leaky_relu", {{8}}, [](Tape&, auto& v) { return weighted(leaky_relu(v[0], Real(0.2)), 18); }},
      {"clamp_min", {{8}}, [](Tape&, auto& v) { return weighted(clamp_min(v[0], Real(0.1)), 19); }},
      {"narrow", {{3, 5}}, [](Tape&, auto& v) { return weighted(narrow(v[0], 1, 1, 3), 20); }},
      {"embed", {{3, 2}}, [](Tape&, auto& v) { return weighted(embed(v[0], {3, 5}, 1, 2), 21); }},
      {"sum_per_sample", {{3, 2, 2}}, [](Tape&, auto& v) { return weighted(sum_per_sample(v[0]), 22); }},
      {"conv3d", {{2, 2, 4, 4, 4}, {3, 2, 4, 4, 4}}, [g4](Tape&, auto& v) { return weighted(conv3d(v[0], v[1], g4), 23); }},
      {"conv3d_k3", {{1, 2, 3, 4, 3}, {2, 2, 3, 3, 3}}, [g3](Tape&, auto& v) { return weighted(conv3d(v[0], v[1], g3), 24); }},
      {"conv_transpose3d", {{2, 3, 2, 2, 2}, {3, 2, 4, 4, 4}},
       [g4](Tape&, auto& v) { return weighted(conv_transpose3d(v[0], v[1], g4), 25); }},
      {"conv3d_weight_grad", {{2, 2, 4, 4, 4}, {2, 3, 2, 2, 2}},
       [g4](Tape&, auto& v) { return weighted(conv3d_weight_grad(v[0], v[1], g4), 26); }},
  };
}

}  // namespace

TEST(Autograd, EveryOpMatchesFiniteDifferences) {
  for (const auto& c : op_cases()) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(1000 + seed);
      std::vector<Tensor> in;
      for (const auto& s : c.shapes) {
        Tensor t = random_tensor(rng, s);
        if (c.positive) t.vec() = t.vec().cwiseAbs().array() + Real(0.5);
        in.push_back(t);
      }
      EXPECT_LT(oracle::gradcheck(c.f, in), 1e-6) << c.name << " seed " << seed;
    }
  }
}

// Every VJP is expressed in recorded primitives, so gradients of gradients
// are themselves checkable by finite differences.
TEST(Autograd, SecondOrderMatchesFiniteDifferences) {
  for (const auto& c : op_cases()) {
    Rng rng(77);
    std::vector<Tensor> in;
    for (const auto& s : c.shapes) {
      Tensor t = random_tensor(rng, s);
      if (c.positive) t.vec() = t.vec().cwiseAbs().array() + Real(0.5);
      in.push_back(t);
    }
    // h(x) = sum(grad f(x) * r): differentiable iff the VJP is.
    oracle::Fn h = [&c](Tape& t, const std::vector<Var>& v) {
      Var y = c.f(t, v);
      auto g = t.grad(y, v, GradMode::Graph);
      Var acc = t.constant(Tensor::scalar(0));
      for (std::size_t k = 0; k < g.size(); ++k) acc = acc + weighted(g[k], 500 + k);
      return acc;
    };
    EXPECT_LT(oracle::gradcheck(h, in), 1e-6) << c.name;
  }
}

TEST(Autograd, CubeSecondDerivative) {
  Tape t;
  Var x = t.parameter(Tensor({1}, {2}));
  Var y = sum(x * x * x);
  Var dx = t.grad(y, std::span(&x, 1), GradMode::Graph)[0];
  EXPECT_DOUBLE_EQ(dx.value()[0], 12);
  Var d2 = t.grad(sum(dx), std::span(&x, 1), GradMode::Graph)[0];
  EXPECT_DOUBLE_EQ(d2.value()[0], 12);
}

TEST(Autograd, AccumulatesReuse) {
  Tape t;
  Var x = t.parameter(Tensor({2}, {1, 3}));
  Var y = sum(x * x + x);
  EXPECT_EQ(t.grad_values(y, std::span(&x, 1))[0], Tensor({2}, {3, 7}));
}

TEST(Autograd, UnreachableInputs) {
  Tape t;
  Var x = t.parameter(Tensor({2}, {1, 2}));
  Var z = t.parameter(Tensor({3}));
  Var y = sum(x);
  std::vector<Var> wrt{x, z};
  auto g = t.grad_values(y, wrt);
  EXPECT_EQ(g[1], Tensor({3}));
  EXPECT_THROW(t.grad(y, wrt, GradMode::Detached, true), GradError);
  EXPECT_THROW(t.grad(x, std::span(&x, 1)), GradError);
}

TEST(Autograd, NoGradGuardRecordsConstants) {
  Tape t;
  Var x = t.parameter(Tensor({2}, {1, 2}));
  Var y;
  {
    NoGradGuard guard(t);
    y = x * x;
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_EQ(y.value(), Tensor({2}, {1, 4}));
}

TEST(Autograd, DetachedGradientsAreConstants) {
  Tape t;
  Var x = t.parameter(Tensor({1}, {3}));
  Var g = t.grad(sum(x * x), std::span(&x, 1))[0];
  EXPECT_FALSE(g.requires_grad());
}
