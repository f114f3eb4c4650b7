#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fisherlens/divergences.hpp"
#include "fisherlens/error.hpp"
#include "fisherlens/network.hpp"
#include "test_util.hpp"

using namespace fisherlens;
using fltest::mlp;
using fltest::random_net;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Mean CE over a batch plus its logit gradient.
double ce_and_grad(const ForwardTape& tape, const std::vector<std::size_t>& ys, Tensor& grad) {
  const std::size_t b = tape.batch(), n = tape.probs.cols();
  grad = tape.probs;
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    loss += -std::log(tape.probs.at(i, ys[i]));
    grad.at(i, ys[i]) -= 1.0;
    for (std::size_t j = 0; j < n; ++j) grad.at(i, j) /= static_cast<double>(b);
  }
  return loss / static_cast<double>(b);
}

double batch_ce(const Network& net, const Tensor& xs, const std::vector<std::size_t>& ys) {
  Tensor g;
  return ce_and_grad(net.record(xs), ys, g);
}

}  // namespace

TEST(Architecture, LastWidthMustEqualNumClasses) {
  Architecture a = mlp(3, {4, 2});
  a.num_classes = 3;
  EXPECT_THROW(a.validate(), Error);
  Architecture z = mlp(3, {0, 2});
  EXPECT_THROW(z.validate(), Error);
}

TEST(Forward, ZeroWeightNetIsUniform) {
  const Network net = Network::zeros(mlp(4, {5, 3}, Activation::ReLU));
  const ProbDist p = net.forward(std::vector<double>{0.3, -2.0, 5.0, 1.0});
  for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(p[j], 1.0 / 3.0);
}

TEST(Forward, LogisticNet) {
  const Network net = fltest::logistic_net(1.0);
  const ProbDist p0 = net.forward(std::vector<double>{0.0});
  EXPECT_DOUBLE_EQ(p0[0], 0.5);
  EXPECT_DOUBLE_EQ(p0[1], 0.5);
  const ProbDist p1 = net.forward(std::vector<double>{1.0});
  EXPECT_NEAR(p1[0], sigmoid(1.0), 1e-15);
  EXPECT_NEAR(p1[0], 0.7311, 1e-4);
  EXPECT_NEAR(p1[1], 0.2689, 1e-4);
}

TEST(Forward, DimensionMismatch) {
  const Network net = Network::zeros(mlp(3, {2}));
  try {
    net.forward(std::vector<double>{1.0, 2.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Dimension);
  }
}

TEST(Forward, LargeLogitsStayOnSimplex) {
  Network net = fltest::logistic_net(700.0);
  for (double x : {-1.0, 1.0}) {
    const ProbDist p = net.forward(std::vector<double>{x});
    EXPECT_TRUE(std::isfinite(p[0]) && std::isfinite(p[1]));
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
  }
}

TEST(Forward, OutputsOnSimplexForRandomNets) {
  Rng rng(5);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Network net = random_net(mlp(6, {8, 8, 5}, Activation::ReLU), s);
    const ProbDist p = net.forward(fltest::random_point(6, rng, -3, 3));
    double sum = 0.0;
    for (double v : p.values()) {
      EXPECT_GT(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Forward, PureLinearNetIsAffine) {
  Rng rng(6);
  const Network net = random_net(mlp(5, {7, 6, 3}, Activation::None), 21);
  const auto x1 = fltest::random_point(5, rng), x2 = fltest::random_point(5, rng);
  for (double a : {0.0, 0.3, 1.7, -0.4}) {
    std::vector<double> mix(5);
    for (std::size_t i = 0; i < 5; ++i) mix[i] = a * x1[i] + (1 - a) * x2[i];
    const Tensor z = net.logits(mix), z1 = net.logits(x1), z2 = net.logits(x2);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(z[j], a * z1[j] + (1 - a) * z2[j], 1e-10);
  }
}

TEST(Forward, ActivationMaskSelectsLayers) {
  Architecture a = mlp(2, {3, 3, 2}, Activation::ReLU);
  a.activation_mask = {true, false};
  EXPECT_TRUE(a.activates(0));
  EXPECT_FALSE(a.activates(1));
  a.activation_mask = {true};
  EXPECT_THROW(a.validate(), Error);
}

TEST(Jacobian, ZeroWeightNetIsZero) {
  const Network net = Network::zeros(mlp(3, {4, 2}, Activation::Tanh));
  const Tensor j = net.input_jacobian_logp(std::vector<double>{0.1, 0.2, 0.3});
  for (double v : j.values()) EXPECT_EQ(v, 0.0);
}

TEST(Jacobian, LogisticAtZero) {
  const Tensor j = fltest::logistic_net(1.0).input_jacobian_logp(std::vector<double>{0.0});
  EXPECT_NEAR(j.at(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(j.at(1, 0), -0.5, 1e-15);
}

TEST(Jacobian, MatchesCentralDifferences) {
  Rng rng(8);
  const double h = 1e-5;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Network net = random_net(mlp(4, {6, 5, 3}, Activation::Tanh), 100 + s);
    auto x = fltest::random_point(4, rng);
    const Tensor j = net.input_jacobian_logp(x);
    for (std::size_t i = 0; i < 4; ++i) {
      auto xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const ProbDist pp = net.forward(xp), pm = net.forward(xm);
      for (std::size_t c = 0; c < 3; ++c) {
        const double fd = (std::log(pp[c]) - std::log(pm[c])) / (2 * h);
        EXPECT_LE(fltest::rel_err(j.at(c, i), fd, 1e-6), 1e-5) << "seed " << s;
      }
    }
  }
}

TEST(Jacobian, ProbabilityWeightedScoresSumToZero) {
  Rng rng(9);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Network net = random_net(mlp(5, {8, 4}, Activation::ReLU), s);
    const auto x = fltest::random_point(5, rng);
    const ProbDist p = net.forward(x);
    const Tensor j = net.input_jacobian_logp(x);
    for (std::size_t i = 0; i < 5; ++i) {
      double s_i = 0.0;
      for (std::size_t c = 0; c < 4; ++c) s_i += p[c] * j.at(c, i);
      EXPECT_NEAR(s_i, 0.0, 1e-10);
    }
  }
}

TEST(ParamGradient, ZeroLossGradientGivesZero) {
  const Network net = random_net(mlp(3, {4, 2}), 1);
  const Tensor xs = Tensor::matrix(2, 3, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  const ForwardTape tape = net.record(xs);
  const BackwardResult r = net.param_gradient(tape, Tensor({2, 2}));
  for (double v : r.params.flatten()) EXPECT_EQ(v, 0.0);
  for (double v : r.input_grad.values()) EXPECT_EQ(v, 0.0);
}

TEST(ParamGradient, LogisticRegressionClosedForm) {
  for (double w : {-1.3, 0.0, 0.7, 2.5})
    for (double x : {-0.8, 0.4, 1.9})
      for (std::size_t y : {0u, 1u}) {
        const Network net = fltest::logistic_net(w);
        const Tensor xs = Tensor::matrix(1, 1, {x});
        Tensor g;
        ce_and_grad(net.record(xs), {y}, g);
        const BackwardResult r = net.param_gradient(net.record(xs), g);
        const double analytic = (sigmoid(w * x) - (y == 0 ? 1.0 : 0.0)) * x;
        EXPECT_LE(fltest::rel_err(r.params.weights[0].at(0, 0), analytic, 1e-12), 1e-10);
      }
}

TEST(ParamGradient, MatchesCentralDifferences) {
  Rng rng(12);
  const double h = 1e-5;
  for (std::uint64_t s = 0; s < 5; ++s) {
    Network net = random_net(mlp(3, {5, 4, 3}, Activation::Tanh), 300 + s);
    Tensor xs({4, 3});
    for (double& v : xs.values()) v = rng.uniform();
    const std::vector<std::size_t> ys = {0, 1, 2, 1};
    Tensor g;
    ce_and_grad(net.record(xs), ys, g);
    const auto grad = net.param_gradient(net.record(xs), g).params.flatten();
    auto theta = net.flat_params();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double t0 = theta[k];
      theta[k] = t0 + h;
      net.set_flat_params(theta);
      const double lp = batch_ce(net, xs, ys);
      theta[k] = t0 - h;
      net.set_flat_params(theta);
      const double lm = batch_ce(net, xs, ys);
      theta[k] = t0;
      net.set_flat_params(theta);
      EXPECT_LE(fltest::rel_err(grad[k], (lp - lm) / (2 * h), 1e-6), 1e-4) << "param " << k;
    }
  }
}

TEST(ParamGradient, StaleTapeIsStateError) {
  Network net = random_net(mlp(2, {3, 2}), 4);
  const Tensor xs = Tensor::matrix(1, 2, {0.5, 0.5});
  const ForwardTape tape = net.record(xs);
  net.mutable_weight(0).at(0, 0) += 1.0;
  try {
    net.param_gradient(tape, Tensor({1, 2}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::State);
  }
  const Network other = random_net(mlp(2, {3, 2}), 5);
  EXPECT_THROW(other.input_gradient(net.record(xs), Tensor({1, 2})), Error);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Architecture a = mlp(4, {6, 5, 3}, Activation::ReLU);
  a.activation_mask = {true, false};
  const Network net = random_net(a, 77);
  const auto bytes = encode_checkpoint(net);
  const Network back = decode_checkpoint(bytes);
  EXPECT_TRUE(back == net);
  EXPECT_EQ(encode_checkpoint(back), bytes);

  const auto path = std::filesystem::temp_directory_path() / "fisherlens_ck_test.flnet";
  save_checkpoint(net, path);
  EXPECT_TRUE(load_checkpoint(path) == net);
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptionIsFormatError) {
  const auto bytes = encode_checkpoint(random_net(mlp(2, {3, 2}), 1));
  auto expect_format = [](std::vector<unsigned char> b) {
    try {
      decode_checkpoint(b);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Format);
    }
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  expect_format(bad_magic);
  expect_format(std::vector<unsigned char>(bytes.begin(), bytes.begin() + 20));
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  expect_format(flipped);
  EXPECT_THROW(load_checkpoint("/nonexistent/ck.flnet"), Error);
}
