#include <gtest/gtest.h>

#include <cmath>

#include "fisherlens/divergences.hpp"
#include "fisherlens/error.hpp"
#include "fisherlens/fisher.hpp"
#include "test_util.hpp"

using namespace fisherlens;
using fltest::mlp;
using fltest::random_net;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<double> unit_direction(std::size_t d, Rng& rng) {
  std::vector<double> v(d);
  for (double& x : v) x = rng.normal();
  const double n = l2_norm(v);
  for (double& x : v) x /= n;
  return v;
}

std::vector<double> geometric_grid(double t0, int from, int to) {
  std::vector<double> t;
  for (int k = from; k <= to; ++k) t.push_back(t0 * std::ldexp(1.0, -k));
  return t;
}

}  // namespace

TEST(FisherAt, ConstantOutputNetGivesZero) {
  const Network net = Network::zeros(mlp(3, {4, 3}));
  const FisherInfo fi = fisher_at(net, std::vector<double>{0.2, 0.4, 0.6});
  for (double v : fi.matrix().values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(fisher_fro_norm(fi), 0.0);
  EXPECT_TRUE(std::isinf(cramer_rao_ratio(fi)));
}

TEST(FisherAt, LogisticClosedForm) {
  const FisherInfo fi = fisher_at(fltest::logistic_net(1.0), std::vector<double>{0.0});
  ASSERT_EQ(fi.matrix().size(), 1u);
  EXPECT_NEAR(fi.matrix()[0], 0.25, 1e-15);
  EXPECT_NEAR(fisher_fro_norm(fi), 0.25, 1e-15);
  EXPECT_NEAR(cramer_rao_ratio(fi), 4.0, 1e-12);
  for (double w : {0.3, 1.1, 2.7})
    for (double x : {-1.0, 0.4}) {
      const double s = sigmoid(w * x);
      EXPECT_NEAR(fisher_at(fltest::logistic_net(w), std::vector<double>{x}).matrix()[0],
                  w * w * s * (1 - s), 1e-10);
    }
}

TEST(FisherAt, CramerRaoDecreasesAsWeightGrows) {
  double prev = std::numeric_limits<double>::infinity();
  for (double w = 0.1; w < 2.0; w += 0.1) {
    const double cr = cramer_rao_ratio(fisher_at(fltest::logistic_net(w), std::vector<double>{0.0}));
    EXPECT_LT(cr, prev);
    EXPECT_NEAR(cr, 4.0 / (w * w), 1e-9);
    prev = cr;
  }
}

TEST(FisherAt, SymmetricPsdAndEqualsReassembly) {
  Rng rng(1);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Network net = random_net(mlp(5, {7, 6, 4}, Activation::Tanh), s);
    const auto x = fltest::random_point(5, rng);
    const FisherInfo fi = fisher_at(net, x);
    const Tensor& f = fi.matrix();
    EXPECT_LE(asymmetry(f), 1e-10);
    const Tensor j = net.input_jacobian_logp(x);
    const ProbDist p = net.forward(x);
    for (std::size_t a = 0; a < 5; ++a)
      for (std::size_t b = 0; b < 5; ++b) {
        double ref = 0.0;
        for (std::size_t c = 0; c < 4; ++c) ref += p[c] * j.at(c, a) * j.at(c, b);
        EXPECT_NEAR(f.at(a, b), ref, 1e-12);
      }
    for (int k = 0; k < 20; ++k) {
      const auto v = unit_direction(5, rng);
      EXPECT_GE(dot(v, matvec(f, v)), -1e-10);
      EXPECT_NEAR(fi.quadratic_form(v), dot(v, matvec(f, v)), 1e-12);
    }
  }
}

TEST(FisherAt, MatrixFreeWhenAboveThreshold) {
  const Network net = random_net(mlp(6, {5, 3}), 2);
  const std::vector<double> x(6, 0.3);
  const FisherInfo dense = fisher_at(net, x);
  const FisherInfo lazy = fisher_at(net, x, 4);
  EXPECT_FALSE(lazy.materialized());
  EXPECT_THROW(lazy.matrix(), Error);
  EXPECT_THROW(fisher_fro_norm(lazy), Error);
  EXPECT_NEAR(fisher_fro_norm(lazy, {.allow_column_probes = true}), fisher_fro_norm(dense), 1e-12);
  std::vector<double> v = {1, -2, 0.5, 0, 3, 1}, out(6);
  lazy.apply(v, out);
  const auto ref = matvec(dense.matrix(), v);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(out[i], ref[i], 1e-12);
}

TEST(FroNorm, MatchesTensorFroNorm) {
  const Network net = random_net(mlp(4, {6, 3}), 3);
  const FisherInfo fi = fisher_at(net, std::vector<double>{0.1, 0.9, 0.4, 0.5});
  EXPECT_EQ(fisher_fro_norm(fi), fro_norm(fi.matrix()));
}

TEST(Spectral, MatchesDenseSolver) {
  const Network net = random_net(mlp(4, {6, 3}), 4);
  const FisherInfo fi = fisher_at(net, std::vector<double>{0.1, 0.9, 0.4, 0.5});
  Rng r1(5), r2(5);
  const EigenPair a = fisher_spectral(fi, r1), b = sym_eig_top(fi.matrix(), r2);
  EXPECT_NEAR(a.lambda_max, b.lambda_max, 1e-10 * b.lambda_max);
}

TEST(Spectral, RankOneLogistic) {
  // Two-class net with logits [w·x, 0] has F = c·uuᵀ with u = w/‖w‖.
  Network net = Network::zeros(mlp(3, {2}, Activation::None));
  const double w[3] = {0.6, -1.2, 0.4};
  for (std::size_t i = 0; i < 3; ++i) net.mutable_weight(0).at(0, i) = w[i];
  const std::vector<double> x = {0.2, 0.1, 0.7};
  const FisherInfo fi = fisher_at(net, x);
  const double z = w[0] * x[0] + w[1] * x[1] + w[2] * x[2];
  const double ww = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
  Rng rng(6);
  const EigenPair e = fisher_spectral(fi, rng);
  EXPECT_NEAR(e.lambda_max, sigmoid(z) * (1 - sigmoid(z)) * ww, 1e-10);
  double cosine = 0.0;
  for (std::size_t i = 0; i < 3; ++i) cosine += e.vector[i] * w[i] / std::sqrt(ww);
  EXPECT_NEAR(std::abs(cosine), 1.0, 1e-8);
}

TEST(Spectral, BoundedByTrace) {
  Rng rng(7);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Network net = random_net(mlp(6, {8, 5}, Activation::ReLU), 40 + s);
    const FisherInfo fi = fisher_at(net, fltest::random_point(6, rng));
    const EigenPair e = fisher_spectral(fi, rng);
    EXPECT_LE(e.lambda_max, fi.trace() + 1e-9);
    EXPECT_NEAR(fi.trace(), trace(fi.matrix()), 1e-12);
  }
}

TEST(Spectral, ZeroOperatorIsFlagged) {
  const FisherInfo fi = fisher_at(Network::zeros(mlp(3, {2})), std::vector<double>{1, 2, 3}, 0);
  Rng rng(1);
  const EigenPair e = fisher_spectral(fi, rng);
  EXPECT_TRUE(e.zero_flagged);
  EXPECT_EQ(e.lambda_max, 0.0);
}

TEST(AdversarialDivergence, Examples) {
  Rng rng(8);
  const Network net = random_net(mlp(4, {6, 3}), 9);
  const auto x = fltest::random_point(4, rng);
  EXPECT_EQ(adversarial_divergence(net, x, std::vector<double>(4, 0.0)), 0.0);
  const std::vector<double> eta = {0.1, -0.2, 0.05, 0.3};
  std::vector<double> xe(4);
  for (std::size_t i = 0; i < 4; ++i) xe[i] = x[i] + eta[i];
  EXPECT_EQ(adversarial_divergence(net, x, eta), kl(net.forward(x), net.forward(xe)));
}

TEST(AdversarialDivergence, NullSpaceDirectionOfLinearNet) {
  Network net = Network::zeros(mlp(3, {2}, Activation::None));
  net.mutable_weight(0).at(0, 0) = 1.0;
  net.mutable_weight(0).at(0, 1) = 2.0;
  // η = (2, −1, 5) is orthogonal to both weight rows.
  EXPECT_NEAR(adversarial_divergence(net, std::vector<double>{0.1, 0.2, 0.3}, std::vector<double>{2, -1, 5}),
              0.0, 1e-15);
}

TEST(Disentangle, IdenticalPointsGiveZero) {
  const Network net = random_net(mlp(3, {5, 3}), 10);
  const std::vector<double> x = {0.3, 0.3, 0.3};
  const Disentanglement d = disentangle(net, x, x);
  EXPECT_EQ(d.total_kl, 0.0);
  EXPECT_EQ(d.g1_half_quad, 0.0);
  EXPECT_EQ(d.g2, 0.0);
}

TEST(Disentangle, ExactSplitAndNonnegativeG1) {
  Rng rng(11);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Network net = random_net(mlp(4, {6, 3}, Activation::ReLU), 60 + s);
    const auto xi = fltest::random_point(4, rng), xj = fltest::random_point(4, rng);
    const Disentanglement d = disentangle(net, xi, xj);
    EXPECT_GE(d.g1_half_quad, 0.0);
    EXPECT_GE(d.total_kl, 0.0);
    EXPECT_EQ(d.g1_half_quad + d.g2, d.g1_half_quad + (d.total_kl - d.g1_half_quad));
    EXPECT_NEAR(d.g1_half_quad + d.g2, d.total_kl, 1e-15);
  }
}

TEST(Disentangle, ResidualIsThirdOrder) {
  Rng rng(12);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Network net = random_net(mlp(4, {6, 5, 3}, Activation::Tanh), 80 + s);
    const auto x = fltest::random_point(4, rng);
    const auto u = unit_direction(4, rng);
    std::vector<double> t, g2;
    for (double tt : {1e-1, 3e-2, 1e-2, 3e-3, 1e-3}) {
      std::vector<double> xj(4);
      for (std::size_t i = 0; i < 4; ++i) xj[i] = x[i] + tt * u[i];
      t.push_back(tt);
      g2.push_back(disentangle(net, x, xj).g2);
    }
    EXPECT_GE(fltest::loglog_slope(t, g2), 2.7) << "seed " << s;
  }
}

TEST(TaylorProfile, ConstantNetHasZeroCoefficients) {
  const Network net = Network::zeros(mlp(3, {4, 2}));
  const auto grid = geometric_grid(1.0, 1, 6);
  const TaylorProfile tp = taylor_profile(net, std::vector<double>{0.1, 0.2, 0.3},
                                          std::vector<double>{1, 0, 0}, 4, grid);
  for (double a : tp.coefficients) EXPECT_EQ(a, 0.0);
  EXPECT_EQ(tp.fit_residual, 0.0);
}

TEST(TaylorProfile, SecondOrderMatchesFisherQuadraticForm) {
  Rng rng(13);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Network net = random_net(mlp(5, {8, 4}, Activation::Tanh), 120 + s);
    const auto x = fltest::random_point(5, rng);
    const auto eta = unit_direction(5, rng);
    const TaylorProfile tp = taylor_profile(net, x, eta, 4, geometric_grid(1.0, 4, 10));
    const double ref = 0.5 * fisher_at(net, x).quadratic_form(eta);
    EXPECT_LE(fltest::rel_err(tp.a(2), ref), 1e-3) << "seed " << s;
  }
}

TEST(TaylorProfile, LogisticDecisionBoundarySeries) {
  // At z = 0: KL(f(0)‖f(tη)) = ln cosh(s/2) = s²/8 − s⁴/192 + …, s = t·w·η.
  Network net = Network::zeros(mlp(2, {2}, Activation::None));
  net.mutable_weight(0).at(0, 0) = 1.5;
  net.mutable_weight(0).at(0, 1) = -0.5;
  const std::vector<double> x = {0.0, 0.0}, eta = {0.6, 0.8};
  const double we = 1.5 * 0.6 - 0.5 * 0.8;
  const TaylorProfile tp = taylor_profile(net, x, eta, 4, geometric_grid(1.0, 1, 8));
  EXPECT_LE(fltest::rel_err(tp.a(2), we * we / 8.0), 1e-3);
  EXPECT_NEAR(tp.a(3), 0.0, 1e-4);
}

TEST(TaylorProfile, RejectsIllConditionedDesign) {
  const Network net = random_net(mlp(3, {4, 2}), 1);
  const std::vector<double> grid = {0.1, 0.1001, 0.1002, 0.1003, 0.1004, 0.1005, 0.1006};
  try {
    taylor_profile(net, std::vector<double>{0.5, 0.5, 0.5}, std::vector<double>{1, 0, 0}, 7, grid);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Numeric);
    EXPECT_NE(std::string(e.what()).find("shrink"), std::string::npos);
  }
}

TEST(TaylorProfile, NeedsEnoughGridPoints) {
  const Network net = random_net(mlp(3, {4, 2}), 1);
  EXPECT_THROW(taylor_profile(net, std::vector<double>{0.5, 0.5, 0.5}, std::vector<double>{1, 0, 0}, 4,
                              std::vector<double>{0.1, 0.2}),
               Error);
}
