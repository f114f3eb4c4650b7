#include <gtest/gtest.h>

#include <cmath>

#include "fisherlens/divergences.hpp"
#include "fisherlens/error.hpp"
#include "fisherlens/training.hpp"
#include "test_util.hpp"

using namespace fisherlens;
using fltest::mlp;
using fltest::random_net;

namespace {

Network scalar_net() {
  // One weight, one bias per class; the bias of class 1 is the tracked scalar.
  return Network::zeros(mlp(1, {2}, Activation::None));
}

struct Batch {
  Tensor xs;
  std::vector<std::size_t> ys;
};

Batch random_batch(std::size_t b, std::size_t d, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  Batch out{Tensor({b, d}), std::vector<std::size_t>(b)};
  for (double& v : out.xs.values()) v = rng.uniform();
  for (auto& y : out.ys) y = rng.below(classes);
  return out;
}

AttackConfig inner(double eps) {
  AttackConfig a = default_inner_attack();
  a.epsilon = eps;
  a.step_size = eps / 4;
  a.rng_seed = 7;
  return a;
}

}  // namespace

TEST(Sgd, ZeroGradientNoDecayLeavesParamsUnchanged) {
  Network net = random_net(mlp(3, {4, 2}), 1);
  const auto before = net.flat_params();
  SgdState st;
  sgd_step(net, net.zero_gradients(), st, 0.1, 0.9, 0.0);
  EXPECT_EQ(net.flat_params(), before);
}

TEST(Sgd, ScalarHandUpdate) {
  Network net = scalar_net();
  net.mutable_bias(0)[1] = 2.0;
  Gradients g = net.zero_gradients();
  g.biases[0][1] = 1.0;
  SgdState st;
  sgd_step(net, g, st, 0.1, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(net.bias(0)[1], 1.9);
}

TEST(Sgd, MomentumAccumulatesOverTwoSteps) {
  Network net = scalar_net();
  Gradients g = net.zero_gradients();
  g.biases[0][1] = 0.5;
  SgdState st;
  const double lr = 0.1, mu = 0.9;
  sgd_step(net, g, st, lr, mu, 0.0);
  const double after1 = net.bias(0)[1];
  sgd_step(net, g, st, lr, mu, 0.0);
  EXPECT_NEAR(after1 - net.bias(0)[1], lr * (1 + mu) * 0.5, 1e-15);
}

TEST(Sgd, WeightDecayIsCoupled) {
  Network net = scalar_net();
  net.mutable_bias(0)[1] = 3.0;
  SgdState st;
  sgd_step(net, net.zero_gradients(), st, 0.5, 0.0, 0.1);
  EXPECT_DOUBLE_EQ(net.bias(0)[1], 3.0 - 0.5 * 0.1 * 3.0);
}

TEST(Sgd, ShapeMismatchIsDimensionError) {
  Network net = random_net(mlp(3, {4, 2}), 1);
  const Network other = random_net(mlp(3, {5, 2}), 1);
  SgdState st;
  try {
    sgd_step(net, other.zero_gradients(), st, 0.1, 0.0, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Dimension);
  }
}

TEST(Schedule, StepDecay) {
  TrainConfig c;
  c.lr = 0.1;
  c.lr_decay_epochs = {30, 45};
  c.lr_decay_factor = 0.1;
  EXPECT_DOUBLE_EQ(learning_rate_after(c, 0), 0.1);
  EXPECT_DOUBLE_EQ(learning_rate_after(c, 29), 0.1);
  EXPECT_DOUBLE_EQ(learning_rate_after(c, 30), 0.1 * 0.1);
  EXPECT_DOUBLE_EQ(learning_rate_after(c, 44), 0.1 * 0.1);
  EXPECT_DOUBLE_EQ(learning_rate_after(c, 45), 0.1 * 0.1 * 0.1);
  EXPECT_DOUBLE_EQ(learning_rate_after(c, 60), 0.1 * 0.1 * 0.1);
}

TEST(NaturalLoss, UniformNetGivesLogN) {
  const Network net = Network::zeros(mlp(3, {4, 5}));
  const Batch b = random_batch(6, 3, 5, 1);
  EXPECT_NEAR(natural_loss(net, b.xs, b.ys).value, std::log(5.0), 1e-14);
}

TEST(NaturalLoss, ConfidentCorrectNetIsNearZero) {
  Network net = fltest::logistic_net(200.0);
  const Tensor xs = Tensor::matrix(2, 1, {1.0, -1.0});
  EXPECT_LE(natural_loss(net, xs, std::vector<std::size_t>{0, 1}).value, 1e-12);
}

TEST(NaturalLoss, EqualsMeanCrossEntropy) {
  const Network net = random_net(mlp(4, {6, 3}), 2);
  const Batch b = random_batch(8, 4, 3, 2);
  double ref = 0.0;
  for (std::size_t i = 0; i < 8; ++i) ref += cross_entropy(LabelDist{b.ys[i], 3}, net.forward(b.xs.row(i)));
  EXPECT_NEAR(natural_loss(net, b.xs, b.ys).value, ref / 8, 1e-15);
}

TEST(NaturalLoss, EmptyBatchIsDegenerate) {
  const Network net = random_net(mlp(4, {6, 3}), 2);
  try {
    natural_loss(net, Tensor({0, 4}), std::vector<std::size_t>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Degenerate);
  }
}

TEST(PgdAtLoss, ZeroBudgetEqualsNatural) {
  const Network net = random_net(mlp(4, {6, 3}), 3);
  const Batch b = random_batch(8, 4, 3, 3);
  const LossResult a = pgdat_loss(net, b.xs, b.ys, inner(0.0)), n = natural_loss(net, b.xs, b.ys);
  EXPECT_EQ(a.value, n.value);
  EXPECT_EQ(a.grads.flatten(), n.grads.flatten());
}

TEST(PgdAtLoss, AtLeastNaturalAndDeterministic) {
  int above = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Network net = random_net(mlp(4, {8, 3}, Activation::ReLU), 10 + s);
    const Batch b = random_batch(16, 4, 3, 10 + s);
    const double adv = pgdat_loss(net, b.xs, b.ys, inner(0.1)).value;
    above += adv >= natural_loss(net, b.xs, b.ys).value;
    EXPECT_EQ(adv, pgdat_loss(net, b.xs, b.ys, inner(0.1)).value);
  }
  EXPECT_EQ(above, 20);
}

TEST(TradesLoss, ReducesToNatural) {
  const Network net = random_net(mlp(4, {6, 3}), 4);
  const Batch b = random_batch(8, 4, 3, 4);
  const double nat = natural_loss(net, b.xs, b.ys).value;
  EXPECT_EQ(trades_loss(net, b.xs, b.ys, 0.0, inner(0.1)).value, nat);
  EXPECT_NEAR(trades_loss(net, b.xs, b.ys, 5.0, inner(0.0)).value, nat, 1e-15);
}

TEST(TradesLoss, AtLeastNatural) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Network net = random_net(mlp(4, {8, 3}, Activation::ReLU), 30 + s);
    const Batch b = random_batch(16, 4, 3, 30 + s);
    EXPECT_GE(trades_loss(net, b.xs, b.ys, 5.0, inner(0.1)).value, natural_loss(net, b.xs, b.ys).value);
  }
}

TEST(TradesLoss, GradientMatchesFiniteDifferencesWithFrozenAdversary) {
  const double h = 1e-5;
  for (std::uint64_t s = 0; s < 3; ++s) {
    Network net = random_net(mlp(3, {5, 3}, Activation::Tanh), 50 + s);
    const Batch b = random_batch(6, 3, 3, 50 + s);
    Tensor x_adv = b.xs;
    Rng rng(s);
    for (double& v : x_adv.values()) v += rng.uniform(-0.1, 0.1);
    const auto grad = trades_objective(net, b.xs, b.ys, x_adv, 5.0).grads.flatten();
    auto theta = net.flat_params();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double t0 = theta[k];
      theta[k] = t0 + h;
      net.set_flat_params(theta);
      const double lp = trades_objective(net, b.xs, b.ys, x_adv, 5.0).value;
      theta[k] = t0 - h;
      net.set_flat_params(theta);
      const double lm = trades_objective(net, b.xs, b.ys, x_adv, 5.0).value;
      theta[k] = t0;
      net.set_flat_params(theta);
      EXPECT_LE(fltest::rel_err(grad[k], (lp - lm) / (2 * h), 1e-6), 1e-4) << "param " << k;
    }
  }
}

namespace {

std::pair<Dataset, Dataset> gaussians(std::uint64_t seed) {
  SynthSpec s;
  s.n_per_class = 100;
  s.separation = 4.0;
  s.noise_std = 0.3;
  s.seed = seed;
  return split(generate(s), 0.8, seed);
}

EvalConfig quick_eval() {
  EvalConfig e;
  e.fisher_probes = 16;
  e.adv_eval_points = 16;
  e.pgd.num_steps = 5;
  e.cw.num_steps = 5;
  return e;
}

}  // namespace

TEST(RunTraining, ZeroEpochsRejected) {
  const auto [tr, te] = gaussians(1);
  TrainConfig c;
  c.epochs = 0;
  EXPECT_THROW(run_training(tr, te, mlp(2, {2}, Activation::None), c, quick_eval()), Error);
}

TEST(RunTraining, DeterministicForSeed) {
  const auto [tr, te] = gaussians(2);
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 32;
  c.seed = 11;
  c.regime = Regime::TRADES;
  c.inner_attack.num_steps = 3;
  const auto arch = mlp(2, {8, 2}, Activation::ReLU);
  const TrainingRun a = run_training(tr, te, arch, c, quick_eval());
  const TrainingRun b = run_training(tr, te, arch, c, quick_eval());
  ASSERT_EQ(a.records.size(), 3u);
  EXPECT_TRUE(a.final_net == b.final_net);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.records[i].train_loss, b.records[i].train_loss);
    EXPECT_EQ(a.records[i].test_cckl_sym, b.records[i].test_cckl_sym);
    EXPECT_EQ(a.records[i].avg_fisher_fro, b.records[i].avg_fisher_fro);
    EXPECT_EQ(a.records[i].adv_acc_pgd, b.records[i].adv_acc_pgd);
  }
}

TEST(RunTraining, SeparableGaussiansReachHighAccuracy) {
  const auto [tr, te] = gaussians(3);
  TrainConfig c;
  c.epochs = 50;
  c.batch_size = 16;
  c.lr = 0.05;
  c.lr_decay_epochs = {};
  EvalConfig e = quick_eval();
  e.adversarial = false;
  const TrainingRun r = run_training(tr, te, mlp(2, {2}, Activation::None), c, e);
  ASSERT_EQ(r.records.size(), 50u);
  EXPECT_GE(r.records.back().test_acc, 0.99);
  for (const auto& rec : r.records) {
    EXPECT_GE(rec.test_acc, 0.0);
    EXPECT_LE(rec.test_acc, 1.0);
  }
}

TEST(RunTraining, DivergenceGuardStopsRun) {
  const auto [tr, te] = gaussians(4);
  TrainConfig c;
  c.epochs = 20;
  c.lr = 1e200;
  c.momentum = 0.0;
  const TrainingRun r = run_training(tr, te, mlp(2, {16, 2}, Activation::ReLU), c, quick_eval());
  EXPECT_TRUE(r.diverged);
  EXPECT_FALSE(r.diagnostic.empty());
  EXPECT_LT(r.records.size(), 20u);
}

TEST(Regime, ParseNames) {
  EXPECT_EQ(parse_regime("natural"), Regime::Natural);
  EXPECT_EQ(parse_regime("pgdat"), Regime::PGDAT);
  EXPECT_EQ(parse_regime("trades"), Regime::TRADES);
  EXPECT_THROW(parse_regime("madry"), Error);
}
