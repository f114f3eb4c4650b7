#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fisherlens/attacks.hpp"
#include "fisherlens/data.hpp"
#include "fisherlens/divergences.hpp"
#include "fisherlens/network.hpp"

namespace fisherlens {

enum class Regime { Natural, PGDAT, TRADES };

const char* to_string(Regime r) noexcept;
Regime parse_regime(const std::string& name);

/// Inner attack used during adversarial training: ε = 8/255, 10 steps of
/// 2/255. The start mode is set per regime (uniform for PGD-AT, small
/// Gaussian for TRADES, whose KL objective has zero gradient at η = 0).
AttackConfig default_inner_attack();

struct TrainConfig {
  int epochs = 60;
  std::size_t batch_size = 128;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<int> lr_decay_epochs = {30, 45};
  double lr_decay_factor = 0.1;
  Regime regime = Regime::Natural;
  double trades_inv_lambda = 5.0;
  AttackConfig inner_attack = default_inner_attack();
  std::uint64_t seed = 0;

  void validate() const;
};

/// Learning rate in effect once epoch `epoch` (1-based) has finished:
/// lr₀ · factor^#{d ∈ decay_epochs : d ≤ epoch}. Epoch e trains at
/// learning_rate_after(cfg, e − 1).
double learning_rate_after(const TrainConfig& cfg, int epoch);

struct SgdState {
  Gradients velocity;
};

/// v ← μv + g + wd·θ;  θ ← θ − lr·v
void sgd_step(Network& net, const Gradients& grads, SgdState& state, double lr,
              double momentum, double weight_decay);

struct LossResult {
  double value = 0.0;
  Gradients grads;
};

/// Mean cross-entropy over the batch and its parameter gradient.
LossResult natural_loss(const Network& net, const Tensor& xs, std::span<const std::size_t> ys);

/// Mean cross-entropy at PGD points (CE objective, uniform random start).
LossResult pgdat_loss(const Network& net, const Tensor& xs, std::span<const std::size_t> ys,
                      const AttackConfig& inner);

/// mean[ CE(y, f(x)) + inv_lambda · KL(f(x) ‖ f(x_adv)) ] with x_adv held
/// fixed; gradients flow through both f(x) and f(x_adv).
LossResult trades_objective(const Network& net, const Tensor& xs,
                            std::span<const std::size_t> ys, const Tensor& x_adv,
                            double inv_lambda);

/// Finds x_adv by PGD ascent on KL(f(x)‖f(x̃)) and returns trades_objective.
LossResult trades_loss(const Network& net, const Tensor& xs, std::span<const std::size_t> ys,
                       double inv_lambda, const AttackConfig& inner);

/// Per-epoch test-set evaluation settings.
struct EvalConfig {
  PairSamplingPlan pairs{};
  std::size_t fisher_probes = 256;
  /// Cap on test points attacked per epoch; 0 means all.
  std::size_t adv_eval_points = 0;
  bool adversarial = true;
  AttackConfig pgd{};
  AttackConfig cw = [] {
    AttackConfig c;
    c.loss_kind = AttackLoss::CW;
    return c;
  }();
  PowerIterationOptions power{};
};

struct MetricRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double test_acc = 0.0;
  double test_cckl_sym = 0.0;
  double avg_fisher_fro = 0.0;
  double log10_avg_fisher_fro = 0.0;
  double avg_lambda_max = 0.0;
  double adv_acc_pgd = 0.0;
  double adv_acc_cw = 0.0;
  std::size_t lin_bound_violations = 0;
  // Not part of the CSV schema.
  double test_loss = 0.0;
  double adv_acc_fgsm = 0.0;
  double lr = 0.0;
};

struct Evaluation {
  double clean_acc = 0.0;
  double test_loss = 0.0;
  double cckl_sym = 0.0;
  LinBoundCheck lin{};
  double avg_fisher_fro = 0.0;
  double avg_lambda_max = 0.0;
  double avg_cramer_rao = 0.0;  // mean of 1/λ_max over probes with λ_max > 0
  double adv_acc_pgd = 0.0;
  double adv_acc_cw = 0.0;
  double adv_acc_fgsm = 0.0;
};

/// Full test-set measurement of one network. `probe_rows` selects the Fisher
/// probe points; `adv_rows` the attacked points.
Evaluation evaluate(const Network& net, const Dataset& test, const EvalConfig& eval,
                    std::span<const std::size_t> probe_rows,
                    std::span<const std::size_t> adv_rows, std::uint64_t seed);

/// Seeded sample of min(count, N) distinct row indices, sorted.
std::vector<std::size_t> sample_rows(std::size_t n, std::size_t count, std::uint64_t seed);

struct TrainingRun {
  std::vector<MetricRecord> records;
  Network final_net;
  bool diverged = false;
  std::string diagnostic;
};

struct TrainingHooks {
  std::function<void(const MetricRecord&, const Network&)> on_epoch;
};

/// Seeded minibatch training under the configured regime, with a full test
/// evaluation after every epoch. Stops early (diverged = true) if the epoch's
/// training loss is non-finite.
TrainingRun run_training(const Dataset& train, const Dataset& test, const Architecture& arch,
                         const TrainConfig& cfg, const EvalConfig& eval,
                         const TrainingHooks& hooks = {});

}  // namespace fisherlens
