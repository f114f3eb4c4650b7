#include "fisherlens/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fisherlens/error.hpp"
#include "fisherlens/fisher.hpp"
#include "fisherlens/rng.hpp"

namespace fisherlens {

const char* to_string(Regime r) noexcept {
  switch (r) {
    case Regime::Natural: return "natural";
    case Regime::PGDAT: return "pgdat";
    case Regime::TRADES: return "trades";
  }
  return "?";
}

Regime parse_regime(const std::string& name) {
  if (name == "natural") return Regime::Natural;
  if (name == "pgdat" || name == "pgd_at") return Regime::PGDAT;
  if (name == "trades") return Regime::TRADES;
  fail(ErrorKind::Config, "unknown regime '" + name + "' (expected natural|pgdat|trades)");
}

AttackConfig default_inner_attack() {
  AttackConfig a;
  a.epsilon = 8.0 / 255.0;
  a.step_size = 2.0 / 255.0;
  a.num_steps = 10;
  a.start = StartMode::Gaussian;
  a.gaussian_start_scale = 1e-3;
  return a;
}

void TrainConfig::validate() const {
  require(epochs >= 1, ErrorKind::Contract, "train: epochs must be >= 1");
  require(batch_size >= 1, ErrorKind::Contract, "train: batch_size must be >= 1");
  require(lr > 0.0 && std::isfinite(lr), ErrorKind::Contract, "train: lr must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, ErrorKind::Contract,
          "train: momentum must lie in [0, 1)");
  require(weight_decay >= 0.0, ErrorKind::Contract, "train: weight_decay must be >= 0");
  require(lr_decay_factor > 0.0, ErrorKind::Contract, "train: lr_decay_factor must be > 0");
  require(trades_inv_lambda >= 0.0, ErrorKind::Contract, "train: trades_inv_lambda must be >= 0");
  inner_attack.validate();
}

double learning_rate_after(const TrainConfig& cfg, int epoch) {
  const auto decays = std::count_if(cfg.lr_decay_epochs.begin(), cfg.lr_decay_epochs.end(),
                                    [epoch](int d) { return d <= epoch; });
  return cfg.lr * std::pow(cfg.lr_decay_factor, static_cast<double>(decays));
}

void sgd_step(Network& net, const Gradients& grads, SgdState& state, double lr,
              double momentum, double weight_decay) {
  const std::size_t layers = net.arch().num_layers();
  require(grads.weights.size() == layers && grads.biases.size() == layers,
          ErrorKind::Dimension, "sgd_step: gradient layer count does not match network");
  if (state.velocity.weights.empty()) state.velocity = net.zero_gradients();
  auto update = [&](Tensor& param, const Tensor& g, Tensor& v) {
    require(param.shape() == g.shape(), ErrorKind::Dimension,
            "sgd_step: gradient shape " + g.shape_string() + " vs parameter " +
                param.shape_string());
    auto p = param.values();
    auto gv = g.values();
    auto vv = v.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      vv[i] = momentum * vv[i] + gv[i] + weight_decay * p[i];
      p[i] -= lr * vv[i];
    }
  };
  for (std::size_t l = 0; l < layers; ++l) {
    update(net.mutable_weight(l), grads.weights[l], state.velocity.weights[l]);
    update(net.mutable_bias(l), grads.biases[l], state.velocity.biases[l]);
  }
}

namespace {

void require_batch(const Tensor& xs, std::span<const std::size_t> ys) {
  require(xs.rank() == 2 && xs.rows() > 0, ErrorKind::Degenerate, "loss: empty batch");
  require(xs.rows() == ys.size(), ErrorKind::Dimension, "loss: one label per row required");
}

double clamped_log(double p) { return std::log(std::max(p, kProbEpsilon)); }

}  // namespace

LossResult natural_loss(const Network& net, const Tensor& xs, std::span<const std::size_t> ys) {
  require_batch(xs, ys);
  const std::size_t batch = xs.rows(), n = net.num_classes();
  const ForwardTape tape = net.record(xs);
  Tensor grad({batch, n});
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto p = tape.probs.row(b);
    total += cross_entropy(LabelDist{ys[b], n}, p);
    for (std::size_t j = 0; j < n; ++j) grad.at(b, j) = (p[j] - (j == ys[b] ? 1.0 : 0.0)) * inv_b;
  }
  LossResult out;
  out.value = total * inv_b;
  out.grads = net.param_gradient(tape, grad).params;
  return out;
}

LossResult pgdat_loss(const Network& net, const Tensor& xs, std::span<const std::size_t> ys,
                      const AttackConfig& inner) {
  require_batch(xs, ys);
  AttackConfig cfg = inner;
  cfg.loss_kind = AttackLoss::CrossEntropy;
  cfg.start = StartMode::Uniform;
  const Tensor adv = pgd_batch(net, xs, ys, cfg).x_adv;
  return natural_loss(net, adv, ys);
}

LossResult trades_objective(const Network& net, const Tensor& xs,
                            std::span<const std::size_t> ys, const Tensor& x_adv,
                            double inv_lambda) {
  require_batch(xs, ys);
  require(x_adv.shape() == xs.shape(), ErrorKind::Dimension,
          "trades: adversarial batch shape differs from clean batch");
  const std::size_t batch = xs.rows(), n = net.num_classes();
  const ForwardTape clean = net.record(xs);
  const ForwardTape adv = net.record(x_adv);
  Tensor g_clean({batch, n}), g_adv({batch, n});
  const double inv_b = 1.0 / static_cast<double>(batch);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto p = clean.probs.row(b);
    const auto q = adv.probs.row(b);
    const double divergence = kl(p, q);
    total += cross_entropy(LabelDist{ys[b], n}, p) + inv_lambda * divergence;
    // ∂KL/∂z_clean = p ⊙ (log p − log q) − p·KL ; ∂KL/∂z_adv = q − p
    double inner = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (p[j] > 0.0) inner += p[j] * (clamped_log(p[j]) - clamped_log(q[j]));
    for (std::size_t j = 0; j < n; ++j) {
      const double log_ratio = p[j] > 0.0 ? clamped_log(p[j]) - clamped_log(q[j]) : 0.0;
      const double dkl_clean = p[j] * log_ratio - p[j] * inner;
      g_clean.at(b, j) = (p[j] - (j == ys[b] ? 1.0 : 0.0) + inv_lambda * dkl_clean) * inv_b;
      g_adv.at(b, j) = inv_lambda * (q[j] - p[j]) * inv_b;
    }
  }
  LossResult out;
  out.value = total * inv_b;
  out.grads = net.param_gradient(clean, g_clean).params;
  if (inv_lambda != 0.0) out.grads.axpy(1.0, net.param_gradient(adv, g_adv).params);
  return out;
}

LossResult trades_loss(const Network& net, const Tensor& xs, std::span<const std::size_t> ys,
                       double inv_lambda, const AttackConfig& inner) {
  require_batch(xs, ys);
  require(inv_lambda >= 0.0, ErrorKind::Contract, "trades: inv_lambda must be >= 0");
  AttackConfig cfg = inner;
  cfg.loss_kind = AttackLoss::KLFromClean;
  const Tensor adv = pgd_batch(net, xs, ys, cfg).x_adv;
  return trades_objective(net, xs, ys, adv, inv_lambda);
}

std::vector<std::size_t> sample_rows(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  if (count >= n) return rows;
  Rng rng(seed);
  for (std::size_t s = 0; s < count; ++s) std::swap(rows[s], rows[s + rng.below(n - s)]);
  rows.resize(count);
  std::sort(rows.begin(), rows.end());
  return rows;
}

namespace {

double accuracy(const Tensor& probs, std::span<const std::size_t> ys) {
  std::size_t correct = 0;
  for (std::size_t b = 0; b < ys.size(); ++b) {
    const auto row = probs.row(b);
    const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    correct += pred == ys[b];
  }
  return ys.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(ys.size());
}

double adversarial_accuracy(const Network& net, const Tensor& adv, std::span<const std::size_t> ys) {
  return accuracy(net.record(adv).probs, ys);
}

}  // namespace

Evaluation evaluate(const Network& net, const Dataset& test, const EvalConfig& eval,
                    std::span<const std::size_t> probe_rows,
                    std::span<const std::size_t> adv_rows, std::uint64_t seed) {
  Evaluation ev;
  const std::size_t n = net.num_classes();
  const ForwardTape tape = net.record(test.xs);
  ev.clean_acc = accuracy(tape.probs, test.ys);
  double loss = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i)
    loss += cross_entropy(LabelDist{test.ys[i], n}, tape.probs.row(i));
  ev.test_loss = loss / static_cast<double>(test.size());
  ev.cckl_sym = cckl_from_probs(tape.probs, test.ys, eval.pairs);
  ev.lin = check_lin_bound(tape.probs, test.ys, n, eval.pairs);

  double fro_sum = 0.0, lambda_sum = 0.0, cr_sum = 0.0;
  std::size_t cr_count = 0;
  for (std::size_t k = 0; k < probe_rows.size(); ++k) {
    const FisherInfo fi = fisher_at(net, test.x(probe_rows[k]));
    fro_sum += fisher_fro_norm(fi, {.allow_column_probes = true});
    Rng rng(mix64(seed ^ (0x5eedULL + k)));
    const EigenPair top = power_iteration(
        fi.dim(), [&fi](std::span<const double> v, std::span<double> out) { fi.apply(v, out); },
        rng, eval.power);
    const double lambda = top.zero_flagged ? 0.0 : top.lambda_max;
    lambda_sum += lambda;
    if (lambda > 0.0) {
      cr_sum += 1.0 / lambda;
      ++cr_count;
    }
  }
  const double probes = static_cast<double>(std::max<std::size_t>(probe_rows.size(), 1));
  ev.avg_fisher_fro = fro_sum / probes;
  ev.avg_lambda_max = lambda_sum / probes;
  ev.avg_cramer_rao = cr_count ? cr_sum / static_cast<double>(cr_count)
                               : std::numeric_limits<double>::infinity();

  if (eval.adversarial && !adv_rows.empty()) {
    const Dataset attacked = test.subset(adv_rows);
    AttackConfig pgd_cfg = eval.pgd;
    pgd_cfg.rng_seed = mix64(seed ^ 0xa11ULL);
    pgd_cfg.clip_lo = test.range_lo;
    pgd_cfg.clip_hi = test.range_hi;
    ev.adv_acc_pgd = adversarial_accuracy(net, pgd_batch(net, attacked.xs, attacked.ys, pgd_cfg).x_adv,
                                          attacked.ys);
    AttackConfig cw_cfg = eval.cw;
    cw_cfg.rng_seed = mix64(seed ^ 0xc3ULL);
    cw_cfg.clip_lo = test.range_lo;
    cw_cfg.clip_hi = test.range_hi;
    ev.adv_acc_cw = adversarial_accuracy(net, pgd_batch(net, attacked.xs, attacked.ys, cw_cfg).x_adv,
                                         attacked.ys);
    ev.adv_acc_fgsm = adversarial_accuracy(
        net, fgsm_batch(net, attacked.xs, attacked.ys, pgd_cfg).x_adv, attacked.ys);
  }
  return ev;
}

TrainingRun run_training(const Dataset& train, const Dataset& test, const Architecture& arch,
                         const TrainConfig& cfg, const EvalConfig& eval,
                         const TrainingHooks& hooks) {
  cfg.validate();
  arch.validate();
  train.validate();
  test.validate();
  require(train.dim() == arch.input_dim && test.dim() == arch.input_dim, ErrorKind::Dimension,
          "training: dataset dimension does not match architecture input_dim");
  require(train.num_classes <= arch.num_classes && test.num_classes <= arch.num_classes,
          ErrorKind::Dimension, "training: dataset has more classes than the architecture");

  Rng init = Rng::derive(cfg.seed, "init");
  Rng shuffle = Rng::derive(cfg.seed, "shuffle");
  const std::uint64_t attack_seed = Rng::derive(cfg.seed, "attack").next_u64();
  const std::uint64_t eval_seed = Rng::derive(cfg.seed, "eval").next_u64();
  const auto probe_rows =
      sample_rows(test.size(), eval.fisher_probes, Rng::derive(cfg.seed, "probe").next_u64());
  const auto adv_rows =
      sample_rows(test.size(), eval.adv_eval_points ? eval.adv_eval_points : test.size(),
                  Rng::derive(cfg.seed, "adv_rows").next_u64());
  EvalConfig eval_cfg = eval;
  eval_cfg.pairs.seed = eval.pairs.seed ^ Rng::derive(cfg.seed, "pairs").next_u64();

  TrainingRun run;
  run.final_net = Network(arch, init);
  Network& net = run.final_net;
  SgdState state;

  AttackConfig inner = cfg.inner_attack;
  inner.clip_lo = train.range_lo;
  inner.clip_hi = train.range_hi;

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::uint64_t step_counter = 0;
  const std::size_t d = train.dim();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = learning_rate_after(cfg, epoch - 1);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Tensor xs({end - start, d});
      std::vector<std::size_t> ys(end - start);
      for (std::size_t r = start; r < end; ++r) {
        const auto src = train.x(order[r]);
        std::copy(src.begin(), src.end(), xs.row(r - start).begin());
        ys[r - start] = train.ys[order[r]];
      }
      inner.rng_seed = mix64(attack_seed + step_counter++);
      LossResult lr_result;
      switch (cfg.regime) {
        case Regime::Natural: lr_result = natural_loss(net, xs, ys); break;
        case Regime::PGDAT: lr_result = pgdat_loss(net, xs, ys, inner); break;
        case Regime::TRADES:
          lr_result = trades_loss(net, xs, ys, cfg.trades_inv_lambda, inner);
          break;
      }
      loss_sum += lr_result.value * static_cast<double>(ys.size());
      seen += ys.size();
      sgd_step(net, lr_result.grads, state, lr, cfg.momentum, cfg.weight_decay);
    }

    MetricRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    const auto params = net.flat_params();
    const bool params_finite =
        std::all_of(params.begin(), params.end(), [](double v) { return std::isfinite(v); });
    if (!std::isfinite(rec.train_loss) || !params_finite) {
      run.diverged = true;
      run.diagnostic = "training loss became non-finite at epoch " + std::to_string(epoch) +
                       " (lr " + std::to_string(lr) + ")";
      return run;
    }
    const Evaluation ev =
        evaluate(net, test, eval_cfg, probe_rows, adv_rows, mix64(eval_seed + epoch));
    rec.test_acc = ev.clean_acc;
    rec.test_loss = ev.test_loss;
    rec.test_cckl_sym = ev.cckl_sym;
    rec.avg_fisher_fro = ev.avg_fisher_fro;
    rec.log10_avg_fisher_fro = std::log10(std::max(ev.avg_fisher_fro, kProbEpsilon));
    rec.avg_lambda_max = ev.avg_lambda_max;
    rec.adv_acc_pgd = ev.adv_acc_pgd;
    rec.adv_acc_cw = ev.adv_acc_cw;
    rec.adv_acc_fgsm = ev.adv_acc_fgsm;
    rec.lin_bound_violations = ev.lin.violations;
    run.records.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec, net);
  }
  return run;
}

}  // namespace fisherlens
