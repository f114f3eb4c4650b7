#include "fisherlens/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "fisherlens/divergences.hpp"
#include "fisherlens/error.hpp"
#include "fisherlens/fisher.hpp"

namespace fisherlens {

const char* to_string(AttackLoss k) noexcept {
  switch (k) {
    case AttackLoss::CrossEntropy: return "cross_entropy";
    case AttackLoss::KLFromClean: return "kl_from_clean";
    case AttackLoss::CW: return "cw";
  }
  return "?";
}

AttackLoss parse_attack_loss(const std::string& name) {
  if (name == "cross_entropy" || name == "ce") return AttackLoss::CrossEntropy;
  if (name == "kl_from_clean" || name == "kl") return AttackLoss::KLFromClean;
  if (name == "cw") return AttackLoss::CW;
  fail(ErrorKind::Config,
       "unknown attack loss '" + name + "' (expected cross_entropy|kl_from_clean|cw)");
}

const char* to_string(StartMode m) noexcept {
  switch (m) {
    case StartMode::None: return "none";
    case StartMode::Uniform: return "uniform";
    case StartMode::Gaussian: return "gaussian";
  }
  return "?";
}

StartMode parse_start_mode(const std::string& name) {
  if (name == "none") return StartMode::None;
  if (name == "uniform") return StartMode::Uniform;
  if (name == "gaussian") return StartMode::Gaussian;
  fail(ErrorKind::Config, "unknown start mode '" + name + "' (expected none|uniform|gaussian)");
}

void AttackConfig::validate() const {
  require(epsilon >= 0.0 && std::isfinite(epsilon), ErrorKind::Contract,
          "attack: epsilon must be finite and >= 0");
  require(num_steps >= 1, ErrorKind::Contract, "attack: num_steps must be >= 1");
  require(step_size >= 0.0, ErrorKind::Contract, "attack: step_size must be >= 0");
  require(clip_lo < clip_hi, ErrorKind::Contract, "attack: clip range needs lo < hi");
  require(cw_c >= 0.0, ErrorKind::Contract, "attack: cw_c must be >= 0");
}

double cw_loss(const Network& net, std::span<const double> x_adv, std::size_t y, double c) {
  const Tensor z = net.logits(x_adv);
  require(y < z.size(), ErrorKind::Contract, "cw_loss: label out of range");
  double best_other = -INFINITY;
  for (std::size_t j = 0; j < z.size(); ++j)
    if (j != y) best_other = std::max(best_other, z[j]);
  constexpr double kappa = 0.0;
  return c * std::max(z[y] - best_other, -kappa);
}

AttackObjective attack_objective(const ForwardTape& tape, std::span<const std::size_t> labels,
                                 const Tensor* clean_probs, AttackLoss kind, double cw_c) {
  const std::size_t batch = tape.batch();
  const std::size_t n = tape.probs.cols();
  require(labels.size() == batch, ErrorKind::Dimension, "attack: one label per row required");
  AttackObjective out;
  out.loss.resize(batch);
  out.grad_logits = Tensor({batch, n});
  for (std::size_t b = 0; b < batch; ++b) {
    const auto q = tape.probs.row(b);
    auto g = out.grad_logits.row(b);
    const std::size_t y = labels[b];
    switch (kind) {
      case AttackLoss::CrossEntropy: {
        out.loss[b] = cross_entropy(LabelDist{y, n}, q);
        for (std::size_t j = 0; j < n; ++j) g[j] = q[j] - (j == y ? 1.0 : 0.0);
        break;
      }
      case AttackLoss::KLFromClean: {
        require(clean_probs != nullptr, ErrorKind::Contract,
                "attack: KL objective needs the clean output distribution");
        const auto p = clean_probs->row(b);
        out.loss[b] = kl(p, q);
        for (std::size_t j = 0; j < n; ++j) g[j] = q[j] - p[j];
        break;
      }
      case AttackLoss::CW: {
        const auto z = tape.logits.row(b);
        std::size_t other = y == 0 ? 1 : 0;
        for (std::size_t j = 0; j < n; ++j)
          if (j != y && z[j] > z[other]) other = j;
        const double margin = z[y] - z[other];
        // Ascent on the negated, clamped margin; flat once misclassified.
        out.loss[b] = -cw_c * std::max(margin, 0.0);
        if (margin > 0.0) {
          g[y] = -cw_c;
          g[other] = cw_c;
        }
        break;
      }
    }
  }
  return out;
}

void project_linf(std::span<double> x_adv, std::span<const double> x, double epsilon,
                  double lo, double hi) {
  for (std::size_t i = 0; i < x_adv.size(); ++i) {
    double v = std::clamp(x_adv[i], x[i] - epsilon, x[i] + epsilon);
    x_adv[i] = std::clamp(v, lo, hi);
  }
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::vector<bool> predictions_differ(const Tensor& probs, std::span<const std::size_t> labels) {
  std::vector<bool> out(labels.size());
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const auto row = probs.row(b);
    const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    out[b] = pred != labels[b];
  }
  return out;
}

BatchAttackResult run_sign_ascent(const Network& net, const Tensor& xs,
                                  std::span<const std::size_t> labels, const AttackConfig& cfg,
                                  int steps, double step_size, StartMode start,
                                  bool record_traces) {
  cfg.validate();
  require(xs.rank() == 2, ErrorKind::Dimension, "attack: expected a B×d batch");
  require(labels.size() == xs.rows(), ErrorKind::Dimension, "attack: one label per row required");
  const std::size_t batch = xs.rows();

  Tensor clean_probs;
  if (cfg.loss_kind == AttackLoss::KLFromClean) clean_probs = net.record(xs).probs;

  Tensor adv = xs;
  Rng rng(cfg.rng_seed);
  if (start == StartMode::Uniform) {
    for (double& v : adv.values()) v += rng.uniform(-cfg.epsilon, cfg.epsilon);
  } else if (start == StartMode::Gaussian) {
    const double sd = cfg.gaussian_start_scale * cfg.epsilon;
    for (double& v : adv.values()) v += rng.normal(0.0, sd);
  }
  for (std::size_t b = 0; b < batch; ++b)
    project_linf(adv.row(b), xs.row(b), cfg.epsilon, cfg.clip_lo, cfg.clip_hi);

  BatchAttackResult out;
  if (record_traces) out.loss_traces.assign(batch, {});
  const Tensor* clean = cfg.loss_kind == AttackLoss::KLFromClean ? &clean_probs : nullptr;

  for (int step = 0; step < steps; ++step) {
    const ForwardTape tape = net.record(adv);
    const AttackObjective obj = attack_objective(tape, labels, clean, cfg.loss_kind, cfg.cw_c);
    if (record_traces)
      for (std::size_t b = 0; b < batch; ++b) out.loss_traces[b].push_back(obj.loss[b]);
    const Tensor grad = net.input_gradient(tape, obj.grad_logits);
    auto a = adv.values();
    auto g = grad.values();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += step_size * sign(g[i]);
    for (std::size_t b = 0; b < batch; ++b)
      project_linf(adv.row(b), xs.row(b), cfg.epsilon, cfg.clip_lo, cfg.clip_hi);
  }

  const ForwardTape final_tape = net.record(adv);
  if (record_traces) {
    const AttackObjective obj = attack_objective(final_tape, labels, clean, cfg.loss_kind, cfg.cw_c);
    for (std::size_t b = 0; b < batch; ++b) out.loss_traces[b].push_back(obj.loss[b]);
  }
  out.success = predictions_differ(final_tape.probs, labels);
  out.x_adv = std::move(adv);
  return out;
}

Tensor single_row(std::span<const double> x) {
  return Tensor({1, x.size()}, std::vector<double>(x.begin(), x.end()));
}

AttackResult unpack(BatchAttackResult&& r) {
  AttackResult out;
  out.x_adv.assign(r.x_adv.values().begin(), r.x_adv.values().end());
  if (!r.loss_traces.empty()) out.loss_trace = std::move(r.loss_traces[0]);
  out.success = r.success[0];
  return out;
}

}  // namespace

BatchAttackResult pgd_batch(const Network& net, const Tensor& xs,
                            std::span<const std::size_t> labels, const AttackConfig& cfg,
                            bool record_traces) {
  return run_sign_ascent(net, xs, labels, cfg, cfg.num_steps, cfg.step_size, cfg.start,
                         record_traces);
}

BatchAttackResult fgsm_batch(const Network& net, const Tensor& xs,
                             std::span<const std::size_t> labels, const AttackConfig& cfg) {
  return run_sign_ascent(net, xs, labels, cfg, 1, cfg.epsilon, StartMode::None, false);
}

AttackResult fgsm(const Network& net, std::span<const double> x, std::size_t y,
                  const AttackConfig& cfg) {
  const std::size_t labels[] = {y};
  return unpack(run_sign_ascent(net, single_row(x), labels, cfg, 1, cfg.epsilon,
                                StartMode::None, true));
}

AttackResult pgd(const Network& net, std::span<const double> x, std::size_t y,
                 const AttackConfig& cfg) {
  const std::size_t labels[] = {y};
  return unpack(pgd_batch(net, single_row(x), labels, cfg, true));
}

AttackResult fisher_eig_attack(const Network& net, std::span<const double> x,
                               const AttackConfig& cfg) {
  cfg.validate();
  const ProbDist clean = net.forward(x);
  const std::size_t clean_label = clean.argmax();
  AttackResult out;
  out.x_adv.assign(x.begin(), x.end());

  const FisherInfo fi = fisher_at(net, x);
  Rng rng(cfg.rng_seed);
  const EigenPair top = fisher_spectral(fi, rng);
  const double vmax = linf_norm(top.vector);
  if (top.zero_flagged || top.lambda_max <= 0.0 || vmax == 0.0) {
    out.success = false;
    return out;
  }

  double best = -1.0;
  for (double s : {1.0, -1.0}) {
    std::vector<double> candidate(x.begin(), x.end());
    for (std::size_t i = 0; i < candidate.size(); ++i)
      candidate[i] += s * cfg.epsilon * top.vector[i] / vmax;
    project_linf(candidate, x, cfg.epsilon, cfg.clip_lo, cfg.clip_hi);
    const double div = kl(clean, net.forward(candidate));
    if (div > best) {
      best = div;
      out.x_adv = std::move(candidate);
    }
  }
  out.loss_trace = {best};
  out.success = net.forward(out.x_adv).argmax() != clean_label;
  return out;
}

}  // namespace fisherlens
