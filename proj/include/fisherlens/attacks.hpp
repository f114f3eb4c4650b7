#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fisherlens/network.hpp"
#include "fisherlens/tensor.hpp"

namespace fisherlens {

enum class AttackLoss { CrossEntropy, KLFromClean, CW };
enum class StartMode { None, Uniform, Gaussian };

const char* to_string(AttackLoss k) noexcept;
AttackLoss parse_attack_loss(const std::string& name);
StartMode parse_start_mode(const std::string& name);
const char* to_string(StartMode m) noexcept;

/// L∞ attack settings. Defaults follow the evaluation protocol: ε = 8/255,
/// step 2/255, 20 steps, CW coefficient 500, pixel range [0, 1].
struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  double step_size = 2.0 / 255.0;
  int num_steps = 20;
  AttackLoss loss_kind = AttackLoss::CrossEntropy;
  double cw_c = 500.0;
  double clip_lo = 0.0;
  double clip_hi = 1.0;
  StartMode start = StartMode::Uniform;
  /// Gaussian start std as a fraction of epsilon.
  double gaussian_start_scale = 1e-3;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct AttackResult {
  std::vector<double> x_adv;
  std::vector<double> loss_trace;
  bool success = false;  // predicted label differs from the reference label
};

struct BatchAttackResult {
  Tensor x_adv;                                 // B×d
  std::vector<std::vector<double>> loss_traces;  // per row; filled when requested
  std::vector<bool> success;
};

/// Margin objective c·max(z_y − max_{j≠y} z_j, −κ) on logits, κ = 0.
double cw_loss(const Network& net, std::span<const double> x_adv, std::size_t y, double c);

/// Loss being ascended for each row of a recorded batch and its logit gradient.
/// `clean_probs` is needed for KLFromClean (rows of f(x)), ignored otherwise.
struct AttackObjective {
  std::vector<double> loss;  // per row
  Tensor grad_logits;        // B×classes
};
AttackObjective attack_objective(const ForwardTape& tape, std::span<const std::size_t> labels,
                                 const Tensor* clean_probs, AttackLoss kind, double cw_c);

/// Projects `x_adv` onto the ε-ball around `x` and then onto the clip range.
void project_linf(std::span<double> x_adv, std::span<const double> x, double epsilon,
                  double lo, double hi);

AttackResult fgsm(const Network& net, std::span<const double> x, std::size_t y,
                  const AttackConfig& cfg);

AttackResult pgd(const Network& net, std::span<const double> x, std::size_t y,
                 const AttackConfig& cfg);

/// Batched PGD over the rows of `xs`. Rows use independent random starts drawn
/// sequentially from one stream seeded by cfg.rng_seed.
BatchAttackResult pgd_batch(const Network& net, const Tensor& xs,
                            std::span<const std::size_t> labels, const AttackConfig& cfg,
                            bool record_traces = false);

BatchAttackResult fgsm_batch(const Network& net, const Tensor& xs,
                             std::span<const std::size_t> labels, const AttackConfig& cfg);

/// Perturbs along the dominant Fisher eigenvector, rescaled to the L∞ budget
/// (η = ε·v/‖v‖∞) with the sign that gives the larger KL from the clean output.
/// `success` compares against the clean prediction.
AttackResult fisher_eig_attack(const Network& net, std::span<const double> x,
                               const AttackConfig& cfg);

}  // namespace fisherlens
