#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "fisherlens/network.hpp"
#include "fisherlens/rng.hpp"
#include "fisherlens/tensor.hpp"

namespace fisherlens {

inline constexpr std::size_t kDefaultFisherDMax = 1024;

/// Input-space Fisher information F = Σⱼ fⱼ gⱼ gⱼᵀ at one point, where gⱼ is
/// the input gradient of log fⱼ. Always keeps the n×d score matrix, so the
/// operator v ↦ Jᵀ diag(f) J v is available; the d×d matrix is stored only
/// when d ≤ d_max.
class FisherInfo {
 public:
  FisherInfo(std::vector<double> point, std::vector<double> probs, Tensor scores,
             bool materialize);

  std::size_t dim() const noexcept { return point_.size(); }
  std::span<const double> point() const noexcept { return point_; }
  std::span<const double> probs() const noexcept { return probs_; }
  /// n×d, row j = ∇ₓ log fⱼ.
  const Tensor& scores() const noexcept { return scores_; }

  bool materialized() const noexcept { return matrix_.has_value(); }
  /// Throws State when not materialized.
  const Tensor& matrix() const;

  /// out = F·v through the score matrix.
  void apply(std::span<const double> v, std::span<double> out) const;
  /// vᵀ F v = Σⱼ fⱼ (gⱼ·v)², nonnegative by construction.
  double quadratic_form(std::span<const double> v) const;
  /// Σⱼ fⱼ ‖gⱼ‖².
  double trace() const;

 private:
  std::vector<double> point_;
  std::vector<double> probs_;
  Tensor scores_;
  std::optional<Tensor> matrix_;
};

FisherInfo fisher_at(const Network& net, std::span<const double> x,
                     std::size_t d_max = kDefaultFisherDMax);

struct FroNormOptions {
  /// Operator-form F-norm needs d column probes, O(n·d²); off unless asked.
  bool allow_column_probes = false;
};

double fisher_fro_norm(const FisherInfo& fi, FroNormOptions opts = {});

/// Dominant eigenpair: dense power iteration when materialized, matrix-free
/// otherwise.
EigenPair fisher_spectral(const FisherInfo& fi, Rng& rng, PowerIterationOptions opts = {});

/// L(x, η) = KL(f(x) ‖ f(x + η)).
double adversarial_divergence(const Network& net, std::span<const double> x,
                              std::span<const double> eta);

/// Split of KL(f(xᵢ)‖f(xⱼ)) into the Fisher quadratic term and the exact
/// higher-order remainder.
struct Disentanglement {
  double g1_half_quad = 0.0;  // ½ (xⱼ−xᵢ)ᵀ F_{xᵢ} (xⱼ−xᵢ)
  double g2 = 0.0;            // total_kl − g1_half_quad
  double total_kl = 0.0;
};

Disentanglement disentangle(const Network& net, std::span<const double> xi,
                            std::span<const double> xj);

/// Directional Taylor coefficients of t ↦ L(x, tη), fitted by least squares to
/// Σ_{k=2..K} a_k t^k.
struct TaylorProfile {
  std::vector<double> direction;
  std::vector<double> coefficients;  // a_2 … a_K
  double fit_residual = 0.0;         // ‖A·a − g‖₂
  double condition = 0.0;            // of the column-scaled design matrix
  int order = 2;

  double a(int k) const { return coefficients.at(static_cast<std::size_t>(k - 2)); }
};

inline constexpr double kMaxTaylorCondition = 1e12;

TaylorProfile taylor_profile(const Network& net, std::span<const double> x,
                             std::span<const double> eta, int order,
                             std::span<const double> t_grid);

/// 1/λ_max: the Cramér–Rao variance floor along the most informative input
/// direction. +∞ when F = 0. Requires the materialized matrix.
double cramer_rao_ratio(const FisherInfo& fi, Rng& rng);
double cramer_rao_ratio(const FisherInfo& fi);

}  // namespace fisherlens
