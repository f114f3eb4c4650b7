#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fisherlens/network.hpp"
#include "fisherlens/tensor.hpp"

namespace fisherlens {

/// Lower clamp applied to probabilities before every logarithm.
inline constexpr double kProbEpsilon = 1e-12;

/// KL(p‖q) in nats. Both arguments are clamped to ≥ kProbEpsilon.
double kl(std::span<const double> p, std::span<const double> q);
inline double kl(const ProbDist& p, const ProbDist& q) { return kl(p.values(), q.values()); }

/// Jensen-Shannon divergence, ½KL(p‖m) + ½KL(q‖m) with m the midpoint.
double js(std::span<const double> p, std::span<const double> q);
inline double js(const ProbDist& p, const ProbDist& q) { return js(p.values(), q.values()); }
double js(const LabelDist& a, const LabelDist& b);

/// −ln p_c for the labelled class, clamped.
double cross_entropy(const LabelDist& y, std::span<const double> p);
inline double cross_entropy(const LabelDist& y, const ProbDist& p) {
  return cross_entropy(y, p.values());
}

/// Value of 2·JS(yᵢ‖yⱼ) − KL(yᵢ‖pᵢ) − KL(yⱼ‖pⱼ), a lower bound on KL(pᵢ‖pⱼ)
/// for distinct one-hot labels.
double lin_lower_bound(const LabelDist& yi, const LabelDist& yj, std::span<const double> pi,
                       std::span<const double> pj);

struct PairSamplingPlan {
  /// nullopt means every cross-label pair.
  std::optional<std::size_t> max_pairs = 10000;
  std::uint64_t seed = 0;

  static PairSamplingPlan all() { return {std::nullopt, 0}; }
  void validate() const;
};

/// Unordered cross-label index pairs (i < j), sorted lexicographically.
/// When the plan caps the count below the total, a seeded uniform subsample
/// without replacement is drawn and then sorted.
std::vector<std::pair<std::size_t, std::size_t>> cross_label_pairs(
    std::span<const std::size_t> labels, const PairSamplingPlan& plan);

std::size_t count_cross_label_pairs(std::span<const std::size_t> labels);

/// Mean symmetrized KL over cross-label pairs of precomputed output rows
/// (`probs` is N×classes). Equals the mean over ordered pairs of KL.
double cckl_from_probs(const Tensor& probs, std::span<const std::size_t> labels,
                       const PairSamplingPlan& plan);

double cckl(const Network& net, const Tensor& xs, std::span<const std::size_t> labels,
            const PairSamplingPlan& plan);

struct LinBoundCheck {
  std::size_t pairs = 0;
  std::size_t violations = 0;
  double min_slack = 0.0;  // min over pairs of KL(pᵢ‖pⱼ) − bound
};

/// Evaluates the lower bound against KL(pᵢ‖pⱼ) in both orientations of every
/// sampled pair. A pair violates when KL < bound − tol.
LinBoundCheck check_lin_bound(const Tensor& probs, std::span<const std::size_t> labels,
                              std::size_t num_classes, const PairSamplingPlan& plan,
                              double tol = 1e-9);

}  // namespace fisherlens
