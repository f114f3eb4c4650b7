#include "fisherlens/divergences.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fisherlens/error.hpp"
#include "fisherlens/rng.hpp"

namespace fisherlens {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* op) {
  require(a == b, ErrorKind::Dimension,
          std::string(op) + ": distributions have lengths " + std::to_string(a) + " and " +
              std::to_string(b));
}

double clamp_prob(double p) { return p < kProbEpsilon ? kProbEpsilon : p; }

// Pairs are enumerated explicitly below this count and sampled by rejection above it.
constexpr std::size_t kEnumerationLimit = 2'000'000;

}  // namespace

double kl(std::span<const double> p, std::span<const double> q) {
  check_lengths(p.size(), q.size(), "kl");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    s += p[i] * (std::log(clamp_prob(p[i])) - std::log(clamp_prob(q[i])));
  }
  // Clamping q can push the sum a few ε below zero; KL itself cannot be.
  return s < 0.0 ? 0.0 : s;
}

double js(std::span<const double> p, std::span<const double> q) {
  check_lengths(p.size(), q.size(), "js");
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  return 0.5 * kl(p, m) + 0.5 * kl(q, m);
}

double js(const LabelDist& a, const LabelDist& b) {
  check_lengths(a.num_classes, b.num_classes, "js");
  std::vector<double> pa(a.num_classes, 0.0), pb(b.num_classes, 0.0);
  pa[a.cls] = 1.0;
  pb[b.cls] = 1.0;
  return js(pa, pb);
}

double cross_entropy(const LabelDist& y, std::span<const double> p) {
  check_lengths(y.num_classes, p.size(), "cross_entropy");
  require(y.cls < y.num_classes, ErrorKind::Contract, "cross_entropy: label out of range");
  return -std::log(clamp_prob(p[y.cls]));
}

double lin_lower_bound(const LabelDist& yi, const LabelDist& yj, std::span<const double> pi,
                       std::span<const double> pj) {
  require(!(yi == yj), ErrorKind::Contract, "lin_lower_bound: labels must differ");
  return 2.0 * js(yi, yj) - cross_entropy(yi, pi) - cross_entropy(yj, pj);
}

void PairSamplingPlan::validate() const {
  require(!max_pairs || *max_pairs >= 1, ErrorKind::Contract,
          "pair sampling: max_pairs must be >= 1");
}

std::size_t count_cross_label_pairs(std::span<const std::size_t> labels) {
  std::vector<std::size_t> counts;
  for (auto y : labels) {
    if (y >= counts.size()) counts.resize(y + 1, 0);
    ++counts[y];
  }
  const std::size_t n = labels.size();
  std::size_t same = 0;
  for (auto c : counts) same += c * (c - (c ? 1 : 0)) / 2;
  return n * (n - (n ? 1 : 0)) / 2 - same;
}

std::vector<std::pair<std::size_t, std::size_t>> cross_label_pairs(
    std::span<const std::size_t> labels, const PairSamplingPlan& plan) {
  plan.validate();
  const std::size_t total = count_cross_label_pairs(labels);
  require(total > 0, ErrorKind::Degenerate,
          "no cross-label pairs: at least two distinct labels are required");
  const std::size_t n = labels.size();
  const bool take_all = !plan.max_pairs || *plan.max_pairs >= total;

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (take_all || total <= kEnumerationLimit) {
    pairs.reserve(total);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (labels[i] != labels[j]) pairs.emplace_back(i, j);
    if (take_all) return pairs;
    // Partial Fisher-Yates: the first k slots become a uniform k-subset.
    Rng rng(plan.seed);
    const std::size_t k = *plan.max_pairs;
    for (std::size_t s = 0; s < k; ++s) {
      const std::size_t r = s + rng.below(total - s);
      std::swap(pairs[s], pairs[r]);
    }
    pairs.resize(k);
  } else {
    Rng rng(plan.seed);
    std::set<std::pair<std::size_t, std::size_t>> chosen;
    const std::size_t k = *plan.max_pairs;
    while (chosen.size() < k) {
      std::size_t i = rng.below(n), j = rng.below(n);
      if (i == j || labels[i] == labels[j]) continue;
      if (i > j) std::swap(i, j);
      chosen.emplace(i, j);
    }
    pairs.assign(chosen.begin(), chosen.end());
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

double cckl_from_probs(const Tensor& probs, std::span<const std::size_t> labels,
                       const PairSamplingPlan& plan) {
  require(probs.rank() == 2 && probs.rows() == labels.size(), ErrorKind::Dimension,
          "cckl: " + std::to_string(labels.size()) + " labels for outputs " +
              probs.shape_string());
  const auto pairs = cross_label_pairs(labels, plan);
  double total = 0.0;
  for (const auto& [i, j] : pairs)
    total += kl(probs.row(i), probs.row(j)) + kl(probs.row(j), probs.row(i));
  return total / (2.0 * static_cast<double>(pairs.size()));
}

double cckl(const Network& net, const Tensor& xs, std::span<const std::size_t> labels,
            const PairSamplingPlan& plan) {
  return cckl_from_probs(net.record(xs).probs, labels, plan);
}

LinBoundCheck check_lin_bound(const Tensor& probs, std::span<const std::size_t> labels,
                              std::size_t num_classes, const PairSamplingPlan& plan,
                              double tol) {
  require(probs.rank() == 2 && probs.rows() == labels.size(), ErrorKind::Dimension,
          "check_lin_bound: " + std::to_string(labels.size()) + " labels for outputs " +
              probs.shape_string());
  LinBoundCheck out;
  out.min_slack = INFINITY;
  for (const auto& [i, j] : cross_label_pairs(labels, plan)) {
    const LabelDist yi{labels[i], num_classes}, yj{labels[j], num_classes};
    const double bound = lin_lower_bound(yi, yj, probs.row(i), probs.row(j));
    for (double divergence : {kl(probs.row(i), probs.row(j)), kl(probs.row(j), probs.row(i))}) {
      ++out.pairs;
      const double slack = divergence - bound;
      out.min_slack = std::min(out.min_slack, slack);
      if (slack < -tol) ++out.violations;
    }
  }
  return out;
}

}  // namespace fisherlens
