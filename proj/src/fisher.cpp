#include "fisherlens/fisher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fisherlens/divergences.hpp"
#include "fisherlens/error.hpp"

namespace fisherlens {

FisherInfo::FisherInfo(std::vector<double> point, std::vector<double> probs, Tensor scores,
                       bool materialize)
    : point_(std::move(point)), probs_(std::move(probs)), scores_(std::move(scores)) {
  require(scores_.rank() == 2 && scores_.rows() == probs_.size() &&
              scores_.cols() == point_.size(),
          ErrorKind::Dimension, "FisherInfo: score matrix " + scores_.shape_string() +
                                    " inconsistent with point/probabilities");
  if (!materialize) return;
  const std::size_t n = scores_.rows(), d = scores_.cols();
  Tensor weighted = scores_;
  for (std::size_t j = 0; j < n; ++j)
    for (double& v : weighted.row(j)) v *= probs_[j];
  Tensor f = transposed_matmul(weighted, scores_);
  // Mirror the upper triangle so the result is exactly symmetric.
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = i + 1; k < d; ++k) f.at(k, i) = f.at(i, k);
  matrix_ = std::move(f);
}

const Tensor& FisherInfo::matrix() const {
  require(matrix_.has_value(), ErrorKind::State,
          "FisherInfo: matrix not materialized (dimension above d_max)");
  return *matrix_;
}

void FisherInfo::apply(std::span<const double> v, std::span<double> out) const {
  require(v.size() == dim() && out.size() == dim(), ErrorKind::Dimension,
          "FisherInfo::apply: vector length mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j = 0; j < probs_.size(); ++j) {
    const auto g = scores_.row(j);
    const double c = probs_[j] * dot(g, v);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * g[i];
  }
}

double FisherInfo::quadratic_form(std::span<const double> v) const {
  require(v.size() == dim(), ErrorKind::Dimension, "quadratic_form: vector length mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < probs_.size(); ++j) {
    const double proj = dot(scores_.row(j), v);
    s += probs_[j] * proj * proj;
  }
  return s;
}

double FisherInfo::trace() const {
  double s = 0.0;
  for (std::size_t j = 0; j < probs_.size(); ++j) {
    const auto g = scores_.row(j);
    s += probs_[j] * dot(g, g);
  }
  return s;
}

FisherInfo fisher_at(const Network& net, std::span<const double> x, std::size_t d_max) {
  Tensor scores = net.input_jacobian_logp(x);
  const ProbDist f = net.forward(x);
  return FisherInfo(std::vector<double>(x.begin(), x.end()),
                    std::vector<double>(f.values().begin(), f.values().end()),
                    std::move(scores), x.size() <= d_max);
}

double fisher_fro_norm(const FisherInfo& fi, FroNormOptions opts) {
  if (fi.materialized()) return fro_norm(fi.matrix());
  require(opts.allow_column_probes, ErrorKind::Contract,
          "fisher_fro_norm: operator-form F-norm requires allow_column_probes (cost O(n·d²))");
  const std::size_t d = fi.dim();
  std::vector<double> e(d, 0.0), col(d);
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    e[i] = 1.0;
    fi.apply(e, col);
    e[i] = 0.0;
    for (double c : col) s += c * c;
  }
  return std::sqrt(s);
}

EigenPair fisher_spectral(const FisherInfo& fi, Rng& rng, PowerIterationOptions opts) {
  if (fi.materialized()) return sym_eig_top(fi.matrix(), rng, opts);
  return power_iteration(
      fi.dim(), [&fi](std::span<const double> v, std::span<double> out) { fi.apply(v, out); },
      rng, opts);
}

double adversarial_divergence(const Network& net, std::span<const double> x,
                              std::span<const double> eta) {
  require(x.size() == eta.size(), ErrorKind::Dimension,
          "adversarial_divergence: point and perturbation lengths differ");
  std::vector<double> shifted(x.begin(), x.end());
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += eta[i];
  return kl(net.forward(x), net.forward(shifted));
}

Disentanglement disentangle(const Network& net, std::span<const double> xi,
                            std::span<const double> xj) {
  require(xi.size() == xj.size(), ErrorKind::Dimension, "disentangle: point lengths differ");
  std::vector<double> delta(xi.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = xj[i] - xi[i];
  const FisherInfo fi = fisher_at(net, xi, 0);
  Disentanglement out;
  out.total_kl = kl(net.forward(xi), net.forward(xj));
  out.g1_half_quad = 0.5 * fi.quadratic_form(delta);
  out.g2 = out.total_kl - out.g1_half_quad;
  return out;
}

namespace {

struct LeastSquares {
  std::vector<double> solution;
  double condition = 0.0;
};

// One-sided Jacobi SVD of an m×p matrix (m ≥ p), then x = V Σ⁻¹ Uᵀ b.
// Singular values come out to high relative accuracy, which matters for the
// condition estimate of badly scaled designs.
LeastSquares jacobi_least_squares(Tensor a, std::span<const double> b) {
  const std::size_t m = a.rows(), p = a.cols();
  Tensor v = Tensor::identity(p);
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < p; ++i) {
      for (std::size_t j = i + 1; j < p; ++j) {
        double alpha = 0, beta = 0, gamma = 0;
        for (std::size_t r = 0; r < m; ++r) {
          alpha += a.at(r, i) * a.at(r, i);
          beta += a.at(r, j) * a.at(r, j);
          gamma += a.at(r, i) * a.at(r, j);
        }
        if (std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t), s = c * t;
        for (std::size_t r = 0; r < m; ++r) {
          const double ai = a.at(r, i), aj = a.at(r, j);
          a.at(r, i) = c * ai - s * aj;
          a.at(r, j) = s * ai + c * aj;
        }
        for (std::size_t r = 0; r < p; ++r) {
          const double vi = v.at(r, i), vj = v.at(r, j);
          v.at(r, i) = c * vi - s * vj;
          v.at(r, j) = s * vi + c * vj;
        }
      }
    }
    if (!rotated) break;
  }
  std::vector<double> sigma(p);
  for (std::size_t k = 0; k < p; ++k) {
    double s = 0;
    for (std::size_t r = 0; r < m; ++r) s += a.at(r, k) * a.at(r, k);
    sigma[k] = std::sqrt(s);
  }
  const double smax = *std::max_element(sigma.begin(), sigma.end());
  const double smin = *std::min_element(sigma.begin(), sigma.end());
  LeastSquares out;
  out.condition = smin > 0 ? smax / smin : std::numeric_limits<double>::infinity();
  out.solution.assign(p, 0.0);
  if (!(smin > 0)) return out;
  for (std::size_t k = 0; k < p; ++k) {
    // Column k of A·V is σₖ uₖ, so uₖᵀb / σₖ = (A V)ₖᵀ b / σₖ².
    double proj = 0;
    for (std::size_t r = 0; r < m; ++r) proj += a.at(r, k) * b[r];
    const double coeff = proj / (sigma[k] * sigma[k]);
    for (std::size_t r = 0; r < p; ++r) out.solution[r] += v.at(r, k) * coeff;
  }
  return out;
}

}  // namespace

TaylorProfile taylor_profile(const Network& net, std::span<const double> x,
                             std::span<const double> eta, int order,
                             std::span<const double> t_grid) {
  require(order >= 2, ErrorKind::Contract, "taylor_profile: order K must be >= 2");
  require(x.size() == eta.size(), ErrorKind::Dimension,
          "taylor_profile: point and direction lengths differ");
  std::vector<double> ts(t_grid.begin(), t_grid.end());
  std::sort(ts.begin(), ts.end());
  const bool distinct = std::adjacent_find(ts.begin(), ts.end()) == ts.end();
  const std::size_t p = static_cast<std::size_t>(order - 1);
  require(distinct && ts.size() >= static_cast<std::size_t>(order) && !ts.empty() &&
              ts.front() > 0.0,
          ErrorKind::Contract,
          "taylor_profile: t_grid needs at least K distinct positive values");

  const std::size_t m = t_grid.size();
  Tensor design({m, p});
  std::vector<double> g(m);
  std::vector<double> step(eta.size());
  for (std::size_t r = 0; r < m; ++r) {
    const double t = t_grid[r];
    for (std::size_t i = 0; i < eta.size(); ++i) step[i] = t * eta[i];
    g[r] = adversarial_divergence(net, x, step);
    require(std::isfinite(g[r]), ErrorKind::Numeric,
            "taylor_profile: divergence not finite at t=" + std::to_string(t));
    double tk = t * t;
    for (std::size_t k = 0; k < p; ++k, tk *= t) design.at(r, k) = tk;
  }
  // Unit column norms; the coefficients are rescaled back after the solve.
  std::vector<double> col_scale(p);
  for (std::size_t k = 0; k < p; ++k) {
    double s = 0;
    for (std::size_t r = 0; r < m; ++r) s += design.at(r, k) * design.at(r, k);
    col_scale[k] = std::sqrt(s);
    for (std::size_t r = 0; r < m; ++r) design.at(r, k) /= col_scale[k];
  }
  const Tensor scaled = design;
  auto ls = jacobi_least_squares(design, g);
  if (!(ls.condition <= kMaxTaylorCondition)) {
    std::ostringstream msg;
    msg << "taylor_profile: design matrix condition " << ls.condition
        << " exceeds 1e12; shrink K or widen the t grid";
    fail(ErrorKind::Numeric, msg.str());
  }

  TaylorProfile out;
  out.direction.assign(eta.begin(), eta.end());
  out.order = order;
  out.condition = ls.condition;
  double rss = 0;
  for (std::size_t r = 0; r < m; ++r) {
    double fit = 0;
    for (std::size_t k = 0; k < p; ++k) fit += scaled.at(r, k) * ls.solution[k];
    rss += (fit - g[r]) * (fit - g[r]);
  }
  out.fit_residual = std::sqrt(rss);
  out.coefficients.resize(p);
  for (std::size_t k = 0; k < p; ++k) out.coefficients[k] = ls.solution[k] / col_scale[k];
  return out;
}

double cramer_rao_ratio(const FisherInfo& fi, Rng& rng) {
  const EigenPair top = sym_eig_top(fi.matrix(), rng);
  if (top.zero_flagged || top.lambda_max <= 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / top.lambda_max;
}

double cramer_rao_ratio(const FisherInfo& fi) {
  Rng rng(0);
  return cramer_rao_ratio(fi, rng);
}

}  // namespace fisherlens
