#pragma once

#include <cmath>
#include <vector>

namespace fisherlens {

template <class Apply>
EigenPair power_iteration(std::size_t dim, Apply&& apply, Rng& rng,
                          PowerIterationOptions opts) {
  EigenPair result;
  result.vector.assign(dim, 0.0);
  if (dim == 0) {
    result.zero_flagged = true;
    return result;
  }

  std::vector<double> v(dim);
  std::vector<double> av(dim);
  for (auto& x : v) x = rng.normal();
  double n0 = l2_norm(v);
  for (auto& x : v) x /= n0;

  apply(std::span<const double>(v), std::span<double>(av));
  double anorm = l2_norm(av);
  if (anorm == 0.0) {
    // A random start has a nonzero component along every eigenvector almost
    // surely, so A·v = 0 means A = 0 on the whole space.
    result.zero_flagged = true;
    return result;
  }

  double rayleigh = dot(v, av);
  int iter = 0;
  while (iter < opts.max_iter) {
    ++iter;
    for (std::size_t i = 0; i < dim; ++i) v[i] = av[i] / anorm;
    apply(std::span<const double>(v), std::span<double>(av));
    anorm = l2_norm(av);
    const double next = dot(v, av);
    if (anorm == 0.0) {
      rayleigh = 0.0;
      break;
    }
    const double change = std::abs(next - rayleigh);
    rayleigh = next;
    if (change <= opts.tol * std::max(std::abs(next), 1e-300)) break;
  }

  normalize_sign(v);
  result.lambda_max = rayleigh;
  result.vector = std::move(v);
  result.iterations = iter;
  return result;
}

}  // namespace fisherlens
