#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "fisherlens/rng.hpp"

namespace fisherlens {

/// Dense row-major f64 array.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> row_major);
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;

  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  bool all_finite() const noexcept;
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// m×k times k×n.
Tensor matmul(const Tensor& a, const Tensor& b);

/// a times bᵀ, for a m×k and b n×k; avoids materializing the transpose.
Tensor matmul_transposed(const Tensor& a, const Tensor& b);

/// aᵀ times b, for a k×m and b k×n.
Tensor transposed_matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

/// y = a·x for a matrix and a vector.
std::vector<double> matvec(const Tensor& a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
double linf_norm(std::span<const double> a);
double fro_norm(const Tensor& a);
double trace(const Tensor& a);

/// Largest |aᵢⱼ − aⱼᵢ|.
double asymmetry(const Tensor& a);

struct EigenPair {
  double lambda_max = 0.0;
  std::vector<double> vector;
  /// True when the operator was identically zero and `vector` is all zeros.
  bool zero_flagged = false;
  int iterations = 0;
};

struct PowerIterationOptions {
  double tol = 1e-8;
  int max_iter = 1000;
};

/// Dominant eigenpair of a symmetric PSD matrix by power iteration from a
/// random start drawn from `rng`. Stops when the Rayleigh quotient changes by
/// less than `tol` relative, or after `max_iter` steps. The returned vector is
/// unit-norm with its first nonzero component positive.
EigenPair sym_eig_top(const Tensor& a, Rng& rng, PowerIterationOptions opts = {});

/// Matrix-free variant: `apply(v, out)` must write A·v into `out`.
template <class Apply>
EigenPair power_iteration(std::size_t dim, Apply&& apply, Rng& rng,
                          PowerIterationOptions opts = {});

/// Flips sign so the first component with |vᵢ| > 1e-14 is positive.
void normalize_sign(std::span<double> v);

}  // namespace fisherlens

#include "fisherlens/detail/power_iteration.ipp"
