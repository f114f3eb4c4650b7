#include "fisherlens/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "fisherlens/error.hpp"

namespace fisherlens {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void require_matrix(const Tensor& t, const char* what) {
  require(t.rank() == 2, ErrorKind::Dimension,
          std::string(what) + ": expected a matrix, got shape " + t.shape_string());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require(element_count(shape_) == data_.size(), ErrorKind::Dimension,
          "tensor data length " + std::to_string(data_.size()) +
              " does not match shape " + shape_string());
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> row_major) {
  return Tensor({rows, cols}, std::vector<double>(row_major));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  require(axis < shape_.size(), ErrorKind::Dimension,
          "axis " + std::to_string(axis) + " out of range for shape " + shape_string());
  return shape_[axis];
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double x) { return std::isfinite(x); });
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  require(b.rows() == k, ErrorKind::Dimension,
          "matmul: inner dimensions differ (" + a.shape_string() + " · " +
              b.shape_string() + ")");
  Tensor out({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

Tensor matmul_transposed(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_transposed");
  require_matrix(b, "matmul_transposed");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  require(b.cols() == k, ErrorKind::Dimension,
          "matmul_transposed: inner dimensions differ (" + a.shape_string() +
              " · " + b.shape_string() + "ᵀ)");
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      out.at(i, j) = s;
    }
  }
  return out;
}

Tensor transposed_matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "transposed_matmul");
  require_matrix(b, "transposed_matmul");
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  require(b.rows() == k, ErrorKind::Dimension,
          "transposed_matmul: inner dimensions differ (" + a.shape_string() +
              "ᵀ · " + b.shape_string() + ")");
  Tensor out({m, n});
  double* po = out.data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a.data() + p * m;
    const double* brow = b.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = arow[i];
      if (api == 0.0) continue;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += api * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

std::vector<double> matvec(const Tensor& a, std::span<const double> x) {
  require_matrix(a, "matvec");
  require(a.cols() == x.size(), ErrorKind::Dimension,
          "matvec: matrix " + a.shape_string() + " with vector of length " +
              std::to_string(x.size()));
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::Dimension,
          "dot: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double linf_norm(std::span<const double> a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

double fro_norm(const Tensor& a) { return l2_norm(a.values()); }

double trace(const Tensor& a) {
  require_matrix(a, "trace");
  require(a.rows() == a.cols(), ErrorKind::Dimension,
          "trace: non-square " + a.shape_string());
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) s += a.at(i, i);
  return s;
}

double asymmetry(const Tensor& a) {
  require_matrix(a, "asymmetry");
  require(a.rows() == a.cols(), ErrorKind::Dimension,
          "asymmetry: non-square " + a.shape_string());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j)
      worst = std::max(worst, std::abs(a.at(i, j) - a.at(j, i)));
  return worst;
}

void normalize_sign(std::span<double> v) {
  for (double x : v) {
    if (std::abs(x) > 1e-14) {
      if (x < 0.0)
        for (double& y : v) y = -y;
      return;
    }
  }
}

EigenPair sym_eig_top(const Tensor& a, Rng& rng, PowerIterationOptions opts) {
  require_matrix(a, "sym_eig_top");
  require(a.rows() == a.cols(), ErrorKind::Dimension,
          "sym_eig_top: non-square " + a.shape_string());
  const double asym = asymmetry(a);
  require(asym <= 1e-10, ErrorKind::Contract,
          "sym_eig_top: matrix is not symmetric (max asymmetry " +
              std::to_string(asym) + ")");
  const std::size_t d = a.rows();
  return power_iteration(
      d,
      [&a, d](std::span<const double> v, std::span<double> out) {
        for (std::size_t i = 0; i < d; ++i) out[i] = dot(a.row(i), v);
      },
      rng, opts);
}

}  // namespace fisherlens
