#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sqfield/errors.hpp"

namespace sqfield {

/// Hermite polynomials normalized by 1/sqrt(n!), orthonormal under N(0,1):
/// H_0 = 1, H_1 = x, H_{n+1} = (x H_n - sqrt(n) H_{n-1}) / sqrt(n+1).
class HermiteEvaluator {
 public:
  explicit HermiteEvaluator(int n_max = 24) : n_max_(n_max) {
    if (n_max < 0) throw OrderOverflow("Hermite order limit must be >= 0");
    sqrt_int_.resize(static_cast<std::size_t>(n_max) + 2);
    for (std::size_t i = 0; i < sqrt_int_.size(); ++i) sqrt_int_[i] = std::sqrt(double(i));
  }

  int n_max() const { return n_max_; }

  double operator()(int n, double x) const {
    check(n);
    if (n == 0) return 1.0;
    double prev = 1.0;
    double cur = x;
    for (int m = 1; m < n; ++m) {
      const double next = (x * cur - sqrt_int_[m] * prev) / sqrt_int_[m + 1];
      prev = cur;
      cur = next;
    }
    return cur;
  }

  /// Fills out[0..n] with H_0(x) .. H_n(x).
  void all(int n, double x, std::span<double> out) const {
    check(n);
    out[0] = 1.0;
    if (n == 0) return;
    out[1] = x;
    for (int m = 1; m < n; ++m)
      out[m + 1] = (x * out[m] - sqrt_int_[m] * out[m - 1]) / sqrt_int_[m + 1];
  }

  /// Largest |H_{n+1} - (x H_n - sqrt(n) H_{n-1})/sqrt(n+1)| relative to max(1,|H_{n+1}|)
  /// over the given points and all n < n_max, with each H_n evaluated independently.
  double recurrence_residual(std::span<const double> points) const {
    double worst = 0.0;
    for (double x : points) {
      for (int n = 1; n < n_max_; ++n) {
        const double lhs = (*this)(n + 1, x);
        const double rhs = (x * (*this)(n, x) - sqrt_int_[n] * (*this)(n - 1, x)) / sqrt_int_[n + 1];
        worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
      }
    }
    return worst;
  }

 private:
  void check(int n) const {
    if (n < 0 || n > n_max_)
      throw OrderOverflow("Hermite order " + std::to_string(n) + " outside [0, " +
                          std::to_string(n_max_) + "]");
  }

  int n_max_;
  std::vector<double> sqrt_int_;
};

/// Gauss quadrature for the standard normal weight (Golub-Welsch).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  double integrate(auto&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
    return s;
  }
};

/// Exact for polynomials of degree < 2 * points.
inline GaussHermiteRule gauss_hermite(int points) {
  if (points < 1) throw ParameterOutOfRange("Gauss-Hermite rule needs at least one node");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(points, points);
  for (int i = 1; i < points; ++i) {
    jacobi(i, i - 1) = std::sqrt(double(i));
    jacobi(i - 1, i) = std::sqrt(double(i));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  GaussHermiteRule rule;
  for (int i = 0; i < points; ++i) {
    rule.nodes.push_back(eig.eigenvalues()(i));
    const double v = eig.eigenvectors()(0, i);
    rule.weights.push_back(v * v);
  }
  return rule;
}

/// max_{m,n <= order} |int H_m H_n dN(0,1) - delta_mn| by Gauss-Hermite quadrature.
inline double hermite_orthogonality_error(int order, int points = 0) {
  const HermiteEvaluator h(order);
  const auto rule = gauss_hermite(points > 0 ? points : order + 4);
  double worst = 0.0;
  for (int m = 0; m <= order; ++m)
    for (int n = 0; n <= order; ++n) {
      const double v = rule.integrate([&](double x) { return h(m, x) * h(n, x); });
      worst = std::max(worst, std::abs(v - (m == n ? 1.0 : 0.0)));
    }
  return worst;
}

}  // namespace sqfield
