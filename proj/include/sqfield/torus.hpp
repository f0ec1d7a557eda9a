#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sqfield/errors.hpp"
#include "sqfield/fft.hpp"

namespace sqfield {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
/// Area of the torus (R / 2 pi Z)^2.
inline constexpr double kTorusArea = 4.0 * std::numbers::pi * std::numbers::pi;

struct WaveIndex {
  int k1 = 0;
  int k2 = 0;

  constexpr long norm_sq() const { return long{k1} * k1 + long{k2} * k2; }
  constexpr int max_norm() const { return std::max(k1 < 0 ? -k1 : k1, k2 < 0 ? -k2 : k2); }
  constexpr WaveIndex operator-() const { return {-k1, -k2}; }
  constexpr bool is_zero() const { return k1 == 0 && k2 == 0; }
  /// k1 > 0, or k1 == 0 and k2 > 0: the cosine half of the real basis.
  constexpr bool is_positive() const { return k1 > 0 || (k1 == 0 && k2 > 0); }
  constexpr double dot(double x1, double x2) const { return k1 * x1 + k2 * x2; }

  friend constexpr bool operator==(WaveIndex, WaveIndex) = default;
  friend constexpr auto operator<=>(WaveIndex, WaveIndex) = default;
};

/// lambda_k = 1 + |k|^2, eigenvalue of 1 - Laplacian.
constexpr double lambda_of(WaveIndex k) { return 1.0 + static_cast<double>(k.norm_sq()); }

/// The real orthonormal basis function e_k evaluated at x.
inline double basis_value(WaveIndex k, double x1, double x2) {
  if (k.is_zero()) return 1.0 / kTwoPi;
  const double phase = k.dot(x1, x2);
  const double c = 1.0 / (std::numbers::sqrt2 * kPi);
  return k.is_positive() ? c * std::cos(phase) : c * std::sin(phase);
}

enum class CutoffShape { SquareQ, DiscD };

inline std::string to_string(CutoffShape s) { return s == CutoffShape::SquareQ ? "Q" : "D"; }

/// Symmetric lattice set: Q(N) = {max(|k1|,|k2|) <= N} or D(N) = {|k| <= N}.
/// Members are listed k1-major, k2-minor; index_of is an O(1) table lookup.
class CutoffSet {
 public:
  CutoffSet(CutoffShape shape, int radius) : shape_(shape), radius_(radius) {
    if (radius < 0) throw ParameterOutOfRange("cutoff radius must be >= 0");
    const int side = 2 * radius + 1;
    table_.assign(static_cast<std::size_t>(side) * side, -1);
    for (int k1 = -radius; k1 <= radius; ++k1) {
      for (int k2 = -radius; k2 <= radius; ++k2) {
        const WaveIndex k{k1, k2};
        if (!shape_admits(k)) continue;
        table_[slot(k)] = static_cast<int>(members_.size());
        members_.push_back(k);
        lambdas_.push_back(lambda_of(k));
      }
    }
  }

  static std::shared_ptr<const CutoffSet> square(int n) {
    return std::make_shared<const CutoffSet>(CutoffShape::SquareQ, n);
  }
  static std::shared_ptr<const CutoffSet> disc(int n) {
    return std::make_shared<const CutoffSet>(CutoffShape::DiscD, n);
  }
  static std::shared_ptr<const CutoffSet> make(CutoffShape shape, int n) {
    return std::make_shared<const CutoffSet>(shape, n);
  }

  CutoffShape shape() const { return shape_; }
  int radius() const { return radius_; }
  std::size_t size() const { return members_.size(); }
  std::span<const WaveIndex> members() const { return members_; }
  std::span<const double> lambdas() const { return lambdas_; }
  WaveIndex member(std::size_t i) const { return members_[i]; }
  double lambda(std::size_t i) const { return lambdas_[i]; }

  /// Largest max-norm over members (equals the radius for a nonempty set).
  int max_norm() const {
    int m = 0;
    for (auto k : members_) m = std::max(m, k.max_norm());
    return m;
  }

  bool contains(WaveIndex k) const { return index_of(k) >= 0; }

  /// Position in members(), or -1.
  int index_of(WaveIndex k) const {
    if (k.max_norm() > radius_) return -1;
    return table_[slot(k)];
  }

  /// The dilated set c * Lambda, again of the same shape.
  std::shared_ptr<const CutoffSet> scaled(int c) const {
    if (c < 1) throw ParameterOutOfRange("cutoff scale factor must be >= 1");
    return make(shape_, radius_ * c);
  }

  bool is_subset_of(const CutoffSet& other) const {
    return std::all_of(members_.begin(), members_.end(),
                       [&](WaveIndex k) { return other.contains(k); });
  }

  std::string label() const { return to_string(shape_) + "(" + std::to_string(radius_) + ")"; }

 private:
  bool shape_admits(WaveIndex k) const {
    if (shape_ == CutoffShape::SquareQ) return k.max_norm() <= radius_;
    return k.norm_sq() <= long{radius_} * radius_;
  }
  std::size_t slot(WaveIndex k) const {
    const int side = 2 * radius_ + 1;
    return static_cast<std::size_t>(k.k1 + radius_) * side + (k.k2 + radius_);
  }

  CutoffShape shape_;
  int radius_;
  std::vector<WaveIndex> members_;
  std::vector<double> lambdas_;
  std::vector<int> table_;
};

using CutoffPtr = std::shared_ptr<const CutoffSet>;

/// Real coefficients <z, e_k> over the members of a cutoff set.
class FieldCoeffs {
 public:
  FieldCoeffs() = default;
  explicit FieldCoeffs(CutoffPtr cutoff)
      : cutoff_(std::move(cutoff)), coeffs_(cutoff_->size(), 0.0) {}
  FieldCoeffs(CutoffPtr cutoff, std::vector<double> coeffs)
      : cutoff_(std::move(cutoff)), coeffs_(std::move(coeffs)) {
    if (coeffs_.size() != cutoff_->size())
      throw ParameterOutOfRange("coefficient vector length does not match cutoff size");
  }

  /// The single basis vector e_k.
  static FieldCoeffs basis(CutoffPtr cutoff, WaveIndex k, double scale = 1.0) {
    FieldCoeffs z(std::move(cutoff));
    z.set(k, scale);
    return z;
  }

  const CutoffSet& cutoff() const { return *cutoff_; }
  const CutoffPtr& cutoff_ptr() const { return cutoff_; }
  std::size_t size() const { return coeffs_.size(); }
  std::span<double> values() { return coeffs_; }
  std::span<const double> values() const { return coeffs_; }
  double& operator[](std::size_t i) { return coeffs_[i]; }
  double operator[](std::size_t i) const { return coeffs_[i]; }

  /// Coefficient of e_k (zero for k outside the cutoff).
  double at(WaveIndex k) const {
    const int i = cutoff_->index_of(k);
    return i < 0 ? 0.0 : coeffs_[static_cast<std::size_t>(i)];
  }
  void set(WaveIndex k, double v) {
    const int i = cutoff_->index_of(k);
    if (i < 0) throw ParameterOutOfRange("wave index outside cutoff");
    coeffs_[static_cast<std::size_t>(i)] = v;
  }

  bool all_finite() const {
    return std::all_of(coeffs_.begin(), coeffs_.end(), [](double v) { return std::isfinite(v); });
  }

  FieldCoeffs& operator+=(const FieldCoeffs& o) {
    for (std::size_t i = 0; i < o.size(); ++i) {
      const int j = cutoff_->index_of(o.cutoff_->member(i));
      if (j < 0) throw ParameterOutOfRange("summand has modes outside the cutoff");
      coeffs_[static_cast<std::size_t>(j)] += o.coeffs_[i];
    }
    return *this;
  }
  FieldCoeffs& operator*=(double c) {
    for (double& v : coeffs_) v *= c;
    return *this;
  }
  friend FieldCoeffs operator+(FieldCoeffs a, const FieldCoeffs& b) { return a += b; }
  friend FieldCoeffs operator*(double c, FieldCoeffs a) { return a *= c; }

 private:
  CutoffPtr cutoff_;
  std::vector<double> coeffs_;
};

/// Values on the uniform grid x = 2 pi (i1, i2) / n, row-major in i1.
struct GridField {
  int n = 0;
  std::vector<double> values;

  GridField() = default;
  explicit GridField(int n_g, double fill = 0.0)
      : n(n_g), values(static_cast<std::size_t>(n_g) * n_g, fill) {}

  double spacing() const { return kTwoPi / n; }
  double& operator()(int i1, int i2) { return values[static_cast<std::size_t>(i1) * n + i2]; }
  double operator()(int i1, int i2) const { return values[static_cast<std::size_t>(i1) * n + i2]; }
  double node(int i) const { return kTwoPi * i / n; }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }
  double max_abs() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }
};

inline void require_nyquist(int n_g, int band, const char* what) {
  if (n_g <= 2 * band)
    throw NyquistViolation(std::string(what) + ": grid size " + std::to_string(n_g) +
                           " must exceed twice the band limit " + std::to_string(band));
}

/// Inner product sum_k z_k w_k, matching modes by wave index.
inline double inner(const FieldCoeffs& z, const FieldCoeffs& w) {
  double s = 0.0;
  if (z.cutoff_ptr() == w.cutoff_ptr()) {
    for (std::size_t i = 0; i < z.size(); ++i) s += z[i] * w[i];
    return s;
  }
  for (std::size_t i = 0; i < z.size(); ++i) s += z[i] * w.at(z.cutoff().member(i));
  return s;
}

/// Keeps the coefficients whose wave index lies in target.
inline FieldCoeffs project(const FieldCoeffs& z, CutoffPtr target) {
  FieldCoeffs out(target);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = z.at(target->member(i));
  return out;
}

/// (sum_k lambda_k^s z_k^2)^(1/2).
inline double sobolev_norm(const FieldCoeffs& z, double s) {
  double acc = 0.0;
  const auto lam = z.cutoff().lambdas();
  for (std::size_t i = 0; i < z.size(); ++i) acc += std::pow(lam[i], s) * z[i] * z[i];
  return std::sqrt(acc);
}

namespace detail {

inline int wrap(int k, int n) { return ((k % n) + n) % n; }

// Adds c to the complex amplitude of exp(i kappa.x) in the half spectrum,
// keeping only kappa2 >= 0 (the rest is implied by Hermitian symmetry).
inline void deposit(std::span<std::complex<double>> h, int n, WaveIndex kappa,
                    std::complex<double> c) {
  if (kappa.k2 < 0) return;
  const int half = n / 2 + 1;
  h[static_cast<std::size_t>(wrap(kappa.k1, n)) * half + kappa.k2] += c;
}

inline std::complex<double> amplitude(std::span<const std::complex<double>> h, int n,
                                      WaveIndex kappa) {
  const int half = n / 2 + 1;
  if (kappa.k2 >= 0) return h[static_cast<std::size_t>(wrap(kappa.k1, n)) * half + kappa.k2];
  return std::conj(h[static_cast<std::size_t>(wrap(-kappa.k1, n)) * half + (-kappa.k2)]);
}

}  // namespace detail

/// Evaluates sum_k z_k e_k at the n_g x n_g grid nodes.
inline GridField synthesize(const FieldCoeffs& z, int n_g) {
  require_nyquist(n_g, z.cutoff().max_norm(), "synthesize");
  auto& ws = fft::thread_workspace(n_g);
  auto h = ws.spectrum();
  std::fill(h.begin(), h.end(), std::complex<double>{});
  const double c0 = 1.0 / kTwoPi;
  const double c1 = 1.0 / (2.0 * std::numbers::sqrt2 * kPi);
  const std::complex<double> i_unit(0.0, 1.0);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const WaveIndex k = z.cutoff().member(i);
    const double v = z[i];
    if (v == 0.0) continue;
    if (k.is_zero()) {
      detail::deposit(h, n_g, k, c0 * v);
    } else if (k.is_positive()) {
      detail::deposit(h, n_g, k, c1 * v);
      detail::deposit(h, n_g, -k, c1 * v);
    } else {
      detail::deposit(h, n_g, k, -i_unit * c1 * v);
      detail::deposit(h, n_g, -k, i_unit * c1 * v);
    }
  }
  ws.backward();
  GridField g(n_g);
  auto r = ws.real();
  std::copy(r.begin(), r.end(), g.values.begin());
  return g;
}

/// Trapezoid pairings (g, e_k)_grid for every k in target.
inline FieldCoeffs analyze(const GridField& g, CutoffPtr target) {
  require_nyquist(g.n, target->max_norm(), "analyze");
  auto& ws = fft::thread_workspace(g.n);
  auto r = ws.real();
  std::copy(g.values.begin(), g.values.end(), r.begin());
  ws.forward();
  const auto h = ws.spectrum();
  const double inv = 1.0 / (static_cast<double>(g.n) * g.n);
  const double c1 = 2.0 * std::numbers::sqrt2 * kPi;
  FieldCoeffs out(target);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const WaveIndex k = target->member(i);
    if (k.is_zero()) {
      out[i] = kTwoPi * h[0].real() * inv;
    } else if (k.is_positive()) {
      out[i] = c1 * detail::amplitude(h, g.n, k).real() * inv;
    } else {
      out[i] = c1 * detail::amplitude(h, g.n, -k).imag() * inv;
    }
  }
  return out;
}

/// (2 pi / n)^2 * sum of values.
inline double integrate_grid(const GridField& g) {
  double s = 0.0;
  for (double v : g.values) s += v;
  const double dx = g.spacing();
  return s * dx * dx;
}

inline GridField pointwise_product(const GridField& a, const GridField& b) {
  if (a.n != b.n) throw ParameterOutOfRange("grid sizes differ");
  GridField out(a.n);
  for (std::size_t i = 0; i < a.values.size(); ++i) out.values[i] = a.values[i] * b.values[i];
  return out;
}

/// sum over every resolved frequency of lambda^s |<g, e_k>_grid|^2.
inline double grid_sobolev_norm_sq(const GridField& g, double s) {
  auto& ws = fft::thread_workspace(g.n);
  auto r = ws.real();
  std::copy(g.values.begin(), g.values.end(), r.begin());
  ws.forward();
  const auto h = ws.spectrum();
  const int n = g.n;
  const int half = n / 2 + 1;
  const double inv = 1.0 / (static_cast<double>(n) * n);
  double acc = 0.0;
  for (int j1 = 0; j1 < n; ++j1) {
    const int k1 = j1 <= n / 2 ? j1 : j1 - n;
    for (int j2 = 0; j2 < half; ++j2) {
      const double w = (j2 == 0 || (n % 2 == 0 && j2 == n / 2)) ? 1.0 : 2.0;
      const double lam = 1.0 + static_cast<double>(k1) * k1 + static_cast<double>(j2) * j2;
      acc += w * std::pow(lam, s) * std::norm(h[static_cast<std::size_t>(j1) * half + j2] * inv);
    }
  }
  return kTorusArea * acc;
}

/// sum over every resolved frequency k of lambda_k^s int g(u) cos(k.u) du.
inline double grid_spectral_sum(const GridField& g, double s) {
  auto& ws = fft::thread_workspace(g.n);
  auto r = ws.real();
  std::copy(g.values.begin(), g.values.end(), r.begin());
  ws.forward();
  const auto h = ws.spectrum();
  const int n = g.n;
  const int half = n / 2 + 1;
  const double inv = 1.0 / (static_cast<double>(n) * n);
  double acc = 0.0;
  for (int j1 = 0; j1 < n; ++j1) {
    const int k1 = j1 <= n / 2 ? j1 : j1 - n;
    for (int j2 = 0; j2 < half; ++j2) {
      const double w = (j2 == 0 || (n % 2 == 0 && j2 == n / 2)) ? 1.0 : 2.0;
      const double lam = 1.0 + static_cast<double>(k1) * k1 + static_cast<double>(j2) * j2;
      acc += w * std::pow(lam, s) * h[static_cast<std::size_t>(j1) * half + j2].real() * inv;
    }
  }
  return kTorusArea * acc;
}

}  // namespace sqfield
