#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sqfield/errors.hpp"
#include "sqfield/torus.hpp"

namespace sqfield {

/// K^{(alpha)}_Lambda(x) = (1/4 pi^2) sum_{k in Lambda} lambda_k^{-alpha} cos(k.x).
inline double kernel_partial_sum(double alpha, const CutoffSet& cutoff, double x1, double x2) {
  double s = 0.0;
  const auto lam = cutoff.lambdas();
  for (std::size_t i = 0; i < cutoff.size(); ++i)
    s += std::pow(lam[i], -alpha) * std::cos(cutoff.member(i).dot(x1, x2));
  return s / kTorusArea;
}

/// Spectral coefficients of K^{(alpha)}_Lambda: lambda_k^{-alpha} e_k(0).
inline FieldCoeffs kernel_coeffs(double alpha, const CutoffPtr& cutoff) {
  FieldCoeffs c(cutoff);
  for (std::size_t i = 0; i < c.size(); ++i)
    c[i] = std::pow(cutoff->lambda(i), -alpha) * basis_value(cutoff->member(i), 0.0, 0.0);
  return c;
}

/// K^{(alpha)}_Lambda on the n_g x n_g grid.
inline GridField kernel_grid(double alpha, const CutoffPtr& cutoff, int n_g) {
  return synthesize(kernel_coeffs(alpha, cutoff), n_g);
}

struct QuadratureOptions {
  double rel_tol = 1e-10;
  unsigned max_depth = 20;
};

/// I(r) = int_0^inf t^{-alpha} exp(-t/4 - r^2/t) dt for r > 0, 0 < alpha <= 1.
/// With t = e^u the integrand becomes doubly exponentially small at both ends,
/// so the line is truncated where the exponent drops below -750 and split at
/// u = log(2r), the maximum of exp(-t/4 - r^2/t).
inline double green_integral_I(double alpha, double r, const QuadratureOptions& opt = {}) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ParameterOutOfRange("alpha must lie in (0, 1]");
  if (!(r > 0.0)) throw ParameterOutOfRange("I(r) needs r > 0");
  const double beta = 1.0 - alpha;
  auto f = [=](double u) {
    const double t = std::exp(u);
    return std::exp(beta * u - 0.25 * t - r * r / t);
  };
  const double mid = std::log(2.0 * r);
  const double lo = std::min(mid - 1.0, std::log(r * r / 750.0));
  const double hi = std::max(mid + 1.0, std::log(4.0 * (750.0 + 20.0)));
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  double err_a = 0.0;
  double err_b = 0.0;
  const double left = GK::integrate(f, lo, mid, opt.max_depth, opt.rel_tol * 1e-2, &err_a);
  const double right = GK::integrate(f, mid, hi, opt.max_depth, opt.rel_tol * 1e-2, &err_b);
  const double value = left + right;
  const double err = err_a + err_b;
  if (!(value > 0.0) || !std::isfinite(value) || err > opt.rel_tol * value)
    throw QuadratureFailure("I(r) quadrature did not converge: alpha=" + std::to_string(alpha) +
                            " r=" + std::to_string(r) + " value=" + std::to_string(value) +
                            " error estimate=" + std::to_string(err));
  return value;
}

/// Plane Green function of (1 - Laplacian)^alpha at distance r.
inline double plane_green(double alpha, double r, const QuadratureOptions& opt = {}) {
  const double I = green_integral_I(alpha, r, opt);
  return std::pow(r, 2.0 * alpha - 2.0) / (4.0 * kPi * std::tgamma(alpha)) * I;
}

/// Upper bound of I(r): 4^{1-alpha} Gamma(1-alpha), alpha < 1.
inline double green_integral_bound(double alpha) {
  return std::pow(4.0, 1.0 - alpha) * std::tgamma(1.0 - alpha);
}

struct ImageSum {
  double value = 0.0;
  /// Bound on the discarded shells, sum_{s > shells} 8 s G(2 pi s - pi).
  double tail_estimate = 0.0;
};

/// Reduces a coordinate into [-pi, pi]; odd in x.
inline double reduce_angle(double x) { return std::remainder(x, kTwoPi); }

/// Periodized plane kernel: sum over max(|m1|,|m2|) <= shells of G(|x + 2 pi m|).
inline ImageSum torus_green_image_sum(double alpha, double x1, double x2, int shells = 6,
                                      const QuadratureOptions& opt = {}) {
  if (shells < 1) throw ParameterOutOfRange("image sum needs at least one shell");
  const double y1 = reduce_angle(x1);
  const double y2 = reduce_angle(x2);
  if (y1 == 0.0 && y2 == 0.0)
    throw SingularPoint("torus Green kernel is singular at x = 0 mod 2 pi");
  ImageSum out;
  out.value = plane_green(alpha, std::hypot(y1, y2), opt);
  // Images m and -m are added in pairs so that x -> -x reproduces every rounding.
  for (int m1 = 0; m1 <= shells; ++m1)
    for (int m2 = -shells; m2 <= shells; ++m2) {
      if (!WaveIndex{m1, m2}.is_positive()) continue;
      const double a = plane_green(alpha, std::hypot(y1 + kTwoPi * m1, y2 + kTwoPi * m2), opt);
      const double b = plane_green(alpha, std::hypot(y1 - kTwoPi * m1, y2 - kTwoPi * m2), opt);
      out.value += a + b;
    }
  for (int s = shells + 1; s <= shells + 40; ++s) {
    const double term = 8.0 * s * plane_green(alpha, kTwoPi * s - kPi, opt);
    out.tail_estimate += term;
    if (term < 1e-300 || term < 1e-18 * out.tail_estimate) break;
  }
  return out;
}

struct FourierSum {
  double value = 0.0;
  /// Oscillation envelope max_{N/2 <= m < N} |S_m - S_N| of the cubic partial sums.
  double truncation_estimate = 0.0;
};

/// Q(N) partial sum accumulated shell by shell, with the spread of the last
/// octave of partial sums as its truncation estimate.
inline FourierSum kernel_partial_sum_with_estimate(double alpha, int n, double x1, double x2) {
  std::vector<double> shell(static_cast<std::size_t>(n) + 1, 0.0);
  for (int k1 = -n; k1 <= n; ++k1)
    for (int k2 = -n; k2 <= n; ++k2) {
      const WaveIndex k{k1, k2};
      shell[static_cast<std::size_t>(k.max_norm())] += std::pow(lambda_of(k), -alpha) * std::cos(k.dot(x1, x2));
    }
  std::vector<double> partial(shell.size());
  double acc = 0.0;
  for (std::size_t m = 0; m < shell.size(); ++m) partial[m] = (acc += shell[m]) / kTorusArea;
  FourierSum out;
  out.value = partial.back();
  for (int m = n / 2; m < n; ++m)
    out.truncation_estimate = std::max(out.truncation_estimate, std::abs(partial[static_cast<std::size_t>(m)] - out.value));
  return out;
}

/// Fixed panel of points with |x| >= 1/2, away from the kernel singularity.
inline std::vector<std::pair<double, double>> route_panel(int count = 20) {
  std::vector<std::pair<double, double>> pts;
  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int i = 0; i < count; ++i) {
    const double frac = std::fmod((i + 1) * golden, 1.0);
    const double r = 0.5 + 2.5 * frac;
    const double th = kTwoPi * (i + 0.5) / count;
    pts.emplace_back(reduce_angle(r * std::cos(th)), reduce_angle(r * std::sin(th)));
  }
  return pts;
}

struct RouteAgreement {
  struct Point {
    double x1 = 0.0;
    double x2 = 0.0;
    double image = 0.0;
    double fourier = 0.0;
    double budget = 0.0;
    bool pass = false;
  };
  std::vector<Point> points;
  std::vector<int> ladder;
  /// Root-mean-square Fourier/image discrepancy over the panel, per ladder cutoff.
  std::vector<double> rms;
  bool all_within_budget = true;
  bool rms_decreasing = true;
};

/// Compares the image-sum and cubic Fourier routes for K^{(alpha)} on a point
/// panel. The pointwise check uses the largest ladder cutoff and the combined
/// truncation estimates; the convergence check uses the panel RMS, since the
/// pointwise discrepancy of partial sums oscillates in N.
inline RouteAgreement route_agreement(double alpha, const std::vector<std::pair<double, double>>& panel,
                                      const std::vector<int>& ladder, int shells = 6) {
  RouteAgreement out;
  out.ladder = ladder;
  std::vector<double> sq(ladder.size(), 0.0);
  for (auto [x1, x2] : panel) {
    const auto img = torus_green_image_sum(alpha, x1, x2, shells);
    const auto four = kernel_partial_sum_with_estimate(alpha, ladder.back(), x1, x2);
    RouteAgreement::Point p{x1, x2, img.value, four.value, img.tail_estimate + four.truncation_estimate, false};
    p.pass = std::abs(p.image - p.fourier) < p.budget;
    if (!p.pass) out.all_within_budget = false;
    out.points.push_back(p);
    for (std::size_t l = 0; l < ladder.size(); ++l) {
      const double d = kernel_partial_sum(alpha, CutoffSet(CutoffShape::SquareQ, ladder[l]), x1, x2) - img.value;
      sq[l] += d * d;
    }
  }
  for (std::size_t l = 0; l < ladder.size(); ++l) {
    out.rms.push_back(std::sqrt(sq[l] / panel.size()));
    if (l > 0 && !(out.rms[l] < out.rms[l - 1])) out.rms_decreasing = false;
  }
  return out;
}

/// (int |g|^p)^{1/p} by the grid trapezoid rule.
inline double lp_norm(const GridField& g, double p) {
  double s = 0.0;
  for (double v : g.values) s += std::pow(std::abs(v), p);
  const double dx = g.spacing();
  return std::pow(s * dx * dx, 1.0 / p);
}

/// Smallest power of two strictly above `band`, at least `floor_size`.
inline int grid_above(int band, int floor_size = 16) {
  int n = floor_size;
  while (n <= band) n *= 2;
  return n;
}

struct HausdorffYoungResult {
  double q = 0.0;
  int n = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
};

/// (1/2pi)^{2(r-1)/r} (sum_{k in S} lambda_k^{-r/(r-1)})^{(r-1)/r} with r = q n.
inline double hausdorff_young_rhs(const std::vector<double>& lambdas, double r) {
  const double s_exp = r / (r - 1.0);
  double s = 0.0;
  for (double lam : lambdas) s += std::pow(lam, -s_exp);
  return std::pow(1.0 / kTwoPi, 2.0 * (r - 1.0) / r) * std::pow(s, (r - 1.0) / r);
}

/// ||K^{(1)}_Lambda||_{L^{qn}} against its Hausdorff-Young bound. For even qn
/// the grid is chosen so that the quadrature of K^{qn} is exact.
inline HausdorffYoungResult hausdorff_young_check(const CutoffPtr& cutoff, double q, int n,
                                                  double rel_slack = 1e-12) {
  const double r = q * n;
  if (r < 2.0) throw ParameterOutOfRange("Hausdorff-Young check needs q n >= 2");
  const int n_g = grid_above(static_cast<int>(std::ceil(r)) * cutoff->max_norm());
  const GridField k = kernel_grid(1.0, cutoff, n_g);
  HausdorffYoungResult out{q, n, lp_norm(k, r), 0.0, false};
  out.rhs = hausdorff_young_rhs({cutoff->lambdas().begin(), cutoff->lambdas().end()}, r);
  out.pass = out.lhs <= out.rhs * (1.0 + rel_slack);
  return out;
}

/// Difference version: ||K_{Lambda'} - K_Lambda||_{L^{qn}} over the modes in Lambda' \ Lambda.
inline HausdorffYoungResult hausdorff_young_difference_check(const CutoffPtr& inner_set,
                                                             const CutoffPtr& outer_set, double q,
                                                             int n, double rel_slack = 1e-12) {
  if (!inner_set->is_subset_of(*outer_set))
    throw ParameterOutOfRange("difference check needs nested cutoffs");
  const double r = q * n;
  if (r < 2.0) throw ParameterOutOfRange("Hausdorff-Young check needs q n >= 2");
  const int n_g = grid_above(static_cast<int>(std::ceil(r)) * outer_set->max_norm());
  FieldCoeffs diff = kernel_coeffs(1.0, outer_set);
  std::vector<double> lam;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    if (inner_set->contains(outer_set->member(i)))
      diff[i] = 0.0;
    else
      lam.push_back(outer_set->lambda(i));
  }
  HausdorffYoungResult out{q, n, lp_norm(synthesize(diff, n_g), r), 0.0, false};
  out.rhs = lam.empty() ? 0.0 : hausdorff_young_rhs(lam, r);
  out.pass = out.lhs <= out.rhs * (1.0 + rel_slack) + 1e-300;
  return out;
}

/// Parseval value of ||K^{(1)}_Lambda||_{L^2}: (1/2pi) (sum lambda^{-2})^{1/2}.
inline double kernel_l2_parseval(const CutoffSet& cutoff) {
  double s = 0.0;
  for (double lam : cutoff.lambdas()) s += 1.0 / (lam * lam);
  return std::sqrt(s) / kTwoPi;
}

struct BoundFit {
  double constant = 0.0;
  double rate = 0.0;
  bool pass = false;
};

/// Fits G(r) <= C2 exp(-C3 r) on the sampled radii: C3 from the least-squares
/// slope of log G, C2 the smallest constant covering every sample.
inline BoundFit fit_exponential_decay(double alpha, const std::vector<double>& radii) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::vector<double> logs;
  for (double r : radii) {
    const double y = std::log(plane_green(alpha, r));
    logs.push_back(y);
    sx += r;
    sy += y;
    sxx += r * r;
    sxy += r * y;
  }
  const double m = static_cast<double>(radii.size());
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  BoundFit fit;
  fit.rate = -slope;
  for (std::size_t i = 0; i < radii.size(); ++i)
    fit.constant = std::max(fit.constant, std::exp(logs[i] + fit.rate * radii[i]));
  fit.pass = fit.rate > 0.0 && std::isfinite(fit.constant);
  return fit;
}

struct LogSingularityReport {
  std::vector<double> radii;
  /// K^{(1)}(x) + log|x| / 2pi along the diagonal direction, by image sums.
  std::vector<double> remainder;
  double sup_remainder = 0.0;
  /// |R(r_min) - R(r_second)|, small once the smooth remainder has settled.
  double settle = 0.0;
  /// sup_N max_x |K^{(1/2)}_{Q(N)}(x)| |x| on the sampled points with N|x| >= 4.
  double half_order_product = 0.0;
  /// The same product for the image-sum kernel.
  double half_order_reference = 0.0;
  bool pass = false;
};

/// Boundedness of K^{(1)} + log|x|/2pi on [r_min, r_max] and of |x| K^{(1/2)} near 0.
inline LogSingularityReport log_singularity_check(const std::vector<int>& ladder,
                                                  double r_min = 1e-3, double r_max = 0.5,
                                                  int points = 12) {
  LogSingularityReport rep;
  const double u = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < points; ++i) {
    const double r = r_min * std::pow(r_max / r_min, double(i) / (points - 1));
    const double k = torus_green_image_sum(1.0, r * u, r * u).value;
    rep.radii.push_back(r);
    rep.remainder.push_back(k + std::log(r) / kTwoPi);
    rep.sup_remainder = std::max(rep.sup_remainder, std::abs(rep.remainder.back()));
  }
  rep.settle = std::abs(rep.remainder[0] - rep.remainder[1]);
  for (int i = 0; i < points; ++i) {
    const double r = rep.radii[static_cast<std::size_t>(i)];
    rep.half_order_reference = std::max(
        rep.half_order_reference, r * torus_green_image_sum(0.5, r * u, r * u).value);
    for (int n : ladder) {
      if (n * r < 4.0) continue;
      const double v = kernel_partial_sum(0.5, CutoffSet(CutoffShape::SquareQ, n), r * u, r * u);
      rep.half_order_product = std::max(rep.half_order_product, std::abs(v) * r);
    }
  }
  rep.pass = std::isfinite(rep.sup_remainder) && rep.settle < 1e-3 &&
             rep.half_order_product <= 2.0 * rep.half_order_reference;
  return rep;
}

struct LpLadderRow {
  double p = 0.0;
  int n = 0;
  double norm = 0.0;
};

/// ||K^{(1)}_{Q(N)}||_{L^p} for even integer p, exact grid quadrature.
inline std::vector<LpLadderRow> kernel_lp_ladder(const std::vector<int>& ps,
                                                 const std::vector<int>& ladder) {
  std::vector<LpLadderRow> rows;
  for (int p : ps)
    for (int n : ladder) {
      const auto c = CutoffSet::square(n);
      rows.push_back({double(p), n, lp_norm(kernel_grid(1.0, c, grid_above(p * n)), p)});
    }
  return rows;
}

}  // namespace sqfield
