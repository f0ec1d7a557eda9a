#pragma once

#include <cfloat>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "sqfield/errors.hpp"
#include "sqfield/free_field.hpp"
#include "sqfield/green.hpp"
#include "sqfield/hermite.hpp"
#include "sqfield/parallel.hpp"
#include "sqfield/stats.hpp"
#include "sqfield/torus.hpp"

namespace sqfield {

inline constexpr int kDefaultMaxOrder = 24;
inline constexpr int kDefaultOversample = 4;

/// Grid values of Phi_{n,Lambda} = sqrt(n!) rho^n H_n(phi / rho) together with
/// the data it came from.
struct WickPowerField {
  int order = 0;
  CutoffPtr cutoff;
  double rho = 0.0;
  GridField grid;

  /// Spectral coefficients over n * Lambda (exact: the field is band-limited there).
  FieldCoeffs coeffs() const {
    const auto band = order == 0 ? CutoffSet::make(cutoff->shape(), 0) : cutoff->scaled(order);
    return analyze(grid, band);
  }
};

namespace detail {

// P_0 = 1, P_1 = phi, P_{m+1} = phi P_m - m rho^2 P_{m-1}; P_n = rho^n He_n(phi / rho).
inline void wick_recurrence(const GridField& phi, double rho, int n, GridField& out) {
  const double r2 = rho * rho;
  out = GridField(phi.n, 1.0);
  if (n == 0) return;
  for (std::size_t j = 0; j < phi.values.size(); ++j) {
    const double x = phi.values[j];
    double prev = 1.0;
    double cur = x;
    for (int m = 1; m < n; ++m) {
      const double next = x * cur - m * r2 * prev;
      prev = cur;
      cur = next;
    }
    out.values[j] = cur;
  }
}

inline void check_order(int n, int n_max) {
  if (n < 0 || n > n_max)
    throw OrderOverflow("Wick order " + std::to_string(n) + " outside [0, " +
                        std::to_string(n_max) + "]");
}

}  // namespace detail

/// Phi_{n,Lambda}(z) on an n_g grid; needs n_g > 2 n ||Lambda||.
inline WickPowerField wick_power(const FieldCoeffs& z, int n, const CutoffPtr& cutoff, int n_g,
                                 int n_max = kDefaultMaxOrder) {
  detail::check_order(n, n_max);
  require_nyquist(n_g, n * cutoff->max_norm(), "wick_power");
  WickPowerField out{n, cutoff, rho(*cutoff), {}};
  detail::wick_recurrence(eval_projected(z, cutoff, n_g), out.rho, n, out.grid);
  return out;
}

/// Phi_0 .. Phi_n from an already synthesized field.
inline std::vector<GridField> wick_power_ladder(const GridField& phi, double rho, int n) {
  std::vector<GridField> out;
  out.emplace_back(phi.n, 1.0);
  if (n == 0) return out;
  out.push_back(phi);
  const double r2 = rho * rho;
  for (int m = 1; m < n; ++m) {
    GridField next(phi.n);
    for (std::size_t j = 0; j < phi.values.size(); ++j)
      next.values[j] = phi.values[j] * out[m].values[j] - m * r2 * out[m - 1].values[j];
    out.push_back(std::move(next));
  }
  return out;
}

/// (Phi, g)_H by grid quadrature, exact when n_g > n ||Lambda|| + ||g||.
inline double wick_pairing(const WickPowerField& phi, const FieldCoeffs& g) {
  const int band = phi.order * phi.cutoff->max_norm() + g.cutoff().max_norm();
  if (phi.grid.n <= band)
    throw NyquistViolation("wick_pairing: grid size " + std::to_string(phi.grid.n) +
                           " must exceed the product band " + std::to_string(band));
  if (phi.grid.n > 2 * g.cutoff().max_norm()) return inner(analyze(phi.grid, g.cutoff_ptr()), g);
  GridField gg(phi.grid.n);
  for (int i1 = 0; i1 < gg.n; ++i1)
    for (int i2 = 0; i2 < gg.n; ++i2)
      for (std::size_t i = 0; i < g.size(); ++i)
        gg(i1, i2) += g[i] * basis_value(g.cutoff().member(i), gg.node(i1), gg.node(i2));
  return integrate_grid(pointwise_product(phi.grid, gg));
}

/// (f, g)_H by grid quadrature on a shared grid.
inline double wick_pairing(const GridField& f, const GridField& g) {
  if (f.n != g.n) throw NyquistViolation("wick_pairing: grid sizes differ");
  return integrate_grid(pointwise_product(f, g));
}

namespace detail {

inline void check_exponent(double e) {
  constexpr double kMaxExp = 709.0;
  if (!(e < kMaxExp))
    throw Overflow("Wick exponential exponent " + std::to_string(e) + " exceeds double range");
}

}  // namespace detail

/// exp(a phi - a^2 rho^2 / 2) on the grid.
inline GridField wick_exp_grid(const GridField& phi, double a, double rho) {
  GridField out(phi.n);
  const double shift = 0.5 * a * a * rho * rho;
  for (std::size_t j = 0; j < phi.values.size(); ++j) {
    const double e = a * phi.values[j] - shift;
    detail::check_exponent(e);
    out.values[j] = std::exp(e);
  }
  return out;
}

/// cos(a phi) exp(a^2 rho^2 / 2) and sin(a phi) exp(a^2 rho^2 / 2).
inline GridField wick_trig_grid(const GridField& phi, double a, double rho, bool sine) {
  const double e = 0.5 * a * a * rho * rho;
  detail::check_exponent(e);
  const double scale = std::exp(e);
  GridField out(phi.n);
  for (std::size_t j = 0; j < phi.values.size(); ++j)
    out.values[j] = scale * (sine ? std::sin(a * phi.values[j]) : std::cos(a * phi.values[j]));
  return out;
}

inline GridField wick_exp(const FieldCoeffs& z, double a, const CutoffPtr& cutoff, int n_g) {
  return wick_exp_grid(eval_projected(z, cutoff, n_g), a, rho(*cutoff));
}
inline GridField wick_cos(const FieldCoeffs& z, double a, const CutoffPtr& cutoff, int n_g) {
  return wick_trig_grid(eval_projected(z, cutoff, n_g), a, rho(*cutoff), false);
}
inline GridField wick_sin(const FieldCoeffs& z, double a, const CutoffPtr& cutoff, int n_g) {
  return wick_trig_grid(eval_projected(z, cutoff, n_g), a, rho(*cutoff), true);
}

enum class WickKind { Exp, Cos, Sin };

/// sum_{n <= n_max} c_n a^n / n! Phi_n with c_n = 1 (Exp), the even terms with
/// alternating sign (Cos) or the odd terms with alternating sign (Sin).
inline GridField wick_series(const GridField& phi, double a, double rho, int n_max, WickKind kind) {
  GridField out(phi.n);
  const double r2 = rho * rho;
  for (std::size_t j = 0; j < phi.values.size(); ++j) {
    const double x = phi.values[j];
    // t_n = a^n Phi_n / n!, t_{n+1} = (a x t_n - a^2 rho^2 t_{n-1}) / (n+1).
    double prev = 0.0;
    double cur = 1.0;
    double sum = 0.0;
    for (int n = 0; n <= n_max; ++n) {
      switch (kind) {
        case WickKind::Exp: sum += cur; break;
        case WickKind::Cos:
          if (n % 2 == 0) sum += (n % 4 == 0 ? 1.0 : -1.0) * cur;
          break;
        case WickKind::Sin:
          if (n % 2 == 1) sum += (n % 4 == 1 ? 1.0 : -1.0) * cur;
          break;
      }
      const double next = (a * x * cur - a * a * r2 * prev) / (n + 1);
      prev = cur;
      cur = next;
    }
    out.values[j] = sum;
  }
  return out;
}

struct TaylorTail {
  /// sum_{n > n_max} |a|^n M_n / n! where |Phi_n| <= M_n pointwise.
  double tail = 0.0;
  /// sum_{n <= n_max} |a|^n M_n / n!, the scale of the rounding error.
  double head = 0.0;
};

/// Majorant of the Taylor remainder at a point with field value phi. The
/// polynomials M_{n+1} = |phi| M_n + n rho^2 M_{n-1} dominate |Phi_n| and have
/// generating function exp(t |phi| + t^2 rho^2 / 2).
inline TaylorTail exp_taylor_tail(double phi, double a, double rho, int n_max) {
  const double b = std::abs(a) * std::abs(phi);
  const double c = a * a * rho * rho;
  TaylorTail out;
  double prev = 1.0;
  double cur = b;
  out.head = 1.0;
  if (n_max >= 1) out.head += cur;
  else out.tail += cur;
  for (int n = 1; n < n_max + 400; ++n) {
    const double next = (b * cur + c * prev) / (n + 1);
    prev = cur;
    cur = next;
    if (n + 1 <= n_max) {
      out.head += cur;
    } else {
      out.tail += cur;
      if (cur < 1e-30 * out.tail || cur == 0.0) break;
    }
  }
  return out;
}

struct TaylorCheck {
  double max_residual = 0.0;
  /// Smallest bound - residual margin seen on the grid (negative means failure).
  double min_margin = std::numeric_limits<double>::infinity();
  double max_bound = 0.0;
  bool pass = true;
};

/// Pointwise |exp_Lambda - sum_{n<=n_max} a^n Phi_n / n!| against the tail
/// majorant plus a rounding allowance 8 eps (n_max + 1) head + 4 eps |exp_Lambda|.
inline TaylorCheck exp_taylor_check(const FieldCoeffs& z, double a, const CutoffPtr& cutoff, int n_g,
                                    int n_max) {
  const GridField phi = eval_projected(z, cutoff, n_g);
  const double r = rho(*cutoff);
  const GridField exact = wick_exp_grid(phi, a, r);
  const auto powers = wick_power_ladder(phi, r, n_max);
  TaylorCheck out;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (std::size_t j = 0; j < phi.values.size(); ++j) {
    double sum = 0.0;
    double coef = 1.0;
    for (int n = 0; n <= n_max; ++n) {
      if (n > 0) coef *= a / n;
      sum += coef * powers[static_cast<std::size_t>(n)].values[j];
    }
    const double residual = std::abs(exact.values[j] - sum);
    const auto tail = exp_taylor_tail(phi.values[j], a, r, n_max);
    const double bound = tail.tail + 8.0 * eps * (n_max + 1) * tail.head + 4.0 * eps * exact.values[j];
    out.max_residual = std::max(out.max_residual, residual);
    out.max_bound = std::max(out.max_bound, bound);
    out.min_margin = std::min(out.min_margin, bound - residual);
    if (residual > bound) out.pass = false;
  }
  return out;
}

/// n! sum_j f_j g_j int K_N(u)^n cos(j.u) du: the covariance of (Phi_{n,M}, f)
/// and (Phi_{n,N}, g) for M containing N, by exact grid quadrature.
inline double wick_covariance_exact(int n, const CutoffPtr& cutoff_n, const FieldCoeffs& f,
                                    const FieldCoeffs& g) {
  const int band = n * cutoff_n->max_norm() + std::max(f.cutoff().max_norm(), g.cutoff().max_norm());
  const int n_g = grid_above(band);
  const GridField k = kernel_grid(1.0, cutoff_n, n_g);
  GridField kn(n_g, 1.0);
  for (int m = 0; m < n; ++m) kn = pointwise_product(kn, k);
  double fact = 1.0;
  for (int m = 2; m <= n; ++m) fact *= m;
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const WaveIndex kv = f.cutoff().member(i);
    const double gj = g.at(kv);
    if (f[i] == 0.0 || gj == 0.0) continue;
    GridField c(n_g);
    for (int i1 = 0; i1 < n_g; ++i1)
      for (int i2 = 0; i2 < n_g; ++i2) c(i1, i2) = std::cos(kv.dot(c.node(i1), c.node(i2)));
    s += f[i] * gj * integrate_grid(pointwise_product(kn, c));
  }
  return fact * s;
}

/// E ||Phi_{n,Q(M)} - Phi_{n,Q(N)}||^2_{H^{-alpha}} = n! sum_k lambda_k^{-alpha}
/// int (K_M^n - K_N^n)(u) cos(k.u) du, exact by FFT.
inline double wick_ladder_distance_exact(int n, double alpha, const CutoffPtr& hi,
                                         const CutoffPtr& lo) {
  const int n_g = grid_above(2 * n * hi->max_norm());
  const GridField km = kernel_grid(1.0, hi, n_g);
  const GridField kn = kernel_grid(1.0, lo, n_g);
  GridField diff(n_g);
  double fact = 1.0;
  for (int m = 2; m <= n; ++m) fact *= m;
  for (std::size_t j = 0; j < diff.values.size(); ++j)
    diff.values[j] = std::pow(km.values[j], n) - std::pow(kn.values[j], n);
  return fact * grid_spectral_sum(diff, -alpha);
}

/// E ||Phi_{n,Lambda}||^2_{H^{-alpha}} = n! sum_k lambda_k^{-alpha} int K^n cos(k.u) du.
inline double wick_norm_sq_exact(int n, double alpha, const CutoffPtr& cutoff) {
  const int n_g = grid_above(2 * n * cutoff->max_norm());
  GridField kn = kernel_grid(1.0, cutoff, n_g);
  for (double& v : kn.values) v = std::pow(v, n);
  double fact = 1.0;
  for (int m = 2; m <= n; ++m) fact *= m;
  return fact * grid_spectral_sum(kn, -alpha);
}

/// E ||exp_M - exp_N||^2_{H^{-alpha}} = sum_k lambda_k^{-alpha} int (e^{a^2 K_M} - e^{a^2 K_N}) cos(k.u) du.
/// The integrand is entire but not band-limited; the grid is taken 16 times the outer cutoff.
inline double wick_exp_ladder_distance_exact(double a, double alpha, const CutoffPtr& hi,
                                             const CutoffPtr& lo) {
  const int n_g = grid_above(16 * hi->max_norm());
  const GridField km = kernel_grid(1.0, hi, n_g);
  const GridField kn = kernel_grid(1.0, lo, n_g);
  GridField diff(n_g);
  for (std::size_t j = 0; j < diff.values.size(); ++j)
    diff.values[j] = std::exp(a * a * km.values[j]) - std::exp(a * a * kn.values[j]);
  return grid_spectral_sum(diff, -alpha);
}

/// sum_{k in hi \ lo} lambda_k^{-1-alpha}.
inline double first_chaos_ladder_sum(double alpha, const CutoffSet& hi, const CutoffSet& lo) {
  double s = 0.0;
  for (std::size_t i = 0; i < hi.size(); ++i)
    if (!lo.contains(hi.member(i))) s += std::pow(hi.lambda(i), -1.0 - alpha);
  return s;
}

struct LadderRow {
  int lo = 0;
  int hi = 0;
  double exact = 0.0;
  Estimate estimate;
};

struct ConvergenceReport {
  std::string kind;
  std::vector<LadderRow> rows;
  bool exact_decreasing = true;
  bool estimate_decreasing = true;
  bool matches_exact = true;
  bool pass() const { return exact_decreasing && estimate_decreasing && matches_exact; }
};

struct MonteCarloOptions {
  std::size_t n_samples = 10000;
  std::uint64_t seed = 1;
  int workers = 1;
  std::size_t chunk = 256;
};

namespace detail {

inline void finish_report(ConvergenceReport& rep, double z) {
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& r = rep.rows[i];
    if (!agrees(r.estimate, r.exact, z)) rep.matches_exact = false;
    if (i > 0) {
      if (!(r.exact < rep.rows[i - 1].exact)) rep.exact_decreasing = false;
      if (!(r.estimate.value < rep.rows[i - 1].estimate.value)) rep.estimate_decreasing = false;
    }
  }
}

// Monte Carlo estimate of E || F_{hi} - F_{lo} ||^2_{H^{-alpha}} for each consecutive
// ladder pair, with F_N = make(phi_N, rho_N) evaluated on a shared grid.
template <class Make>
std::vector<Estimate> ladder_estimates(const std::vector<int>& ladder, double alpha, int n_g,
                                       const MonteCarloOptions& mc, Make make) {
  std::vector<CutoffPtr> sets;
  std::vector<double> rhos;
  for (int n : ladder) {
    sets.push_back(CutoffSet::square(n));
    rhos.push_back(rho(*sets.back()));
  }
  const std::size_t pairs = ladder.size() - 1;
  using Partial = std::vector<MeanAccumulator>;
  auto partials = map_chunks<Partial>(mc.n_samples, mc.chunk, mc.workers,
                                      [&](std::size_t b, std::size_t e, std::size_t) {
    Partial acc(pairs);
    const GffSampler sampler(sets.back(), mc.seed, 0);
    FieldCoeffs z(sets.back());
    for (std::size_t s = b; s < e; ++s) {
      RandomStream stream(mc.seed, s);
      sampler.fill(z, stream);
      std::vector<GridField> fields;
      for (std::size_t l = 0; l < sets.size(); ++l)
        fields.push_back(make(eval_projected(z, sets[l], n_g), rhos[l]));
      for (std::size_t p = 0; p < pairs; ++p) {
        GridField d(n_g);
        for (std::size_t j = 0; j < d.values.size(); ++j)
          d.values[j] = fields[p + 1].values[j] - fields[p].values[j];
        acc[p].add(grid_sobolev_norm_sq(d, -alpha));
      }
    }
    return acc;
  });
  std::vector<MeanAccumulator> total(pairs);
  for (const auto& part : partials)
    for (std::size_t p = 0; p < pairs; ++p) total[p].merge(part[p]);
  std::vector<Estimate> out;
  for (const auto& t : total) out.push_back({t.mean, t.se()});
  return out;
}

}  // namespace detail

/// H^{-alpha} distances between Wick powers of order n on the square cutoff ladder.
inline ConvergenceReport chaos_convergence_report(int n, double alpha, const std::vector<int>& ladder,
                                                  const MonteCarloOptions& mc, double z = 4.0) {
  if (!(alpha > 0.0)) throw ParameterOutOfRange("convergence report needs alpha > 0");
  if (ladder.size() < 2) throw ParameterOutOfRange("ladder needs at least two cutoffs");
  detail::check_order(n, kDefaultMaxOrder);
  const int n_g = grid_above(2 * n * ladder.back());
  ConvergenceReport rep;
  rep.kind = "power" + std::to_string(n);
  const auto est = detail::ladder_estimates(ladder, alpha, n_g, mc, [n](GridField phi, double r) {
    GridField out;
    detail::wick_recurrence(phi, r, n, out);
    return out;
  });
  for (std::size_t p = 0; p + 1 < ladder.size(); ++p) {
    const auto hi = CutoffSet::square(ladder[p + 1]);
    const auto lo = CutoffSet::square(ladder[p]);
    rep.rows.push_back({ladder[p], ladder[p + 1], wick_ladder_distance_exact(n, alpha, hi, lo), est[p]});
  }
  detail::finish_report(rep, z);
  return rep;
}

/// Same for the Wick exponential; requires |a| < sqrt(4 pi alpha).
inline ConvergenceReport exp_convergence_report(double a, double alpha, const std::vector<int>& ladder,
                                                const MonteCarloOptions& mc, int oversample = kDefaultOversample,
                                                double z = 4.0) {
  if (!(alpha > 0.0)) throw ParameterOutOfRange("convergence report needs alpha > 0");
  if (!(a * a < 4.0 * kPi * alpha))
    throw ParameterOutOfRange("exponential ladder needs |a| < sqrt(4 pi alpha)");
  if (ladder.size() < 2) throw ParameterOutOfRange("ladder needs at least two cutoffs");
  const int n_g = grid_above(2 * oversample * ladder.back());
  ConvergenceReport rep;
  rep.kind = "exp";
  const auto est = detail::ladder_estimates(ladder, alpha, n_g, mc, [a](GridField phi, double r) {
    return wick_exp_grid(phi, a, r);
  });
  for (std::size_t p = 0; p + 1 < ladder.size(); ++p) {
    const auto hi = CutoffSet::square(ladder[p + 1]);
    const auto lo = CutoffSet::square(ladder[p]);
    rep.rows.push_back({ladder[p], ladder[p + 1], wick_exp_ladder_distance_exact(a, alpha, hi, lo), est[p]});
  }
  detail::finish_report(rep, z);
  return rep;
}

struct HypercontractivityResult {
  int n = 0;
  double p = 0.0;
  /// ||F||_p / ||F||_2 from Monte Carlo, with batch-means standard error.
  Estimate empirical_ratio;
  /// The same ratio by Gauss-Hermite quadrature of |H_n|^p.
  double quadrature_ratio = 0.0;
  double bound = 0.0;
  bool pass = false;
};

/// F = H_n(W_f) with ||f||_{H^{-1}} = 1, checked against ||F||_p <= (p-1)^{n/2} ||F||_2.
inline HypercontractivityResult hypercontractivity_check(int n, double p, const FieldCoeffs& f,
                                                         const MonteCarloOptions& mc, double z = 4.0) {
  if (p < 2.0) throw ParameterOutOfRange("hypercontractivity needs p >= 2");
  const double norm = dual_norm(f);
  if (std::abs(norm - 1.0) > 1e-10) throw ParameterOutOfRange("test direction must have unit H^{-1} norm");
  const HermiteEvaluator h(std::max(n, 1));
  HypercontractivityResult out;
  out.n = n;
  out.p = p;
  out.bound = std::pow(p - 1.0, 0.5 * n);
  const auto rule = gauss_hermite(200);
  const double qp = rule.integrate([&](double x) { return std::pow(std::abs(h(n, x)), p); });
  const double q2 = rule.integrate([&](double x) { return h(n, x) * h(n, x); });
  out.quadrature_ratio = std::pow(qp, 1.0 / p) / std::sqrt(q2);

  constexpr std::size_t kBatches = 20;
  const std::size_t per = std::max<std::size_t>(1, mc.n_samples / kBatches);
  struct Moments {
    double sp = 0.0;
    double s2 = 0.0;
  };
  auto parts = map_chunks<Moments>(per * kBatches, per, mc.workers,
                                   [&](std::size_t b, std::size_t e, std::size_t) {
    Moments m;
    const GffSampler sampler(f.cutoff_ptr(), mc.seed, 0);
    FieldCoeffs zc(f.cutoff_ptr());
    for (std::size_t s = b; s < e; ++s) {
      RandomStream stream(mc.seed, s);
      sampler.fill(zc, stream);
      const double v = h(n, white_noise_pairing(zc, f));
      m.sp += std::pow(std::abs(v), p);
      m.s2 += v * v;
    }
    return m;
  });
  std::vector<double> ratios;
  for (const auto& m : parts) ratios.push_back(std::pow(m.sp / per, 1.0 / p) / std::sqrt(m.s2 / per));
  out.empirical_ratio = mean_se(ratios);
  out.pass = out.quadrature_ratio <= out.bound * (1.0 + 1e-12) &&
             out.empirical_ratio.value <= out.bound + z * out.empirical_ratio.se;
  return out;
}

struct ZnEstimateRow {
  int cutoff = 0;
  int n = 0;
  double measured = 0.0;
  double bound = 0.0;
};

struct ZnEstimateReport {
  std::vector<ZnEstimateRow> rows;
  /// Fitted constant C per ladder cutoff.
  std::vector<double> constants;
  bool pass = false;
};

/// Squared right-hand side of the L^2 moment bound for Wick powers with p = 2:
/// C^2 n! { alpha^{-2} ((1+eps)/(4 pi alpha))^{n-1} n! + C^n ((1+eps)/eps)^{n-1} }.
inline double zn_bound_sq(double c, int n, double alpha, double eps) {
  double fact = 1.0;
  for (int m = 2; m <= n; ++m) fact *= m;
  const double t1 = std::pow(alpha, -2.0) * std::pow((1.0 + eps) / (4.0 * kPi * alpha), n - 1) * fact;
  const double t2 = std::pow(c, n) * std::pow((1.0 + eps) / eps, n - 1);
  return c * c * fact * (t1 + t2);
}

/// Fits the smallest C making E||Phi_{n,Q(N)}||^2_{H^{-alpha}} <= bound for all
/// n <= n_max, per cutoff on the ladder; passes when every fit is finite and
/// the constant stays within a factor 2 along the ladder.
inline ZnEstimateReport zn_estimate_check(double alpha, double eps, int n_max, const std::vector<int>& ladder) {
  ZnEstimateReport rep;
  for (int cut : ladder) {
    const auto c = CutoffSet::square(cut);
    std::vector<double> measured;
    for (int n = 1; n <= n_max; ++n) measured.push_back(wick_norm_sq_exact(n, alpha, c));
    auto ok = [&](double cc) {
      for (int n = 1; n <= n_max; ++n)
        if (measured[static_cast<std::size_t>(n - 1)] > zn_bound_sq(cc, n, alpha, eps)) return false;
      return true;
    };
    double lo = 1e-8;
    double hi = 1e8;
    if (!ok(hi)) {
      rep.constants.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    for (int it = 0; it < 200; ++it) {
      const double mid = std::sqrt(lo * hi);
      (ok(mid) ? hi : lo) = mid;
    }
    rep.constants.push_back(hi);
    for (int n = 1; n <= n_max; ++n)
      rep.rows.push_back({cut, n, measured[static_cast<std::size_t>(n - 1)], zn_bound_sq(hi, n, alpha, eps)});
  }
  rep.pass = true;
  for (double c : rep.constants)
    if (!std::isfinite(c) || c > 2.0 * rep.constants.front()) rep.pass = false;
  return rep;
}

struct WickNormRow {
  int n = 0;
  int i1 = 0;
  int i2 = 0;
  Estimate measured;
  double target = 0.0;
  bool pass = false;
};

/// E[Phi_{n,Lambda}(x)^2] at the given grid nodes against n! rho^(2n), n = 1..n_max.
/// Sample s uses stream (seed, s).
inline std::vector<WickNormRow> wick_norm_check(int n_max, const CutoffPtr& cutoff, int n_g,
                                                const std::vector<std::pair<int, int>>& nodes,
                                                const MonteCarloOptions& mc, double z = 4.0) {
  detail::check_order(n_max, kDefaultMaxOrder);
  if (n_max < 1) throw ParameterOutOfRange("wick_norm_check needs n_max >= 1");
  if (mc.n_samples < 2) throw ParameterOutOfRange("wick_norm_check needs at least two samples");
  require_nyquist(n_g, cutoff->max_norm(), "wick_norm_check");
  for (auto [i1, i2] : nodes)
    if (i1 < 0 || i2 < 0 || i1 >= n_g || i2 >= n_g)
      throw ParameterOutOfRange("grid node outside the " + std::to_string(n_g) + " grid");
  const double r = rho(*cutoff);
  const std::size_t cells = static_cast<std::size_t>(n_max) * nodes.size();
  using Partial = std::vector<MeanAccumulator>;
  const auto parts = map_chunks<Partial>(mc.n_samples, mc.chunk, mc.workers,
                                         [&](std::size_t b, std::size_t e, std::size_t) {
    Partial acc(cells);
    const GffSampler sampler(cutoff, mc.seed, 0);
    FieldCoeffs zc(cutoff);
    for (std::size_t s = b; s < e; ++s) {
      RandomStream stream(mc.seed, s);
      sampler.fill(zc, stream);
      const auto ladder = wick_power_ladder(synthesize(zc, n_g), r, n_max);
      for (int n = 1; n <= n_max; ++n)
        for (std::size_t p = 0; p < nodes.size(); ++p) {
          const double v = ladder[n](nodes[p].first, nodes[p].second);
          acc[(n - 1) * nodes.size() + p].add(v * v);
        }
    }
    return acc;
  });
  Partial total(cells);
  for (const auto& part : parts)
    for (std::size_t c = 0; c < cells; ++c) total[c].merge(part[c]);
  std::vector<WickNormRow> rows;
  double fact = 1.0;
  for (int n = 1; n <= n_max; ++n) {
    fact *= n;
    for (std::size_t p = 0; p < nodes.size(); ++p) {
      const auto& a = total[(n - 1) * nodes.size() + p];
      WickNormRow row{n, nodes[p].first, nodes[p].second, {a.mean, a.se()}, fact * std::pow(r, 2 * n), false};
      row.pass = agrees(row.measured, row.target, z);
      rows.push_back(row);
    }
  }
  return rows;
}

struct WickCovarianceRow {
  int n = 0;
  std::string f;
  std::string g;
  Estimate measured;
  double exact = 0.0;
  bool pass = false;
};

/// E[(Phi_{n,outer}, f)(Phi_{n,inner}, g)] by Monte Carlo against wick_covariance_exact,
/// for n = 1..n_max and f, g in {1, e_(1,0)}.
inline std::vector<WickCovarianceRow> wick_covariance_check(int n_max, const CutoffPtr& inner_set,
                                                            const CutoffPtr& outer_set,
                                                            const MonteCarloOptions& mc, double z = 4.0) {
  detail::check_order(n_max, kDefaultMaxOrder);
  if (!inner_set->is_subset_of(*outer_set))
    throw ParameterOutOfRange("covariance check needs nested cutoffs");
  if (mc.n_samples < 2) throw ParameterOutOfRange("wick_covariance_check needs at least two samples");
  const auto q1 = CutoffSet::square(1);
  const FieldCoeffs tests[2] = {FieldCoeffs::basis(q1, {0, 0}, kTwoPi), FieldCoeffs::basis(q1, {1, 0})};
  const char* names[2] = {"1", "e_1_0"};
  const int n_g = grid_above(n_max * outer_set->max_norm() + 1);
  const double r_in = rho(*inner_set);
  const double r_out = rho(*outer_set);
  const std::size_t cells = static_cast<std::size_t>(n_max) * 4;
  using Partial = std::vector<MeanAccumulator>;
  const auto parts = map_chunks<Partial>(mc.n_samples, mc.chunk, mc.workers,
                                         [&](std::size_t b, std::size_t e, std::size_t) {
    Partial acc(cells);
    const GffSampler sampler(outer_set, mc.seed, 0);
    FieldCoeffs zc(outer_set);
    for (std::size_t s = b; s < e; ++s) {
      RandomStream stream(mc.seed, s);
      sampler.fill(zc, stream);
      const auto lo = wick_power_ladder(eval_projected(zc, inner_set, n_g), r_in, n_max);
      const auto hi = wick_power_ladder(synthesize(zc, n_g), r_out, n_max);
      for (int n = 1; n <= n_max; ++n) {
        double ph[2], pl[2];
        for (int t = 0; t < 2; ++t) {
          ph[t] = inner(analyze(hi[n], q1), tests[t]);
          pl[t] = inner(analyze(lo[n], q1), tests[t]);
        }
        for (int t = 0; t < 2; ++t)
          for (int u = 0; u < 2; ++u) acc[(n - 1) * 4 + 2 * t + u].add(ph[t] * pl[u]);
      }
    }
    return acc;
  });
  Partial total(cells);
  for (const auto& part : parts)
    for (std::size_t c = 0; c < cells; ++c) total[c].merge(part[c]);
  std::vector<WickCovarianceRow> rows;
  for (int n = 1; n <= n_max; ++n)
    for (int t = 0; t < 2; ++t)
      for (int u = 0; u < 2; ++u) {
        const auto& a = total[(n - 1) * 4 + 2 * t + u];
        WickCovarianceRow row{n, names[t], names[u], {a.mean, a.se()},
                              wick_covariance_exact(n, inner_set, tests[t], tests[u]), false};
        row.pass = agrees(row.measured, row.exact, z);
        rows.push_back(row);
      }
  return rows;
}

}  // namespace sqfield
