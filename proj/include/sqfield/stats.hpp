#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace sqfield {

/// Running mean and variance (Welford), mergeable in a fixed order.
struct MeanAccumulator {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    count += 1.0;
    const double d = x - mean;
    mean += d / count;
    m2 += d * (x - mean);
  }

  void merge(const MeanAccumulator& o) {
    if (o.count == 0.0) return;
    if (count == 0.0) {
      *this = o;
      return;
    }
    const double total = count + o.count;
    const double d = o.mean - mean;
    mean += d * o.count / total;
    m2 += o.m2 + d * d * count * o.count / total;
    count = total;
  }

  double variance() const { return count > 1.0 ? m2 / (count - 1.0) : 0.0; }
  double se() const { return count > 1.0 ? std::sqrt(variance() / count) : 0.0; }
};

struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

/// |a - b| <= z * sqrt(se_a^2 + se_b^2).
inline bool agrees(Estimate a, Estimate b, double z = 4.0) {
  return std::abs(a.value - b.value) <= z * std::hypot(a.se, b.se);
}
inline bool agrees(Estimate a, double exact, double z = 4.0) {
  return std::abs(a.value - exact) <= z * a.se;
}

/// Mean and standard error of independent values (e.g. replica means).
inline Estimate mean_se(std::span<const double> xs) {
  MeanAccumulator acc;
  for (double x : xs) acc.add(x);
  return {acc.mean, acc.se()};
}

/// Self-normalized weights from log-weights: w_i = exp(l_i - max l).
struct NormalizedWeights {
  std::vector<double> w;
  double sum = 0.0;
  double sum_sq = 0.0;
  double log_shift = 0.0;

  double ess() const { return sum > 0.0 ? sum * sum / sum_sq : 0.0; }
};

inline NormalizedWeights normalize_log_weights(std::span<const double> log_w) {
  NormalizedWeights out;
  out.log_shift = -std::numeric_limits<double>::infinity();
  for (double l : log_w) out.log_shift = std::max(out.log_shift, l);
  out.w.resize(log_w.size());
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    out.w[i] = std::exp(log_w[i] - out.log_shift);
    out.sum += out.w[i];
    out.sum_sq += out.w[i] * out.w[i];
  }
  return out;
}

/// sum w f / sum w with the delta-method standard error
/// (sum w^2 (f - mu)^2)^{1/2} / sum w.
inline Estimate weighted_mean(const NormalizedWeights& nw, std::span<const double> f) {
  double swf = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) swf += nw.w[i] * f[i];
  const double mu = swf / nw.sum;
  double s2 = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double d = nw.w[i] * (f[i] - mu);
    s2 += d * d;
  }
  return {mu, std::sqrt(s2) / nw.sum};
}

inline double normal_cdf(double x, double sd = 1.0) {
  return 0.5 * std::erfc(-x / (sd * std::numbers::sqrt2));
}

/// sup_x |F_n(x) - F(x)| for the sample (sorted in place).
template <class Cdf>
double ks_statistic(std::vector<double>& xs, Cdf&& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

/// P(D_n > d) from the Kolmogorov limit law with Stephens' finite-n correction.
inline double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

}  // namespace sqfield
