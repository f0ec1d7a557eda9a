#pragma once

#include <cmath>
#include <cstdint>

#include "sqfield/rng.hpp"
#include "sqfield/torus.hpp"

namespace sqfield {

/// Pointwise standard deviation of the cutoff field: (1/2pi) (sum_k 1/lambda_k)^(1/2).
inline double rho(const CutoffSet& cutoff) {
  if (!cutoff.contains({0, 0})) throw ParameterOutOfRange("cutoff must contain the zero mode");
  double s = 0.0;
  for (double lam : cutoff.lambdas()) s += 1.0 / lam;
  return std::sqrt(s) / kTwoPi;
}

/// H^{-1} norm of a dual element f: (sum_k f_k^2 / lambda_k)^(1/2).
inline double dual_norm(const FieldCoeffs& f) { return sobolev_norm(f, -1.0); }

/// White-noise function W_f(z) = <z, f>.
inline double white_noise_pairing(const FieldCoeffs& z, const FieldCoeffs& f) {
  return inner(z, f);
}

/// eta_{Lambda,x} with coefficients e_k(x) / rho; unit H^{-1} norm.
struct WhiteNoiseDirection {
  CutoffPtr cutoff;
  double x1 = 0.0;
  double x2 = 0.0;
  double normalizer = 1.0;
  FieldCoeffs coeffs;

  WhiteNoiseDirection(CutoffPtr c, double y1, double y2)
      : cutoff(std::move(c)), x1(y1), x2(y2), normalizer(rho(*cutoff)), coeffs(cutoff) {
    for (std::size_t i = 0; i < coeffs.size(); ++i)
      coeffs[i] = basis_value(cutoff->member(i), x1, x2) / normalizer;
  }

  double dual_norm() const { return sqfield::dual_norm(coeffs); }
};

/// Draws <z, e_k> ~ N(0, 1/lambda_k) independently over the cutoff.
class GffSampler {
 public:
  GffSampler(CutoffPtr cutoff, std::uint64_t seed, std::uint64_t stream_id)
      : cutoff_(std::move(cutoff)), stream_(seed, stream_id) {
    sd_.reserve(cutoff_->size());
    for (double lam : cutoff_->lambdas()) sd_.push_back(1.0 / std::sqrt(lam));
  }

  const CutoffSet& cutoff() const { return *cutoff_; }
  const CutoffPtr& cutoff_ptr() const { return cutoff_; }
  RandomStream& stream() { return stream_; }

  FieldCoeffs sample() {
    FieldCoeffs z(cutoff_);
    fill(z);
    return z;
  }

  void fill(FieldCoeffs& z) { fill(z, stream_); }

  /// Draws from an external stream; the sampler's own stream is untouched.
  void fill(FieldCoeffs& z, RandomStream& stream) const {
    for (std::size_t i = 0; i < sd_.size(); ++i) z[i] = sd_[i] * stream.normal();
  }

 private:
  CutoffPtr cutoff_;
  RandomStream stream_;
  std::vector<double> sd_;
};

/// Grid values of Pi_Lambda z.
inline GridField eval_projected(const FieldCoeffs& z, const CutoffPtr& cutoff, int n_g) {
  if (z.cutoff_ptr() == cutoff) return synthesize(z, n_g);
  return synthesize(project(z, cutoff), n_g);
}

}  // namespace sqfield
