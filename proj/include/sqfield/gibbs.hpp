#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sqfield/errors.hpp"
#include "sqfield/free_field.hpp"
#include "sqfield/green.hpp"
#include "sqfield/model.hpp"
#include "sqfield/parallel.hpp"
#include "sqfield/rng.hpp"
#include "sqfield/stats.hpp"

namespace sqfield {

inline constexpr double kMinEss = 10.0;

struct ProposalOptions {
  double half_range = 100.0;  // zero-mode table covers [-half_range, half_range]
  int cells = 4000;
  double floor = 0.25;  // lower bound on P_k / lambda_k
};

/// Importance proposal expanded around constant fields. The zero mode z_0 is
/// drawn from a tabulated density proportional to
///   exp(-beta V(z_0 e_0) - z_0^2 / 2) prod_{k != 0} (lambda_k / P_k(z_0))^(1/2),
/// the other modes independently from N(0, 1 / P_k(z_0)) with
/// P_k = lambda_k + beta V''(z_0 / 2 pi), the curvature of V at the constant field.
/// The default-constructed proposal is mu_0 itself.
class ImportanceProposal {
 public:
  static ImportanceProposal free_field(const CutoffPtr& cutoff) {
    ImportanceProposal q;
    q.cutoff_ = cutoff;
    q.beta_ = 0.0;
    return q;
  }

  static ImportanceProposal constant_field(const Potential& pot, double beta, const ProposalOptions& opt = {}) {
    if (!(beta >= 0.0)) throw ParameterOutOfRange("beta must be nonnegative");
    if (opt.cells < 2 || !(opt.half_range > 0.0) || !(opt.floor > 0.0))
      throw ParameterOutOfRange("invalid proposal table options");
    ImportanceProposal q;
    q.cutoff_ = pot.model().cutoff;
    q.beta_ = beta;
    q.a_ = pot.model().a;
    q.kind_ = pot.model().kind;
    q.rho_ = pot.rho_value();
    q.floor_ = opt.floor;
    q.lo_ = -opt.half_range;
    q.width_ = 2.0 * opt.half_range / opt.cells;
    q.zero_ = q.cutoff_->index_of({0, 0});
    if (beta == 0.0 || q.a_ == 0.0) return free_field(q.cutoff_);
    std::vector<double> ell(static_cast<std::size_t>(opt.cells));
    double top = -std::numeric_limits<double>::infinity();
    for (int g = 0; g < opt.cells; ++g) {
      const double c = q.lo_ + (g + 0.5) * q.width_;
      double l = -beta * kTorusArea * q.density(c) - 0.5 * c * c;
      const double kap = q.curvature(c);
      for (std::size_t k = 0; k < q.cutoff_->size(); ++k)
        if (static_cast<int>(k) != q.zero_) l -= 0.5 * std::log(q.precision(k, kap) / q.cutoff_->lambda(k));
      ell[static_cast<std::size_t>(g)] = l;
      top = std::max(top, l);
    }
    q.cdf_.assign(ell.size() + 1, 0.0);
    for (std::size_t g = 0; g < ell.size(); ++g) q.cdf_[g + 1] = q.cdf_[g] + std::exp(ell[g] - top);
    q.log_cell_.resize(ell.size());
    const double log_norm = std::log(q.cdf_.back() * q.width_);
    for (std::size_t g = 0; g < ell.size(); ++g) q.log_cell_[g] = ell[g] - top - log_norm;
    return q;
  }

  const CutoffPtr& cutoff() const { return cutoff_; }
  bool is_free_field() const { return cdf_.empty(); }
  double beta() const { return beta_; }

  void draw(FieldCoeffs& z, RandomStream& s) const {
    const auto lam = cutoff_->lambdas();
    if (is_free_field()) {
      for (std::size_t k = 0; k < z.size(); ++k) z[k] = s.normal() / std::sqrt(lam[k]);
      return;
    }
    const double u = s.uniform() * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    const auto g = std::clamp<std::ptrdiff_t>(it - cdf_.begin() - 1, 0,
                                              static_cast<std::ptrdiff_t>(log_cell_.size()) - 1);
    const double c = lo_ + (static_cast<double>(g) + s.uniform()) * width_;
    const double kap = curvature(c);
    for (std::size_t k = 0; k < z.size(); ++k)
      z[k] = static_cast<int>(k) == zero_ ? c : s.normal() / std::sqrt(precision(k, kap));
  }

  /// log d(mu_0)/dq at z; -inf outside the support of the zero-mode table.
  double log_ratio(const FieldCoeffs& z) const {
    if (is_free_field()) return 0.0;
    const auto lam = cutoff_->lambdas();
    const double c = z[static_cast<std::size_t>(zero_)];
    const double pos = (c - lo_) / width_;
    if (!(pos >= 0.0 && pos < static_cast<double>(log_cell_.size())))
      return -std::numeric_limits<double>::infinity();
    const double kap = curvature(c);
    double out = -0.5 * c * c - 0.5 * std::log(kTwoPi) - log_cell_[static_cast<std::size_t>(pos)];
    for (std::size_t k = 0; k < z.size(); ++k) {
      if (static_cast<int>(k) == zero_) continue;
      const double p = precision(k, kap);
      out += -0.5 * lam[k] * z[k] * z[k] + 0.5 * std::log(lam[k]) + 0.5 * p * z[k] * z[k] - 0.5 * std::log(p);
    }
    return out;
  }

 private:
  // Wick density at the constant field with zero mode c (phi = c / 2 pi).
  double density(double c) const {
    const double phi = c / kTwoPi;
    if (kind_ == ModelKind::Exp) return std::exp(a_ * phi - 0.5 * a_ * a_ * rho_ * rho_);
    return std::exp(0.5 * a_ * a_ * rho_ * rho_) * std::cos(a_ * phi);
  }
  double curvature(double c) const {
    const double phi = c / kTwoPi;
    const double v2 = kind_ == ModelKind::Exp
                          ? a_ * a_ * density(c)
                          : -a_ * a_ * std::exp(0.5 * a_ * a_ * rho_ * rho_) * std::cos(a_ * phi);
    return beta_ * v2;
  }
  double precision(std::size_t k, double kap) const {
    const double l = cutoff_->lambda(k);
    return std::max(l + kap, floor_ * l);
  }

  CutoffPtr cutoff_;
  double beta_ = 0.0;
  double a_ = 0.0;
  ModelKind kind_ = ModelKind::Exp;
  double rho_ = 0.0;
  double floor_ = 0.25;
  double lo_ = 0.0;
  double width_ = 1.0;
  int zero_ = 0;
  std::vector<double> cdf_;
  std::vector<double> log_cell_;
};

struct GibbsOptions {
  std::size_t n_samples = 10000;
  std::uint64_t seed = 1;
  int workers = 1;
  bool adaptive = false;  // constant-field proposal instead of mu_0
  double beta = 1.0;      // target exp(-beta V) mu_0
  ProposalOptions proposal;
  std::size_t chunk = 256;
};

/// Independent draws z_i ~ q with V(z_i), optional gradients and log d(mu_0)/dq.
struct SampleSet {
  std::vector<FieldCoeffs> z;
  std::vector<double> v;
  std::vector<FieldCoeffs> grad;
  std::vector<double> log_ratio;

  std::size_t size() const { return z.size(); }

  std::vector<double> log_weights(double beta) const {
    std::vector<double> lw(size());
    for (std::size_t i = 0; i < size(); ++i) lw[i] = -beta * v[i] + log_ratio[i];
    return lw;
  }
};

/// Sample i uses stream (seed, stream_base + i), so the set does not depend on the worker count.
inline SampleSet draw_samples(const Potential& pot, const ImportanceProposal& q, std::size_t n,
                              std::uint64_t seed, std::uint64_t stream_base, int workers,
                              bool with_grad, std::size_t chunk = 256) {
  SampleSet s;
  s.z.assign(n, FieldCoeffs(pot.model().cutoff));
  s.v.resize(n);
  s.log_ratio.resize(n);
  if (with_grad) s.grad.resize(n);
  map_chunks<int>(n, chunk, workers, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t i = begin; i < end; ++i) {
      RandomStream rs(seed, stream_base + i);
      q.draw(s.z[i], rs);
      s.log_ratio[i] = q.log_ratio(s.z[i]);
      if (with_grad) {
        auto ev = pot.evaluate(s.z[i]);
        s.v[i] = ev.value;
        s.grad[i] = std::move(ev.grad);
      } else {
        s.v[i] = pot.value(s.z[i]);
      }
    }
    return 0;
  });
  return s;
}

inline ImportanceProposal make_proposal(const Potential& pot, const GibbsOptions& opt) {
  if (opt.adaptive) return ImportanceProposal::constant_field(pot, opt.beta, opt.proposal);
  return ImportanceProposal::free_field(pot.model().cutoff);
}

/// Samples with self-normalized weights for exp(-beta V) mu_0.
class WeightedEnsemble {
 public:
  WeightedEnsemble(const ModelSpec& m, const GibbsOptions& opt, bool with_grad)
      : potential_(m), beta_(opt.beta) {
    if (opt.n_samples < 100) throw ParameterOutOfRange("n_samples must be >= 100");
    m.validate_measure();
    proposal_ = make_proposal(potential_, opt);
    samples_ = draw_samples(potential_, proposal_, opt.n_samples, opt.seed, 0, opt.workers, with_grad,
                            opt.chunk);
    weights_ = normalize_log_weights(samples_.log_weights(beta_));
    if (weights_.ess() < kMinEss)
      throw DegenerateWeights("effective sample size " + std::to_string(weights_.ess()) + " < " +
                              std::to_string(kMinEss));
  }

  const Potential& potential() const { return potential_; }
  const ModelSpec& model() const { return potential_.model(); }
  const SampleSet& samples() const { return samples_; }
  const NormalizedWeights& weights() const { return weights_; }
  const ImportanceProposal& proposal() const { return proposal_; }
  double ess() const { return weights_.ess(); }
  std::size_t size() const { return samples_.size(); }

  Estimate mean(std::span<const double> f) const { return weighted_mean(weights_, f); }

  /// Weighted mean of f(i) over sample indices.
  template <class F>
  Estimate mean_of(F&& f) const {
    std::vector<double> vals(size());
    for (std::size_t i = 0; i < size(); ++i) vals[i] = f(i);
    return mean(vals);
  }

 private:
  Potential potential_;
  double beta_;
  ImportanceProposal proposal_;
  SampleSet samples_;
  NormalizedWeights weights_;
};

struct WeightedEstimate {
  double value = 0.0;
  double se = 0.0;
  double ess = 0.0;
};

/// Self-normalized estimate of E_mu[obs] with mu_0 as proposal (weights e^{-V}).
inline WeightedEstimate importance_estimate(const std::function<double(const FieldCoeffs&)>& obs,
                                            const ModelSpec& m, const GibbsOptions& opt) {
  GibbsOptions o = opt;
  o.adaptive = false;
  const WeightedEnsemble ens(m, o, false);
  const auto e = ens.mean_of([&](std::size_t i) { return obs(ens.samples().z[i]); });
  return {e.value, e.se, ens.ess()};
}

struct PartitionEstimate {
  double beta = 1.0;
  double log_z = 0.0;
  double rel_se = 0.0;  // se(Z) / Z
  double ess = 0.0;
  double min_weight = 0.0;  // raw weights, only meaningful for the mu_0 proposal
  double max_weight = 0.0;
  bool free_field_proposal = true;

  double z() const { return std::exp(log_z); }
  double se() const { return rel_se * z(); }
};

/// Z_beta = E_{mu_0}[exp(-beta V)] as the plain mean of d(mu_0)/dq exp(-beta V) over q.
inline PartitionEstimate partition_function(const ModelSpec& m, const GibbsOptions& opt) {
  m.validate_measure();
  if (opt.n_samples < 100) throw ParameterOutOfRange("n_samples must be >= 100");
  const Potential pot(m);
  const ImportanceProposal q = make_proposal(pot, opt);
  const auto s = draw_samples(pot, q, opt.n_samples, opt.seed, 0, opt.workers, false, opt.chunk);
  const auto lw = s.log_weights(opt.beta);
  const auto nw = normalize_log_weights(lw);
  PartitionEstimate out;
  out.beta = opt.beta;
  out.free_field_proposal = q.is_free_field();
  MeanAccumulator acc;
  for (double w : nw.w) acc.add(w);
  if (!(acc.mean > 0.0)) throw DegenerateWeights("all partition-function weights vanish");
  out.log_z = nw.log_shift + std::log(acc.mean);
  out.rel_se = acc.se() / acc.mean;
  out.ess = nw.ess();
  out.min_weight = std::numeric_limits<double>::infinity();
  out.max_weight = 0.0;
  for (double l : lw) {
    out.min_weight = std::min(out.min_weight, std::exp(l));
    out.max_weight = std::max(out.max_weight, std::exp(l));
  }
  if (out.ess < kMinEss)
    throw DegenerateWeights("partition function ESS " + std::to_string(out.ess) + " < " +
                            std::to_string(kMinEss));
  return out;
}

/// Mean of V under mu_0 on the grid: the grid average of exp_Lambda is exactly 1.
inline double exp_potential_mean() { return kTorusArea; }

struct FroehlichCheck {
  Estimate measured;
  double exact = 0.0;
  bool pass = false;
};

/// E_{mu_0}[(cos_Lambda(az),1)^2 + (sin_Lambda(az),1)^2] against
/// 4 pi^2 int exp(a^2 K_Lambda(u)) du, both on the model grid.
inline FroehlichCheck froehlich_check(const ModelSpec& m, std::size_t n_samples, std::uint64_t seed,
                                      int workers, double z = 4.0) {
  m.validate();
  const int n_g = m.grid();
  const double r = rho(*m.cutoff);
  const GffSampler gff(m.cutoff, seed, 0);
  const auto parts =
      map_chunks<MeanAccumulator>(n_samples, 256, workers, [&](std::size_t b, std::size_t e, std::size_t) {
        MeanAccumulator acc;
        FieldCoeffs zc(m.cutoff);
        for (std::size_t i = b; i < e; ++i) {
          RandomStream rs(seed, i);
          gff.fill(zc, rs);
          const GridField phi = synthesize(zc, n_g);
          const double c = integrate_grid(wick_trig_grid(phi, m.a, r, false));
          const double s = integrate_grid(wick_trig_grid(phi, m.a, r, true));
          acc.add(c * c + s * s);
        }
        return acc;
      });
  MeanAccumulator all;
  for (const auto& p : parts) all.merge(p);
  GridField k = kernel_grid(1.0, m.cutoff, n_g);
  for (double& v : k.values) v = std::exp(m.a * m.a * v);
  FroehlichCheck out;
  out.measured = {all.mean, all.se()};
  out.exact = kTorusArea * integrate_grid(k);
  out.pass = agrees(out.measured, out.exact, z);
  return out;
}

/// F(z) = f(<z, phi_1>, ..., <z, phi_n>) with
/// f(y) = (p0 + p.y) cos(omega.y + theta) + y.S.y / 2.
class CylinderObservable {
 public:
  CylinderObservable(std::vector<FieldCoeffs> dirs, double p0, std::vector<double> p,
                     std::vector<double> omega, double theta, std::vector<double> s)
      : dirs_(std::move(dirs)), p0_(p0), p_(std::move(p)), omega_(std::move(omega)), theta_(theta),
        s_(std::move(s)) {
    const std::size_t n = dirs_.size();
    if (n == 0 || p_.size() != n || omega_.size() != n || s_.size() != n * n)
      throw ParameterOutOfRange("cylinder observable: inconsistent sizes");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (s_[i * n + j] != s_[j * n + i]) throw ParameterOutOfRange("S must be symmetric");
    verify_derivatives();
  }

  static CylinderObservable constant(const CutoffPtr& cutoff, double c) {
    return CylinderObservable({FieldCoeffs::basis(cutoff, {0, 0})}, c, {0.0}, {0.0}, 0.0, {0.0});
  }

  /// F(z) = <z, phi>.
  static CylinderObservable linear(const FieldCoeffs& phi) {
    return CylinderObservable({phi}, 0.0, {1.0}, {0.0}, 0.0, {0.0});
  }

  /// Random member of the family with 1 or 2 directions built from modes of
  /// max-norm <= max_mode, each scaled to unit variance under mu_0.
  static CylinderObservable random(const CutoffPtr& cutoff, int max_mode, RandomStream& rs) {
    std::vector<WaveIndex> low;
    for (auto k : cutoff->members())
      if (k.max_norm() <= max_mode) low.push_back(k);
    auto pick = [&] { return low[static_cast<std::size_t>(rs.uniform() * low.size()) % low.size()]; };
    const std::size_t n = rs.uniform() < 0.5 ? 1 : 2;
    std::vector<FieldCoeffs> dirs;
    for (std::size_t j = 0; j < n; ++j) {
      FieldCoeffs d(cutoff);
      for (int t = 0; t < 2; ++t) {
        const WaveIndex k = pick();
        d.set(k, d.at(k) + rs.normal());
      }
      d *= 1.0 / std::max(1e-12, dual_norm(d));
      dirs.push_back(std::move(d));
    }
    std::vector<double> p(n), omega(n), s(n * n);
    for (std::size_t j = 0; j < n; ++j) {
      p[j] = 0.5 * rs.normal();
      omega[j] = rs.normal();
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) s[i * n + j] = s[j * n + i] = 0.3 * rs.normal();
    const double p0 = 0.5 + rs.uniform();
    const double theta = kTwoPi * rs.uniform();
    return CylinderObservable(std::move(dirs), p0, std::move(p), std::move(omega), theta, std::move(s));
  }

  std::size_t arity() const { return dirs_.size(); }
  const std::vector<FieldCoeffs>& directions() const { return dirs_; }

  std::vector<double> arguments(const FieldCoeffs& z) const {
    std::vector<double> y(arity());
    for (std::size_t j = 0; j < y.size(); ++j) y[j] = inner(z, dirs_[j]);
    return y;
  }

  double f(std::span<const double> y) const {
    const double lin = linear_part(y);
    const double u = phase(y);
    double quad = 0.0;
    const std::size_t n = arity();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) quad += y[i] * s_[i * n + j] * y[j];
    return lin * std::cos(u) + 0.5 * quad;
  }

  void gradient(std::span<const double> y, std::span<double> g) const {
    const double lin = linear_part(y);
    const double c = std::cos(phase(y)), sn = std::sin(phase(y));
    const std::size_t n = arity();
    for (std::size_t i = 0; i < n; ++i) {
      double sy = 0.0;
      for (std::size_t j = 0; j < n; ++j) sy += s_[i * n + j] * y[j];
      g[i] = p_[i] * c - lin * omega_[i] * sn + sy;
    }
  }

  /// Row-major n x n.
  void hessian(std::span<const double> y, std::span<double> h) const {
    const double lin = linear_part(y);
    const double c = std::cos(phase(y)), sn = std::sin(phase(y));
    const std::size_t n = arity();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        h[i * n + j] = -(p_[i] * omega_[j] + p_[j] * omega_[i]) * sn -
                       lin * omega_[i] * omega_[j] * c + s_[i * n + j];
  }

  double operator()(const FieldCoeffs& z) const { return f(arguments(z)); }

  /// D_H F(z) = sum_j d_j f phi_j over the cutoff of z.
  FieldCoeffs dh(const FieldCoeffs& z) const {
    const auto y = arguments(z);
    std::vector<double> g(arity());
    gradient(y, g);
    FieldCoeffs out(z.cutoff_ptr());
    for (std::size_t j = 0; j < arity(); ++j) out += g[j] * project(dirs_[j], z.cutoff_ptr());
    return out;
  }

 private:
  double linear_part(std::span<const double> y) const {
    double v = p0_;
    for (std::size_t j = 0; j < y.size(); ++j) v += p_[j] * y[j];
    return v;
  }
  double phase(std::span<const double> y) const {
    double v = theta_;
    for (std::size_t j = 0; j < y.size(); ++j) v += omega_[j] * y[j];
    return v;
  }

  // Richardson-extrapolated central differences at a few fixed points.
  void verify_derivatives() const {
    const std::size_t n = arity();
    RandomStream rs(0x5eed, n);
    auto richardson = [](auto&& fn, double x, double h) {
      const double d1 = (fn(x + h) - fn(x - h)) / (2.0 * h);
      const double d2 = (fn(x + 0.5 * h) - fn(x - 0.5 * h)) / h;
      return (4.0 * d2 - d1) / 3.0;
    };
    std::vector<double> y(n), g(n), hs(n * n), gt(n);
    for (int trial = 0; trial < 3; ++trial) {
      for (double& v : y) v = rs.normal();
      gradient(y, g);
      hessian(y, hs);
      for (std::size_t i = 0; i < n; ++i) {
        auto along = [&](double x) {
          auto yy = y;
          yy[i] = x;
          return f(yy);
        };
        const double fd = richardson(along, y[i], 1e-3);
        if (std::abs(fd - g[i]) > 1e-8 * std::max(1.0, std::abs(g[i])))
          throw ParameterOutOfRange("cylinder observable gradient fails finite-difference check");
        for (std::size_t j = 0; j < n; ++j) {
          auto grad_i = [&](double x) {
            auto yy = y;
            yy[j] = x;
            gradient(yy, gt);
            return gt[i];
          };
          const double fh = richardson(grad_i, y[j], 1e-3);
          if (std::abs(fh - hs[i * n + j]) > 1e-8 * std::max(1.0, std::abs(hs[i * n + j])))
            throw ParameterOutOfRange("cylinder observable Hessian fails finite-difference check");
        }
      }
    }
  }

  std::vector<FieldCoeffs> dirs_;
  double p0_;
  std::vector<double> p_;
  std::vector<double> omega_;
  double theta_;
  std::vector<double> s_;
};

/// b(mu; phi)(z) = sum_k phi_k b_k(z).
inline double drift_pairing(const FieldCoeffs& grad, const FieldCoeffs& phi) { return inner(grad, phi); }

/// <z, (1 - Delta) phi>.
inline double laplace_pairing(const FieldCoeffs& z, const FieldCoeffs& phi) {
  double s = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i)
    s += phi.cutoff().lambda(i) * phi[i] * z.at(phi.cutoff().member(i));
  return s;
}

struct IbpResult {
  Estimate residual;
  Estimate lhs;
  double ess = 0.0;
  bool pass = false;
};

/// E_mu[(D_H F, phi)] - E_mu[F (<z, (1 - Delta) phi> + b(mu; phi))], which vanishes exactly.
inline IbpResult ibp_residual(const CylinderObservable& F, const FieldCoeffs& phi,
                              const WeightedEnsemble& ens, double z = 4.0) {
  for (std::size_t i = 0; i < phi.size(); ++i)
    if (phi[i] != 0.0 && !ens.model().cutoff->contains(phi.cutoff().member(i)))
      throw ParameterOutOfRange("direction phi lies outside the model cutoff");
  const auto& s = ens.samples();
  if (s.grad.size() != s.size()) throw ParameterOutOfRange("ensemble was drawn without gradients");
  std::vector<double> r(ens.size()), l(ens.size());
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const auto& zi = s.z[i];
    l[i] = inner(F.dh(zi), phi);
    r[i] = l[i] - F(zi) * (laplace_pairing(zi, phi) + drift_pairing(s.grad[i], phi));
  }
  IbpResult out;
  out.residual = ens.mean(r);
  out.lhs = ens.mean(l);
  out.ess = ens.ess();
  out.pass = std::abs(out.residual.value) <= z * out.residual.se;
  return out;
}

/// L F(z) for the model of the ensemble, given the gradient b(z).
inline double generator_value(const CylinderObservable& F, const FieldCoeffs& z, const FieldCoeffs& b,
                              double gamma) {
  const std::size_t n = F.arity();
  const auto y = F.arguments(z);
  std::vector<double> g(n), h(n * n);
  F.gradient(y, g);
  F.hessian(y, h);
  const auto& cutoff = z.cutoff();
  std::vector<FieldCoeffs> ag;  // A^gamma phi_j
  for (const auto& d : F.directions()) {
    FieldCoeffs p = project(d, z.cutoff_ptr());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] *= std::pow(cutoff.lambda(i), -gamma);
    ag.push_back(std::move(p));
  }
  double second = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) second += h[i * n + j] * inner(ag[i], F.directions()[j]);
  double first = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double zpair = 0.0;  // <z, A^(gamma-1) phi_i>
    for (std::size_t k = 0; k < ag[i].size(); ++k) zpair += cutoff.lambda(k) * ag[i][k] * z[k];
    first += g[i] * (zpair + drift_pairing(b, ag[i]));
  }
  return 0.5 * second - 0.5 * first;
}

struct GeneratorResult {
  Estimate energy;        // (1/2) E[(A^gamma D_H F, D_H G)]
  Estimate minus_lf_g;    // -E[L F G]
  Estimate minus_lg_f;    // -E[L G F]
  Estimate diff_fg;       // paired difference energy - (-E[L F G])
  Estimate diff_gf;
  bool pass = false;
};

inline GeneratorResult generator_symmetry(const CylinderObservable& F, const CylinderObservable& G,
                                          const WeightedEnsemble& ens, double z = 4.0) {
  const auto& s = ens.samples();
  if (s.grad.size() != s.size()) throw ParameterOutOfRange("ensemble was drawn without gradients");
  const double gamma = ens.model().gamma;
  const std::size_t n = ens.size();
  std::vector<double> e(n), a(n), b(n), da(n), db(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& zi = s.z[i];
    const FieldCoeffs df = F.dh(zi), dg = G.dh(zi);
    double en = 0.0;
    for (std::size_t k = 0; k < df.size(); ++k)
      en += std::pow(zi.cutoff().lambda(k), -gamma) * df[k] * dg[k];
    e[i] = 0.5 * en;
    a[i] = -generator_value(F, zi, s.grad[i], gamma) * G(zi);
    b[i] = -generator_value(G, zi, s.grad[i], gamma) * F(zi);
    da[i] = e[i] - a[i];
    db[i] = e[i] - b[i];
  }
  GeneratorResult out;
  out.energy = ens.mean(e);
  out.minus_lf_g = ens.mean(a);
  out.minus_lg_f = ens.mean(b);
  out.diff_fg = ens.mean(da);
  out.diff_gf = ens.mean(db);
  auto ok = [&](Estimate d) { return std::abs(d.value) <= z * d.se || (d.se == 0.0 && d.value == 0.0); };
  out.pass = ok(out.diff_fg) && ok(out.diff_gf);
  return out;
}

/// p < (1 + 4 pi gamma / a^2) / 2.
inline double admissible_p_bound(double a, double gamma) {
  if (a == 0.0) return std::numeric_limits<double>::infinity();
  return 0.5 * (1.0 + 4.0 * kPi * gamma / (a * a));
}

struct DriftMomentRow {
  double p = 1.0;
  bool admissible = true;
  Estimate ou;           // E ||beta_OU||^{2p}
  Estimate interaction;  // E ||beta_int||^{2p}
};

/// ||beta_OU||^2 = sum lambda^(2 - delta - 2 gamma) z_k^2 and
/// ||beta_int||^2 = sum lambda^(-gamma) b_k^2, moments under the ensemble's measure.
inline std::vector<DriftMomentRow> drift_moment_estimate(const WeightedEnsemble& ens,
                                                         const std::vector<double>& ps) {
  const auto& m = ens.model();
  const auto& s = ens.samples();
  if (s.grad.size() != s.size()) throw ParameterOutOfRange("ensemble was drawn without gradients");
  const auto lam = m.cutoff->lambdas();
  std::vector<double> ou(ens.size()), in(ens.size());
  for (std::size_t i = 0; i < ens.size(); ++i) {
    double so = 0.0, si = 0.0;
    for (std::size_t k = 0; k < lam.size(); ++k) {
      so += std::pow(lam[k], 2.0 - m.delta - 2.0 * m.gamma) * s.z[i][k] * s.z[i][k];
      si += std::pow(lam[k], -m.gamma) * s.grad[i][k] * s.grad[i][k];
    }
    ou[i] = so;
    in[i] = si;
  }
  const double bound = admissible_p_bound(m.a, m.gamma);
  std::vector<DriftMomentRow> rows;
  for (double p : ps) {
    if (!(p >= 1.0)) throw ParameterOutOfRange("moment order p must be >= 1");
    std::vector<double> a(ens.size()), b(ens.size());
    for (std::size_t i = 0; i < ens.size(); ++i) {
      a[i] = std::pow(ou[i], p);
      b[i] = std::pow(in[i], p);
    }
    rows.push_back({p, p < bound, ens.mean(a), ens.mean(b)});
  }
  return rows;
}

/// sum_k lambda_k^-(delta + 2 gamma - 1): E_{mu_0} ||beta_OU||^2.
inline double ou_drift_second_moment_exact(const ModelSpec& m) {
  double s = 0.0;
  for (double l : m.cutoff->lambdas()) s += std::pow(l, -(m.delta + 2.0 * m.gamma - 1.0));
  return s;
}

}  // namespace sqfield
