#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sqfield/errors.hpp"
#include "sqfield/free_field.hpp"
#include "sqfield/model.hpp"
#include "sqfield/parallel.hpp"
#include "sqfield/rng.hpp"
#include "sqfield/stats.hpp"

namespace sqfield {

enum class Integrator { Euler, OuExact };

inline std::string to_string(Integrator i) { return i == Integrator::Euler ? "euler" : "ou-exact"; }

inline Integrator parse_integrator(const std::string& s) {
  if (s == "euler") return Integrator::Euler;
  if (s == "ou-exact" || s == "ou") return Integrator::OuExact;
  throw ParameterOutOfRange("unknown integrator '" + s + "' (expected euler or ou-exact)");
}

inline constexpr double kDefaultBlowupBound = 1e6;

/// 0.01 / lambda_max^(1 - gamma).
inline double default_step(const ModelSpec& m) {
  double lam_max = 1.0;
  for (double l : m.cutoff->lambdas()) lam_max = std::max(lam_max, l);
  return 0.01 / std::pow(lam_max, 1.0 - m.gamma);
}

struct IntegratorStats {
  std::uint64_t steps = 0;
  double max_drift_norm = 0.0;
  double max_field = 0.0;
};

struct TrajectoryState {
  double t = 0.0;
  FieldCoeffs z;
  RandomStream stream;
  IntegratorStats stats;
};

/// Drift, Euler-Maruyama and OU-exact steps of
///   dz_k = -1/2 [lambda_k^(1-gamma) z_k + lambda_k^(-gamma) b_k(z)] dt + lambda_k^(-gamma/2) dB_k.
class Langevin {
 public:
  explicit Langevin(ModelSpec m, double blowup_bound = kDefaultBlowupBound)
      : potential_(std::move(m)), bound_(blowup_bound) {
    const auto lam = model().cutoff->lambdas();
    for (double l : lam) {
      lin_.push_back(std::pow(l, 1.0 - model().gamma));
      noise_var_.push_back(std::pow(l, -model().gamma));
    }
  }

  const ModelSpec& model() const { return potential_.model(); }
  const Potential& potential() const { return potential_; }

  /// Drift from a precomputed gradient b.
  FieldCoeffs drift(const FieldCoeffs& z, const FieldCoeffs& b) const {
    FieldCoeffs d(model().cutoff);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = -0.5 * (lin_[i] * z[i] + noise_var_[i] * b[i]);
    return d;
  }
  FieldCoeffs drift(const FieldCoeffs& z) const { return drift(z, potential_.evaluate(z).grad); }

  void step(TrajectoryState& s, double h, Integrator kind, bool noise = true) const {
    step_with(s, potential_.evaluate(s.z), h, kind, noise);
  }

  /// One step from the state whose potential evaluation is already known.
  void step_with(TrajectoryState& s, const PotentialEval& ev, double h, Integrator kind,
                 bool noise = true) const {
    if (!(h > 0.0)) throw ParameterOutOfRange("step size must be positive");
    auto& z = s.z;
    double drift_sq = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double force = -0.5 * noise_var_[i] * ev.grad[i];
      const double d = -0.5 * lin_[i] * z[i] + force;
      drift_sq += d * d;
      const double xi = noise ? s.stream.normal() : 0.0;
      if (kind == Integrator::Euler) {
        z[i] += h * d + std::sqrt(h * noise_var_[i]) * xi;
      } else {
        const double c = 0.5 * lin_[i];
        const double decay = std::exp(-c * h);
        const double sd = std::sqrt(noise_var_[i] * -std::expm1(-2.0 * c * h) / (2.0 * c));
        z[i] = decay * z[i] - std::expm1(-c * h) / c * force + sd * xi;
      }
    }
    s.t += h;
    ++s.stats.steps;
    s.stats.max_drift_norm = std::max(s.stats.max_drift_norm, std::sqrt(drift_sq));
    s.stats.max_field = std::max(s.stats.max_field, ev.max_field);
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (!std::isfinite(z[i]) || std::abs(z[i]) > bound_)
        throw BlowupDetected("coefficient " + std::to_string(i) + " reached " + std::to_string(z[i]) +
                             " at t=" + std::to_string(s.t) + " (step " +
                             std::to_string(s.stats.steps) + ", max grid field " +
                             std::to_string(s.stats.max_field) + ")");
    }
  }

 private:
  Potential potential_;
  double bound_;
  std::vector<double> lin_;
  std::vector<double> noise_var_;
};

inline FieldCoeffs drift(const FieldCoeffs& z, const ModelSpec& m) { return Langevin(m).drift(z); }

inline void step_euler(TrajectoryState& s, const ModelSpec& m, double h) {
  Langevin(m).step(s, h, Integrator::Euler);
}

inline void step_ou_exact(TrajectoryState& s, const ModelSpec& m, double h) {
  Langevin(m).step(s, h, Integrator::OuExact);
}

/// Recorded quantities: z_k^2 for the listed modes, then optionally V and ||z||^2_{H^-delta}.
struct ObservablePanel {
  std::vector<WaveIndex> modes{{0, 0}, {1, 0}, {1, 1}};
  bool potential = true;
  bool sobolev = true;

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (auto k : modes) out.push_back("z2_" + std::to_string(k.k1) + "_" + std::to_string(k.k2));
    if (potential) out.push_back("V");
    if (sobolev) out.push_back("norm2_H-delta");
    return out;
  }
  std::size_t size() const { return modes.size() + (potential ? 1 : 0) + (sobolev ? 1 : 0); }

  void evaluate(const FieldCoeffs& z, double v, double delta, std::span<double> out) const {
    std::size_t j = 0;
    for (auto k : modes) {
      const double c = z.at(k);
      out[j++] = c * c;
    }
    if (potential) out[j++] = v;
    if (sobolev) {
      const double s = sobolev_norm(z, -delta);
      out[j++] = s * s;
    }
  }
};

enum class StartKind { Zero, FreeField };

struct SimulationOptions {
  double T = 10.0;
  double h = 0.0;  // 0: default_step
  int thin = 1;
  int n_replicas = 4;
  double burn_in = 0.0;
  Integrator integrator = Integrator::OuExact;
  StartKind start = StartKind::Zero;
  std::uint64_t seed = 1;
  int workers = 1;
  double blowup_bound = kDefaultBlowupBound;
  bool keep_series = false;
  bool keep_final = false;
};

struct SeriesRecord {
  int replica = 0;
  std::uint64_t step = 0;
  double t = 0.0;
  std::vector<double> values;
};

struct ReplicaResult {
  std::vector<MeanAccumulator> averages;
  IntegratorStats stats;
  std::vector<SeriesRecord> series;
  FieldCoeffs final_state;
};

struct SimulationResult {
  std::vector<std::string> names;
  double h = 0.0;
  std::vector<ReplicaResult> replicas;

  /// Mean over replicas of the per-replica time averages, SE from their spread.
  Estimate estimate(std::size_t j) const {
    std::vector<double> xs;
    for (const auto& r : replicas) xs.push_back(r.averages[j].mean);
    return mean_se(xs);
  }
};

/// Runs independent replicas; replica r draws from stream (seed, r).
inline SimulationResult simulate(const ModelSpec& m, const SimulationOptions& opt,
                                 const ObservablePanel& panel = {}) {
  if (!(opt.T > 0.0)) throw ParameterOutOfRange("simulation time T must be positive");
  if (opt.thin < 1) throw ParameterOutOfRange("thin must be >= 1");
  if (opt.n_replicas < 1) throw ParameterOutOfRange("n_replicas must be >= 1");
  if (opt.burn_in < 0.0 || opt.burn_in >= opt.T)
    throw ParameterOutOfRange("burn-in must lie in [0, T)");
  const Langevin lv(m, opt.blowup_bound);
  SimulationResult res;
  res.names = panel.names();
  res.h = opt.h > 0.0 ? opt.h : default_step(m);
  if (!(res.h > 0.0)) throw ParameterOutOfRange("step size must be positive");
  const auto n_steps = static_cast<std::uint64_t>(std::llround(opt.T / res.h));
  const auto burn_steps = static_cast<std::uint64_t>(std::llround(opt.burn_in / res.h));
  res.replicas.resize(static_cast<std::size_t>(opt.n_replicas));
  const GffSampler gff(m.cutoff, opt.seed, 0);

  parallel_for(res.replicas.size(), opt.workers, [&](std::size_t r) {
    ReplicaResult& out = res.replicas[r];
    TrajectoryState s{0.0, FieldCoeffs(m.cutoff), RandomStream(opt.seed, r), {}};
    if (opt.start == StartKind::FreeField) gff.fill(s.z, s.stream);
    out.averages.resize(panel.size());
    std::vector<double> vals(panel.size());
    for (std::uint64_t step = 0;; ++step) {
      const PotentialEval ev = lv.potential().evaluate(s.z);
      if (step >= burn_steps && (step - burn_steps) % static_cast<std::uint64_t>(opt.thin) == 0) {
        panel.evaluate(s.z, ev.value, m.delta, vals);
        for (std::size_t j = 0; j < vals.size(); ++j) out.averages[j].add(vals[j]);
        if (opt.keep_series) out.series.push_back({static_cast<int>(r), step, s.t, vals});
      }
      if (step == n_steps) break;
      try {
        lv.step_with(s, ev, res.h, opt.integrator);
      } catch (const BlowupDetected& e) {
        throw BlowupDetected("replica " + std::to_string(r) + ": " + e.what());
      }
    }
    out.stats = s.stats;
    if (opt.keep_final) out.final_state = s.z;
  });
  return res;
}

}  // namespace sqfield
