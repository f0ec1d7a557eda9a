#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "sqfield/dynamics.hpp"
#include "sqfield/stats.hpp"

using namespace sqfield;

namespace {

ModelSpec make_model(ModelKind kind, double a, int n = 4, double gamma = 1.0, double delta = 0.5) {
  ModelSpec m;
  m.kind = kind;
  m.a = a;
  m.gamma = gamma;
  m.delta = delta;
  m.cutoff = CutoffSet::square(n);
  return m;
}

FieldCoeffs free_field_sample(const CutoffPtr& c, std::uint64_t seed, std::uint64_t id) {
  GffSampler g(c, seed, id);
  return g.sample();
}

double potential_energy(const Potential& p, const FieldCoeffs& z) {
  double u = p.value(z);
  for (std::size_t i = 0; i < z.size(); ++i) u += 0.5 * z.cutoff().lambda(i) * z[i] * z[i];
  return u;
}

}  // namespace

TEST(ModelSpec, StandingAssumptionIsEnforced) {
  auto m = make_model(ModelKind::Exp, 1.0, 2, 0.5, 1.0);
  try {
    m.validate();
    FAIL() << "delta + 2 gamma = 2 accepted";
  } catch (const ParameterOutOfRange& e) {
    EXPECT_NE(std::string(e.what()).find("delta + 2*gamma > 2"), std::string::npos);
  }
  m.delta = 1.01;
  EXPECT_NO_THROW(m.validate());
  m.gamma = 1.5;
  EXPECT_THROW(m.validate(), ParameterOutOfRange);
  m.gamma = 1.0;
  m.delta = 0.0;
  EXPECT_THROW(m.validate(), ParameterOutOfRange);
}

TEST(ModelSpec, ChargeBoundAndWarning) {
  auto m = make_model(ModelKind::Cos, 3.6, 2);
  EXPECT_NO_THROW(m.validate());
  EXPECT_THROW(m.validate_measure(), ParameterOutOfRange);
  m.a = 3.5;
  EXPECT_NO_THROW(m.validate_measure());
  m.gamma = 0.9;
  EXPECT_EQ(m.warnings().size(), 1u);
  m.a = 1.0;
  EXPECT_TRUE(m.warnings().empty());
}

TEST(ModelSpec, DefaultGridIsOversampled) {
  auto m = make_model(ModelKind::Exp, 1.0, 8);
  EXPECT_EQ(m.grid(), 64);
  m.n_g = 16;
  EXPECT_THROW(m.validate(), NyquistViolation);
}

TEST(Drift, ZeroChargeIsOrnsteinUhlenbeck) {
  auto m = make_model(ModelKind::Exp, 0.0, 3, 0.75, 1.0);
  const auto z = free_field_sample(m.cutoff, 3, 0);
  const auto d = drift(z, m);
  for (std::size_t i = 0; i < z.size(); ++i)
    EXPECT_EQ(d[i], -0.5 * std::pow(m.cutoff->lambda(i), 0.25) * z[i]);
}

class GradientConsistency : public ::testing::TestWithParam<ModelKind> {};

TEST_P(GradientConsistency, MatchesFiniteDifferencesOfPotential) {
  const auto m = make_model(GetParam(), 1.0, 4);
  const Potential pot(m);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto z = free_field_sample(m.cutoff, 17, s);
    const auto ev = pot.evaluate(z);
    double worst = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double eps = 1e-4;
      auto zp = z, zm = z;
      zp[k] += eps;
      zm[k] -= eps;
      const double fd = (pot.value(zp) - pot.value(zm)) / (2.0 * eps);
      worst = std::max(worst, std::abs(fd - ev.grad[k]) / std::max(1e-3, std::abs(ev.grad[k])));
    }
    EXPECT_LT(worst, 1e-6);
  }
}

INSTANTIATE_TEST_SUITE_P(BothModels, GradientConsistency,
                         ::testing::Values(ModelKind::Exp, ModelKind::Cos));

TEST(Drift, IsHalfPreconditionedGradientOfEnergy) {
  for (auto kind : {ModelKind::Exp, ModelKind::Cos}) {
    const auto m = make_model(kind, 1.2, 3, 0.8, 0.6);
    const Potential pot(m);
    const Langevin lv(m);
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto z = free_field_sample(m.cutoff, 29, s);
      const auto d = lv.drift(z);
      for (std::size_t k = 0; k < z.size(); ++k) {
        const double eps = 1e-4;
        auto zp = z, zm = z;
        zp[k] += eps;
        zm[k] -= eps;
        const double du = (potential_energy(pot, zp) - potential_energy(pot, zm)) / (2.0 * eps);
        const double expect = -0.5 * std::pow(m.cutoff->lambda(k), -m.gamma) * du;
        EXPECT_NEAR(d[k], expect, 1e-6 * std::max(1.0, std::abs(expect)));
      }
    }
  }
}

TEST(Euler, NoiseFreeStepIsDrift) {
  const auto m = make_model(ModelKind::Cos, 1.0, 3);
  const Langevin lv(m);
  const auto z = free_field_sample(m.cutoff, 5, 1);
  TrajectoryState s{0.0, z, RandomStream(1, 1), {}};
  lv.step(s, 0.01, Integrator::Euler, false);
  const auto d = lv.drift(z);
  for (std::size_t k = 0; k < z.size(); ++k) EXPECT_NEAR(s.z[k] - z[k], 0.01 * d[k], 1e-15);
  EXPECT_DOUBLE_EQ(s.t, 0.01);
  EXPECT_EQ(s.stats.steps, 1u);
}

TEST(Euler, ZeroChargeMatchesDiscreteOuMoments) {
  const auto m = make_model(ModelKind::Exp, 0.0, 2, 0.75, 1.0);
  const Langevin lv(m);
  const double h = 0.05;
  const int steps = 20;
  const int reps = 4000;
  FieldCoeffs z0(m.cutoff);
  for (std::size_t k = 0; k < z0.size(); ++k) z0[k] = 0.5 + 0.1 * static_cast<double>(k);
  std::vector<MeanAccumulator> mean(z0.size()), sq(z0.size());
  for (int r = 0; r < reps; ++r) {
    TrajectoryState s{0.0, z0, RandomStream(8, r), {}};
    for (int n = 0; n < steps; ++n) lv.step(s, h, Integrator::Euler);
    for (std::size_t k = 0; k < z0.size(); ++k) {
      mean[k].add(s.z[k]);
      sq[k].add(s.z[k] * s.z[k]);
    }
  }
  for (std::size_t k = 0; k < z0.size(); ++k) {
    const double lam = m.cutoff->lambda(k);
    const double rho = 1.0 - 0.5 * h * std::pow(lam, 1.0 - m.gamma);
    const double mu = std::pow(rho, steps) * z0[k];
    double var = 0.0;
    for (int j = 0; j < steps; ++j) var += h * std::pow(lam, -m.gamma) * std::pow(rho, 2 * j);
    EXPECT_TRUE(agrees({mean[k].mean, mean[k].se()}, mu)) << "mode " << k;
    EXPECT_TRUE(agrees({sq[k].mean, sq[k].se()}, var + mu * mu)) << "mode " << k;
  }
}

TEST(Euler, IncrementCovarianceIsDiagonal) {
  const auto m = make_model(ModelKind::Exp, 0.0, 1, 0.75, 1.0);
  const Langevin lv(m);
  const double h = 0.1;
  const std::size_t d = m.cutoff->size();
  const int reps = 20000;
  std::vector<MeanAccumulator> cov(d * d);
  const FieldCoeffs z0(m.cutoff);
  for (int r = 0; r < reps; ++r) {
    TrajectoryState s{0.0, z0, RandomStream(21, r), {}};
    lv.step(s, h, Integrator::Euler);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) cov[i * d + j].add(s.z[i] * s.z[j]);
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double expect = i == j ? h * std::pow(m.cutoff->lambda(i), -m.gamma) : 0.0;
      EXPECT_TRUE(agrees({cov[i * d + j].mean, cov[i * d + j].se()}, expect)) << i << "," << j;
    }
}

TEST(OuExact, TinyStepIsIdentity) {
  const auto m = make_model(ModelKind::Exp, 1.0, 2);
  const Langevin lv(m);
  const auto z = free_field_sample(m.cutoff, 2, 2);
  TrajectoryState s{0.0, z, RandomStream(1, 1), {}};
  lv.step(s, 1e-300, Integrator::OuExact, false);
  for (std::size_t k = 0; k < z.size(); ++k) EXPECT_EQ(s.z[k], z[k]);
  EXPECT_THROW(lv.step(s, 0.0, Integrator::OuExact), ParameterOutOfRange);
}

TEST(OuExact, AgreesWithEulerToSecondOrder) {
  const auto m = make_model(ModelKind::Cos, 1.0, 3, 0.8, 0.6);
  const Langevin lv(m);
  const auto z = free_field_sample(m.cutoff, 4, 4);
  auto gap = [&](double h) {
    TrajectoryState a{0.0, z, RandomStream(1, 1), {}}, b = a;
    lv.step(a, h, Integrator::Euler, false);
    lv.step(b, h, Integrator::OuExact, false);
    double g = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) g = std::max(g, std::abs(a.z[k] - b.z[k]));
    return g;
  };
  const double r = gap(1e-3) / gap(5e-4);
  EXPECT_NEAR(r, 4.0, 0.05);
}

TEST(OuExact, StationaryVarianceForAnyStep) {
  const auto m = make_model(ModelKind::Exp, 0.0, 2, 0.75, 1.0);
  const Langevin lv(m);
  for (double h : {0.05, 3.0}) {
    std::vector<MeanAccumulator> sq(m.cutoff->size());
    const GffSampler g(m.cutoff, 0, 0);
    for (int r = 0; r < 5000; ++r) {
      TrajectoryState s{0.0, FieldCoeffs(m.cutoff), RandomStream(13, r), {}};
      g.fill(s.z, s.stream);
      for (int n = 0; n < 5; ++n) lv.step(s, h, Integrator::OuExact);
      for (std::size_t k = 0; k < sq.size(); ++k) sq[k].add(s.z[k] * s.z[k]);
    }
    for (std::size_t k = 0; k < sq.size(); ++k)
      EXPECT_TRUE(agrees({sq[k].mean, sq[k].se()}, 1.0 / m.cutoff->lambda(k), 3.0)) << "h=" << h << " k=" << k;
  }
}

TEST(OuExact, ExactInLawAtFiniteTime) {
  const auto m = make_model(ModelKind::Exp, 0.0, 2, 0.75, 1.0);
  const Langevin lv(m);
  const double h = 0.4;
  const int steps = 3;
  const int reps = 3000;
  const std::size_t d = m.cutoff->size();
  std::vector<std::vector<double>> xs(d);
  for (int r = 0; r < reps; ++r) {
    TrajectoryState s{0.0, FieldCoeffs(m.cutoff), RandomStream(31, r), {}};
    for (int n = 0; n < steps; ++n) lv.step(s, h, Integrator::OuExact);
    for (std::size_t k = 0; k < d; ++k) xs[k].push_back(s.z[k]);
  }
  const double t = h * steps;
  for (std::size_t k = 0; k < d; ++k) {
    const double lam = m.cutoff->lambda(k);
    const double sd = std::sqrt(-std::expm1(-std::pow(lam, 1.0 - m.gamma) * t) / lam);
    const double ks = ks_statistic(xs[k], [&](double x) { return normal_cdf(x, sd); });
    EXPECT_GT(ks_pvalue(ks, xs[k].size()), 0.01 / static_cast<double>(d)) << "mode " << k;
  }
}

TEST(Simulate, ZeroChargeTimeAveragesMatchOu) {
  const auto m = make_model(ModelKind::Exp, 0.0, 2, 1.0, 0.5);
  SimulationOptions o;
  o.T = 200.0;
  o.h = 0.1;
  o.n_replicas = 8;
  o.start = StartKind::FreeField;
  o.seed = 4;
  ObservablePanel panel;
  panel.modes = {{0, 0}, {1, 0}, {-1, 1}, {2, -2}};
  panel.potential = false;
  panel.sobolev = false;
  const auto res = simulate(m, o, panel);
  for (std::size_t j = 0; j < panel.modes.size(); ++j)
    EXPECT_TRUE(agrees(res.estimate(j), 1.0 / lambda_of(panel.modes[j]))) << res.names[j];
}

TEST(Simulate, DeterministicAcrossRunsAndWorkers) {
  const auto m = make_model(ModelKind::Cos, 1.0, 2);
  SimulationOptions o;
  o.T = 2.0;
  o.h = 0.05;
  o.n_replicas = 3;
  o.keep_series = true;
  const auto a = simulate(m, o);
  o.workers = 3;
  const auto b = simulate(m, o);
  ASSERT_EQ(a.replicas.size(), b.replicas.size());
  for (std::size_t r = 0; r < a.replicas.size(); ++r) {
    ASSERT_EQ(a.replicas[r].series.size(), b.replicas[r].series.size());
    for (std::size_t i = 0; i < a.replicas[r].series.size(); ++i)
      EXPECT_EQ(a.replicas[r].series[i].values, b.replicas[r].series[i].values);
  }
}

TEST(Simulate, ThinningSubsamplesTheSameTrajectory) {
  const auto m = make_model(ModelKind::Exp, 1.0, 2);
  SimulationOptions o;
  o.T = 1.0;
  o.h = 0.05;
  o.n_replicas = 2;
  o.keep_series = true;
  const auto one = simulate(m, o);
  o.thin = 2;
  const auto two = simulate(m, o);
  for (std::size_t r = 0; r < 2; ++r) {
    const auto& s1 = one.replicas[r].series;
    const auto& s2 = two.replicas[r].series;
    ASSERT_EQ(s2.size(), (s1.size() + 1) / 2);
    for (std::size_t i = 0; i < s2.size(); ++i) {
      EXPECT_EQ(s2[i].step, s1[2 * i].step);
      EXPECT_EQ(s2[i].values, s1[2 * i].values);
    }
  }
}

TEST(Simulate, BlowupIsReported) {
  const auto m = make_model(ModelKind::Exp, 1.0, 2);
  SimulationOptions o;
  o.T = 1.0;
  o.h = 0.05;
  o.n_replicas = 1;
  o.start = StartKind::FreeField;
  o.blowup_bound = 1e-3;
  EXPECT_THROW(simulate(m, o), BlowupDetected);
}

TEST(Potential, GridDoublingBiasIsSmall) {
  const auto m = make_model(ModelKind::Exp, 1.0, 8);
  std::vector<FieldCoeffs> zs;
  for (std::uint64_t s = 0; s < 4; ++s) zs.push_back(free_field_sample(m.cutoff, 9, s));
  const auto rep = grid_doubling_bias(m, zs);
  EXPECT_EQ(rep.n_g, 64);
  EXPECT_LT(rep.max_rel_value, 1e-8);
  EXPECT_LT(rep.max_rel_grad, 1e-6);
}
