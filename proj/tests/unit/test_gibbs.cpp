#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "sqfield/gibbs.hpp"

using namespace sqfield;

namespace {

ModelSpec make_model(ModelKind kind, double a, int n, double gamma = 1.0, double delta = 0.5) {
  ModelSpec m;
  m.kind = kind;
  m.a = a;
  m.gamma = gamma;
  m.delta = delta;
  m.cutoff = CutoffSet::square(n);
  return m;
}

GibbsOptions options(std::size_t n, std::uint64_t seed, bool adaptive) {
  GibbsOptions o;
  o.n_samples = n;
  o.seed = seed;
  o.adaptive = adaptive;
  return o;
}

}  // namespace

TEST(Importance, ConstantObservableIsExactlyOne) {
  const auto m = make_model(ModelKind::Cos, 1.0, 3);
  const auto e = importance_estimate([](const FieldCoeffs&) { return 1.0; }, m, options(500, 1, false));
  EXPECT_EQ(e.value, 1.0);
  EXPECT_EQ(e.se, 0.0);
}

TEST(Importance, ZeroChargeGivesFreeFieldVariances) {
  const auto m = make_model(ModelKind::Exp, 0.0, 2);
  const WeightedEnsemble ens(m, options(20000, 2, false), false);
  EXPECT_NEAR(ens.ess(), 20000.0, 1e-6);
  for (std::size_t k = 0; k < m.cutoff->size(); ++k) {
    const auto e = ens.mean_of([&](std::size_t i) { return ens.samples().z[i][k] * ens.samples().z[i][k]; });
    EXPECT_TRUE(agrees(e, 1.0 / m.cutoff->lambda(k))) << "mode " << k;
  }
}

TEST(Importance, TooFewSamplesRejected) {
  const auto m = make_model(ModelKind::Exp, 1.0, 2);
  EXPECT_THROW(WeightedEnsemble(m, options(50, 1, false), false), ParameterOutOfRange);
}

TEST(Importance, DegenerateWeightsDetected) {
  auto m = make_model(ModelKind::Exp, 3.0, 16);
  m.gamma = 1.0;
  EXPECT_THROW(WeightedEnsemble(m, options(200, 1, false), false), DegenerateWeights);
}

TEST(Importance, ConstantFieldProposalAgreesWithFreeFieldProposal) {
  const auto m = make_model(ModelKind::Cos, 0.6, 2);
  const WeightedEnsemble plain(m, options(40000, 3, false), false);
  const WeightedEnsemble fitted(m, options(20000, 4, true), false);
  EXPECT_GT(fitted.ess(), 0.5 * 20000);
  for (auto k : std::vector<WaveIndex>{{0, 0}, {1, 0}, {1, 1}}) {
    auto f = [&](const WeightedEnsemble& e) {
      return e.mean_of([&](std::size_t i) {
        const double c = e.samples().z[i].at(k);
        return c * c;
      });
    };
    EXPECT_TRUE(agrees(f(plain), f(fitted)));
  }
  const auto v1 = plain.mean(plain.samples().v);
  const auto v2 = fitted.mean(fitted.samples().v);
  EXPECT_TRUE(agrees(v1, v2));
}

TEST(Importance, SampleSetIndependentOfWorkers) {
  const auto m = make_model(ModelKind::Exp, 1.0, 3);
  auto o = options(700, 5, true);
  const WeightedEnsemble a(m, o, true);
  o.workers = 4;
  const WeightedEnsemble b(m, o, true);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.samples().v[i], b.samples().v[i]);
    EXPECT_EQ(a.weights().w[i], b.weights().w[i]);
  }
}

TEST(Partition, ExpWeightsInUnitInterval) {
  const auto m = make_model(ModelKind::Exp, 1.0, 4);
  const auto z = partition_function(m, options(5000, 6, false));
  EXPECT_TRUE(z.free_field_proposal);
  EXPECT_GT(z.min_weight, 0.0);
  EXPECT_LE(z.max_weight, 1.0);
  EXPECT_GT(z.z(), 0.0);
  EXPECT_GE(z.log_z, -exp_potential_mean());
}

TEST(Partition, ZeroChargeIsConstantWeight) {
  const auto m = make_model(ModelKind::Cos, 0.0, 3);
  const auto z = partition_function(m, options(1000, 6, false));
  EXPECT_NEAR(z.log_z, -kTorusArea, 1e-12);
  EXPECT_EQ(z.rel_se, 0.0);
}

TEST(Partition, FreeFieldMeanOfExpPotential) {
  const auto m = make_model(ModelKind::Exp, 1.0, 4);
  const Potential pot(m);
  const auto s = draw_samples(pot, ImportanceProposal::free_field(m.cutoff), 20000, 7, 0, 1, false);
  const auto e = mean_se(s.v);
  EXPECT_TRUE(agrees(e, exp_potential_mean()));
}

// With only the zero mode, Z_p is a one-dimensional Gaussian integral.
static double zero_mode_log_z(double a, double p) {
  const double r2 = 1.0 / kTorusArea;
  const double s = std::exp(0.5 * a * a * r2);
  std::vector<double> l;
  double top = -1e300;
  const double h = 1e-3;
  for (double z = -80.0; z < 80.0; z += h) {
    l.push_back(-0.5 * z * z - p * kTorusArea * s * std::cos(a * z / kTwoPi));
    top = std::max(top, l.back());
  }
  double acc = 0.0;
  for (double v : l) acc += std::exp(v - top);
  return top + std::log(acc * h / std::sqrt(kTwoPi));
}

TEST(Partition, CosMomentsMatchZeroModeQuadrature) {
  const auto m = make_model(ModelKind::Cos, 1.0, 0);
  for (double p : {1.0, 2.0, 4.0, 8.0}) {
    auto o = options(5000, 8, true);
    o.beta = p;
    const auto z = partition_function(m, o);
    EXPECT_GT(z.ess, 100.0);
    EXPECT_LT(std::abs(z.log_z - zero_mode_log_z(1.0, p)), 4.0 * z.rel_se + 1e-9) << "p=" << p;
  }
  auto o = options(20000, 8, false);
  o.beta = 0.25;
  const auto plain = partition_function(m, o);
  EXPECT_LT(std::abs(plain.log_z - zero_mode_log_z(1.0, 0.25)), 4.0 * plain.rel_se);
}

TEST(Partition, CosMomentsAgreeAcrossProposals) {
  const auto m = make_model(ModelKind::Cos, 0.6, 2);
  auto o = options(20000, 8, false);
  const auto plain = partition_function(m, o);
  o.adaptive = true;
  const auto fitted = partition_function(m, o);
  EXPECT_GT(plain.ess, 1000.0);
  EXPECT_LT(std::abs(plain.log_z - fitted.log_z), 4.0 * std::hypot(plain.rel_se, fitted.rel_se));
}

TEST(Partition, RejectsChargeOutsideBound) {
  const auto m = make_model(ModelKind::Cos, 3.6, 2);
  EXPECT_THROW(partition_function(m, options(500, 1, false)), ParameterOutOfRange);
}

TEST(Froehlich, FirstMomentIdentity) {
  const auto m = make_model(ModelKind::Cos, 1.0, 4);
  const auto r = froehlich_check(m, 20000, 9, 1);
  EXPECT_TRUE(r.pass) << r.measured.value << " +- " << r.measured.se << " vs " << r.exact;
  // the integrand exceeds 1 pointwise, so the identity is not the trivial 4 pi^2
  EXPECT_GT(r.exact, kTorusArea * kTorusArea);
}

TEST(Cylinder, DerivativesMatchFiniteDifferences) {
  const auto c = CutoffSet::square(3);
  RandomStream rs(10, 0);
  for (int t = 0; t < 10; ++t) {
    const auto F = CylinderObservable::random(c, 2, rs);
    const auto z = GffSampler(c, 10, t + 1).sample();
    const auto y = F.arguments(z);
    std::vector<double> g(F.arity());
    F.gradient(y, g);
    for (std::size_t j = 0; j < F.arity(); ++j) {
      auto yp = y, ym = y;
      yp[j] += 1e-5;
      ym[j] -= 1e-5;
      EXPECT_NEAR((F.f(yp) - F.f(ym)) / 2e-5, g[j], 1e-6);
    }
    const auto d = F.dh(z);
    for (std::size_t k = 0; k < d.size(); ++k) {
      auto zp = z, zm = z;
      zp[k] += 1e-5;
      zm[k] -= 1e-5;
      EXPECT_NEAR((F(zp) - F(zm)) / 2e-5, d[k], 1e-6);
    }
  }
}

TEST(Cylinder, RejectsAsymmetricQuadraticPart) {
  const auto c = CutoffSet::square(1);
  std::vector<FieldCoeffs> dirs{FieldCoeffs::basis(c, {0, 0}), FieldCoeffs::basis(c, {1, 0})};
  EXPECT_THROW(CylinderObservable(dirs, 1.0, {0, 0}, {0, 0}, 0.0, {0, 1, 2, 0}), ParameterOutOfRange);
}

TEST(Ibp, ConstantObservable) {
  for (auto kind : {ModelKind::Exp, ModelKind::Cos}) {
    const auto m = make_model(kind, 1.0, 4);
    const WeightedEnsemble ens(m, options(20000, 11, true), true);
    const auto F = CylinderObservable::constant(m.cutoff, 1.0);
    for (auto k : std::vector<WaveIndex>{{0, 0}, {1, 0}, {0, -2}}) {
      const auto r = ibp_residual(F, FieldCoeffs::basis(m.cutoff, k), ens);
      EXPECT_EQ(r.lhs.value, 0.0);
      EXPECT_TRUE(r.pass) << to_string(kind) << " k=(" << k.k1 << "," << k.k2 << ")";
    }
  }
}

TEST(Ibp, GaussianSteinIdentity) {
  const auto m = make_model(ModelKind::Exp, 0.0, 3);
  const WeightedEnsemble ens(m, options(20000, 12, false), true);
  const auto phi = FieldCoeffs::basis(m.cutoff, {1, -1});
  const CylinderObservable F({phi}, 0.3, {0.7}, {1.3}, 0.4, {0.2});
  const auto r = ibp_residual(F, phi, ens);
  EXPECT_TRUE(r.pass) << r.residual.value << " +- " << r.residual.se;
  EXPECT_GT(std::abs(r.lhs.value), 4.0 * r.lhs.se);
}

TEST(Ibp, GenericObservablesBothModels) {
  RandomStream rs(13, 0);
  for (auto kind : {ModelKind::Exp, ModelKind::Cos}) {
    const auto m = make_model(kind, 1.0, 4);
    const WeightedEnsemble ens(m, options(20000, 14, true), true);
    for (int t = 0; t < 3; ++t) {
      const auto F = CylinderObservable::random(m.cutoff, 2, rs);
      for (auto k : std::vector<WaveIndex>{{0, 0}, {1, 0}, {-1, 2}}) {
        const auto r = ibp_residual(F, FieldCoeffs::basis(m.cutoff, k), ens);
        EXPECT_TRUE(r.pass) << to_string(kind) << " " << r.residual.value << " +- " << r.residual.se;
      }
    }
  }
}

TEST(Ibp, OppositeInteractionSignIsDetected) {
  const auto m = make_model(ModelKind::Cos, 1.0, 4);
  const WeightedEnsemble ens(m, options(20000, 15, true), true);
  const auto phi = FieldCoeffs::basis(m.cutoff, {0, 0});
  const CylinderObservable F = CylinderObservable::linear(phi);
  std::vector<double> flipped(ens.size());
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const auto& z = ens.samples().z[i];
    flipped[i] = inner(F.dh(z), phi) - F(z) * (laplace_pairing(z, phi) - drift_pairing(ens.samples().grad[i], phi));
  }
  const auto bad = ens.mean(flipped);
  EXPECT_GT(std::abs(bad.value), 10.0 * bad.se);
  EXPECT_TRUE(ibp_residual(F, phi, ens).pass);
}

TEST(Generator, ConstantsGiveZero) {
  const auto m = make_model(ModelKind::Cos, 1.0, 2);
  const WeightedEnsemble ens(m, options(500, 16, true), true);
  const auto c = CylinderObservable::constant(m.cutoff, 2.0);
  const auto r = generator_symmetry(c, c, ens);
  EXPECT_EQ(r.energy.value, 0.0);
  EXPECT_EQ(r.minus_lf_g.value, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(Generator, GaussianOracle) {
  const auto m = make_model(ModelKind::Exp, 0.0, 3, 0.75, 1.0);
  const WeightedEnsemble ens(m, options(20000, 17, false), true);
  const WaveIndex k{2, -1};
  const auto F = CylinderObservable::linear(FieldCoeffs::basis(m.cutoff, k));
  const auto r = generator_symmetry(F, F, ens);
  const double exact = 0.5 * std::pow(lambda_of(k), -m.gamma);
  EXPECT_NEAR(r.energy.value, exact, 1e-12);
  EXPECT_TRUE(agrees(r.minus_lf_g, exact));
  EXPECT_TRUE(r.pass);
}

TEST(Generator, GenericPairsAgree) {
  RandomStream rs(18, 0);
  for (auto kind : {ModelKind::Exp, ModelKind::Cos}) {
    const auto m = make_model(kind, 1.0, 4, 0.8, 0.6);
    const WeightedEnsemble ens(m, options(20000, 19, true), true);
    for (int t = 0; t < 3; ++t) {
      const auto F = CylinderObservable::random(m.cutoff, 2, rs);
      const auto G = CylinderObservable::random(m.cutoff, 2, rs);
      const auto r = generator_symmetry(F, G, ens);
      EXPECT_TRUE(r.pass) << to_string(kind) << " " << r.diff_fg.value << " +- " << r.diff_fg.se << ", "
                          << r.diff_gf.value << " +- " << r.diff_gf.se;
    }
  }
}

TEST(DriftMoments, ZeroChargeExactSecondMoment) {
  const auto m = make_model(ModelKind::Exp, 0.0, 4, 0.8, 0.6);
  const WeightedEnsemble ens(m, options(20000, 20, false), true);
  const auto rows = drift_moment_estimate(ens, {1.0, 2.0});
  EXPECT_TRUE(agrees(rows[0].ou, ou_drift_second_moment_exact(m)));
  EXPECT_EQ(rows[0].interaction.value, 0.0);
  EXPECT_TRUE(std::isinf(admissible_p_bound(0.0, 1.0)));
}

TEST(DriftMoments, StableUnderDoublingSamples) {
  const auto m = make_model(ModelKind::Cos, 1.0, 4);
  const WeightedEnsemble a(m, options(5000, 21, true), true);
  const WeightedEnsemble b(m, options(10000, 22, true), true);
  const auto ra = drift_moment_estimate(a, {1.0});
  const auto rb = drift_moment_estimate(b, {1.0});
  EXPECT_TRUE(agrees(ra[0].ou, rb[0].ou));
  EXPECT_TRUE(agrees(ra[0].interaction, rb[0].interaction));
  EXPECT_GT(ra[0].interaction.value, 0.0);
}

TEST(DriftMoments, AdmissibleRangeFlag) {
  EXPECT_NEAR(admissible_p_bound(1.0, 1.0), 0.5 * (1.0 + 4.0 * kPi), 1e-15);
  const auto m = make_model(ModelKind::Cos, 3.0, 2);
  const WeightedEnsemble ens(m, options(2000, 23, true), true);
  const auto rows = drift_moment_estimate(ens, {1.0, 2.0});
  EXPECT_TRUE(rows[0].admissible);
  EXPECT_FALSE(rows[1].admissible);
  EXPECT_THROW(drift_moment_estimate(ens, {0.5}), ParameterOutOfRange);
}
