#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "sqfield/free_field.hpp"
#include "sqfield/green.hpp"

using namespace sqfield;

namespace {

const double kPiV = std::numbers::pi;

// Closed form of the plane Green function of (1 - Laplacian)^alpha in two dimensions.
double bessel_green(double alpha, double r) {
  return std::pow(2.0, 1.0 - alpha) / std::tgamma(alpha) * std::pow(r, alpha - 1.0) *
         std::cyl_bessel_k(1.0 - alpha, r) / (2.0 * kPiV);
}

}  // namespace

TEST(KernelPartialSum, ZeroModeIntegral) {
  for (double alpha : {0.25, 0.5, 1.0})
    for (auto c : {CutoffSet::square(0), CutoffSet::square(3), CutoffSet::disc(5)}) {
      const auto g = kernel_grid(alpha, c, 32);
      EXPECT_NEAR(integrate_grid(g), 1.0, 1e-12);
      EXPECT_NEAR(g(3, 5), kernel_partial_sum(alpha, *c, g.node(3), g.node(5)), 1e-13);
    }
  EXPECT_NEAR(kernel_partial_sum(0.7, *CutoffSet::square(0), 1.0, 2.0), 1.0 / (4.0 * kPiV * kPiV), 1e-16);
}

TEST(PlaneGreen, MatchesBesselClosedForm) {
  for (double alpha : {0.25, 0.5, 0.75, 1.0})
    for (double r : {1e-4, 1e-2, 0.3, 1.0, 2.5, 7.0, 20.0}) {
      const double ref = bessel_green(alpha, r);
      EXPECT_NEAR(plane_green(alpha, r), ref, 1e-9 * ref) << alpha << " " << r;
    }
}

TEST(PlaneGreen, LogarithmicBehaviourAtOrder1) {
  for (double r = 1e-4; r <= 0.1; r *= 1.5) {
    const double rem = plane_green(1.0, r) + std::log(r) / (2.0 * kPiV);
    EXPECT_LT(std::abs(rem), 0.05);
  }
  // The remainder tends to (log 2 - Euler gamma) / 2 pi.
  const double limit = (std::log(2.0) - 0.5772156649015329) / (2.0 * kPiV);
  EXPECT_NEAR(plane_green(1.0, 1e-4) + std::log(1e-4) / (2.0 * kPiV), limit, 1e-6);
}

TEST(PlaneGreen, IntegralBound) {
  for (double alpha : {0.25, 0.5, 0.75})
    for (int i = 0; i < 50; ++i) {
      const double r = 1e-3 * std::pow(1e4, i / 49.0);
      EXPECT_LE(green_integral_I(alpha, r), green_integral_bound(alpha));
    }
}

TEST(PlaneGreen, ExponentialDecayFit) {
  std::vector<double> radii;
  for (double r = 1.0; r <= 6.0; r += 0.25) radii.push_back(r);
  for (double alpha : {0.25, 0.5, 1.0}) {
    const auto fit = fit_exponential_decay(alpha, radii);
    EXPECT_TRUE(fit.pass);
    EXPECT_GT(fit.rate, 0.5);
    for (double r : radii) EXPECT_LE(plane_green(alpha, r), fit.constant * std::exp(-fit.rate * r) * (1 + 1e-12));
  }
}

TEST(PlaneGreen, Errors) {
  EXPECT_THROW(plane_green(1.5, 1.0), ParameterOutOfRange);
  EXPECT_THROW(plane_green(1.0, 0.0), ParameterOutOfRange);
  EXPECT_THROW(green_integral_I(1.0, 1e-6, {1e-15, 0}), QuadratureFailure);
}

TEST(ImageSum, AgreesWithFourierRoute) {
  const auto img = torus_green_image_sum(1.0, kPiV, kPiV);
  const auto four = kernel_partial_sum_with_estimate(1.0, 64, kPiV, kPiV);
  EXPECT_LT(std::abs(img.value - four.value), img.tail_estimate + four.truncation_estimate);
  EXPECT_LT(img.tail_estimate, 1e-10);
}

TEST(ImageSum, SymmetryPositivitySingularity) {
  RandomStream rs(3, 0);
  for (int i = 0; i < 10; ++i) {
    const double x1 = 2 * kPiV * rs.uniform() - kPiV, x2 = 2 * kPiV * rs.uniform() - kPiV;
    const double a = torus_green_image_sum(0.5, x1, x2).value;
    EXPECT_EQ(a, torus_green_image_sum(0.5, -x1, -x2).value);
    EXPECT_GT(a, 0.0);
  }
  EXPECT_THROW(torus_green_image_sum(1.0, 0.0, 0.0), SingularPoint);
  EXPECT_THROW(torus_green_image_sum(1.0, 2 * kPiV, -2 * kPiV), SingularPoint);
}

TEST(ImageSum, FourierRouteConvergesOnPanel) {
  const auto rep = route_agreement(1.0, route_panel(20), {8, 16, 32, 64});
  EXPECT_TRUE(rep.all_within_budget);
  EXPECT_TRUE(rep.rms_decreasing);
  for (const auto& p : rep.points) EXPECT_GE(std::hypot(p.x1, p.x2), 0.5 - 1e-12);
}

TEST(HausdorffYoung, Examples) {
  const auto q2 = CutoffSet::square(2);
  const auto same = hausdorff_young_difference_check(q2, q2, 2.0, 2);
  EXPECT_EQ(same.lhs, 0.0);
  EXPECT_TRUE(same.pass);
  const auto r = hausdorff_young_check(q2, 2.0, 2);
  EXPECT_TRUE(r.pass);
  double s = 0.0;
  for (double lam : q2->lambdas()) s += std::pow(lam, -4.0 / 3.0);
  EXPECT_NEAR(r.rhs, std::pow(1.0 / (2 * kPiV), 1.5) * std::pow(s, 0.75), 1e-15);
  for (int n : {1, 2, 4, 8}) {
    const auto q = CutoffSet::square(n);
    const auto p = hausdorff_young_check(q, 2.0, 1);
    EXPECT_NEAR(p.lhs, kernel_l2_parseval(*q), 1e-13);
    EXPECT_NEAR(p.rhs, kernel_l2_parseval(*q), 1e-13);
    EXPECT_TRUE(p.pass);
  }
}

TEST(HausdorffYoung, EvenOrderNormIsExact) {
  // ||K||_4^4 = sum over k1+k2+k3+k4 = 0 of products of Fourier coefficients.
  const auto q1 = CutoffSet::square(1);
  const auto m = q1->members();
  double s = 0.0;
  for (auto a : m)
    for (auto b : m)
      for (auto c : m) {
        const WaveIndex d{-(a.k1 + b.k1 + c.k1), -(a.k2 + b.k2 + c.k2)};
        if (!q1->contains(d)) continue;
        s += 1.0 / (lambda_of(a) * lambda_of(b) * lambda_of(c) * lambda_of(d));
      }
  const double expected = std::pow(s / std::pow(2 * kPiV, 6), 0.25);
  EXPECT_NEAR(hausdorff_young_check(q1, 2.0, 2).lhs, expected, 1e-14);
}

TEST(LogSingularity, Report) {
  const auto rep = log_singularity_check({8, 16, 32, 64});
  EXPECT_TRUE(rep.pass) << rep.sup_remainder << " " << rep.settle << " " << rep.half_order_product << " "
                        << rep.half_order_reference;
  const auto rows = kernel_lp_ladder({2}, {4, 8});
  for (const auto& row : rows) EXPECT_NEAR(row.norm, kernel_l2_parseval(*CutoffSet::square(row.n)), 1e-13);
}
