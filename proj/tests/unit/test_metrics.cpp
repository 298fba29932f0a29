#include <gtest/gtest.h>

#include <cmath>

#include "../oracles.hpp"
#include "depcl/datagen.hpp"
#include "depcl/metrics.hpp"

using namespace depcl;

namespace {

TaskSequenceSpec make(int d_x, int d_y, double sigma, DependencyChain chain, double radius = 2.0) {
  TaskSequenceSpec s;
  s.d_x = d_x;
  s.d_y = d_y;
  s.T = chain.tasks();
  s.m = 1;
  s.sigma = sigma;
  s.chain = std::move(chain);
  s.model = ModelShape{Family::linear, d_x, d_y};
  s.space = ParameterSpace{d_x * d_y, radius};
  s.theta_star = draw_theta_star(s.model, s.space, 1);
  s.seed = 1;
  return s;
}

}  // namespace

TEST(Metrics, ZeroErrorAtTruth) {
  auto s = make(3, 2, 1.0, DependencyChain::identity(3));
  const auto r = estimation_error(s, s.theta_star, {1, 1, 1}, 1000, 4);
  for (double e : r.per_task) EXPECT_EQ(e, 0.0);
  EXPECT_EQ(r.weighted, 0.0);
  EXPECT_THROW(estimation_error(s, s.theta_star, {1, 1, 1}, 50, 4), std::invalid_argument);
}

TEST(Metrics, ScalarSecondMoment) {
  auto s = make(1, 1, 1.0, DependencyChain::identity(1));
  const double c = 0.3;
  Vector th = s.theta_star;
  th(0) += c;
  const auto r = estimation_error(s, th, {1}, 100000, 7);
  EXPECT_NEAR(r.per_task[0], c * c, 3 * r.per_task_se[0]);
}

TEST(Metrics, ScalingChainMultipliesError) {
  const double sc = 3.0;
  auto s = make(2, 1, 1.0, DependencyChain({Transformation::identity(), Transformation::scaling(sc)}));
  Vector th = s.theta_star;
  th(0) += 0.2;
  const auto r = estimation_error(s, th, {1, 1}, 20000, 7);
  // common draws make the identity exact up to rounding
  EXPECT_NEAR(r.per_task[1], sc * sc * r.per_task[0], 3 * r.per_task_se[1]);
  EXPECT_NEAR(r.per_task[1] / r.per_task[0], 9.0, 1e-9);
}

TEST(Metrics, StandardErrorShrinksBySqrt2) {
  auto s = make(2, 1, 1.0, DependencyChain::identity(1));
  Vector th = s.theta_star;
  th(1) -= 0.5;
  double ratio = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto a = estimation_error(s, th, {1}, 20000, seed);
    const auto b = estimation_error(s, th, {1}, 40000, seed + 100);
    ratio += a.per_task_se[0] / b.per_task_se[0] / 5;
  }
  EXPECT_NEAR(ratio, std::sqrt(2.0), 0.15 * std::sqrt(2.0));
}

TEST(Metrics, WeightedCombinations) {
  auto s = make(2, 1, 1.0, DependencyChain({Transformation::identity(), Transformation::scaling(2.0)}));
  Vector th = s.theta_star;
  th(0) += 0.1;
  const auto r = estimation_error(s, th, {0.5, 1.5}, 1000, 3, {10, 30}, {0.25, 1.0});
  EXPECT_NEAR(r.weighted, (0.5 * r.per_task[0] + 1.5 * r.per_task[1]) / 2, 1e-15);
  EXPECT_NEAR(r.average, (r.per_task[0] + r.per_task[1]) / 2, 1e-15);
  EXPECT_NEAR(r.beta_weighted, (2.5 * r.per_task[0] + 30 * r.per_task[1]) / 32.5, 1e-15);
  EXPECT_NEAR(r.distill_quantity, (2.5 * r.per_task[0] + 30 * r.per_task[1]) / 40, 1e-15);
}

TEST(Metrics, KappaGaussianAndScaleInvariance) {
  const int d = 8;
  auto s = make(d, 1, std::sqrt(static_cast<double>(d)), DependencyChain::identity(1));
  const auto k = estimate_kappa(s, 100000, 16, 3);
  EXPECT_NEAR(k.kappa_sq, oracle::gaussian_kappa_sq(), 0.2);
  auto s2 = make(d, 1, std::sqrt(static_cast<double>(d)),
                 DependencyChain({Transformation::identity(), Transformation::scaling(1e10)}));
  const auto k2 = estimate_kappa(s2, 100000, 16, 3);
  EXPECT_NEAR(k2.kappa_sq, 3.0, 0.2);
  EXPECT_THROW(estimate_kappa(s, 100, 4, 1), std::invalid_argument);
}

TEST(Metrics, KappaPointMassIsOne) {
  auto s = make(3, 1, 1.0, DependencyChain::identity(1));
  Matrix x1 = Matrix::Zero(50, 3);
  x1.col(0).setOnes();
  Vector probe = s.theta_star;
  probe(0) += 0.5;
  const auto k = kappa_on_samples(s, x1, {probe}, {1});
  EXPECT_NEAR(k.kappa, 1.0, 1e-12);
}

TEST(Metrics, KappaRunningSupMonotone) {
  auto s = make(4, 2, 1.0, DependencyChain::identity(2));
  const auto k = estimate_kappa(s, 10000, 40, 5);
  for (std::size_t i = 1; i < k.running_sup.size(); ++i) EXPECT_GE(k.running_sup[i], k.running_sup[i - 1]);
  EXPECT_TRUE(k.lower_bound);
}

TEST(Metrics, M2Examples) {
  auto s = make(1, 1, 1.0, DependencyChain::identity(1));
  std::vector<Vector> only_star{s.theta_star};
  EXPECT_EQ(estimate_M2(s, 10000, 1, 1, {}, &only_star), 0.0);
  // theta - theta* as large as 2R: the antipodal probe attains it; theta* has norm R/2
  auto s1 = make(1, 1, 1.0, DependencyChain::identity(1));
  Vector anti = -s1.theta_star / s1.theta_star.norm() * s1.space.radius;
  std::vector<Vector> probes{anti};
  const double gap = (anti - s1.theta_star).squaredNorm();
  EXPECT_NEAR(estimate_M2(s1, 100000, 1, 2, {}, &probes), gap, 0.05 * gap);
  // with theta* on the boundary the gap is (2R)^2
  s1.theta_star *= 2.0;
  anti = -s1.theta_star;
  probes = {anti};
  const double two_r_sq = std::pow(2 * s1.space.radius, 2);
  EXPECT_NEAR(estimate_M2(s1, 100000, 1, 2, {}, &probes), two_r_sq, 0.05 * two_r_sq);
  auto ss = make(1, 1, 1.0, DependencyChain({Transformation::identity(), Transformation::scaling(5.0)}));
  ss.theta_star = s1.theta_star;
  const double base = estimate_M2(s1, 10000, 1, 2, {}, &probes);
  EXPECT_NEAR(estimate_M2(ss, 10000, 1, 2, {}, &probes), 25 * base, 1e-9 * 25 * base);
}

TEST(Metrics, DiscrepancyClosedForm) {
  EXPECT_EQ(discrepancy_closed_form(1.0, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(discrepancy_closed_form(10.0, 2.0), 396.0);
  // oracle on the attaining antipodal pair: ||A - B||_F = diam
  const oracle::Mat a{{1.0, 0.0}}, b{{-1.0, 0.0}};
  EXPECT_DOUBLE_EQ(oracle::linear_gaussian_gap(a, b, 10.0, 1.0), 396.0);
}

TEST(Metrics, DiscrepancyMonteCarlo) {
  const int d = 2;
  ModelShape sh{Family::linear, d, 1};
  ParameterSpace sp{d, 1.0};
  DistributionRef p1{InputDist::gaussian, std::sqrt(2.0), d, DependencyChain::identity(2), 1};
  DistributionRef p2{InputDist::gaussian, std::sqrt(2.0), d,
                     DependencyChain({Transformation::identity(), Transformation::scaling(10.0)}), 2};
  const auto r = discrepancy_mc(p1, p2, sh, sp, 20000, 64, 5);
  const double cf = discrepancy_closed_form(10.0, sp.diameter());
  EXPECT_NEAR(r.value, cf, 0.1 * cf);
  const auto rs = discrepancy_mc(p2, p1, sh, sp, 20000, 64, 5);
  EXPECT_EQ(r.value, rs.value);
  EXPECT_EQ(discrepancy_mc(p1, p1, sh, sp, 1000, 8, 5).value, 0.0);
}
