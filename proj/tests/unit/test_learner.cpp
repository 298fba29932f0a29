#include <gtest/gtest.h>

#include <cmath>

#include "../oracles.hpp"
#include "depcl/datagen.hpp"
#include "depcl/learner.hpp"
#include "depcl/memory.hpp"

using namespace depcl;

namespace {

TaskSequenceSpec make(int d_x, int d_y, int T, int m, double nu, DependencyChain chain, std::uint64_t seed,
                      Family fam = Family::linear, double radius = 4.0) {
  TaskSequenceSpec s;
  s.d_x = d_x;
  s.d_y = d_y;
  s.T = T;
  s.m = m;
  s.nu = nu;
  s.chain = std::move(chain);
  s.model = ModelShape{fam, d_x, d_y, 3};
  s.space = ParameterSpace{s.model.parameter_count(), radius};
  s.theta_star = draw_theta_star(s.model, s.space, seed);
  s.seed = seed;
  return s;
}

oracle::Mat to_rows(const Matrix& m) {
  oracle::Mat out(static_cast<std::size_t>(m.rows()), oracle::Vec(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
  return out;
}

}  // namespace

TEST(Learner, NoiselessExactRecovery) {
  Rng rng(1);
  DependencyChain c({Transformation::identity(), Transformation::random_rotation(6, rng),
                     Transformation::scaling(4.0), Transformation::permutation({5, 4, 3, 2, 1, 0})});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto s = make(6, 3, 4, 8, 0.0, c, seed);
    const auto st = restrict(generate_full(s), MemoryPolicy::random(3, seed), 4);
    const auto out = fit_replay(st, ReplayObjective::proportional(st.counts()), s.space, s.model);
    EXPECT_LE((out.theta_hat - s.theta_star).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Learner, HandToyLeastSquares) {
  // (x, y) = (1, 2), (2, 4) -> theta = 2
  std::vector<Matrix> xs{Matrix(2, 1)}, ys{Matrix(2, 1)};
  xs[0] << 1, 2;
  ys[0] << 2, 4;
  SampleStore st(xs, ys, {{1, 1}});
  const auto out = fit_replay(st, ReplayObjective::uniform(1), ParameterSpace{1, 10.0}, ModelShape{Family::linear, 1, 1});
  EXPECT_NEAR(out.theta_hat(0), 2.0, 1e-14);
}

TEST(Learner, MatchesNormalEquationsOracle) {
  auto s = make(4, 2, 3, 30, 0.5, DependencyChain::identity(3), 5);
  const auto st = restrict(generate_full(s), MemoryPolicy::random(10, 2), 3);
  ReplayObjective obj = ReplayObjective::proportional(st.counts());
  obj.regularizer = Regularizer::ridge;
  obj.lambda = 0.01;
  const auto out = fit_replay(st, obj, ParameterSpace{8, 100.0}, s.model);
  const auto pb = detail::replay_problem(st, obj);
  oracle::Vec c(static_cast<std::size_t>(pb.c.size()));
  for (Eigen::Index k = 0; k < pb.c.size(); ++k) c[static_cast<std::size_t>(k)] = pb.c(k);
  const auto th = oracle::weighted_ridge(to_rows(pb.x), to_rows(pb.target), c, obj.lambda);
  for (int r = 0; r < 2; ++r)
    for (int cc = 0; cc < 4; ++cc) EXPECT_NEAR(out.theta_hat(r * 4 + cc), th[r][cc], 1e-10);
}

TEST(Learner, WeightMaskingEqualsSingleTask) {
  Rng rng(3);
  DependencyChain c({Transformation::identity(), Transformation::random_rotation(3, rng), Transformation::scaling(2)});
  auto s = make(3, 1, 3, 20, 0.3, c, 7);
  const auto full = generate_full(s);
  ReplayObjective masked;
  masked.weights = {0.0, 1.0, 0.0};
  EXPECT_THROW(fit_replay(full, masked, s.space, s.model), std::invalid_argument);  // current weight 0
  masked.weights = {0.0, 0.0, 1.0};
  const auto a = fit_replay(full, masked, s.space, s.model);
  std::vector<Matrix> xs{full.xs(3)}, ys{full.ys(3)};
  SampleStore single(xs, ys, {std::vector<char>(20, 1)});
  const auto b = fit_replay(single, ReplayObjective::uniform(1), s.space, s.model);
  EXPECT_LE((a.theta_hat - b.theta_hat).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Learner, OptimalityCertificate) {
  for (auto fam : {Family::linear, Family::one_hidden}) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      auto s = make(3, 2, 3, 25, 0.2, DependencyChain::identity(3), seed, fam, 2.0);
      const auto st = restrict(generate_full(s), MemoryPolicy::random(8, seed), 3);
      ReplayObjective obj = ReplayObjective::uniform(3);
      obj.solver_seed = seed;
      const auto out = fit_replay(st, obj, s.space, s.model);
      const double at_star = objective_value(st, obj, s.model, s.theta_star);
      const double tol = fam == Family::linear ? 1e-9 : 1e-5;
      EXPECT_LE(out.objective_value, at_star + tol);
      EXPECT_TRUE(s.space.contains(out.theta_hat, 1e-12));
      if (fam == Family::one_hidden) EXPECT_TRUE(out.local_solution);
    }
  }
}

TEST(Learner, BallConstraintActive) {
  auto s = make(3, 1, 1, 50, 0.0, DependencyChain::identity(1), 1, Family::linear, 4.0);
  s.theta_star *= 1.9;  // norm 3.8, inside R = 4
  const auto st = generate_full(s);
  ParameterSpace tight{3, 1.0};
  const auto out = fit_replay(st, ReplayObjective::uniform(1), tight, s.model);
  EXPECT_TRUE(out.constrained);
  EXPECT_NEAR(out.theta_hat.norm(), 1.0, 1e-9);
  // no point of the unit ball does better
  Rng rng(2);
  const double v = objective_value(st, ReplayObjective::uniform(1), s.model, out.theta_hat);
  for (int k = 0; k < 2000; ++k)
    EXPECT_GE(objective_value(st, ReplayObjective::uniform(1), s.model, sample_ball(3, 1.0, rng)), v - 1e-12);
}

TEST(Learner, RankDeficientMinNorm) {
  // m < d_x with a single task: min-norm pseudo solution, flagged
  auto s = make(6, 1, 1, 3, 0.0, DependencyChain::identity(1), 4);
  const auto out = fit_replay(generate_full(s), ReplayObjective::uniform(1), s.space, s.model);
  EXPECT_TRUE(out.singular);
}

TEST(Learner, WeightScaleInvariance) {
  auto s = make(4, 2, 3, 20, 0.4, DependencyChain::identity(3), 9);
  const auto st = restrict(generate_full(s), MemoryPolicy::random(6, 1), 3);
  ReplayObjective a = ReplayObjective::proportional(st.counts());
  a.regularizer = Regularizer::ridge;
  a.lambda = 0.05;
  ReplayObjective b = a;
  for (auto& w : b.weights) w *= 4.0;
  b.lambda *= 4.0;
  const auto ta = fit_replay(st, a, ParameterSpace{8, 50.0}, s.model).theta_hat;
  const auto tb = fit_replay(st, b, ParameterSpace{8, 50.0}, s.model).theta_hat;
  EXPECT_EQ(ta, tb);  // power-of-two scale: exact
  ReplayObjective c = a;
  for (auto& w : c.weights) w *= 3.7;
  c.lambda *= 3.7;
  const auto tc = fit_replay(st, c, ParameterSpace{8, 50.0}, s.model).theta_hat;
  EXPECT_LE((ta - tc).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Learner, LambdaCapInBoundMode) {
  auto s = make(2, 1, 2, 10, 0.1, DependencyChain::identity(2), 3);
  const auto st = generate_full(s);
  ReplayObjective obj = ReplayObjective::uniform(2);
  obj.regularizer = Regularizer::ridge;
  obj.bound_mode = true;
  obj.nu = 0.1;
  const double cap = lambda_cap(0.1, 2, n_double_prime(st.counts(), obj.weights));
  EXPECT_DOUBLE_EQ(cap, 4 * 0.01 / (2 * 10.0));
  obj.lambda = 2 * cap;
  EXPECT_THROW(fit_replay(st, obj, s.space, s.model), std::invalid_argument);
  obj.lambda = cap;
  EXPECT_NO_THROW(fit_replay(st, obj, s.space, s.model));
  EXPECT_DOUBLE_EQ(default_lambda(true, 0.1, 2, 10.0), std::min(1e-3, cap));
  EXPECT_EQ(default_lambda(false, 0.1, 2, 10.0), 0.0);
}

TEST(Learner, ObjectiveValueExamples) {
  auto s0 = make(3, 2, 2, 10, 0.0, DependencyChain::identity(2), 1);
  const auto st0 = generate_full(s0);
  EXPECT_EQ(objective_value(st0, ReplayObjective::uniform(2), s0.model, s0.theta_star), 0.0);

  auto s = make(3, 2, 2, 10, 0.5, DependencyChain::identity(2), 1);
  const auto st = restrict(generate_full(s), MemoryPolicy::random(4, 2), 2);
  ReplayObjective obj;
  obj.weights = {0.5, 2.0};
  // residuals at theta* are exactly the injected noise
  double want = 0;
  for (int t = 1; t <= 2; ++t) {
    double sum = 0;
    for (int i : st.rows(t)) sum += (st.y(t, i) - s.true_predictor().eval(st.x(t, i))).squaredNorm();
    want += obj.weights[static_cast<std::size_t>(t - 1)] / st.n(t) * sum;
  }
  want /= 2;
  EXPECT_NEAR(objective_value(st, obj, s.model, s.theta_star), want, 1e-14);
  ReplayObjective dbl = obj;
  for (auto& w : dbl.weights) w *= 2;
  Vector th = Vector::Ones(6) * 0.1;
  EXPECT_DOUBLE_EQ(objective_value(st, dbl, s.model, th), 2 * objective_value(st, obj, s.model, th));
}

TEST(Learner, DistillBetaSchedule) {
  DistillConfig cfg;
  const auto b = cfg.betas(3);
  EXPECT_DOUBLE_EQ(b[0], 1.0 / 16);
  EXPECT_DOUBLE_EQ(b[1], 1.0 / 4);
  EXPECT_DOUBLE_EQ(b[2], 1.0);
  const auto b6 = cfg.betas(6);
  for (int t = 0; t < 5; ++t) EXPECT_EQ(b6[static_cast<std::size_t>(t + 1)] / b6[static_cast<std::size_t>(t)], 4.0);
  DistillConfig expl;
  expl.by_distance = {1.0, 0.5};
  EXPECT_DOUBLE_EQ(expl.beta(2, 1), 0.5);
  EXPECT_THROW(expl.beta(3, 1), std::invalid_argument);
}

TEST(Learner, DistillSingleTaskEqualsReplay) {
  auto s = make(3, 2, 1, 15, 0.3, DependencyChain::identity(1), 2);
  const auto full = generate_full(s);
  const auto a = fit_distill_sequence(full, MemoryPolicy::full(), DistillConfig{}, s.space, s.model);
  const auto b = fit_replay(full, ReplayObjective::uniform(1), s.space, s.model);
  EXPECT_LE((a.theta_hat - b.theta_hat).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Learner, DistillVariantsAgreeWhenSequenceConstant) {
  // nu = 0, identity chain: every step recovers theta*, so both anchors coincide
  auto s = make(3, 1, 4, 10, 0.0, DependencyChain::identity(4), 6);
  const auto full = generate_full(s);
  DistillConfig prev, per;
  per.variant = DistillVariant::anchor_per_task;
  const auto a = fit_distill_sequence(full, MemoryPolicy::random(5, 1), prev, s.space, s.model);
  const auto b = fit_distill_sequence(full, MemoryPolicy::random(5, 1), per, s.space, s.model);
  EXPECT_NEAR(a.objective_value, b.objective_value, 1e-20);
  EXPECT_LE((a.theta_hat - b.theta_hat).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(a.history.size(), 4u);
}

TEST(Learner, DistillNoiselessRecursionSanity) {
  // on nu = 0 runs the stored-sample beta-weighted error of the final model is ~0
  Rng rng(4);
  DependencyChain c({Transformation::identity(), Transformation::random_rotation(3, rng), Transformation::scaling(2),
                     Transformation::random_rotation(3, rng)});
  auto s = make(3, 2, 4, 12, 0.0, c, 8);
  const auto full = generate_full(s);
  DistillConfig cfg;
  const auto out = fit_distill_sequence(full, MemoryPolicy::random(4, 3), cfg, s.space, s.model);
  const auto st = restrict(full, MemoryPolicy::random(4, 3), 4);
  double lhs = 0;
  for (int t = 1; t <= 4; ++t)
    for (int i : st.rows(t))
      lhs += cfg.beta(4, t) * (s.true_predictor().eval(st.x(t, i)) - Predictor(s.model, out.theta_hat).eval(st.x(t, i))).squaredNorm();
  EXPECT_LE(lhs, 1e-8);
}

TEST(Learner, DependentWeightsExamples) {
  auto s = make(3, 1, 3, 20, 0.3, DependencyChain::identity(3), 2);
  const auto st = restrict(generate_full(s), MemoryPolicy::random(6, 2), 3);
  WeightScheme constant;
  constant.w_cap = 5.0;
  const auto a = fit_weighted_dependent(st, constant, s.space, s.model);
  const auto b = fit_replay(st, ReplayObjective::uniform(3), s.space, s.model);
  EXPECT_EQ(a.theta_hat, b.theta_hat);

  WeightScheme prop;
  prop.kind = WeightScheme::Kind::loss_proportional;
  prop.w_cap = 1.0;
  const auto c = fit_weighted_dependent(st, prop, s.space, s.model);
  for (double w : c.weights) EXPECT_EQ(w, 1.0);

  std::vector<double> raw, norm, clipped;
  prop.w_cap = 10.0;
  dependent_weights({0.5, 1.0}, prop, raw, norm, clipped);
  EXPECT_DOUBLE_EQ(raw[1] / raw[0], 2.0);
  EXPECT_DOUBLE_EQ(clipped[0], 1.0);
  EXPECT_DOUBLE_EQ(clipped[1], 2.0);
  dependent_weights({0.0, 1.0}, prop, raw, norm, clipped);
  EXPECT_DOUBLE_EQ(clipped[0], 1.0);
  WeightScheme bad;
  bad.w_cap = 0.5;
  EXPECT_THROW(fit_weighted_dependent(st, bad, s.space, s.model), std::invalid_argument);
  for (double w : c.weights) {
    EXPECT_GE(w, 1.0);
    EXPECT_LE(w, 1.0);
  }
}
