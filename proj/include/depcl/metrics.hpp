#ifndef DEPCL_METRICS_HPP
#define DEPCL_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "depcl/datagen.hpp"
#include "depcl/models.hpp"
#include "depcl/random.hpp"
#include "depcl/transforms.hpp"

namespace depcl {

struct ErrorReport {
  std::vector<double> per_task;     // E||f*(x_t) - f(x_t)||^2
  std::vector<double> per_task_se;
  double weighted = 0.0;            // (1/T) sum w_t e_t
  double weighted_se = 0.0;
  double average = 0.0;             // (1/T) sum e_t
  double average_se = 0.0;
  double beta_weighted = 0.0;       // sum beta_t n_t e_t / sum beta_t n_t
  double beta_weighted_se = 0.0;
  double distill_quantity = 0.0;    // sum n_t beta_t e_t / sum n_t
  double distill_quantity_se = 0.0;
  long n_eval = 0;
};

namespace detail {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const Vector& v) {
  MeanSe r;
  const double n = static_cast<double>(v.size());
  r.mean = v.mean();
  if (v.size() > 1) {
    const double var = (v.array() - r.mean).square().sum() / (n - 1.0);
    r.se = std::sqrt(var / n);
  }
  return r;
}

/// Row-wise ||f_a(x) - f_b(x)||^2 for a batch of inputs.
inline Vector sq_diff(const ModelShape& s, const Vector& ta, const Vector& tb, const Matrix& x) {
  Vector out(x.rows());
  if (s.family == Family::linear) {
    const Vector d = ta - tb;
    const Matrix dm = Predictor(s, d).as_matrix();
    out = (x * dm.transpose()).rowwise().squaredNorm();
    return out;
  }
  const Predictor pa(s, ta), pb(s, tb);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vector xi = x.row(i).transpose();
    out(i) = (pa.eval(xi) - pb.eval(xi)).squaredNorm();
  }
  return out;
}

inline Matrix propagate(const DependencyChain& chain, int t, const Matrix& x1) {
  if (t == 1) return x1;
  Matrix xt(x1.rows(), x1.cols());
  for (Eigen::Index i = 0; i < x1.rows(); ++i) xt.row(i) = chain.apply(t, x1.row(i).transpose()).transpose();
  return xt;
}

}  // namespace detail

/**
 * Monte-Carlo error report with common random numbers: every task is
 * evaluated on the same fresh task-1 draws pushed through the chain.
 * `counts` and `betas` are optional; without them the beta columns are zero.
 */
inline ErrorReport estimation_error(const TaskSequenceSpec& spec, const Vector& theta_hat,
                                    const std::vector<double>& weights, long n_eval,
                                    std::uint64_t eval_seed,
                                    const std::vector<int>& counts = {},
                                    const std::vector<double>& betas = {}) {
  if (n_eval < 100) throw std::invalid_argument("N_eval must be >= 100");
  if (static_cast<int>(weights.size()) != spec.T) throw ShapeError("need one weight per task");
  const int T = spec.T;
  Rng rng = make_stream(eval_seed, Stream::evaluation);
  const Matrix x1 = sample_inputs(spec, n_eval, rng);
  std::vector<Vector> e;
  ErrorReport r;
  r.n_eval = n_eval;
  for (int t = 1; t <= T; ++t) {
    const Matrix xt = detail::propagate(spec.chain, t, x1);
    e.push_back(detail::sq_diff(spec.model, theta_hat, spec.theta_star, xt));
    const auto ms = detail::mean_se(e.back());
    r.per_task.push_back(ms.mean);
    r.per_task_se.push_back(ms.se);
  }
  auto combo = [&](const std::vector<double>& coef) {
    Vector z = Vector::Zero(n_eval);
    for (int t = 0; t < T; ++t) z += coef[static_cast<std::size_t>(t)] * e[static_cast<std::size_t>(t)];
    return detail::mean_se(z);
  };
  std::vector<double> cw, ca;
  for (int t = 0; t < T; ++t) {
    cw.push_back(weights[static_cast<std::size_t>(t)] / T);
    ca.push_back(1.0 / T);
  }
  auto w = combo(cw);
  auto a = combo(ca);
  r.weighted = w.mean;
  r.weighted_se = w.se;
  r.average = a.mean;
  r.average_se = a.se;
  if (!counts.empty() && !betas.empty()) {
    if (static_cast<int>(counts.size()) != T || static_cast<int>(betas.size()) != T)
      throw ShapeError("counts/betas need one entry per task");
    double sbn = 0.0, sn = 0.0;
    for (int t = 0; t < T; ++t) {
      sbn += betas[static_cast<std::size_t>(t)] * counts[static_cast<std::size_t>(t)];
      sn += counts[static_cast<std::size_t>(t)];
    }
    std::vector<double> cb, cd;
    for (int t = 0; t < T; ++t) {
      const double bn = betas[static_cast<std::size_t>(t)] * counts[static_cast<std::size_t>(t)];
      cb.push_back(bn / sbn);
      cd.push_back(bn / sn);
    }
    auto b = combo(cb);
    auto d = combo(cd);
    r.beta_weighted = b.mean;
    r.beta_weighted_se = b.se;
    r.distill_quantity = d.mean;
    r.distill_quantity_se = d.se;
  }
  return r;
}

/// Moments of ||G_{f,t}(x_1)||^2 for one probe.
struct ProbeMoments {
  double m2 = 0.0;
  double m4 = 0.0;
  double kappa = 0.0;
  double kappa_se = 0.0;
  int task = 0;
  bool degenerate = false;
};

inline ProbeMoments probe_moments(const ModelShape& s, const Vector& theta, const Vector& theta_star,
                                  const Matrix& xt, int task) {
  ProbeMoments pm;
  pm.task = task;
  const Vector g = detail::sq_diff(s, theta, theta_star, xt);
  const double n = static_cast<double>(g.size());
  const double s2 = g.sum();
  const double s4 = g.squaredNorm();
  pm.m2 = s2 / n;
  pm.m4 = s4 / n;
  if (!(pm.m2 > 0.0)) {
    pm.degenerate = true;
    return pm;
  }
  pm.kappa = std::sqrt(pm.m4) / pm.m2;
  // jackknife from running sums
  if (g.size() > 2) {
    double sum = 0.0, sumsq = 0.0;
    for (Eigen::Index k = 0; k < g.size(); ++k) {
      const double m2k = (s2 - g(k)) / (n - 1);
      const double m4k = (s4 - g(k) * g(k)) / (n - 1);
      const double kk = m2k > 0 ? std::sqrt(std::max(m4k, 0.0)) / m2k : pm.kappa;
      sum += kk;
      sumsq += kk * kk;
    }
    const double mean = sum / n;
    pm.kappa_se = std::sqrt(std::max(0.0, (n - 1) / n * (sumsq - n * mean * mean)));
  }
  return pm;
}

/**
 * Probe set for suprema over the function class: antipodal boundary point,
 * signed axis points on the boundary, small perturbations of theta*, and
 * uniform points of the ball. Always an under-estimate of the supremum.
 */
inline std::vector<Vector> default_probes(const ParameterSpace& space, const Vector& theta_star,
                                          int n_theta, std::uint64_t seed) {
  std::vector<Vector> out;
  const int p = space.p;
  if (n_theta < 1) return out;
  const double sn = theta_star.norm();
  if (sn > 0) out.push_back(-space.radius * theta_star / sn);
  else out.push_back(space.radius * Vector::Unit(p, 0));
  const int axis = std::min(2 * p, n_theta / 4);
  for (int k = 0; k < axis && static_cast<int>(out.size()) < n_theta; ++k)
    out.push_back((k % 2 == 0 ? 1.0 : -1.0) * space.radius * Vector::Unit(p, k / 2));
  const int pert = n_theta / 4;
  for (int k = 0; k < pert && static_cast<int>(out.size()) < n_theta; ++k)
    out.push_back(space.project(theta_star + 1e-3 * space.radius * Vector::Unit(p, k % p)));
  Rng rng = make_stream(seed, Stream::probe, 0x9E0B);
  while (static_cast<int>(out.size()) < n_theta) out.push_back(sample_ball(p, space.radius, rng));
  return out;
}

struct KappaReport {
  double kappa = 0.0;
  double kappa_sq = 0.0;
  double kappa_se = 0.0;
  double M2 = 0.0;
  int argmax_probe = -1;
  int argmax_task = 0;
  int skipped = 0;
  std::vector<double> running_sup;  // kappa sup after each probe
  bool lower_bound = true;          // reported value is <= the true supremum
};

/// Suprema of kappa and of E||G||^2 over probes and the given tasks, on fixed task-1 draws.
inline KappaReport kappa_on_samples(const TaskSequenceSpec& spec, const Matrix& x1,
                                    const std::vector<Vector>& probes, const std::vector<int>& tasks) {
  KappaReport r;
  std::vector<Matrix> xts;
  for (int t : tasks) xts.push_back(detail::propagate(spec.chain, t, x1));
  double best = -1.0;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    for (std::size_t j = 0; j < tasks.size(); ++j) {
      const ProbeMoments pm = probe_moments(spec.model, probes[k], spec.theta_star, xts[j], tasks[j]);
      if (pm.degenerate) {
        ++r.skipped;
        continue;
      }
      r.M2 = std::max(r.M2, pm.m2);
      if (pm.kappa > best) {
        best = pm.kappa;
        r.kappa = pm.kappa;
        r.kappa_se = pm.kappa_se;
        r.argmax_probe = static_cast<int>(k);
        r.argmax_task = tasks[j];
      }
    }
    r.running_sup.push_back(std::max(best, 0.0));
  }
  r.kappa_sq = r.kappa * r.kappa;
  return r;
}

inline std::vector<int> weighted_tasks(int T, const std::vector<double>& weights) {
  std::vector<int> out;
  for (int t = 1; t <= T; ++t)
    if (weights.empty() || weights[static_cast<std::size_t>(t - 1)] > 0) out.push_back(t);
  return out;
}

inline KappaReport estimate_kappa(const TaskSequenceSpec& spec, long n_mc, int n_theta, std::uint64_t seed,
                                  const std::vector<double>& weights = {}) {
  if (n_mc < 10000) throw std::invalid_argument("N_mc must be >= 1e4");
  Rng rng = make_stream(seed, Stream::probe, 0x4A11);
  const Matrix x1 = sample_inputs(spec, n_mc, rng);
  return kappa_on_samples(spec, x1, default_probes(spec.space, spec.theta_star, n_theta, seed),
                          weighted_tasks(spec.T, weights));
}

/// M2 = sup_f sup_t E||G_{f,t}(x_1)||^2 over the probe set.
inline double estimate_M2(const TaskSequenceSpec& spec, long n_mc, int n_theta, std::uint64_t seed,
                          const std::vector<double>& weights = {},
                          const std::vector<Vector>* probes = nullptr) {
  if (n_mc < 10000) throw std::invalid_argument("N_mc must be >= 1e4");
  Rng rng = make_stream(seed, Stream::probe, 0x4A11);
  const Matrix x1 = sample_inputs(spec, n_mc, rng);
  const auto ps = probes ? *probes : default_probes(spec.space, spec.theta_star, n_theta, seed);
  double best = 0.0;
  for (int t : weighted_tasks(spec.T, weights)) {
    const Matrix xt = detail::propagate(spec.chain, t, x1);
    for (const auto& th : ps) best = std::max(best, detail::sq_diff(spec.model, th, spec.theta_star, xt).mean());
  }
  return best;
}

/// |s^2 - 1| * base_var * diam^2 for N(0, base_var I) against its s-scaled copy.
inline double discrepancy_closed_form(double s, double diam, double base_var = 1.0) {
  return std::abs(s * s - 1.0) * base_var * diam * diam;
}

/// Input distribution of task t: task-1 family pushed through a chain prefix.
struct DistributionRef {
  InputDist dist = InputDist::gaussian;
  double sigma = 1.0;
  int d_x = 1;
  DependencyChain chain = DependencyChain::identity(1);
  int t = 1;
};

struct DiscrepancyReport {
  double value = 0.0;    // >= reported, the supremum may be larger
  Vector argmax_a;
  Vector argmax_b;
  double optimism_gap = std::numeric_limits<double>::quiet_NaN();  // closed form - value, when known
};

/**
 * Monte-Carlo supremum of |E_pi1 L(f_a, f_b) - E_pi2 L(f_a, f_b)| over random
 * and antipodal boundary pairs. Both distributions draw from the same
 * stream, so swapping the arguments gives the same value.
 */
inline DiscrepancyReport discrepancy_mc(const DistributionRef& pi1, const DistributionRef& pi2,
                                        const ModelShape& shape, const ParameterSpace& space, long n_mc,
                                        int n_pairs, std::uint64_t seed) {
  if (pi1.d_x != shape.d_x || pi2.d_x != shape.d_x) throw ShapeError("distribution/model dimension mismatch");
  auto draw = [&](const DistributionRef& pi) {
    Rng rng = make_stream(seed, Stream::probe, 0xD15C);
    Matrix x(n_mc, pi.d_x);
    const double sc = pi.sigma / std::sqrt(static_cast<double>(pi.d_x));
    for (long i = 0; i < n_mc; ++i)
      for (int c = 0; c < pi.d_x; ++c) x(i, c) = draw_coordinate(pi.dist, sc, rng);
    return detail::propagate(pi.chain, pi.t, x);
  };
  const Matrix xa = draw(pi1), xb = draw(pi2);
  DiscrepancyReport r;
  Rng rng = make_stream(seed, Stream::probe, 0xD15D);
  const int p = space.p;
  for (int k = 0; k < n_pairs; ++k) {
    Vector a = sample_sphere(p, space.radius, rng);
    Vector b = k % 2 == 0 ? Vector(-a) : sample_ball(p, space.radius, rng);
    const double v = std::abs(detail::sq_diff(shape, a, b, xa).mean() - detail::sq_diff(shape, a, b, xb).mean());
    if (v > r.value || r.argmax_a.size() == 0) {
      r.value = v;
      r.argmax_a = a;
      r.argmax_b = b;
    }
  }
  return r;
}

}  // namespace depcl

#endif  // DEPCL_METRICS_HPP
