#ifndef DEPCL_LEARNER_HPP
#define DEPCL_LEARNER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "depcl/datagen.hpp"
#include "depcl/errors.hpp"
#include "depcl/memory.hpp"
#include "depcl/models.hpp"
#include "depcl/random.hpp"

namespace depcl {

enum class Regularizer { none, ridge };

/// (1/T) sum_t (w_t / n_t) sum_{i in R_t} ||y_ti - f(x_ti)||^2 + lambda * Omega(theta).
struct ReplayObjective {
  std::vector<double> weights;
  double lambda = 0.0;
  Regularizer regularizer = Regularizer::none;
  /// When set, lambda must respect lambda <= 4 nu^2 / (T n'').
  bool bound_mode = false;
  double nu = 0.0;
  std::uint64_t solver_seed = 0;

  static ReplayObjective uniform(int T) {
    ReplayObjective o;
    o.weights.assign(static_cast<std::size_t>(T), 1.0);
    return o;
  }

  /// w_t = T n_t / sum n.
  static ReplayObjective proportional(const std::vector<int>& counts) {
    ReplayObjective o;
    double total = 0.0;
    for (int n : counts) total += n;
    if (total <= 0) throw std::invalid_argument("proportional weights need samples");
    for (int n : counts) o.weights.push_back(static_cast<double>(counts.size()) * n / total);
    return o;
  }
};

/// n'' = min over tasks with w_t > 0 of n_t / w_t; tasks with n_t = 0 are skipped.
inline double n_double_prime(const std::vector<int>& counts, const std::vector<double>& w) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < counts.size() && t < w.size(); ++t)
    if (w[t] > 0 && counts[t] > 0) best = std::min(best, counts[t] / w[t]);
  return best;
}

/// The theorem's cap on lambda: 4 nu^2 / (T n'').
inline double lambda_cap(double nu, int T, double n_dd) { return 4.0 * nu * nu / (T * n_dd); }

/// Default lambda: min(1e-3, cap) in bound-comparison mode, else 0.
inline double default_lambda(bool bound_mode, double nu, int T, double n_dd) {
  return bound_mode ? std::min(1e-3, lambda_cap(nu, T, n_dd)) : 0.0;
}

struct TrainOutcome {
  Vector theta_hat;
  std::vector<Vector> history;
  double objective_value = 0.0;
  long solver_iters = 0;
  bool converged = true;
  bool singular = false;       // min-norm pseudo-solution used
  bool constrained = false;    // unconstrained minimizer left the ball
  bool local_solution = false; // nonlinear family, first-order point only
  std::vector<double> weights;
  std::vector<double> raw_weights;        // data-dependent schemes, before normalization
  std::vector<double> normalized_weights; // after dividing by the smallest, before clipping
  std::vector<int> counts;
  int empty_memory_tasks = 0;
};

/// Generic weighted least-squares problem: sum_k c_k ||target_k - f(x_k)||^2 + lambda ||theta||^2.
struct WeightedProblem {
  Matrix x;       // N x d_x
  Matrix target;  // N x d_y
  Vector c;       // N
  double lambda = 0.0;
};

struct SolveResult {
  Vector theta;
  long iters = 0;
  bool converged = true;
  bool singular = false;
  bool constrained = false;
  bool local_solution = false;
};

namespace detail {

inline double problem_value(const WeightedProblem& pb, const ModelShape& s, const Vector& th) {
  double v = 0.0;
  for (Eigen::Index k = 0; k < pb.x.rows(); ++k) {
    if (pb.c(k) == 0.0) continue;
    const Vector r = pb.target.row(k).transpose() - Predictor::evaluate(s, th, pb.x.row(k).transpose());
    v += pb.c(k) * r.squaredNorm();
  }
  return v + pb.lambda * th.squaredNorm();
}

/// Row-major flatten of the d_y x d_x matrix whose transpose is given.
inline Vector flatten_transpose(const Matrix& theta_t) {
  const Eigen::Index dx = theta_t.rows(), dy = theta_t.cols();
  Vector th(dx * dy);
  for (Eigen::Index r = 0; r < dy; ++r)
    for (Eigen::Index c = 0; c < dx; ++c) th(r * dx + c) = theta_t(c, r);
  return th;
}

/// Exact minimizer of the linear problem over the ball of radius R.
inline SolveResult solve_linear(const WeightedProblem& pb, const ModelShape& s, double radius) {
  const Eigen::Index n = pb.x.rows();
  const Eigen::Index dx = s.d_x;
  const double cmax = pb.c.size() ? pb.c.maxCoeff() : 0.0;
  if (!(cmax > 0.0)) throw std::invalid_argument("weighted problem has no positive weight");
  const double lam = pb.lambda / cmax;
  const Eigen::Index extra = lam > 0.0 ? dx : 0;
  Matrix a(n + extra, dx);
  Matrix b(n + extra, s.d_y);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double w = std::sqrt(pb.c(k) / cmax);
    a.row(k) = w * pb.x.row(k);
    b.row(k) = w * pb.target.row(k);
  }
  if (extra) {
    a.bottomRows(dx) = std::sqrt(lam) * Matrix::Identity(dx, dx);
    b.bottomRows(dx).setZero();
  }
  SolveResult out;
  Matrix theta_t;
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  if (qr.rank() < dx) {
    out.singular = true;
    theta_t = Eigen::CompleteOrthogonalDecomposition<Matrix>(a).solve(b);
  } else {
    theta_t = qr.solve(b);
  }
  out.theta = flatten_transpose(theta_t);
  if (out.theta.norm() <= radius) return out;

  // Ball constraint active: (A + mu I) Theta^T = B with ||Theta||_F = R.
  out.constrained = true;
  const Matrix gram = a.transpose() * a;
  const Matrix rhs = a.transpose() * b;
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
  const Vector ev = es.eigenvalues().cwiseMax(0.0);
  const Matrix bt = es.eigenvectors().transpose() * rhs;
  const Vector row_sq = bt.rowwise().squaredNorm();
  auto norm_at = [&](double mu) {
    double s2 = 0.0;
    for (Eigen::Index k = 0; k < ev.size(); ++k) {
      const double d = ev(k) + mu;
      if (row_sq(k) > 0.0) s2 += row_sq(k) / (d * d);
    }
    return std::sqrt(s2);
  };
  double lo = 0.0;
  double hi = std::sqrt(row_sq.sum()) / radius;
  while (norm_at(hi) > radius) hi *= 2.0;
  for (int it = 0; it < 400 && hi - lo > 1e-16 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (norm_at(mid) > radius ? lo : hi) = mid;
    out.iters = it + 1;
  }
  Matrix scaled = bt;
  for (Eigen::Index k = 0; k < ev.size(); ++k) scaled.row(k) /= (ev(k) + hi);
  out.theta = flatten_transpose(es.eigenvectors() * scaled);
  const double nn = out.theta.norm();
  if (nn > radius) out.theta *= radius / nn;
  return out;
}

/// Projected gradient descent with backtracking; first-order point only.
inline SolveResult solve_pgd(const WeightedProblem& pb, const ModelShape& s, const ParameterSpace& space,
                             Vector theta0, double tol = 1e-7, long max_iter = 100000) {
  const Eigen::Index n = pb.x.rows();
  const int p = s.parameter_count();
  const double cmax = pb.c.size() ? pb.c.maxCoeff() : 0.0;
  if (!(cmax > 0.0)) throw std::invalid_argument("weighted problem has no positive weight");
  auto value_grad = [&](const Vector& th, Vector* g) {
    double v = 0.0;
    if (g) g->setZero(p);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double ck = pb.c(k) / cmax;
      if (ck == 0.0) continue;
      const Vector xk = pb.x.row(k).transpose();
      const Vector r = Predictor::evaluate(s, th, xk) - pb.target.row(k).transpose();
      v += ck * r.squaredNorm();
      if (g) *g += 2.0 * ck * Predictor::jacobian(s, th, xk).transpose() * r;
    }
    const double lam = pb.lambda / cmax;
    v += lam * th.squaredNorm();
    if (g) *g += 2.0 * lam * th;
    return v;
  };
  // Power iteration on the Gauss-Newton Gram for the initial step size.
  auto gram_lipschitz = [&](const Vector& th) {
    Vector v = Vector::Ones(p) / std::sqrt(static_cast<double>(p));
    double est = 0.0;
    std::vector<Matrix> jac;
    jac.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) jac.push_back(Predictor::jacobian(s, th, pb.x.row(k).transpose()));
    for (int it = 0; it < 50; ++it) {
      Vector w = Vector::Zero(p);
      for (Eigen::Index k = 0; k < n; ++k) {
        const double ck = pb.c(k) / cmax;
        if (ck != 0.0) w += 2.0 * ck * jac[static_cast<std::size_t>(k)].transpose() * (jac[static_cast<std::size_t>(k)] * v);
      }
      w += 2.0 * (pb.lambda / cmax) * v;
      est = w.norm();
      if (est == 0.0) break;
      v = w / est;
    }
    return std::max(est, 1e-12);
  };

  SolveResult out;
  out.local_solution = true;
  Vector th = space.project(theta0);
  double lhat = gram_lipschitz(th);
  Vector g(p);
  double f = value_grad(th, &g);
  out.converged = false;
  for (long it = 0; it < max_iter; ++it) {
    out.iters = it + 1;
    Vector next;
    double fn = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      next = space.project(th - g / lhat);
      const Vector d = next - th;
      fn = value_grad(next, nullptr);
      if (fn <= f + g.dot(d) + 0.5 * lhat * d.squaredNorm() + 1e-15 * std::abs(f)) break;
      lhat *= 2.0;
    }
    const double gm = lhat * (next - th).norm();
    th = next;
    f = value_grad(th, &g);
    if (gm < tol) {
      out.converged = true;
      break;
    }
    lhat *= 0.9;
  }
  out.theta = th;
  return out;
}

inline SolveResult solve(const WeightedProblem& pb, const ModelShape& s, const ParameterSpace& space,
                         std::uint64_t solver_seed, const std::optional<Vector>& warm = std::nullopt) {
  if (s.family == Family::linear) return solve_linear(pb, s, space.radius);
  Vector th0;
  if (warm) {
    th0 = *warm;
  } else {
    Rng rng = make_stream(solver_seed, Stream::solver);
    th0 = sample_sphere(s.parameter_count(), 0.1 * space.radius, rng);
  }
  return solve_pgd(pb, s, space, th0);
}

/// Rows of the replay objective; c = w_t / (T n_t).
inline WeightedProblem replay_problem(const SampleStore& store, const ReplayObjective& obj) {
  const int T = store.T();
  if (static_cast<int>(obj.weights.size()) != T)
    throw ShapeError("need one weight per task (" + std::to_string(T) + ")");
  if (obj.lambda < 0) throw std::invalid_argument("lambda must be non-negative");
  Eigen::Index rows = 0;
  bool any = false;
  for (int t = 1; t <= T; ++t) {
    const double w = obj.weights[static_cast<std::size_t>(t - 1)];
    if (w < 0 || !std::isfinite(w)) throw std::invalid_argument("weights must be finite and >= 0");
    if (w > 0 && store.n(t) > 0) {
      rows += store.n(t);
      any = true;
    }
  }
  if (!any) throw std::invalid_argument("all task weights are zero (or weighted tasks are empty)");
  WeightedProblem pb;
  pb.x.resize(rows, store.d_x());
  pb.target.resize(rows, store.d_y());
  pb.c.resize(rows);
  Eigen::Index k = 0;
  for (int t = 1; t <= T; ++t) {
    const double w = obj.weights[static_cast<std::size_t>(t - 1)];
    if (!(w > 0) || store.n(t) == 0) continue;
    const double c = w / (static_cast<double>(T) * store.n(t));
    for (int i : store.rows(t)) {
      pb.x.row(k) = store.xs(t).row(i);
      pb.target.row(k) = store.ys(t).row(i);
      pb.c(k) = c;
      ++k;
    }
  }
  pb.lambda = obj.regularizer == Regularizer::ridge ? obj.lambda : 0.0;
  return pb;
}

}  // namespace detail

/// Pure evaluation of the replay objective at theta.
inline double objective_value(const SampleStore& store, const ReplayObjective& obj,
                              const ModelShape& shape, const Vector& theta) {
  if (theta.size() != shape.parameter_count()) throw ShapeError("theta length mismatch");
  if (store.d_x() != shape.d_x || store.d_y() != shape.d_y) throw ShapeError("store/model mismatch");
  const int T = store.T();
  if (static_cast<int>(obj.weights.size()) != T) throw ShapeError("need one weight per task");
  double v = 0.0;
  for (int t = 1; t <= T; ++t) {
    const double w = obj.weights[static_cast<std::size_t>(t - 1)];
    if (w == 0.0 || store.n(t) == 0) continue;
    double s = 0.0;
    for (int i : store.rows(t))
      s += (store.y(t, i) - Predictor::evaluate(shape, theta, store.x(t, i))).squaredNorm();
    v += w / store.n(t) * s;
  }
  v /= T;
  if (obj.regularizer == Regularizer::ridge) v += obj.lambda * theta.squaredNorm();
  return v;
}

inline TrainOutcome fit_replay(const SampleStore& store, const ReplayObjective& obj,
                               const ParameterSpace& space, const ModelShape& shape) {
  if (store.d_x() != shape.d_x || store.d_y() != shape.d_y) throw ShapeError("store/model mismatch");
  if (space.p != shape.parameter_count()) throw ShapeError("parameter space/model mismatch");
  const int T = store.T();
  if (obj.weights.size() != static_cast<std::size_t>(T) || !(obj.weights.back() > 0))
    throw std::invalid_argument("the current task needs a positive weight");
  if (obj.bound_mode) {
    const double cap = lambda_cap(obj.nu, T, n_double_prime(store.counts(), obj.weights));
    if (obj.regularizer == Regularizer::ridge && obj.lambda > cap * (1 + 1e-12))
      throw std::invalid_argument("lambda exceeds the bound-comparison cap 4 nu^2 / (T n'')");
  }
  const auto pb = detail::replay_problem(store, obj);
  const auto sol = detail::solve(pb, shape, space, obj.solver_seed);
  TrainOutcome out;
  out.theta_hat = sol.theta;
  out.history = {sol.theta};
  out.objective_value = objective_value(store, obj, shape, sol.theta);
  out.solver_iters = sol.iters;
  out.converged = sol.converged;
  out.singular = sol.singular;
  out.constrained = sol.constrained;
  out.local_solution = sol.local_solution;
  out.weights = obj.weights;
  out.counts = store.counts();
  return out;
}

enum class DistillVariant { anchor_previous, anchor_per_task };

struct DistillConfig {
  DistillVariant variant = DistillVariant::anchor_previous;
  /// Geometric decay: beta_t = ratio^{-(Tc - t)} at step Tc.
  double ratio = 4.0;
  /// Optional explicit values indexed by distance Tc - t (entry 0 is the current task).
  std::vector<double> by_distance;
  std::uint64_t solver_seed = 0;

  double beta(int tc, int t) const {
    const int dist = tc - t;
    if (dist < 0) throw std::out_of_range("beta requested for a future task");
    if (!by_distance.empty()) {
      if (dist >= static_cast<int>(by_distance.size()))
        throw std::invalid_argument("explicit beta list too short");
      return by_distance[static_cast<std::size_t>(dist)];
    }
    return std::pow(ratio, -dist);
  }

  std::vector<double> betas(int tc) const {
    std::vector<double> b;
    for (int t = 1; t <= tc; ++t) b.push_back(beta(tc, t));
    return b;
  }

  void validate() const {
    if (by_distance.empty()) {
      if (!(ratio > 0) || !std::isfinite(ratio)) throw std::invalid_argument("beta ratio must be positive");
    } else {
      for (double b : by_distance)
        if (!(b > 0) || !std::isfinite(b)) throw std::invalid_argument("betas must be positive");
    }
  }
};

/**
 * Sequential distillation over tasks 1..T of `full`. Step Tc minimizes
 * beta_Tc sum_{i in [m]} ||y - f(x)||^2 + sum_{t<Tc} beta_t sum_{i in R_t} ||f(x_ti) - anchor_ti||^2
 * where the memory R_t is the policy's choice at step Tc.
 */
inline TrainOutcome fit_distill_sequence(const SampleStore& full, const MemoryPolicy& policy,
                                         const DistillConfig& cfg, const ParameterSpace& space,
                                         const ModelShape& shape) {
  cfg.validate();
  if (full.d_x() != shape.d_x || full.d_y() != shape.d_y) throw ShapeError("store/model mismatch");
  const int T = full.T();
  const int m = full.m();
  TrainOutcome out;
  // anchor-per-task cache: f_{theta_t}(x_ti) for every i, filled when task t is stored
  std::vector<Matrix> cache;
  std::optional<Vector> warm;
  for (int tc = 1; tc <= T; ++tc) {
    const SampleStore avail = restrict(full, policy, tc);
    Eigen::Index rows = m;
    for (int t = 1; t < tc; ++t) rows += avail.n(t);
    WeightedProblem pb;
    pb.x.resize(rows, shape.d_x);
    pb.target.resize(rows, shape.d_y);
    pb.c.resize(rows);
    const double bc = cfg.beta(tc, tc);
    pb.x.topRows(m) = full.xs(tc);
    pb.target.topRows(m) = full.ys(tc);
    pb.c.head(m).setConstant(bc);
    Eigen::Index k = m;
    for (int t = 1; t < tc; ++t) {
      if (avail.n(t) == 0) {
        ++out.empty_memory_tasks;
        continue;
      }
      const double bt = cfg.beta(tc, t);
      for (int i : avail.rows(t)) {
        pb.x.row(k) = full.xs(t).row(i);
        if (cfg.variant == DistillVariant::anchor_previous)
          pb.target.row(k) =
              Predictor::evaluate(shape, out.history.back(), full.x(t, i)).transpose();
        else
          pb.target.row(k) = cache[static_cast<std::size_t>(t - 1)].row(i);
        pb.c(k) = bt;
        ++k;
      }
    }
    const auto sol = detail::solve(pb, shape, space, derive_seed(cfg.solver_seed, {static_cast<std::uint64_t>(tc)}), warm);
    out.history.push_back(sol.theta);
    out.solver_iters += sol.iters;
    out.converged = out.converged && sol.converged;
    out.singular = out.singular || sol.singular;
    out.constrained = out.constrained || sol.constrained;
    out.local_solution = out.local_solution || sol.local_solution;
    out.objective_value = detail::problem_value(pb, shape, sol.theta);
    cache.push_back(Predictor(shape, sol.theta).eval_batch(full.xs(tc)));
    if (shape.family != Family::linear) warm = sol.theta;
    if (tc == T) out.counts = avail.counts();
  }
  out.theta_hat = out.history.back();
  out.weights = cfg.betas(T);
  return out;
}

struct WeightScheme {
  enum class Kind { constant, loss_proportional, loss_inverse };
  Kind kind = Kind::constant;
  double constant = 1.0;
  double w_cap = 1.0;
  std::uint64_t solver_seed = 0;

  /// The cap 1 + 1/(T min n_t) under which the dependent-weight bound applies.
  static double theorem_cap(int T, int min_n) { return 1.0 + 1.0 / (static_cast<double>(T) * min_n); }
};

inline std::string to_string(WeightScheme::Kind k) {
  switch (k) {
    case WeightScheme::Kind::constant: return "constant";
    case WeightScheme::Kind::loss_proportional: return "loss_proportional";
    case WeightScheme::Kind::loss_inverse: return "loss_inverse";
  }
  return "constant";
}

/// Raw scheme weights from per-task losses; normalized by the smallest, then clipped to [1, W].
inline void dependent_weights(const std::vector<double>& losses, const WeightScheme& scheme,
                              std::vector<double>& raw, std::vector<double>& normalized,
                              std::vector<double>& clipped) {
  raw.clear();
  for (double l : losses) {
    switch (scheme.kind) {
      case WeightScheme::Kind::constant: raw.push_back(scheme.constant); break;
      case WeightScheme::Kind::loss_proportional: raw.push_back(l); break;
      case WeightScheme::Kind::loss_inverse:
        raw.push_back(l > 0 ? 1.0 / l : std::numeric_limits<double>::infinity());
        break;
    }
  }
  double lo = std::numeric_limits<double>::infinity();
  for (double r : raw)
    if (r > 0) lo = std::min(lo, r);
  normalized.clear();
  for (double r : raw) {
    if (!std::isfinite(lo)) normalized.push_back(1.0);       // every raw weight is zero or infinite
    else if (r <= 0) normalized.push_back(1.0);              // zero loss: lift to the floor
    else normalized.push_back(r / lo);
  }
  clipped.clear();
  for (double v : normalized) clipped.push_back(std::clamp(v, 1.0, scheme.w_cap));
}

inline TrainOutcome fit_weighted_dependent(const SampleStore& store, const WeightScheme& scheme,
                                           const ParameterSpace& space, const ModelShape& shape) {
  if (!(scheme.w_cap >= 1.0)) throw std::invalid_argument("W_cap must be >= 1");
  if (scheme.kind == WeightScheme::Kind::constant && !(scheme.constant > 0))
    throw std::invalid_argument("constant weight must be positive");
  for (int t = 1; t <= store.T(); ++t)
    if (store.n(t) < 1) throw std::invalid_argument("data-dependent weights need n_t >= 1 for every task");
  ReplayObjective pilot = ReplayObjective::uniform(store.T());
  pilot.solver_seed = scheme.solver_seed;
  const TrainOutcome first = fit_replay(store, pilot, space, shape);
  std::vector<double> losses;
  for (int t = 1; t <= store.T(); ++t) {
    double s = 0.0;
    for (int i : store.rows(t))
      s += (store.y(t, i) - Predictor::evaluate(shape, first.theta_hat, store.x(t, i))).squaredNorm();
    losses.push_back(s / store.n(t));
  }
  std::vector<double> raw, norm, clipped;
  dependent_weights(losses, scheme, raw, norm, clipped);
  ReplayObjective obj;
  obj.weights = clipped;
  obj.solver_seed = scheme.solver_seed;
  TrainOutcome out = fit_replay(store, obj, space, shape);
  out.raw_weights = raw;
  out.normalized_weights = norm;
  out.solver_iters += first.solver_iters;
  return out;
}

}  // namespace depcl

#endif  // DEPCL_LEARNER_HPP
