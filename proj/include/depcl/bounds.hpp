#ifndef DEPCL_BOUNDS_HPP
#define DEPCL_BOUNDS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "depcl/errors.hpp"
#include "depcl/random.hpp"

namespace depcl {

/// Every constant entering the explicit recovery bounds.
struct BoundInputs {
  int p = 1;
  int d_x = 1;
  int d_y = 1;
  double sigma = 1.0;
  double nu = 0.0;
  int T = 1;
  int m = 1;
  std::vector<int> n;       // n_t
  std::vector<double> w;    // w_t (replay); ignored by the distillation form
  std::vector<double> beta; // beta_t for the distillation form (empty: 4^{-(T-t)})
  double delta = 0.05;
  double C = 2.0;
  double kappa = 1.0;
  double M2 = 1.0;
  double L_G = 2.0;
  double k_G = 5.0;
  double alpha = 1.0;
  double B = 1.0;
  double Omega_at_fstar = 0.0;

  void validate() const {
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be > 0");
    if (delta > 1.0) throw std::invalid_argument("delta must be <= 1");
    if (!(C > 1.0)) throw std::invalid_argument("C must be > 1");
    if (p < 0 || d_x < 1 || d_y < 1 || T < 1 || m < 1) throw std::invalid_argument("dimensions and counts must be >= 1");
    if (static_cast<int>(n.size()) != T) throw std::invalid_argument("need one n_t per task");
    for (int v : n)
      if (v < 1) throw std::invalid_argument("all n_t must be >= 1");
    if (sigma < 0 || nu < 0) throw std::invalid_argument("sigma and nu must be >= 0");
    if (!(alpha > 0) || !(k_G > 0)) throw std::invalid_argument("alpha and k_G must be > 0");
    if (kappa < 1.0 - 1e-12) throw std::invalid_argument("kappa must be >= 1");
  }

  double n_prime() const { return *std::min_element(n.begin(), n.end()); }

  double n_double_prime() const {
    double best = std::numeric_limits<double>::infinity();
    for (int t = 0; t < T; ++t)
      if (w.at(static_cast<std::size_t>(t)) > 0) best = std::min(best, n[static_cast<std::size_t>(t)] / w[static_cast<std::size_t>(t)]);
    if (!std::isfinite(best)) throw std::invalid_argument("no task has a positive weight");
    return best;
  }

  double w_avg() const {
    double s = 0.0;
    for (double v : w) s += v;
    return s / T;
  }

  double beta_at(int t) const {
    if (!beta.empty()) return beta.at(static_cast<std::size_t>(t - 1));
    return std::pow(4.0, -(T - t));
  }
};

struct Radii {
  double r_x = 0.0;
  double r_v = 0.0;
};

/// r_x = sigma [3 + 16 sqrt(ln(4m/delta)/d_x)], r_v = 2 nu [sqrt(d_y) + 8 sqrt(2 ln(4m/delta))].
inline Radii radii(const BoundInputs& in) {
  if (!(in.delta > 0.0)) throw std::invalid_argument("delta must be > 0");
  const double lnm = std::log(4.0 * in.m / in.delta);
  return {in.sigma * (3.0 + 16.0 * std::sqrt(lnm / in.d_x)),
          2.0 * in.nu * (std::sqrt(static_cast<double>(in.d_y)) + 8.0 * std::sqrt(2.0 * lnm))};
}

struct SampleCondition {
  bool satisfied = false;
  bool n_condition = false;
  bool m_condition = false;
  double n_required = 0.0;
  double n_margin = 0.0;  // n' - required
  double m_required = 0.0;
  double m_margin = 0.0;  // m - required
};

namespace detail {

inline double a_factor(const BoundInputs& in) {
  const double lnm = std::log(4.0 * in.m / in.delta);
  return 1.0 + 8.0 * in.nu * (1.0 + 8.0 * std::sqrt(2.0 * lnm));
}

inline double m_requirement(const BoundInputs& in) {
  const double num = std::sqrt(2.0) * in.L_G * in.sigma * in.delta * std::sqrt(in.d_x + 64.0);
  if (num == 0.0) return 0.0;
  if (!(in.M2 > 0.0)) return std::numeric_limits<double>::infinity();
  return num / (std::exp(in.d_x / 256.0) * std::sqrt(in.M2));
}

/// The bracketed sigma-dependent factor shared by every full bound.
inline double sigma_bracket(const BoundInputs& in, double w_avg) {
  const double a = in.alpha;
  const double lnm = std::log(4.0 * in.m / in.delta);
  const double brk1 = std::pow(3.0 + 16.0 * std::sqrt(lnm / in.d_x), a) +
                      1.0 / (std::pow(16.0, a) * std::pow(in.d_x, a / 2.0));
  double brk2 = 0.0;
  const double pre = 32.0 * in.L_G * std::sqrt(2.0 * in.M2) /
                     (a * std::pow(16.0, a) * (in.C + 1.0) * w_avg * in.k_G);
  const double mid = std::pow(in.d_x, a / 2.0 - 1.0) * std::sqrt(in.d_x + 64.0) / std::pow(in.sigma, a - 1.0);
  const double x = pre * mid * static_cast<double>(in.m) * in.m;
  if (x > 0.0 && std::isfinite(x)) brk2 = std::pow(std::max(256.0 / in.d_x * std::log(x), 0.0), a / 2.0);
  else if (std::isinf(x)) brk2 = std::numeric_limits<double>::infinity();
  return brk1 + brk2;
}

}  // namespace detail

/// Both sample-size conditions of the general bound, with slack.
inline SampleCondition sample_condition(const BoundInputs& in) {
  in.validate();
  const Radii r = radii(in);
  const double ndd = in.n_double_prime();
  SampleCondition sc;
  sc.n_required = 2.0 * in.kappa * in.kappa * in.C * in.C / (in.C - 1.0) *
                  (std::log(4.0 / in.delta) +
                   in.p * std::log1p(2.0 * in.B * (in.C + 1.0) / (in.C * (1.0 + r.r_v)) * in.T * ndd));
  sc.n_margin = in.n_prime() - sc.n_required;
  sc.n_condition = sc.n_margin >= 0.0;
  sc.m_required = detail::m_requirement(in);
  sc.m_margin = in.m - sc.m_required;
  sc.m_condition = sc.m_margin >= 0.0;
  sc.satisfied = sc.n_condition && sc.m_condition;
  return sc;
}

enum class BoundKind { general, distill, dep_weights };

inline std::string to_string(BoundKind k) {
  switch (k) {
    case BoundKind::general: return "general";
    case BoundKind::distill: return "distill";
    case BoundKind::dep_weights: return "dep_weights";
  }
  return "general";
}

struct BoundValue {
  double value = 0.0;
  double term_sigma = 0.0;  // sigma^alpha part
  double term_net = 0.0;    // nu^2 (p ln(...) + Omega) part
  double term_delta = 0.0;  // nu^2 ln(4/delta) part
  bool in_regime = false;
  SampleCondition condition;
};

namespace detail {

inline BoundValue general_bound(const BoundInputs& in) {
  const double ndd = in.n_double_prime();
  const double wavg = in.w_avg();
  const double tn = in.T * ndd;
  const double a = a_factor(in);
  BoundValue b;
  if (in.sigma > 0.0)
    b.term_sigma = 2.0 * in.alpha * in.C * wavg * in.k_G * a * sigma_bracket(in, wavg) *
                   std::pow(in.sigma, in.alpha) / tn;
  const double nu2 = in.nu * in.nu;
  b.term_net = 8.0 * in.C * nu2 *
               (in.p * std::log1p(2.0 * in.B * (in.C + 1.0) / (in.C * a) * tn) + in.Omega_at_fstar) / tn;
  b.term_delta = 8.0 * in.C * nu2 * std::log(4.0 / in.delta) / tn;
  b.value = b.term_sigma + b.term_net + b.term_delta;
  return b;
}

/// Distillation form: bounds sum_t n_t beta_t e_t / sum_t n_t.
inline BoundValue distill_bound(const BoundInputs& in) {
  BoundInputs adj = in;
  adj.w.assign(static_cast<std::size_t>(in.T), 0.0);
  double mb = 0.0, total = 0.0;
  for (int t = 1; t <= in.T; ++t) {
    const double bt = in.beta_at(t);
    adj.w[static_cast<std::size_t>(t - 1)] = std::pow(4.0, in.T - t) * in.n[static_cast<std::size_t>(t - 1)] / in.m * bt;
    mb = std::max(mb, std::pow(2.0, 2.0 * (in.T - t)) * bt);
    total += in.n[static_cast<std::size_t>(t - 1)];
  }
  const double wavg = adj.w_avg();
  const double a = a_factor(in);
  BoundValue b;
  if (in.sigma > 0.0)
    b.term_sigma = 2.0 * in.alpha * in.C * wavg * in.k_G * a * sigma_bracket(in, wavg) *
                   std::pow(in.sigma, in.alpha) / total * mb;
  const double nu2 = in.nu * in.nu;
  b.term_net = 8.0 * in.C * nu2 * in.p * in.T *
               std::log1p(2.0 * in.B * (in.C + 1.0) / (in.C * a) * in.T * in.m / mb) / total;
  b.term_delta = 8.0 * in.C * nu2 * std::log(4.0 / in.delta) / total * mb;
  b.value = b.term_sigma + b.term_net + b.term_delta;
  b.condition = sample_condition(adj);
  b.in_regime = b.condition.satisfied;
  return b;
}

}  // namespace detail

/**
 * Numeric value of the fully displayed bound.
 *  general     : weighted error (1/T) sum w_t e_t with the inputs' w.
 *  distill     : sum n_t beta_t e_t / sum n_t, with w_t = 4^{T-t} (n_t/m) beta_t.
 *  dep_weights : average error (1/T) sum e_t; identical to the uniform-weight
 *                general form, in regime only if W <= 1 + 1/(T n_t) also holds
 *                (checked by the caller through `w`, which carries the realized weights).
 */
inline BoundValue theorem_bound(const BoundInputs& in, BoundKind which = BoundKind::general) {
  in.validate();
  switch (which) {
    case BoundKind::general: {
      BoundValue b = detail::general_bound(in);
      b.condition = sample_condition(in);
      b.in_regime = b.condition.satisfied;
      return b;
    }
    case BoundKind::distill:
      return detail::distill_bound(in);
    case BoundKind::dep_weights: {
      BoundInputs u = in;
      u.w.assign(static_cast<std::size_t>(in.T), 1.0);
      BoundValue b = detail::general_bound(u);
      b.condition = sample_condition(u);
      double wmax = 1.0;
      for (double v : in.w) wmax = std::max(wmax, v);
      const double cap = 1.0 + 1.0 / (static_cast<double>(in.T) * u.n_prime());
      b.in_regime = b.condition.satisfied && wmax <= cap * (1.0 + 1e-15);
      return b;
    }
  }
  return {};
}

/// Noiseless special case: the sigma term alone, with its own strict n' condition.
inline BoundValue corollary_noiseless(const BoundInputs& in) {
  in.validate();
  if (in.nu != 0.0) throw std::invalid_argument("noiseless corollary needs nu = 0");
  BoundValue b;
  const double ndd = in.n_double_prime();
  const double tn = in.T * ndd;
  if (in.sigma > 0.0)
    b.term_sigma = 2.0 * in.alpha * in.C * in.w_avg() * in.k_G * detail::sigma_bracket(in, in.w_avg()) *
                   std::pow(in.sigma, in.alpha) / tn;
  b.value = b.term_sigma;
  const double a = detail::a_factor(in);
  b.condition.n_required = 2.0 * in.kappa * in.kappa * in.C / (in.C - 1.0) *
                           (std::log(4.0 / in.delta) +
                            in.p * std::log1p(2.0 * in.B * (in.C + 1.0) / (in.C * a) * tn));
  b.condition.n_margin = in.n_prime() - b.condition.n_required;
  b.condition.n_condition = b.condition.n_margin > 0.0;
  b.condition.m_required = detail::m_requirement(in);
  b.condition.m_margin = in.m - b.condition.m_required;
  b.condition.m_condition = b.condition.m_margin >= 0.0;
  b.condition.satisfied = b.condition.n_condition && b.condition.m_condition;
  b.in_regime = b.condition.satisfied;
  return b;
}

/// Deterministic-input special case: the nu^2 terms alone.
inline BoundValue corollary_deterministic_inputs(const BoundInputs& in) {
  in.validate();
  if (in.sigma != 0.0) throw std::invalid_argument("deterministic-input corollary needs sigma = 0");
  BoundValue b;
  const double tn = in.T * in.n_double_prime();
  const double a = detail::a_factor(in);
  const double lnet = in.p * std::log1p(2.0 * in.B * (in.C + 1.0) / (in.C * a) * tn);
  // (8 C nu^2 / T n'') [p ln(...) + Omega + ln(4/delta)], split as the general path splits it
  const double nu2 = in.nu * in.nu;
  b.term_net = 8.0 * in.C * nu2 * (lnet + in.Omega_at_fstar) / tn;
  b.term_delta = 8.0 * in.C * nu2 * std::log(4.0 / in.delta) / tn;
  b.value = b.term_sigma + b.term_net + b.term_delta;
  b.condition.n_required = 2.0 * in.kappa * in.kappa * in.C * in.C / (in.C - 1.0) *
                           (std::log(4.0 / in.delta) + lnet);
  b.condition.n_margin = in.n_prime() - b.condition.n_required;
  b.condition.n_condition = b.condition.n_margin > 0.0;
  b.condition.m_condition = true;
  b.condition.satisfied = b.condition.n_condition;
  b.in_regime = b.condition.satisfied;
  return b;
}

/// Log-size of an eps-net of a p-dimensional set of the given diameter, constant fixed at 3.
inline double net_size(int p, double diam, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be > 0");
  if (p == 0) return 0.0;
  return 3.0 * p * std::max(std::log(4.0 * diam / eps), 0.0);
}

struct ValidationRow {
  double param = 0.0;      // u (norm concentration) or r (projection difference)
  double empirical = 0.0;
  double se = 0.0;
  double bound = 0.0;
  bool ok = true;
};

struct ValidationReport {
  std::vector<ValidationRow> rows;
  long trials = 0;
  int failures() const {
    return static_cast<int>(std::count_if(rows.begin(), rows.end(), [](const ValidationRow& r) { return !r.ok; }));
  }
};

inline std::vector<double> default_u_grid(double sigma) {
  std::vector<double> g;
  for (double k : {0.0, 0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0}) g.push_back(k * sigma);
  return g;
}

/**
 * Empirical P[||z|| - 2 sigma >= u] for Gaussian z with coordinate variance
 * sigma^2/d, against exp(-d u^2 / (128 sigma^2)) plus 3 binomial SE.
 */
inline ValidationReport validate_norm_concentration(double sigma, int d, long trials, std::uint64_t seed,
                                                    std::vector<double> u_grid = {}) {
  if (trials < 10000) throw std::invalid_argument("N_trials must be >= 1e4");
  if (d < 1 || sigma < 0) throw std::invalid_argument("need d >= 1 and sigma >= 0");
  if (u_grid.empty()) u_grid = sigma > 0 ? default_u_grid(sigma) : std::vector<double>{0.0, 0.5, 1.0};
  std::vector<double> excess(static_cast<std::size_t>(trials));
  Rng rng = make_stream(seed, Stream::validation, static_cast<std::uint64_t>(d));
  const double sc = sigma / std::sqrt(static_cast<double>(d));
  for (long k = 0; k < trials; ++k) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) {
      const double z = sc * rng.normal();
      s += z * z;
    }
    excess[static_cast<std::size_t>(k)] = std::sqrt(s) - 2.0 * sigma;
  }
  ValidationReport rep;
  rep.trials = trials;
  for (double u : u_grid) {
    ValidationRow r;
    r.param = u;
    long hits = 0;
    for (double e : excess) hits += (e >= u) ? 1 : 0;
    r.empirical = static_cast<double>(hits) / trials;
    if (u <= 0.0) r.bound = 1.0;
    else if (sigma == 0.0) r.bound = 0.0;
    else r.bound = std::exp(-d * u * u / (128.0 * sigma * sigma));
    const double q = std::max(r.empirical, r.bound);
    r.se = std::sqrt(q * (1.0 - q) / trials);
    r.ok = r.empirical <= r.bound + 3.0 * r.se;
    rep.rows.push_back(r);
  }
  return rep;
}

inline double projection_difference_bound(double sigma, int d, double r, double L) {
  return 128.0 * L * L * sigma * sigma / (static_cast<double>(d) * d) * (d + 64.0) *
         std::exp(-d * (r - 2.0 * sigma) * (r - 2.0 * sigma) / (128.0 * sigma * sigma));
}

/**
 * E||h(P_r(z)) - h(z)||^2 for h = L * identity against the projection-difference
 * bound, at each radius of `r_grid` (all must exceed 3 sigma).
 */
inline ValidationReport validate_projection_difference(double sigma, int d, std::vector<double> r_grid, double L,
                                                       long trials, std::uint64_t seed) {
  if (trials < 10000) throw std::invalid_argument("N_trials must be >= 1e4");
  if (!(sigma > 0) || d < 1) throw std::invalid_argument("need sigma > 0 and d >= 1");
  for (double r : r_grid)
    if (!(r > 3.0 * sigma)) throw PreconditionError("projection-difference check needs r > 3 sigma");
  std::vector<double> norms(static_cast<std::size_t>(trials));
  Rng rng = make_stream(seed, Stream::validation, 0x9000u + static_cast<std::uint64_t>(d));
  const double sc = sigma / std::sqrt(static_cast<double>(d));
  for (long k = 0; k < trials; ++k) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) {
      const double z = sc * rng.normal();
      s += z * z;
    }
    norms[static_cast<std::size_t>(k)] = std::sqrt(s);
  }
  ValidationReport rep;
  rep.trials = trials;
  for (double r : r_grid) {
    double sum = 0.0, sumsq = 0.0;
    for (double nz : norms) {
      const double ex = nz > r ? L * L * (nz - r) * (nz - r) : 0.0;  // ||L P(z) - L z||^2
      sum += ex;
      sumsq += ex * ex;
    }
    ValidationRow row;
    row.param = r;
    row.empirical = sum / trials;
    const double var = std::max(0.0, sumsq / trials - row.empirical * row.empirical);
    row.se = std::sqrt(var / trials);
    row.bound = projection_difference_bound(sigma, d, r, L);
    row.ok = row.empirical <= row.bound + 3.0 * row.se;
    rep.rows.push_back(row);
  }
  return rep;
}

inline std::vector<double> default_r_grid(double sigma) {
  return {3.25 * sigma, 3.5 * sigma, 4.0 * sigma, 5.0 * sigma, 8.0 * sigma};
}

}  // namespace depcl

#endif  // DEPCL_BOUNDS_HPP
