#ifndef DEPCL_HARNESS_HPP
#define DEPCL_HARNESS_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "depcl/bounds.hpp"
#include "depcl/config.hpp"
#include "depcl/datagen.hpp"
#include "depcl/learner.hpp"
#include "depcl/memory.hpp"
#include "depcl/metrics.hpp"
#include "depcl/models.hpp"
#include "depcl/transforms.hpp"

namespace depcl {

enum class Paradigm { replay, distill, dep_weights };

inline std::string to_string(Paradigm p) {
  switch (p) {
    case Paradigm::replay: return "replay";
    case Paradigm::distill: return "distill";
    case Paradigm::dep_weights: return "dep-weights";
  }
  return "replay";
}

inline Paradigm paradigm_from_string(const std::string& s) {
  if (s == "replay") return Paradigm::replay;
  if (s == "distill") return Paradigm::distill;
  if (s == "dep-weights" || s == "dep_weights") return Paradigm::dep_weights;
  throw ConfigError("unknown paradigm '" + s + "'");
}

/**
 * Everything a sweep needs, resolved from a flat Config. Keys (defaults in
 * parentheses) are listed in the README.
 */
struct ExperimentConfig {
  Config raw;

  // task sequence
  int d_x = 16, d_y = 4, T = 4, m = 128;
  double sigma = 1.0, nu = 0.1;
  InputDist input_dist = InputDist::gaussian;
  InputDist noise_dist = InputDist::gaussian;
  ModelShape model{};
  double radius = 4.0;
  double theta_fraction = 0.5;
  bool chain_per_trial = false;

  // memory
  MemoryPolicy::Kind memory_kind = MemoryPolicy::Kind::full;
  double memory_fraction = 1.0;
  int memory_budget = -1;     // absolute random budget per past task; overrides the fraction
  int reservoir_budget = -1;  // absolute reservoir size; overrides the fraction
  std::vector<std::vector<int>> fixed_rows;

  // training
  Paradigm paradigm = Paradigm::replay;
  std::string weights_mode = "uniform";  // uniform | proportional | list
  std::vector<double> weights_list;
  Regularizer regularizer = Regularizer::none;
  std::optional<double> lambda;          // unset: default rule
  bool bound_mode = false;
  DistillConfig distill{};
  WeightScheme scheme{};
  bool w_cap_theorem = true;

  // measurement
  long n_eval = 2000;
  long n_mc = 10000;
  int n_theta = 16;
  int c_max_probes = 10000;

  // bound
  bool bound_enabled = false;
  double delta = 0.05;
  double C = 2.0;
  bool strict = false;

  // sweep
  std::string axis = "total_samples";
  std::vector<double> grid{512};
  int trials = 1;
  std::uint64_t seed = 0;
  int threads = 0;  // 0: hardware concurrency
  double max_failure_fraction = 0.1;

  static ExperimentConfig from(const Config& c) {
    ExperimentConfig e;
    e.raw = c;
    e.d_x = static_cast<int>(c.integer("spec.d_x", e.d_x));
    e.d_y = static_cast<int>(c.integer("spec.d_y", e.d_y));
    e.T = static_cast<int>(c.integer("spec.T", e.T));
    e.m = static_cast<int>(c.integer("spec.m", e.m));
    e.sigma = c.num("spec.sigma", e.sigma);
    e.nu = c.num("spec.nu", e.nu);
    e.input_dist = input_dist_from_string(c.str("spec.input_dist", "gaussian"));
    e.noise_dist = input_dist_from_string(c.str("spec.noise_dist", "gaussian"));
    try {
      e.model.family = family_from_string(c.str("spec.family", "linear"));
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(ex.what());
    }
    e.model.hidden = static_cast<int>(c.integer("spec.hidden", 8));
    e.model.d_x = e.d_x;
    e.model.d_y = e.d_y;
    e.radius = c.num("spec.radius", e.radius);
    e.theta_fraction = c.num("spec.theta_fraction", e.theta_fraction);
    e.chain_per_trial = c.boolean("chain.per_trial", false);

    const std::string mk = c.str("memory.kind", "full");
    if (mk == "full") e.memory_kind = MemoryPolicy::Kind::full;
    else if (mk == "random") e.memory_kind = MemoryPolicy::Kind::random;
    else if (mk == "reservoir") e.memory_kind = MemoryPolicy::Kind::reservoir;
    else if (mk == "fixed") e.memory_kind = MemoryPolicy::Kind::fixed;
    else throw ConfigError("unknown memory.kind '" + mk + "'");
    e.memory_fraction = c.num("memory.fraction", e.memory_fraction);
    e.memory_budget = static_cast<int>(c.integer("memory.budget", -1));
    e.reservoir_budget = static_cast<int>(c.integer("memory.reservoir_budget", -1));
    if (c.has("memory.fixed")) {
      try {
        e.fixed_rows = c.json("memory.fixed").get<std::vector<std::vector<int>>>();
      } catch (const Json::exception& ex) {
        throw ConfigError(std::string("memory.fixed: ") + ex.what());
      }
    }

    e.paradigm = paradigm_from_string(c.str("train.paradigm", "replay"));
    const std::string wm = c.has("train.weights") ? c.str("train.weights", "") : "uniform";
    if (!wm.empty() && wm.front() == '[') {
      e.weights_mode = "list";
      e.weights_list = c.num_list("train.weights");
    } else if (wm == "uniform" || wm == "proportional") {
      e.weights_mode = wm;
    } else {
      throw ConfigError("train.weights must be uniform, proportional or a list");
    }
    const std::string reg = c.str("train.regularizer", "none");
    if (reg == "none") e.regularizer = Regularizer::none;
    else if (reg == "ridge") e.regularizer = Regularizer::ridge;
    else throw ConfigError("unknown train.regularizer '" + reg + "'");
    if (c.has("train.lambda") && c.str("train.lambda", "") != "default") e.lambda = c.num("train.lambda", 0.0);
    e.bound_mode = c.boolean("train.bound_mode", false);

    const std::string dv = c.str("distill.variant", "anchor_previous");
    if (dv == "anchor_previous") e.distill.variant = DistillVariant::anchor_previous;
    else if (dv == "anchor_per_task") e.distill.variant = DistillVariant::anchor_per_task;
    else throw ConfigError("unknown distill.variant '" + dv + "'");
    e.distill.ratio = c.num("distill.ratio", 4.0);
    if (c.has("distill.betas")) e.distill.by_distance = c.num_list("distill.betas");

    const std::string sk = c.str("scheme.kind", "constant");
    if (sk == "constant") e.scheme.kind = WeightScheme::Kind::constant;
    else if (sk == "loss_proportional") e.scheme.kind = WeightScheme::Kind::loss_proportional;
    else if (sk == "loss_inverse") e.scheme.kind = WeightScheme::Kind::loss_inverse;
    else throw ConfigError("unknown scheme.kind '" + sk + "'");
    e.scheme.constant = c.num("scheme.constant", 1.0);
    const std::string cap = c.str("scheme.w_cap", "theorem");
    e.w_cap_theorem = cap == "theorem";
    if (!e.w_cap_theorem) e.scheme.w_cap = c.num("scheme.w_cap", 1.0);

    e.n_eval = c.integer("eval.n_eval", e.n_eval);
    e.n_mc = c.integer("eval.n_mc", e.n_mc);
    e.n_theta = static_cast<int>(c.integer("eval.n_theta", e.n_theta));
    e.c_max_probes = static_cast<int>(c.integer("eval.c_max_probes", e.c_max_probes));

    e.bound_enabled = c.boolean("bound.enabled", false);
    e.delta = c.num("bound.delta", e.delta);
    e.C = c.num("bound.C", e.C);
    e.strict = c.boolean("bound.strict", false);

    e.axis = c.str("sweep.axis", e.axis);
    if (c.has("sweep.grid")) e.grid = c.num_list("sweep.grid");
    else e.grid = {e.axis == "total_samples" ? static_cast<double>(e.T * e.m)
                   : e.axis == "T"           ? static_cast<double>(e.T)
                   : e.axis == "nu"          ? e.nu
                                             : 1.0};
    e.trials = static_cast<int>(c.integer("sweep.trials", e.trials));
    e.seed = c.u64("sweep.seed", c.u64("seed", 0));
    e.threads = static_cast<int>(c.integer("sweep.threads", 0));
    e.max_failure_fraction = c.num("sweep.max_failure_fraction", e.max_failure_fraction);
    e.validate();
    return e;
  }

  void validate() const {
    if (grid.empty()) throw ConfigError("sweep.grid must be non-empty");
    for (std::size_t k = 1; k < grid.size(); ++k)
      if (!(grid[k] > grid[k - 1])) throw ConfigError("sweep.grid must be strictly increasing");
    if (trials < 1) throw ConfigError("sweep.trials must be >= 1");
    if (axis != "total_samples" && axis != "scale_s" && axis != "T" && axis != "nu")
      throw ConfigError("sweep.axis must be one of total_samples, scale_s, T, nu");
    if (d_x < 1 || d_y < 1 || T < 1 || m < 1) throw ConfigError("spec dimensions and counts must be >= 1");
    if (!(sigma >= 0) || !(nu >= 0)) throw ConfigError("sigma and nu must be >= 0");
    if (!(radius > 0)) throw ConfigError("spec.radius must be > 0");
    if (!(theta_fraction >= 0 && theta_fraction <= 1)) throw ConfigError("spec.theta_fraction must lie in [0, 1]");
    if (!(memory_fraction > 0 && memory_fraction <= 1)) throw ConfigError("memory.fraction must lie in (0, 1]");
    if (n_eval < 100) throw ConfigError("eval.n_eval must be >= 100");
    if (bound_enabled && n_mc < 10000) throw ConfigError("eval.n_mc must be >= 1e4");
    if (!(delta > 0 && delta <= 1)) throw ConfigError("bound.delta must lie in (0, 1]");
    if (!(C > 1)) throw ConfigError("bound.C must be > 1");
    if (threads < 0) throw ConfigError("sweep.threads must be >= 0");
    for (double g : grid) {
      if (axis == "T" && (g < 1 || g != std::floor(g))) throw ConfigError("T grid values must be positive integers");
      if (axis == "total_samples" && !(g >= 1)) throw ConfigError("total_samples grid values must be >= 1");
      if (axis == "scale_s" && !(g > 0)) throw ConfigError("scale_s grid values must be > 0");
      if (axis == "nu" && !(g >= 0)) throw ConfigError("nu grid values must be >= 0");
    }
    try {
      distill.validate();
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(ex.what());
    }
  }

  /// Hash of the settings that determine results; the worker count does not.
  std::string hash() const {
    Config c = raw;
    c.erase("sweep.threads");
    return c.hash();
  }
};

/// Axis value resolved into concrete task-sequence settings.
struct GridPoint {
  int T = 1;
  int m = 1;
  double nu = 0.0;
  double scale = std::numeric_limits<double>::quiet_NaN();  // scale_s axis only
};

namespace detail {

/// Fraction of m stored per past task under the configured memory.
inline double stored_fraction(const ExperimentConfig& cfg) {
  switch (cfg.memory_kind) {
    case MemoryPolicy::Kind::full: return 1.0;
    case MemoryPolicy::Kind::random:
    case MemoryPolicy::Kind::reservoir: return cfg.memory_fraction;
    case MemoryPolicy::Kind::fixed: return 1.0;
  }
  return 1.0;
}

}  // namespace detail

inline GridPoint grid_point(const ExperimentConfig& cfg, std::size_t g) {
  GridPoint pt{cfg.T, cfg.m, cfg.nu};
  const double v = cfg.grid.at(g);
  if (cfg.axis == "T") pt.T = static_cast<int>(v);
  else if (cfg.axis == "nu") pt.nu = v;
  else if (cfg.axis == "scale_s") pt.scale = v;
  else {
    // total_samples: m + (T-1) * f * m = N
    const double f = detail::stored_fraction(cfg);
    pt.m = std::max(1, static_cast<int>(std::lround(v / (1.0 + (pt.T - 1) * f))));
  }
  return pt;
}

/// Task sequence of one grid point; random chain maps use chain_seed.
inline TaskSequenceSpec make_spec(const ExperimentConfig& cfg, const GridPoint& pt, std::uint64_t chain_seed,
                                  std::uint64_t trial_seed) {
  TaskSequenceSpec s;
  s.d_x = cfg.d_x;
  s.d_y = cfg.d_y;
  s.T = pt.T;
  s.m = pt.m;
  s.sigma = cfg.sigma;
  s.nu = pt.nu;
  s.input_dist = cfg.input_dist;
  s.noise_dist = cfg.noise_dist;
  s.model = cfg.model;
  s.space = ParameterSpace{cfg.model.parameter_count(), cfg.radius};
  DependencyChain chain = chain_from_config(cfg.raw, pt.T, cfg.d_x, chain_seed);
  if (!std::isnan(pt.scale)) {
    std::vector<Transformation> maps{Transformation::identity()};
    for (int t = 2; t <= pt.T; ++t) {
      const Transformation& base = chain.map(t);
      if (base.kind() == Transformation::Kind::identity) maps.push_back(Transformation::scaling(pt.scale));
      else maps.push_back(Transformation::composition({base, Transformation::scaling(pt.scale)}));
    }
    chain = DependencyChain(std::move(maps));
  }
  s.chain = std::move(chain);
  s.theta_star = draw_theta_star(s.model, s.space, cfg.seed, cfg.theta_fraction);
  s.seed = trial_seed;
  s.validate();
  return s;
}

inline MemoryPolicy make_policy(const ExperimentConfig& cfg, const GridPoint& pt, std::uint64_t trial_seed) {
  const std::uint64_t ms = derive_seed(trial_seed, {static_cast<std::uint64_t>(Stream::memory)});
  switch (cfg.memory_kind) {
    case MemoryPolicy::Kind::full: return MemoryPolicy::full();
    case MemoryPolicy::Kind::fixed: return MemoryPolicy::fixed(cfg.fixed_rows);
    case MemoryPolicy::Kind::random: {
      const int b = cfg.memory_budget > 0 ? cfg.memory_budget
                                          : std::max(1, static_cast<int>(std::lround(cfg.memory_fraction * pt.m)));
      return MemoryPolicy::random(std::min(b, pt.m), ms);
    }
    case MemoryPolicy::Kind::reservoir: {
      const int b = cfg.reservoir_budget > 0
                        ? cfg.reservoir_budget
                        : std::max(1, static_cast<int>(std::lround(cfg.memory_fraction * pt.m * std::max(pt.T - 1, 1))));
      return MemoryPolicy::reservoir(b, ms);
    }
  }
  return MemoryPolicy::full();
}

/// (s^2 - 1) diam^2 between tasks 1 and T when the chain is a pure scaling chain, else NaN.
inline double scaling_discrepancy(const TaskSequenceSpec& spec) {
  double s = 1.0;
  for (int t = 2; t <= spec.T; ++t) {
    const auto& g = spec.chain.map(t);
    if (g.kind() == Transformation::Kind::scaling) s *= g.scale();
    else if (g.kind() != Transformation::Kind::identity) return std::numeric_limits<double>::quiet_NaN();
  }
  return discrepancy_closed_form(s, spec.space.diameter());
}

/// Estimated constants of one grid point, shared by all its trials.
struct PointConstants {
  KappaReport kappa;
  double M2 = 0.0;
  double c_max = 0.0;
  double L_F = 1.0;
  LipschitzConstants lip{};
};

inline PointConstants point_constants(const ExperimentConfig& cfg, const TaskSequenceSpec& spec) {
  PointConstants pc;
  pc.kappa = estimate_kappa(spec, cfg.n_mc, cfg.n_theta, cfg.seed);
  pc.M2 = pc.kappa.M2;
  pc.c_max = estimate_c_max(spec.model, spec.space, spec.chain, spec.true_predictor(), cfg.seed, cfg.c_max_probes);
  BoundInputs probe;
  probe.d_x = spec.d_x;
  probe.m = spec.m;
  probe.sigma = spec.sigma;
  probe.delta = cfg.delta;
  pc.L_F = parameter_lipschitz(spec.model, spec.space, radii(probe).r_x);
  pc.lip = lipschitz_constants(spec.chain, pc.L_F, pc.c_max);
  return pc;
}

inline BoundInputs bound_inputs(const ExperimentConfig& cfg, const TaskSequenceSpec& spec, const PointConstants& pc,
                                const std::vector<int>& counts, const std::vector<double>& weights,
                                const std::vector<double>& betas) {
  BoundInputs in;
  in.p = spec.space.p;
  in.d_x = spec.d_x;
  in.d_y = spec.d_y;
  in.sigma = spec.sigma;
  in.nu = spec.nu;
  in.T = spec.T;
  in.m = spec.m;
  in.n = counts;
  in.w = weights;
  in.beta = betas;
  in.delta = cfg.delta;
  in.C = cfg.C;
  in.kappa = std::max(pc.kappa.kappa, 1.0);
  in.M2 = pc.M2;
  in.L_G = pc.lip.L_G;
  in.k_G = pc.lip.k_G;
  in.alpha = pc.lip.alpha;
  in.B = spec.space.diameter() * pc.L_F;
  in.Omega_at_fstar = cfg.regularizer == Regularizer::ridge ? spec.theta_star.squaredNorm() : 0.0;
  return in;
}

/// One trial of one grid point.
struct RunRecord {
  std::size_t grid_index = 0;
  double axis_value = 0.0;
  int trial = 0;
  std::uint64_t seed = 0;
  int T = 0;
  int m = 0;
  int n_min = 0;
  int n_total = 0;
  double objective = 0.0;
  bool converged = true;
  double err_weighted = 0.0, err_weighted_se = 0.0;
  double err_avg = 0.0, err_avg_se = 0.0;
  double err_beta = 0.0;
  double err_bounded = 0.0, err_bounded_se = 0.0;  // the quantity the paradigm's bound covers
  std::vector<double> per_task;
  std::vector<double> weights;
  double discrepancy = std::numeric_limits<double>::quiet_NaN();
  std::optional<BoundValue> bound;
  Vector theta_hat;
};

inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t g, int k) {
  return derive_seed(seed, {static_cast<std::uint64_t>(Stream::trial), g, static_cast<std::uint64_t>(k)});
}

/// generate -> restrict -> fit -> measure -> (bound) for one (grid point, trial).
inline RunRecord run_trial(const ExperimentConfig& cfg, std::size_t g, int k, const PointConstants* pc = nullptr) {
  const GridPoint pt = grid_point(cfg, g);
  const std::uint64_t ts = trial_seed(cfg.seed, g, k);
  const TaskSequenceSpec spec = make_spec(cfg, pt, cfg.chain_per_trial ? ts : cfg.seed, ts);
  const SampleStore full = generate_full(spec);
  const MemoryPolicy policy = make_policy(cfg, pt, ts);
  const std::uint64_t solver_seed = derive_seed(ts, {static_cast<std::uint64_t>(Stream::solver)});

  RunRecord r;
  r.grid_index = g;
  r.axis_value = cfg.grid[g];
  r.trial = k;
  r.seed = ts;
  r.T = spec.T;
  r.m = spec.m;

  TrainOutcome out;
  std::vector<double> betas;
  std::vector<double> err_weights;
  BoundKind kind = BoundKind::general;
  switch (cfg.paradigm) {
    case Paradigm::replay: {
      const SampleStore store = restrict(full, policy, spec.T);
      ReplayObjective obj;
      if (cfg.weights_mode == "uniform") obj = ReplayObjective::uniform(spec.T);
      else if (cfg.weights_mode == "proportional") obj = ReplayObjective::proportional(store.counts());
      else {
        if (static_cast<int>(cfg.weights_list.size()) != spec.T) throw ConfigError("train.weights needs one entry per task");
        obj.weights = cfg.weights_list;
      }
      obj.regularizer = cfg.regularizer;
      obj.bound_mode = cfg.bound_mode;
      obj.nu = spec.nu;
      obj.solver_seed = solver_seed;
      if (cfg.regularizer == Regularizer::ridge)
        obj.lambda = cfg.lambda ? *cfg.lambda
                                : default_lambda(cfg.bound_mode, spec.nu, spec.T, n_double_prime(store.counts(), obj.weights));
      out = fit_replay(store, obj, spec.space, spec.model);
      err_weights = obj.weights;
      break;
    }
    case Paradigm::distill: {
      DistillConfig dc = cfg.distill;
      dc.solver_seed = solver_seed;
      out = fit_distill_sequence(full, policy, dc, spec.space, spec.model);
      betas = dc.betas(spec.T);
      err_weights = betas;
      kind = BoundKind::distill;
      break;
    }
    case Paradigm::dep_weights: {
      const SampleStore store = restrict(full, policy, spec.T);
      WeightScheme ws = cfg.scheme;
      ws.solver_seed = solver_seed;
      const auto cnt = store.counts();
      if (cfg.w_cap_theorem) ws.w_cap = WeightScheme::theorem_cap(spec.T, *std::min_element(cnt.begin(), cnt.end()));
      out = fit_weighted_dependent(store, ws, spec.space, spec.model);
      err_weights = out.weights;
      kind = BoundKind::dep_weights;
      break;
    }
  }
  r.theta_hat = out.theta_hat;
  r.objective = out.objective_value;
  r.converged = out.converged;
  r.weights = err_weights;
  r.n_min = *std::min_element(out.counts.begin(), out.counts.end());
  for (int n : out.counts) r.n_total += n;

  const auto err = estimation_error(spec, out.theta_hat, err_weights, cfg.n_eval,
                                    derive_seed(ts, {static_cast<std::uint64_t>(Stream::evaluation)}), out.counts,
                                    betas.empty() ? std::vector<double>(static_cast<std::size_t>(spec.T), 1.0) : betas);
  r.per_task = err.per_task;
  r.err_weighted = err.weighted;
  r.err_weighted_se = err.weighted_se;
  r.err_avg = err.average;
  r.err_avg_se = err.average_se;
  r.err_beta = err.beta_weighted;
  switch (kind) {
    case BoundKind::general: r.err_bounded = err.weighted; r.err_bounded_se = err.weighted_se; break;
    case BoundKind::distill: r.err_bounded = err.distill_quantity; r.err_bounded_se = err.distill_quantity_se; break;
    case BoundKind::dep_weights: r.err_bounded = err.average; r.err_bounded_se = err.average_se; break;
  }
  r.discrepancy = scaling_discrepancy(spec);

  if (cfg.bound_enabled) {
    std::optional<PointConstants> own;
    if (!pc) {
      own = point_constants(cfg, spec);
      pc = &*own;
    }
    bool usable = true;
    for (int n : out.counts) usable = usable && n >= 1;
    if (usable) r.bound = theorem_bound(bound_inputs(cfg, spec, *pc, out.counts, err_weights, betas), kind);
  }
  return r;
}

/// String table with a header row; the CSV form of every sweep.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::invalid_argument("no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
  bool has_col(const std::string& name) const { return std::find(header.begin(), header.end(), name) != header.end(); }

  std::string to_csv() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t k = 0; k < cells.size(); ++k) {
        if (k) out += ',';
        out += cells[k];
      }
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }

  static Table from_csv(const std::string& text) {
    Table t;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::string cell;
      std::istringstream ls(line);
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      if (line.back() == ',') cells.emplace_back();
      if (first) {
        t.header = std::move(cells);
        first = false;
      } else {
        if (cells.size() != t.header.size()) throw std::invalid_argument("CSV row width does not match header");
        t.rows.push_back(std::move(cells));
      }
    }
    return t;
  }

  void write(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << to_csv();
    if (!f) throw IoError("write failed for " + path);
  }

  static Table read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_csv(ss.str());
  }
};

inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_num(const std::string& s) {
  if (s == "nan" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(s);
}

inline const std::vector<std::string>& sweep_columns() {
  static const std::vector<std::string> cols{
      "kind",        "config_hash", "axis",           "grid_index", "axis_value",   "trial",
      "seed",        "paradigm",    "T",              "m",          "n_min",        "n_total",
      "objective",   "converged",   "err_weighted",   "err_weighted_se", "err_avg", "err_avg_se",
      "err_beta",    "err_bounded", "err_bounded_se", "err_per_task", "discrepancy", "bound_value",
      "in_regime",   "n_runs",      "n_flagged"};
  return cols;
}

struct SweepResult {
  Table table;
  std::vector<RunRecord> runs;
  int flagged = 0;
  int out_of_regime = 0;
  int total_runs() const { return static_cast<int>(runs.size()); }
};

namespace detail {

inline std::string join_per_task(const std::vector<double>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) s += ';';
    s += fmt_num(v[k]);
  }
  return s;
}

inline std::vector<double> split_per_task(const std::string& s) {
  std::vector<double> out;
  std::string cell;
  std::istringstream in(s);
  while (std::getline(in, cell, ';')) out.push_back(parse_num(cell));
  return out;
}

struct Acc {
  double n = 0, s = 0, ss = 0;
  void add(double v) {
    n += 1;
    s += v;
    ss += v * v;
  }
  double mean() const { return n > 0 ? s / n : std::numeric_limits<double>::quiet_NaN(); }
  double se() const {
    if (n < 2) return 0.0;
    const double m = s / n;
    return std::sqrt(std::max(0.0, (ss - n * m * m) / (n - 1)) / n);
  }
};

}  // namespace detail

/**
 * Aggregate rows from run rows: per grid point, mean over converged runs of
 * every numeric column, across-trial SE in the *_se columns, in_regime as
 * the in-regime fraction. Works on a parsed table so aggregates can be
 * recomputed from raw rows.
 */
inline std::vector<std::vector<std::string>> aggregate_rows(const Table& runs_only) {
  const Table& t = runs_only;
  std::map<long, std::vector<std::size_t>> by_point;
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    if (t.rows[r][t.col("kind")] == "run") by_point[std::stol(t.rows[r][t.col("grid_index")])].push_back(r);
  std::vector<std::vector<std::string>> out;
  for (const auto& [g, idx] : by_point) {
    const auto& first = t.rows[idx.front()];
    std::vector<std::string> row(t.header.size());
    for (const char* c : {"config_hash", "axis", "grid_index", "axis_value", "paradigm"}) row[t.col(c)] = first[t.col(c)];
    row[t.col("kind")] = "agg";
    row[t.col("trial")] = "-1";
    row[t.col("seed")] = "";
    std::map<std::string, detail::Acc> acc;
    std::vector<detail::Acc> per_task;
    int flagged = 0;
    detail::Acc regime;
    bool any_bound = false;
    for (std::size_t r : idx) {
      const auto& rr = t.rows[r];
      if (rr[t.col("converged")] != "1") {
        ++flagged;
        continue;
      }
      for (const char* c : {"T", "m", "n_min", "n_total", "objective", "err_weighted", "err_avg", "err_beta",
                            "err_bounded", "discrepancy", "bound_value"})
        acc[c].add(parse_num(rr[t.col(c)]));
      const auto pt = detail::split_per_task(rr[t.col("err_per_task")]);
      if (per_task.size() < pt.size()) per_task.resize(pt.size());
      for (std::size_t k = 0; k < pt.size(); ++k) per_task[k].add(pt[k]);
      if (!rr[t.col("in_regime")].empty()) {
        any_bound = true;
        regime.add(std::stod(rr[t.col("in_regime")]));
      }
    }
    for (const char* c : {"T", "m", "n_min", "n_total", "objective", "err_weighted", "err_avg", "err_beta",
                          "err_bounded", "discrepancy", "bound_value"})
      row[t.col(c)] = fmt_num(acc[c].mean());
    row[t.col("err_weighted_se")] = fmt_num(acc["err_weighted"].se());
    row[t.col("err_avg_se")] = fmt_num(acc["err_avg"].se());
    row[t.col("err_bounded_se")] = fmt_num(acc["err_bounded"].se());
    std::vector<double> ptm;
    for (const auto& a : per_task) ptm.push_back(a.mean());
    row[t.col("err_per_task")] = detail::join_per_task(ptm);
    row[t.col("converged")] = flagged == 0 ? "1" : "0";
    row[t.col("in_regime")] = any_bound ? fmt_num(regime.mean()) : "";
    row[t.col("n_runs")] = std::to_string(idx.size() - static_cast<std::size_t>(flagged));
    row[t.col("n_flagged")] = std::to_string(flagged);
    out.push_back(std::move(row));
  }
  return out;
}

inline std::vector<std::string> run_row(const ExperimentConfig& cfg, const RunRecord& r) {
  std::vector<std::string> row;
  row.push_back("run");
  row.push_back(cfg.hash());
  row.push_back(cfg.axis);
  row.push_back(std::to_string(r.grid_index));
  row.push_back(fmt_num(r.axis_value));
  row.push_back(std::to_string(r.trial));
  row.push_back(std::to_string(r.seed));
  row.push_back(to_string(cfg.paradigm));
  row.push_back(std::to_string(r.T));
  row.push_back(std::to_string(r.m));
  row.push_back(std::to_string(r.n_min));
  row.push_back(std::to_string(r.n_total));
  row.push_back(fmt_num(r.objective));
  row.push_back(r.converged ? "1" : "0");
  row.push_back(fmt_num(r.err_weighted));
  row.push_back(fmt_num(r.err_weighted_se));
  row.push_back(fmt_num(r.err_avg));
  row.push_back(fmt_num(r.err_avg_se));
  row.push_back(fmt_num(r.err_beta));
  row.push_back(fmt_num(r.err_bounded));
  row.push_back(fmt_num(r.err_bounded_se));
  row.push_back(detail::join_per_task(r.per_task));
  row.push_back(fmt_num(r.discrepancy));
  row.push_back(r.bound ? fmt_num(r.bound->value) : "nan");
  row.push_back(r.bound ? (r.bound->in_regime ? "1" : "0") : "");
  row.push_back("1");
  row.push_back(r.converged ? "0" : "1");
  return row;
}

/// Runs `body(k)` for k in [0, n) on `threads` workers.
template <typename F>
void parallel_for(std::size_t n, int threads, F body) {
  int nt = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  nt = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(nt), n));
  if (nt <= 1) {
    for (std::size_t k = 0; k < n; ++k) body(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < nt; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t k = next.fetch_add(1);
        if (k >= n) return;
        try {
          body(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!err) err = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

/// Every grid point x trial, in deterministic row order regardless of scheduling.
inline SweepResult run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::size_t G = cfg.grid.size();
  std::vector<std::optional<PointConstants>> consts(G);
  if (cfg.bound_enabled)
    parallel_for(G, cfg.threads, [&](std::size_t g) {
      const GridPoint pt = grid_point(cfg, g);
      consts[g] = point_constants(cfg, make_spec(cfg, pt, cfg.seed, trial_seed(cfg.seed, g, 0)));
    });
  const std::size_t K = static_cast<std::size_t>(cfg.trials);
  SweepResult res;
  res.runs.resize(G * K);
  parallel_for(G * K, cfg.threads, [&](std::size_t j) {
    const std::size_t g = j / K;
    const int k = static_cast<int>(j % K);
    res.runs[j] = run_trial(cfg, g, k, consts[g] ? &*consts[g] : nullptr);
  });
  res.table.header = sweep_columns();
  for (const auto& r : res.runs) {
    res.table.rows.push_back(run_row(cfg, r));
    if (!r.converged) ++res.flagged;
    if (r.bound && !r.bound->in_regime) ++res.out_of_regime;
  }
  for (auto& row : aggregate_rows(res.table)) res.table.rows.push_back(std::move(row));
  return res;
}

struct SlopeFit {
  double slope = 0.0;
  double stderr_ = 0.0;
  double intercept = 0.0;
  int points = 0;
};

/// OLS of ln y on ln x.
inline SlopeFit fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("x and y differ in length");
  if (x.size() < 3) throw std::invalid_argument("slope fit needs at least 3 points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] > 0) || !(y[k] > 0)) throw std::invalid_argument("log-log fit needs positive values");
    lx.push_back(std::log(x[k]));
    ly.push_back(std::log(y[k]));
    sx += lx.back();
    sy += ly.back();
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxx += (lx[k] - mx) * (lx[k] - mx);
    sxy += (lx[k] - mx) * (ly[k] - my);
  }
  if (!(sxx > 0)) throw std::invalid_argument("x values must not all be equal");
  SlopeFit f;
  f.points = static_cast<int>(x.size());
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssr = 0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    const double e = ly[k] - f.intercept - f.slope * lx[k];
    ssr += e * e;
  }
  f.stderr_ = n > 2 ? std::sqrt(ssr / (n - 2) / sxx) : 0.0;
  return f;
}

/// Slope over the aggregate rows (all rows if the table has no `kind` column).
inline SlopeFit fit_loglog_slope(const Table& t, const std::string& xcol, const std::string& ycol) {
  const bool filter = t.has_col("kind");
  std::vector<double> x, y;
  for (const auto& r : t.rows) {
    if (filter && r[t.col("kind")] != "agg") continue;
    x.push_back(parse_num(r[t.col(xcol)]));
    y.push_back(parse_num(r[t.col(ycol)]));
  }
  return fit_loglog_slope(x, y);
}

struct Curve {
  std::string name;
  std::string xcol;
  std::string ycol;
};

struct PlotSpec {
  std::string out_dir;
  std::vector<Curve> curves;
};

/**
 * Writes `plotdata.csv` (curve,x,y over aggregate rows) and one
 * whitespace-separated `<curve>.dat` per curve for gnuplot.
 */
inline std::vector<std::string> emit_plotdata(const Table& t, const PlotSpec& spec) {
  std::error_code ec;
  std::filesystem::create_directories(spec.out_dir, ec);
  const bool filter = t.has_col("kind");
  std::vector<std::string> written;
  Table tidy;
  tidy.header = {"curve", "x", "y"};
  for (const auto& c : spec.curves) {
    const std::string path = (std::filesystem::path(spec.out_dir) / (c.name + ".dat")).string();
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << "# " << c.xcol << ' ' << c.ycol << '\n';
    for (const auto& r : t.rows) {
      if (filter && r[t.col("kind")] != "agg") continue;
      const std::string& xs = r[t.col(c.xcol)];
      const std::string& ys = r[t.col(c.ycol)];
      f << xs << ' ' << ys << '\n';
      tidy.rows.push_back({c.name, xs, ys});
    }
    if (!f) throw IoError("write failed for " + path);
    written.push_back(path);
  }
  const std::string tidy_path = (std::filesystem::path(spec.out_dir) / "plotdata.csv").string();
  tidy.write(tidy_path);
  written.insert(written.begin(), tidy_path);
  return written;
}

}  // namespace depcl

#endif  // DEPCL_HARNESS_HPP
