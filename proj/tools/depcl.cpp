#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "depcl/bounds.hpp"
#include "depcl/config.hpp"
#include "depcl/datagen.hpp"
#include "depcl/harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kOutOfRegime = 3;
constexpr int kSolverFailures = 4;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string seed;
  int trials = 0;
  int threads = -1;
  std::string axis;
  std::string grid;

  void attach(CLI::App* app, bool seed_required = false) {
    app->add_option("-c,--config", config_path, "config file (key = value with [sections])");
    app->add_option("--set", overrides, "override a config key: key=value (repeatable)");
    auto* s = app->add_option("--seed", seed, "base seed (config key sweep.seed)");
    if (seed_required) s->required();
    app->add_option("--trials", trials, "trials per grid point (sweep.trials)");
    app->add_option("--threads", threads, "worker threads, 0 = all cores (sweep.threads)");
    app->add_option("--axis", axis, "total_samples | scale_s | T | nu (sweep.axis)");
    app->add_option("--grid", grid, "grid values, e.g. [200,400,800] (sweep.grid)");
  }

  depcl::ExperimentConfig resolve() const {
    depcl::Config c = config_path.empty() ? depcl::Config{} : depcl::Config::load(config_path);
    for (const auto& o : overrides) c.set_assignment(o);
    if (!seed.empty()) c.set("sweep.seed", seed);
    if (trials > 0) c.set("sweep.trials", std::to_string(trials));
    if (threads >= 0) c.set("sweep.threads", std::to_string(threads));
    if (!axis.empty()) c.set("sweep.axis", axis);
    if (!grid.empty()) c.set("sweep.grid", grid);
    return depcl::ExperimentConfig::from(c);
  }
};

void print_bound(const depcl::BoundValue& b) {
  std::printf("bound_value,%s\nterm_sigma,%s\nterm_net,%s\nterm_delta,%s\n", depcl::fmt_num(b.value).c_str(),
              depcl::fmt_num(b.term_sigma).c_str(), depcl::fmt_num(b.term_net).c_str(),
              depcl::fmt_num(b.term_delta).c_str());
  std::printf("n_required,%s\nn_margin,%s\nm_required,%s\nm_margin,%s\nin_regime,%d\n",
              depcl::fmt_num(b.condition.n_required).c_str(), depcl::fmt_num(b.condition.n_margin).c_str(),
              depcl::fmt_num(b.condition.m_required).c_str(), depcl::fmt_num(b.condition.m_margin).c_str(),
              b.in_regime ? 1 : 0);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Replay, distillation and data-dependent-weight experiments on dependent task sequences"};
  app.require_subcommand(1);

  Common gen_opts, train_opts, sweep_opts, bound_opts;
  std::string gen_csv = "store.csv", gen_index = "store.idx";
  std::size_t gen_point = 0;
  auto* gen = app.add_subcommand("generate", "sample a task sequence and write it as CSV plus an index file");
  gen_opts.attach(gen);
  gen->add_option("-o,--out", gen_csv, "sample CSV path");
  gen->add_option("--index", gen_index, "index sidecar path");
  gen->add_option("--grid-index", gen_point, "grid point to materialize");

  std::size_t train_point = 0;
  int train_trial = 0;
  bool train_bound = false;
  auto* train = app.add_subcommand("train", "run one trial and print its CSV row");
  train_opts.attach(train);
  train->add_option("--grid-index", train_point, "grid point");
  train->add_option("--trial", train_trial, "trial index");
  train->add_flag("--bound", train_bound, "also evaluate the bound (bound.enabled)");

  std::string sweep_out, plot_dir;
  auto* sweep = app.add_subcommand("sweep", "grid x trials sweep to CSV");
  sweep_opts.attach(sweep, true);
  sweep->add_option("-o,--out", sweep_out, "output CSV (stdout if omitted)");
  sweep->add_option("--plot-dir", plot_dir, "also write plot data (measured and bound curves) here");

  auto* bound = app.add_subcommand("bound", "evaluate the bound for the first grid point");
  bound_opts.attach(bound);

  double v_sigma = 1.0, v_L = 1.0;
  std::vector<int> v_dims{4, 16, 64};
  long v_trials = 100000;
  std::uint64_t v_seed = 0;
  auto* validate = app.add_subcommand("validate", "Monte-Carlo checks of the concentration inequalities");
  validate->add_option("--sigma", v_sigma, "proxy scale");
  validate->add_option("--d", v_dims, "dimensions")->expected(1, -1);
  validate->add_option("--trials", v_trials, "Monte-Carlo trials (>= 1e4)");
  validate->add_option("--seed", v_seed, "seed");
  validate->add_option("--L", v_L, "Lipschitz constant of the test map");

  std::string s_in, s_x = "n_total", s_y = "err_weighted";
  auto* slope = app.add_subcommand("slope", "log-log slope over the aggregate rows of a sweep CSV");
  slope->add_option("--in", s_in, "sweep CSV")->required();
  slope->add_option("--x", s_x, "x column");
  slope->add_option("--y", s_y, "y column");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*gen) {
      const auto cfg = gen_opts.resolve();
      if (gen_point >= cfg.grid.size()) throw depcl::ConfigError("--grid-index out of range");
      const auto pt = depcl::grid_point(cfg, gen_point);
      const auto ts = depcl::trial_seed(cfg.seed, gen_point, 0);
      const auto spec = depcl::make_spec(cfg, pt, cfg.chain_per_trial ? ts : cfg.seed, ts);
      depcl::export_store(depcl::generate_full(spec), gen_csv, gen_index);
      std::printf("wrote %s and %s\n", gen_csv.c_str(), gen_index.c_str());
      return kOk;
    }
    if (*train) {
      auto cfg = train_opts.resolve();
      if (train_bound) cfg.bound_enabled = true;
      if (train_point >= cfg.grid.size()) throw depcl::ConfigError("--grid-index out of range");
      const auto r = depcl::run_trial(cfg, train_point, train_trial);
      depcl::Table t;
      t.header = depcl::sweep_columns();
      t.rows.push_back(depcl::run_row(cfg, r));
      std::cout << t.to_csv();
      if (!r.converged) return kSolverFailures;
      if (r.bound && !r.bound->in_regime) return kOutOfRegime;
      return kOk;
    }
    if (*sweep) {
      const auto cfg = sweep_opts.resolve();
      const auto res = depcl::run_sweep(cfg);
      if (sweep_out.empty()) std::cout << res.table.to_csv();
      else res.table.write(sweep_out);
      if (!plot_dir.empty()) {
        std::vector<depcl::Curve> curves{{"measured", "axis_value", "err_bounded"}};
        if (cfg.bound_enabled) curves.push_back({"bound", "axis_value", "bound_value"});
        depcl::emit_plotdata(res.table, {plot_dir, curves});
      }
      std::fprintf(stderr, "runs=%d flagged=%d out_of_regime=%d\n", res.total_runs(), res.flagged, res.out_of_regime);
      if (res.flagged > cfg.max_failure_fraction * res.total_runs()) return kSolverFailures;
      if (cfg.strict && res.out_of_regime > 0) return kOutOfRegime;
      return kOk;
    }
    if (*bound) {
      auto cfg = bound_opts.resolve();
      cfg.bound_enabled = true;
      const auto r = depcl::run_trial(cfg, 0, 0);
      if (!r.bound) throw depcl::ConfigError("bound needs n_t >= 1 for every task");
      print_bound(*r.bound);
      std::printf("measured,%s\n", depcl::fmt_num(r.err_bounded).c_str());
      return r.bound->in_regime ? kOk : kOutOfRegime;
    }
    if (*validate) {
      int failures = 0;
      std::printf("check,d,param,empirical,se,bound,ok\n");
      for (int d : v_dims) {
        const auto a = depcl::validate_norm_concentration(v_sigma, d, v_trials, v_seed);
        for (const auto& row : a.rows)
          std::printf("norm,%d,%s,%s,%s,%s,%d\n", d, depcl::fmt_num(row.param).c_str(),
                      depcl::fmt_num(row.empirical).c_str(), depcl::fmt_num(row.se).c_str(),
                      depcl::fmt_num(row.bound).c_str(), row.ok ? 1 : 0);
        const auto b = depcl::validate_projection_difference(v_sigma, d, depcl::default_r_grid(v_sigma), v_L,
                                                             v_trials, v_seed);
        for (const auto& row : b.rows)
          std::printf("projection,%d,%s,%s,%s,%s,%d\n", d, depcl::fmt_num(row.param).c_str(),
                      depcl::fmt_num(row.empirical).c_str(), depcl::fmt_num(row.se).c_str(),
                      depcl::fmt_num(row.bound).c_str(), row.ok ? 1 : 0);
        failures += a.failures() + b.failures();
      }
      return failures == 0 ? kOk : 1;
    }
    if (*slope) {
      const auto f = depcl::fit_loglog_slope(depcl::Table::read(s_in), s_x, s_y);
      std::printf("slope,%s\nstderr,%s\npoints,%d\n", depcl::fmt_num(f.slope).c_str(),
                  depcl::fmt_num(f.stderr_).c_str(), f.points);
      return kOk;
    }
  } catch (const depcl::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kOk;
}
