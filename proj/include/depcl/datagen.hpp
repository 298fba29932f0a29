#ifndef DEPCL_DATAGEN_HPP
#define DEPCL_DATAGEN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "depcl/errors.hpp"
#include "depcl/models.hpp"
#include "depcl/random.hpp"
#include "depcl/transforms.hpp"

namespace depcl {

enum class InputDist { gaussian, bounded_uniform, rademacher };

inline std::string to_string(InputDist d) {
  switch (d) {
    case InputDist::gaussian: return "gaussian";
    case InputDist::bounded_uniform: return "bounded_uniform";
    case InputDist::rademacher: return "rademacher";
  }
  return "gaussian";
}

inline InputDist input_dist_from_string(const std::string& s) {
  if (s == "gaussian") return InputDist::gaussian;
  if (s == "bounded_uniform" || s == "bounded-uniform" || s == "uniform") return InputDist::bounded_uniform;
  if (s == "rademacher" || s == "rademacher-scaled" || s == "rademacher_scaled") return InputDist::rademacher;
  throw ConfigError("unknown input distribution '" + s + "'");
}

/// One zero-mean draw with variance (and proxy variance) scale^2.
inline double draw_coordinate(InputDist dist, double scale, Rng& rng) {
  switch (dist) {
    case InputDist::gaussian:
      return scale * rng.normal();
    case InputDist::bounded_uniform:
      return scale * std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);
    case InputDist::rademacher:
      return rng.coin() ? scale : -scale;
  }
  return 0.0;
}

/// Full generative description of a task sequence.
struct TaskSequenceSpec {
  int d_x = 1;
  int d_y = 1;
  int T = 1;
  int m = 1;
  double sigma = 1.0;
  double nu = 0.0;
  InputDist input_dist = InputDist::gaussian;
  InputDist noise_dist = InputDist::gaussian;
  DependencyChain chain = DependencyChain::identity(1);
  ModelShape model{};
  ParameterSpace space{};
  Vector theta_star;
  std::uint64_t seed = 0;

  void validate() const {
    if (d_x < 1 || d_y < 1 || T < 1 || m < 1)
      throw std::invalid_argument("d_x, d_y, T and m must all be >= 1");
    if (!(sigma >= 0.0) || !(nu >= 0.0) || !std::isfinite(sigma) || !std::isfinite(nu))
      throw std::invalid_argument("sigma and nu must be finite and non-negative");
    if (chain.tasks() != T)
      throw std::invalid_argument("chain length " + std::to_string(chain.tasks()) + " != T " +
                                  std::to_string(T));
    chain.check_dimension(d_x);
    if (model.d_x != d_x || model.d_y != d_y) throw ShapeError("model shape does not match d_x/d_y");
    model.validate();
    space.validate();
    if (space.p != model.parameter_count()) throw ShapeError("parameter space dimension != model p");
    if (theta_star.size() != space.p) throw ShapeError("theta* has wrong length");
    // realizability: f* lives in the same family inside the ball
    if (theta_star.norm() > space.radius * (1.0 + 1e-12))
      throw std::invalid_argument("true predictor lies outside the parameter ball");
  }

  Predictor true_predictor() const { return Predictor(model, theta_star); }
  double coordinate_scale() const { return sigma / std::sqrt(static_cast<double>(d_x)); }
};

/// theta* on the sphere of radius fraction * R, drawn from its own stream.
inline Vector draw_theta_star(const ModelShape& shape, const ParameterSpace& space,
                              std::uint64_t seed, double fraction = 0.5) {
  Rng rng = make_stream(seed, Stream::theta_star);
  return sample_sphere(shape.parameter_count(), fraction * space.radius, rng);
}

/// n x d_x matrix of independent task-1 inputs drawn from rng.
inline Matrix sample_inputs(const TaskSequenceSpec& spec, Eigen::Index n, Rng& rng) {
  Matrix x(n, spec.d_x);
  const double sc = spec.coordinate_scale();
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < spec.d_x; ++c) x(i, c) = draw_coordinate(spec.input_dist, sc, rng);
  return x;
}

/// Task-1 inputs; sample i comes from its own stream so m can grow without
/// perturbing earlier samples.
inline Matrix sample_task1(const TaskSequenceSpec& spec) {
  Matrix x(spec.m, spec.d_x);
  const double sc = spec.coordinate_scale();
  for (int i = 0; i < spec.m; ++i) {
    Rng rng = make_stream(spec.seed, Stream::input, static_cast<std::uint64_t>(i));
    for (int c = 0; c < spec.d_x; ++c) x(i, c) = draw_coordinate(spec.input_dist, sc, rng);
  }
  return x;
}

/// Partial T x m matrix of (x, y) pairs with the index sets R_t and M_i.
/// Tasks are 1-based, samples 0-based.
class SampleStore {
 public:
  SampleStore() = default;

  SampleStore(std::vector<Matrix> xs, std::vector<Matrix> ys, std::vector<std::vector<char>> present)
      : xs_(std::move(xs)), ys_(std::move(ys)), present_(std::move(present)) {
    if (xs_.empty() || xs_.size() != ys_.size() || xs_.size() != present_.size())
      throw ShapeError("sample store needs matching per-task blocks");
    m_ = static_cast<int>(xs_[0].rows());
    d_x_ = static_cast<int>(xs_[0].cols());
    d_y_ = static_cast<int>(ys_[0].cols());
    for (std::size_t t = 0; t < xs_.size(); ++t) {
      if (xs_[t].rows() != m_ || ys_[t].rows() != m_ || xs_[t].cols() != d_x_ ||
          ys_[t].cols() != d_y_ || static_cast<int>(present_[t].size()) != m_)
        throw ShapeError("sample store block has inconsistent shape");
    }
    rebuild_index();
  }

  int T() const noexcept { return static_cast<int>(xs_.size()); }
  int m() const noexcept { return m_; }
  int d_x() const noexcept { return d_x_; }
  int d_y() const noexcept { return d_y_; }

  bool has(int t, int i) const { return present_[idx(t)][static_cast<std::size_t>(i)] != 0; }
  /// R_t
  const std::vector<int>& rows(int t) const { return rows_[idx(t)]; }
  /// M_i
  std::vector<int> tasks_for(int i) const {
    if (i < 0 || i >= m_) throw std::out_of_range("sample index out of range");
    std::vector<int> out;
    for (int t = 1; t <= T(); ++t)
      if (has(t, i)) out.push_back(t);
    return out;
  }
  int n(int t) const { return static_cast<int>(rows(t).size()); }
  std::vector<int> counts() const {
    std::vector<int> c;
    for (int t = 1; t <= T(); ++t) c.push_back(n(t));
    return c;
  }
  int total() const {
    int s = 0;
    for (int t = 1; t <= T(); ++t) s += n(t);
    return s;
  }

  /// The three views (mask, R_t, M_i) agree and R_T = [m].
  bool consistent() const {
    for (int t = 1; t <= T(); ++t) {
      std::size_t cnt = 0;
      for (int i = 0; i < m_; ++i) cnt += has(t, i) ? 1u : 0u;
      if (cnt != rows(t).size()) return false;
      for (int i : rows(t))
        if (!has(t, i)) return false;
    }
    for (int i = 0; i < m_; ++i)
      for (int t : tasks_for(i))
        if (std::find(rows(t).begin(), rows(t).end(), i) == rows(t).end()) return false;
    return n(T()) == m_;
  }

  auto x(int t, int i) const { return xs_[idx(t)].row(i).transpose(); }
  auto y(int t, int i) const { return ys_[idx(t)].row(i).transpose(); }
  const Matrix& xs(int t) const { return xs_[idx(t)]; }
  const Matrix& ys(int t) const { return ys_[idx(t)]; }
  const std::vector<char>& mask(int t) const { return present_[idx(t)]; }

  /// Tasks 1..tc, unchanged.
  SampleStore prefix(int tc) const {
    if (tc < 1 || tc > T()) throw std::out_of_range("prefix length out of range");
    return SampleStore({xs_.begin(), xs_.begin() + tc}, {ys_.begin(), ys_.begin() + tc},
                       {present_.begin(), present_.begin() + tc});
  }

  /// Same samples, new availability mask. The mask may only remove entries.
  SampleStore with_mask(std::vector<std::vector<char>> mask) const {
    if (mask.size() != present_.size()) throw ShapeError("mask has wrong task count");
    for (std::size_t t = 0; t < mask.size(); ++t) {
      if (mask[t].size() != present_[t].size()) throw ShapeError("mask has wrong sample count");
      for (std::size_t i = 0; i < mask[t].size(); ++i)
        if (mask[t][i] && !present_[t][i]) throw std::invalid_argument("mask adds a sample");
    }
    return SampleStore(xs_, ys_, std::move(mask));
  }

 private:
  std::size_t idx(int t) const {
    if (t < 1 || t > T())
      throw std::out_of_range("task index " + std::to_string(t) + " outside [1, " +
                              std::to_string(T()) + "]");
    return static_cast<std::size_t>(t - 1);
  }

  void rebuild_index() {
    rows_.assign(xs_.size(), {});
    for (std::size_t t = 0; t < xs_.size(); ++t)
      for (int i = 0; i < m_; ++i)
        if (present_[t][static_cast<std::size_t>(i)]) rows_[t].push_back(i);
  }

  std::vector<Matrix> xs_;
  std::vector<Matrix> ys_;
  std::vector<std::vector<char>> present_;
  std::vector<std::vector<int>> rows_;
  int m_ = 0, d_x_ = 0, d_y_ = 0;
};

/// Full T x m matrix: x_t = g_t(x_{t-1}), y = f*(x) + v with per-(t,i) noise streams.
inline SampleStore generate_full(const TaskSequenceSpec& spec) {
  spec.validate();
  const Predictor fstar = spec.true_predictor();
  std::vector<Matrix> xs, ys;
  Matrix x = sample_task1(spec);
  for (int t = 1; t <= spec.T; ++t) {
    if (t > 1) {
      const Transformation& g = spec.chain.map(t);
      for (int i = 0; i < spec.m; ++i) x.row(i) = g.apply(x.row(i).transpose()).transpose();
    }
    Matrix y = fstar.eval_batch(x);
    if (spec.nu > 0.0) {
      for (int i = 0; i < spec.m; ++i) {
        Rng rng = make_stream(spec.seed, Stream::noise, static_cast<std::uint64_t>(t),
                              static_cast<std::uint64_t>(i));
        for (int r = 0; r < spec.d_y; ++r) y(i, r) += draw_coordinate(spec.noise_dist, spec.nu, rng);
      }
    }
    xs.push_back(x);
    ys.push_back(std::move(y));
  }
  std::vector<std::vector<char>> mask(static_cast<std::size_t>(spec.T),
                                      std::vector<char>(static_cast<std::size_t>(spec.m), 1));
  return SampleStore(std::move(xs), std::move(ys), std::move(mask));
}

/// N fresh (x_t, f*(x_t)) pairs, independent of the training data.
struct EvalBatch {
  Matrix x;
  Matrix f;
};

inline EvalBatch fresh_eval_batch(const TaskSequenceSpec& spec, int t, Eigen::Index n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("evaluation batch needs N >= 1");
  Matrix x1 = sample_inputs(spec, n, rng);
  Matrix xt(n, spec.d_x);
  for (Eigen::Index i = 0; i < n; ++i) xt.row(i) = spec.chain.apply(t, x1.row(i).transpose()).transpose();
  EvalBatch b{std::move(xt), Matrix()};
  b.f = spec.true_predictor().eval_batch(b.x);
  return b;
}

namespace detail {
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// CSV with header t,i,x_0..,y_0.. (t 1-based, i 0-based) and a sidecar
/// index file listing R_t per task.
inline void export_store(const SampleStore& s, const std::string& csv_path,
                         const std::string& index_path) {
  std::ofstream out(csv_path);
  if (!out) throw std::runtime_error("cannot write " + csv_path);
  out << "t,i";
  for (int c = 0; c < s.d_x(); ++c) out << ",x_" << c;
  for (int c = 0; c < s.d_y(); ++c) out << ",y_" << c;
  out << '\n';
  for (int t = 1; t <= s.T(); ++t)
    for (int i : s.rows(t)) {
      out << t << ',' << i;
      for (int c = 0; c < s.d_x(); ++c) out << ',' << detail::fmt17(s.xs(t)(i, c));
      for (int c = 0; c < s.d_y(); ++c) out << ',' << detail::fmt17(s.ys(t)(i, c));
      out << '\n';
    }
  std::ofstream idx(index_path);
  if (!idx) throw std::runtime_error("cannot write " + index_path);
  idx << "# T=" << s.T() << " m=" << s.m() << " d_x=" << s.d_x() << " d_y=" << s.d_y() << '\n';
  for (int t = 1; t <= s.T(); ++t) {
    idx << t << ':';
    for (int i : s.rows(t)) idx << ' ' << i;
    idx << '\n';
  }
}

inline SampleStore import_store(const std::string& csv_path, const std::string& index_path) {
  std::ifstream idx(index_path);
  if (!idx) throw std::runtime_error("cannot read " + index_path);
  std::string line;
  std::getline(idx, line);
  int T = 0, m = 0, dx = 0, dy = 0;
  if (std::sscanf(line.c_str(), "# T=%d m=%d d_x=%d d_y=%d", &T, &m, &dx, &dy) != 4 || T < 1 ||
      m < 1 || dx < 1 || dy < 1)
    throw std::runtime_error("malformed index header in " + index_path);
  std::vector<std::vector<char>> mask(static_cast<std::size_t>(T),
                                      std::vector<char>(static_cast<std::size_t>(m), 0));
  while (std::getline(idx, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int t = 0;
    char colon = 0;
    ls >> t >> colon;
    if (t < 1 || t > T || colon != ':') throw std::runtime_error("malformed index line: " + line);
    int i = 0;
    while (ls >> i) {
      if (i < 0 || i >= m) throw std::runtime_error("sample index out of range in index file");
      mask[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(i)] = 1;
    }
  }
  std::vector<Matrix> xs(static_cast<std::size_t>(T), Matrix::Zero(m, dx));
  std::vector<Matrix> ys(static_cast<std::size_t>(T), Matrix::Zero(m, dy));
  std::vector<std::vector<char>> seen(mask.size(), std::vector<char>(static_cast<std::size_t>(m), 0));
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot read " + csv_path);
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) != 2 + dx + dy) throw ShapeError("CSV row has wrong width");
    const int t = std::stoi(cells[0]);
    const int i = std::stoi(cells[1]);
    if (t < 1 || t > T || i < 0 || i >= m) throw std::runtime_error("CSV row index out of range");
    for (int c = 0; c < dx; ++c) xs[static_cast<std::size_t>(t - 1)](i, c) = std::stod(cells[static_cast<std::size_t>(2 + c)]);
    for (int c = 0; c < dy; ++c) ys[static_cast<std::size_t>(t - 1)](i, c) = std::stod(cells[static_cast<std::size_t>(2 + dx + c)]);
    seen[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(i)] = 1;
  }
  if (seen != mask) throw std::runtime_error("CSV rows disagree with the sidecar index file");
  return SampleStore(std::move(xs), std::move(ys), std::move(mask));
}

}  // namespace depcl

#endif  // DEPCL_DATAGEN_HPP
