#ifndef DEPCL_MODELS_HPP
#define DEPCL_MODELS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "depcl/errors.hpp"
#include "depcl/random.hpp"
#include "depcl/transforms.hpp"

namespace depcl {

/// Euclidean ball of radius R in R^p.
struct ParameterSpace {
  int p = 1;
  double radius = 1.0;

  ParameterSpace() = default;
  ParameterSpace(int p_, double r_) : p(p_), radius(r_) { validate(); }

  void validate() const {
    if (p < 1) throw std::invalid_argument("parameter dimension must be >= 1");
    if (!(radius > 0.0) || !std::isfinite(radius))
      throw std::invalid_argument("parameter ball radius must be positive and finite");
  }

  double diameter() const noexcept { return 2.0 * radius; }

  bool contains(const Vector& theta, double slack = 0.0) const {
    return theta.norm() <= radius * (1.0 + slack) + slack;
  }

  /// Radial projection; points inside are returned untouched.
  Vector project(const Vector& theta) const {
    if (theta.size() != p) throw ShapeError("parameter vector has wrong length");
    const double n = theta.norm();
    // tolerance keeps projection idempotent under rounding
    if (n <= radius * (1.0 + 4.0 * std::numeric_limits<double>::epsilon())) return theta;
    return theta * (radius / n);
  }
};

enum class Family { linear, one_hidden };

inline std::string to_string(Family f) { return f == Family::linear ? "linear" : "one_hidden"; }

inline Family family_from_string(const std::string& s) {
  if (s == "linear") return Family::linear;
  if (s == "one_hidden" || s == "one-hidden-layer" || s == "mlp") return Family::one_hidden;
  throw ConfigError("unknown model family '" + s + "'");
}

/// Architecture of f_theta. For one_hidden: f(x) = W2 tanh(W1 x), theta = [vec W1; vec W2],
/// both blocks row-major, W1 is h x d_x and W2 is d_y x h. No biases.
struct ModelShape {
  Family family = Family::linear;
  int d_x = 1;
  int d_y = 1;
  int hidden = 8;

  int parameter_count() const {
    return family == Family::linear ? d_x * d_y : hidden * d_x + d_y * hidden;
  }

  void validate() const {
    if (d_x < 1 || d_y < 1) throw ShapeError("model dimensions must be >= 1");
    if (family == Family::one_hidden && hidden < 1) throw ShapeError("hidden width must be >= 1");
  }
};

/// A point theta of the parameter space together with its evaluation map.
class Predictor {
 public:
  Predictor(ModelShape shape, Vector theta) : shape_(shape), theta_(std::move(theta)) {
    shape_.validate();
    if (theta_.size() != shape_.parameter_count())
      throw ShapeError("theta length " + std::to_string(theta_.size()) + " != p " +
                       std::to_string(shape_.parameter_count()));
    if (!theta_.allFinite()) throw std::invalid_argument("theta is not finite");
  }

  const ModelShape& shape() const noexcept { return shape_; }
  const Vector& theta() const noexcept { return theta_; }
  int p() const noexcept { return shape_.parameter_count(); }

  /// Theta viewed as the d_y x d_x matrix (linear family only).
  Matrix as_matrix() const {
    if (shape_.family != Family::linear) throw std::logic_error("as_matrix needs the linear family");
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        theta_.data(), shape_.d_y, shape_.d_x);
  }

  Vector eval(const Vector& x) const { return evaluate(shape_, theta_, x); }

  /// Rows of X are inputs; rows of the result are outputs.
  Matrix eval_batch(const Matrix& x) const {
    if (x.cols() != shape_.d_x) throw ShapeError("input batch has wrong width");
    if (shape_.family == Family::linear) return x * as_matrix().transpose();
    Matrix out(x.rows(), shape_.d_y);
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = eval(x.row(i).transpose()).transpose();
    return out;
  }

  static Vector evaluate(const ModelShape& s, const Vector& theta, const Vector& x) {
    if (x.size() != s.d_x) throw ShapeError("input dimension mismatch");
    if (theta.size() != s.parameter_count()) throw ShapeError("theta length mismatch");
    if (s.family == Family::linear) {
      Vector y = Vector::Zero(s.d_y);
      for (int r = 0; r < s.d_y; ++r)
        for (int c = 0; c < s.d_x; ++c) y(r) += theta(r * s.d_x + c) * x(c);
      return y;
    }
    const int h = s.hidden;
    Vector z(h);
    for (int j = 0; j < h; ++j) {
      double a = 0.0;
      for (int c = 0; c < s.d_x; ++c) a += theta(j * s.d_x + c) * x(c);
      z(j) = std::tanh(a);
    }
    const int off = h * s.d_x;
    Vector y = Vector::Zero(s.d_y);
    for (int r = 0; r < s.d_y; ++r)
      for (int j = 0; j < h; ++j) y(r) += theta(off + r * h + j) * z(j);
    return y;
  }

  /// d f / d theta at x, a d_y x p matrix.
  static Matrix jacobian(const ModelShape& s, const Vector& theta, const Vector& x) {
    if (x.size() != s.d_x) throw ShapeError("input dimension mismatch");
    Matrix j = Matrix::Zero(s.d_y, s.parameter_count());
    if (s.family == Family::linear) {
      for (int r = 0; r < s.d_y; ++r)
        for (int c = 0; c < s.d_x; ++c) j(r, r * s.d_x + c) = x(c);
      return j;
    }
    const int h = s.hidden;
    const int off = h * s.d_x;
    Vector z(h);
    for (int k = 0; k < h; ++k) {
      double a = 0.0;
      for (int c = 0; c < s.d_x; ++c) a += theta(k * s.d_x + c) * x(c);
      z(k) = std::tanh(a);
    }
    for (int r = 0; r < s.d_y; ++r) {
      for (int k = 0; k < h; ++k) {
        j(r, off + r * h + k) = z(k);
        const double g = theta(off + r * h + k) * (1.0 - z(k) * z(k));
        for (int c = 0; c < s.d_x; ++c) j(r, k * s.d_x + c) = g * x(c);
      }
    }
    return j;
  }

 private:
  ModelShape shape_;
  Vector theta_;
};

/// G_{f,t} = (f - f*) o g_t o ... o g_1.
class DirectDifferenceMap {
 public:
  DirectDifferenceMap(const Predictor& f, const Predictor& f_star, const DependencyChain& chain,
                      int t)
      : f_(&f), f_star_(&f_star), chain_(&chain), t_(t) {
    if (t < 1 || t > chain.tasks()) throw std::out_of_range("task index outside chain");
  }

  Vector eval(const Vector& x1) const {
    const Vector xt = chain_->apply(t_, x1);
    return f_->eval(xt) - f_star_->eval(xt);
  }

 private:
  const Predictor* f_;
  const Predictor* f_star_;
  const DependencyChain* chain_;
  int t_;
};

/**
 * Parameter-Lipschitz constant of theta -> f_theta under the sup norm on the
 * ball of radius r_eval, for ||theta|| <= R. Floored at 1 so the K_G envelope
 * stays positive when the evaluation ball collapses (sigma = 0).
 */
inline double parameter_lipschitz(const ModelShape& s, const ParameterSpace& space, double r_eval) {
  if (r_eval < 0) throw std::invalid_argument("evaluation radius must be non-negative");
  double lf = 0.0;
  if (s.family == Family::linear) {
    lf = r_eval;  // ||(A - A')z|| <= ||A - A'||_F ||z||
  } else {
    // output-layer block bounded by sqrt(h), hidden block by ||W2|| * r
    lf = std::sqrt(static_cast<double>(s.hidden)) + space.radius * r_eval;
  }
  return std::max(lf, 1.0);
}

/// Uniform draw from the ball of radius R in R^p.
inline Vector sample_ball(int p, double radius, Rng& rng) {
  Vector v(p);
  for (int i = 0; i < p; ++i) v(i) = rng.normal();
  double n = v.norm();
  while (n == 0.0) {
    for (int i = 0; i < p; ++i) v(i) = rng.normal();
    n = v.norm();
  }
  const double u = rng.uniform();
  return v * (radius * std::pow(u, 1.0 / p) / n);
}

/// Uniform draw from the sphere of radius R in R^p.
inline Vector sample_sphere(int p, double radius, Rng& rng) {
  Vector v(p);
  double n = 0.0;
  do {
    for (int i = 0; i < p; ++i) v(i) = rng.normal();
    n = v.norm();
  } while (n == 0.0);
  return v * (radius / n);
}

/**
 * Monte-Carlo estimate of C_max: max over probed theta and t of
 * ||f_theta(g_t o..o g_1(0))|| plus the same quantity for f*.
 */
inline double estimate_c_max(const ModelShape& s, const ParameterSpace& space,
                             const DependencyChain& chain, const Predictor& f_star,
                             std::uint64_t seed, int probes = 10000) {
  const Vector zero = Vector::Zero(s.d_x);
  std::vector<Vector> anchors;
  anchors.reserve(static_cast<std::size_t>(chain.tasks()));
  double star = 0.0;
  bool all_zero = true;
  for (int t = 1; t <= chain.tasks(); ++t) {
    anchors.push_back(chain.apply(t, zero));
    if (anchors.back().norm() > 0.0) all_zero = false;
    star = std::max(star, f_star.eval(anchors.back()).norm());
  }
  // Both families map 0 to 0 exactly, so there is nothing to probe.
  if (all_zero) return star;
  Rng rng = make_stream(seed, Stream::probe, 0xC0A5);
  double best = 0.0;
  for (int k = 0; k < probes; ++k) {
    const Vector th = k % 2 == 0 ? sample_sphere(s.parameter_count(), space.radius, rng)
                                 : sample_ball(s.parameter_count(), space.radius, rng);
    for (const auto& a : anchors) best = std::max(best, Predictor::evaluate(s, th, a).norm());
  }
  return best + star;
}

}  // namespace depcl

#endif  // DEPCL_MODELS_HPP
