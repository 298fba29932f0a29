#ifndef DEPCL_TRANSFORMS_HPP
#define DEPCL_TRANSFORMS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "depcl/errors.hpp"
#include "depcl/random.hpp"

namespace depcl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/**
 * A deterministic map on R^{d_x} relating consecutive task inputs.
 *
 * Every supported kind is affine, x -> A x + b, which keeps Lipschitz
 * bookkeeping exact: the constant is the spectral norm of A. Instances are
 * immutable once built and safe to share between threads.
 */
class Transformation {
 public:
  enum class Kind { identity, scaling, rotation, permutation, affine, composition };

  static Transformation identity() { return Transformation(Kind::identity); }

  static Transformation scaling(double s) {
    if (!std::isfinite(s) || s <= 0.0)
      throw std::invalid_argument("scaling factor must be positive and finite");
    Transformation t(Kind::scaling);
    t.scale_ = s;
    t.lipschitz_ = std::abs(s);
    return t;
  }

  /// Orthogonal matrix; rejected unless Q^T Q = I to within 1e-10.
  static Transformation rotation(Matrix q) {
    if (q.rows() != q.cols() || q.rows() == 0) throw ShapeError("rotation matrix must be square");
    const double dev =
        (q.transpose() * q - Matrix::Identity(q.rows(), q.cols())).cwiseAbs().maxCoeff();
    if (!(dev <= 1e-10)) throw std::invalid_argument("rotation matrix is not orthogonal");
    Transformation t(Kind::rotation);
    t.matrix_ = std::move(q);
    return t;
  }

  /// Block-diagonal rotation: angle k acts on the coordinate plane (2k, 2k+1).
  static Transformation plane_rotation(Eigen::Index dim, std::span<const double> angles) {
    if (static_cast<Eigen::Index>(2 * angles.size()) > dim)
      throw ShapeError("too many rotation angles for the dimension");
    Matrix q = Matrix::Identity(dim, dim);
    for (std::size_t k = 0; k < angles.size(); ++k) {
      const auto a = static_cast<Eigen::Index>(2 * k);
      const double c = std::cos(angles[k]);
      const double s = std::sin(angles[k]);
      q(a, a) = c;
      q(a, a + 1) = -s;
      q(a + 1, a) = s;
      q(a + 1, a + 1) = c;
    }
    return rotation(std::move(q));
  }

  /// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
  static Transformation random_rotation(Eigen::Index dim, Rng& rng) {
    Matrix g(dim, dim);
    for (Eigen::Index j = 0; j < dim; ++j)
      for (Eigen::Index i = 0; i < dim; ++i) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(dim, dim);
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < dim; ++j)
      if (r(j, j) < 0) q.col(j) = -q.col(j);
    return rotation(std::move(q));
  }

  /// Output coordinate i takes input coordinate perm[i].
  static Transformation permutation(std::vector<int> perm) {
    std::vector<int> sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i)
      if (sorted[i] != static_cast<int>(i))
        throw std::invalid_argument("permutation is not a bijection on [d_x]");
    if (perm.empty()) throw std::invalid_argument("empty permutation");
    Transformation t(Kind::permutation);
    t.perm_ = std::move(perm);
    return t;
  }

  static Transformation affine(Matrix a, Vector b) {
    if (a.rows() != a.cols() || a.rows() != b.size())
      throw ShapeError("affine map needs square A and matching offset");
    if (!a.allFinite() || !b.allFinite()) throw std::invalid_argument("affine map is not finite");
    Transformation t(Kind::affine);
    t.lipschitz_ = a.size() == 0 ? 0.0 : Eigen::JacobiSVD<Matrix>(a).singularValues()(0);
    t.matrix_ = std::move(a);
    t.offset_ = std::move(b);
    return t;
  }

  /// Parts are applied in list order: parts[0] first.
  static Transformation composition(std::vector<Transformation> parts) {
    Transformation t(Kind::composition);
    t.lipschitz_ = 1.0;
    for (const auto& p : parts) t.lipschitz_ *= p.lipschitz();
    t.parts_ = std::move(parts);
    return t;
  }

  Kind kind() const noexcept { return kind_; }
  double lipschitz() const noexcept { return lipschitz_; }
  double scale() const noexcept { return scale_; }
  const Matrix& matrix() const noexcept { return matrix_; }
  const Vector& offset() const noexcept { return offset_; }
  const std::vector<int>& perm() const noexcept { return perm_; }
  const std::vector<Transformation>& parts() const noexcept { return parts_; }

  /// Input dimension the map is pinned to, if any.
  std::optional<Eigen::Index> dimension() const {
    switch (kind_) {
      case Kind::rotation:
      case Kind::affine:
        return matrix_.rows();
      case Kind::permutation:
        return static_cast<Eigen::Index>(perm_.size());
      case Kind::composition:
        for (const auto& p : parts_)
          if (auto d = p.dimension()) return d;
        return std::nullopt;
      default:
        return std::nullopt;
    }
  }

  Vector apply(const Vector& x) const {
    if (x.size() == 0) throw ShapeError("empty input vector");
    if (auto d = dimension(); d && *d != x.size())
      throw ShapeError("transformation dimension does not match input");
    switch (kind_) {
      case Kind::identity:
        return x;
      case Kind::scaling:
        return scale_ * x;
      case Kind::rotation:
        return matrix_ * x;
      case Kind::permutation: {
        Vector y(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) y(i) = x(perm_[static_cast<std::size_t>(i)]);
        return y;
      }
      case Kind::affine:
        return matrix_ * x + offset_;
      case Kind::composition: {
        Vector y = x;
        for (const auto& p : parts_) y = p.apply(y);
        return y;
      }
    }
    return x;
  }

  /// (A, b) with apply(x) == A x + b on R^dim.
  std::pair<Matrix, Vector> as_affine(Eigen::Index dim) const {
    Matrix a = Matrix::Identity(dim, dim);
    Vector b = Vector::Zero(dim);
    switch (kind_) {
      case Kind::identity:
        break;
      case Kind::scaling:
        a *= scale_;
        break;
      case Kind::rotation:
        a = matrix_;
        break;
      case Kind::permutation:
        a.setZero();
        for (Eigen::Index i = 0; i < dim; ++i) a(i, perm_[static_cast<std::size_t>(i)]) = 1.0;
        break;
      case Kind::affine:
        a = matrix_;
        b = offset_;
        break;
      case Kind::composition:
        for (const auto& p : parts_) {
          auto [pa, pb] = p.as_affine(dim);
          b = pa * b + pb;
          a = pa * a;
        }
        break;
    }
    return {std::move(a), std::move(b)};
  }

 private:
  explicit Transformation(Kind k) : kind_(k) {}

  Kind kind_;
  double lipschitz_ = 1.0;
  double scale_ = 1.0;
  Matrix matrix_;
  Vector offset_;
  std::vector<int> perm_;
  std::vector<Transformation> parts_;
};

/**
 * Task dependency x_t = g_t(x_{t-1}) for t = 2..T, with g_1 the identity.
 *
 * Only the Markov evaluation path is built. Task indices are 1-based to
 * match the usual t in [T] convention.
 */
class DependencyChain {
 public:
  explicit DependencyChain(std::vector<Transformation> maps) : maps_(std::move(maps)) {
    if (maps_.empty()) throw std::invalid_argument("dependency chain needs at least one task");
    if (maps_.front().kind() != Transformation::Kind::identity)
      throw std::invalid_argument("first map of a dependency chain must be the identity");
    cumulative_.resize(maps_.size());
    double acc = 1.0;
    for (std::size_t t = 0; t < maps_.size(); ++t) {
      acc *= maps_[t].lipschitz();
      cumulative_[t] = acc;
    }
    if (!std::isfinite(acc)) throw std::invalid_argument("cumulative Lipschitz constant overflows");
  }

  static DependencyChain identity(int tasks) {
    return DependencyChain(std::vector<Transformation>(static_cast<std::size_t>(tasks),
                                                       Transformation::identity()));
  }

  int tasks() const noexcept { return static_cast<int>(maps_.size()); }
  bool markov_only() const noexcept { return true; }
  const std::vector<Transformation>& maps() const noexcept { return maps_; }

  const Transformation& map(int t) const {
    check_task(t);
    return maps_[static_cast<std::size_t>(t - 1)];
  }

  /// g_t o ... o g_1 (x1).
  Vector apply(int t, const Vector& x1) const {
    check_task(t);
    Vector x = x1;
    for (int k = 2; k <= t; ++k) x = maps_[static_cast<std::size_t>(k - 1)].apply(x);
    return x;
  }

  /// prod_{i <= t} L_{g,i}
  double cumulative_lipschitz(int t) const {
    check_task(t);
    return cumulative_[static_cast<std::size_t>(t - 1)];
  }

  double max_cumulative_lipschitz() const {
    return *std::max_element(cumulative_.begin(), cumulative_.end());
  }

  /// x_t = A x_1 + b.
  std::pair<Matrix, Vector> affine_form(int t, Eigen::Index dim) const {
    check_task(t);
    Matrix a = Matrix::Identity(dim, dim);
    Vector b = Vector::Zero(dim);
    for (int k = 2; k <= t; ++k) {
      auto [ka, kb] = maps_[static_cast<std::size_t>(k - 1)].as_affine(dim);
      b = ka * b + kb;
      a = ka * a;
    }
    return {std::move(a), std::move(b)};
  }

  void check_dimension(Eigen::Index dim) const {
    for (const auto& g : maps_)
      if (auto d = g.dimension(); d && *d != dim)
        throw ShapeError("chain map dimension " + std::to_string(*d) + " != d_x " +
                         std::to_string(dim));
  }

 private:
  void check_task(int t) const {
    if (t < 1 || t > tasks())
      throw std::out_of_range("task index " + std::to_string(t) + " outside [1, " +
                              std::to_string(tasks()) + "]");
  }

  std::vector<Transformation> maps_;
  std::vector<double> cumulative_;
};

/// L_G together with the power-law envelope K_G(r) <= k_G r^alpha.
struct LipschitzConstants {
  double L_G;
  double k_G;
  double alpha;
};

/**
 * L_G = 2 L_F max_t prod_{i<=t} L_{g,i}. K_G(r) = max(1, 2 r L_G + 2 C_max) is
 * enveloped by alpha = 1, k_G = 2 L_G + 2 C_max + 1, valid for r >= 1.
 */
inline LipschitzConstants lipschitz_constants(const DependencyChain& chain, double lf,
                                              double c_max = 0.0) {
  if (!(lf > 0.0) || !std::isfinite(lf))
    throw std::invalid_argument("L_F must be positive and finite");
  if (c_max < 0.0) throw std::invalid_argument("C_max must be non-negative");
  const double lg = 2.0 * lf * chain.max_cumulative_lipschitz();
  return {lg, 2.0 * lg + 2.0 * c_max + 1.0, 1.0};
}

}  // namespace depcl

#endif  // DEPCL_TRANSFORMS_HPP
