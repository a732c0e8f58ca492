#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <optional>
#include <utility>

namespace mvcov {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double log_two_pi = 1.8378770664093454835606594728112;

/*
 * Diagonal inflation applied when a covariance matrix fails Cholesky.
 * The inflation is relative: `eps * mean(diag)`. The first level is tried
 * only after the unmodified matrix fails, the second only after the first
 * fails; past that the matrix is declared invalid.
 */
struct NuggetPolicy {
  double first = 1e-8;
  double second = 1e-6;
};

/// Lower Cholesky factor of a (possibly nugget-inflated) covariance matrix.
class CholeskyFactor {
public:
  CholeskyFactor() = default;
  CholeskyFactor(Eigen::LLT<MatrixXd> llt, double nugget)
      : llt_(std::move(llt)), nugget_(nugget) {}

  Index size() const { return llt_.rows(); }

  /// Absolute amount added to every diagonal entry before factorizing.
  double nugget() const { return nugget_; }

  double log_det() const {
    const auto &l = llt_.matrixLLT();
    double acc = 0.0;
    for (Index i = 0; i < l.rows(); ++i) {
      acc += std::log(l(i, i));
    }
    return 2.0 * acc;
  }

  template <typename Rhs> MatrixXd solve(const Eigen::MatrixBase<Rhs> &b) const {
    return llt_.solve(b);
  }

  /// L^{-1} b
  template <typename Rhs>
  MatrixXd whiten(const Eigen::MatrixBase<Rhs> &b) const {
    return llt_.matrixL().solve(b);
  }

  MatrixXd lower() const { return llt_.matrixL(); }

  MatrixXd inverse() const {
    return llt_.solve(MatrixXd::Identity(size(), size()));
  }

private:
  Eigen::LLT<MatrixXd> llt_;
  double nugget_ = 0.0;
};

namespace detail {

inline std::optional<Eigen::LLT<MatrixXd>> try_llt(const MatrixXd &m) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    return std::nullopt;
  }
  const auto &l = llt.matrixLLT();
  for (Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i))) {
      return std::nullopt;
    }
  }
  return llt;
}

} // namespace detail

/*
 * Factorizes a symmetric matrix under the nugget policy. Returns nullopt
 * when the matrix is not finite or fails at every nugget level; callers
 * treat that as an invalid parameter value rather than an error.
 */
inline std::optional<CholeskyFactor> factorize(const MatrixXd &m,
                                               const NuggetPolicy &policy = {}) {
  if (m.rows() != m.cols() || m.rows() == 0 || !m.allFinite()) {
    return std::nullopt;
  }
  if (auto llt = detail::try_llt(m)) {
    return CholeskyFactor(std::move(*llt), 0.0);
  }
  const double scale = m.diagonal().mean();
  if (!(scale > 0.0)) {
    return std::nullopt;
  }
  for (double eps : {policy.first, policy.second}) {
    const double nugget = eps * scale;
    MatrixXd inflated = m;
    inflated.diagonal().array() += nugget;
    if (auto llt = detail::try_llt(inflated)) {
      return CholeskyFactor(std::move(*llt), nugget);
    }
  }
  return std::nullopt;
}

inline MatrixXd kronecker(const MatrixXd &a, const MatrixXd &b) {
  MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

inline double log_sum_exp(const VectorXd &x) {
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) {
    return m;
  }
  return m + std::log((x.array() - m).exp().sum());
}

} // namespace mvcov
