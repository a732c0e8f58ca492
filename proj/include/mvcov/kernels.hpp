#pragma once

#include "mvcov/dataset.hpp"
#include "mvcov/error.hpp"
#include "mvcov/linalg.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mvcov {

/// Symmetric p x p matrix whose setter keeps (i,j) and (j,i) in sync.
class SymmetricMatrix {
public:
  SymmetricMatrix() = default;
  explicit SymmetricMatrix(Index p, double fill = 0.0)
      : values_(MatrixXd::Constant(p, p, fill)) {}

  static SymmetricMatrix from_dense(const MatrixXd &m) {
    if (m.rows() != m.cols()) {
      throw NumericError("symmetric matrix must be square");
    }
    SymmetricMatrix out(m.rows());
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j <= i; ++j) {
        if (m(i, j) != m(j, i)) {
          throw NumericError("matrix is not symmetric");
        }
        out.set(i, j, m(i, j));
      }
    }
    return out;
  }

  Index size() const { return values_.rows(); }
  double operator()(Index i, Index j) const { return values_(i, j); }
  void set(Index i, Index j, double v) {
    values_(i, j) = v;
    values_(j, i) = v;
  }
  const MatrixXd &dense() const { return values_; }

private:
  MatrixXd values_;
};

/// Gamma shapes and rates of the independent variables X0, X1, X2 that
/// generate U = X0 + X1 and V = X0 + X2.
struct MixingSpec {
  double alpha0 = 0.0;
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  double lambda0 = 1.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;

  void validate() const {
    for (double shape : {alpha0, alpha1, alpha2}) {
      require(std::isfinite(shape) && shape >= 0.0,
              "mixing shapes must be finite and non-negative");
    }
    for (double rate : {lambda0, lambda1, lambda2}) {
      require(std::isfinite(rate) && rate > 0.0,
              "mixing rates must be finite and positive");
    }
  }
};

/*
 * Parameters of the general gamma-mixture cross-covariance
 *
 *   C_ij(h) = s_i s_j (1 + d_ij + h/b_ij)^-a0 (1 + h/b_ij)^-a1 (1 + d_ij)^-a2
 *
 * plus the regression coefficients of the mean. With common_range set,
 * every b_ij equals phi().
 */
struct CovarianceParams {
  VectorXd sigma;
  SymmetricMatrix delta;
  double alpha0 = 0.0;
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  SymmetricMatrix b;
  VectorXd beta;
  bool common_range = true;

  Index p() const { return sigma.size(); }
  double phi() const { return b(0, 0); }

  void set_phi(double phi) {
    for (Index i = 0; i < p(); ++i) {
      for (Index j = 0; j <= i; ++j) {
        b.set(i, j, phi);
      }
    }
  }

  static CovarianceParams make(Index p, double phi) {
    CovarianceParams out;
    out.sigma = VectorXd::Ones(p);
    out.delta = SymmetricMatrix(p, 0.0);
    out.b = SymmetricMatrix(p, phi);
    return out;
  }

  void validate() const {
    const Index n = p();
    require(n >= 1, "at least one component is required");
    require(delta.size() == n && b.size() == n,
            "delta and b must be p x p");
    require(sigma.allFinite(), "sigma must be finite");
    for (Index i = 0; i < n; ++i) {
      require(delta(i, i) == 0.0, "delta must have a zero diagonal");
      for (Index j = 0; j < n; ++j) {
        require(std::isfinite(delta(i, j)) && delta(i, j) >= 0.0,
                "delta entries must be finite and non-negative");
        require(std::isfinite(b(i, j)) && b(i, j) > 0.0,
                "range parameters must be finite and positive");
        if (common_range) {
          require(b(i, j) == phi(), "common range requires equal b entries");
        }
      }
    }
    require(std::isfinite(alpha0) && alpha0 >= 0.0, "alpha0 must be >= 0");
    require(std::isfinite(alpha1) && alpha1 > 0.0, "alpha1 must be > 0");
    require(std::isfinite(alpha2) && alpha2 > 0.0, "alpha2 must be > 0");
  }
};

/// Component covariance matrix `a` and common range of the separable
/// Cauchy model a_ij (1 + (h/phi)^2)^-1.
struct SeparableParams {
  MatrixXd a;
  double phi = 1.0;
};

struct CovMatrix {
  Index n = 0;
  Index p = 0;
  MatrixXd values; // component-major: row i*n + k
};

namespace detail {

inline void check_pair(Index i, Index j, double h, Index p) {
  require(i >= 0 && i < p && j >= 0 && j < p, "component index out of range");
  require(std::isfinite(h), "distance must be finite");
  require(h >= 0.0, "distance must be non-negative");
}

// Shared by the scalar and matrix evaluators so both produce identical
// floating point results.
inline double mixture_kernel(double scale, double gamma1, double gamma2,
                             const MixingSpec &m) {
  return scale * std::pow(1.0 + (gamma1 + gamma2) / m.lambda0, -m.alpha0) *
         std::pow(1.0 + gamma1 / m.lambda1, -m.alpha1) *
         std::pow(1.0 + gamma2 / m.lambda2, -m.alpha2);
}

} // namespace detail

inline MixingSpec unit_rate_mixing(const CovarianceParams &params) {
  return {params.alpha0, params.alpha1, params.alpha2, 1.0, 1.0, 1.0};
}

inline double eval_gamma_mixture_cov(Index i, Index j, double h,
                                     const CovarianceParams &params,
                                     const MixingSpec &mix) {
  detail::check_pair(i, j, h, params.p());
  mix.validate();
  const double gamma1 = h / params.b(i, j);
  const double gamma2 = params.delta(i, j);
  const double scale = params.sigma(i) * params.sigma(j);
  require(std::isfinite(gamma1) && std::isfinite(gamma2) && std::isfinite(scale),
          "non-finite kernel argument");
  return detail::mixture_kernel(scale, gamma1, gamma2, mix);
}

inline double eval_general_cross_cov(Index i, Index j, double h,
                                     const CovarianceParams &params) {
  return eval_gamma_mixture_cov(i, j, h, params, unit_rate_mixing(params));
}

struct MonteCarloEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/*
 * Monte Carlo evaluation of the mixture integral
 *   s_i s_j E[exp(-gamma1 U - gamma2 V)],  U = X0 + X1, V = X0 + X2,
 * by direct simulation of the gamma variables. Independent of the closed
 * form; used as its oracle.
 */
inline MonteCarloEstimate mc_mixture_oracle(Index i, Index j, double h,
                                            const CovarianceParams &params,
                                            const MixingSpec &mix,
                                            std::int64_t n_draws,
                                            std::uint64_t seed) {
  require(n_draws >= 10000, "mc_mixture_oracle needs at least 1e4 draws");
  mix.validate();
  detail::check_pair(i, j, h, params.p());
  const double gamma1 = h / params.b(i, j);
  const double gamma2 = params.delta(i, j);
  const double scale = params.sigma(i) * params.sigma(j);

  std::mt19937_64 rng(seed);
  auto sampler = [](double shape, double rate) {
    return std::gamma_distribution<double>(shape > 0.0 ? shape : 1.0, 1.0 / rate);
  };
  auto g0 = sampler(mix.alpha0, mix.lambda0);
  auto g1 = sampler(mix.alpha1, mix.lambda1);
  auto g2 = sampler(mix.alpha2, mix.lambda2);

  double mean = 0.0;
  double m2 = 0.0;
  for (std::int64_t k = 0; k < n_draws; ++k) {
    const double x0 = mix.alpha0 > 0.0 ? g0(rng) : 0.0;
    const double x1 = mix.alpha1 > 0.0 ? g1(rng) : 0.0;
    const double x2 = mix.alpha2 > 0.0 ? g2(rng) : 0.0;
    const double w = std::exp(-gamma1 * (x0 + x1) - gamma2 * (x0 + x2));
    const double d = w - mean;
    mean += d / static_cast<double>(k + 1);
    m2 += d * (w - mean);
  }
  const double n = static_cast<double>(n_draws);
  const double var = m2 / (n - 1.0);
  return {scale * mean, std::abs(scale) * std::sqrt(var / n)};
}

inline double eval_univariate_cauchy(double h, double sigma2, double phi) {
  require(std::isfinite(phi) && phi > 0.0, "phi must be positive");
  require(std::isfinite(h) && h >= 0.0, "distance must be non-negative");
  const double r = h / phi;
  return sigma2 / (1.0 + r * r);
}

inline double separability_measure(double alpha0, double alpha1, double alpha2) {
  require(alpha1 > 0.0 && alpha2 > 0.0, "alpha1 and alpha2 must be positive");
  require(alpha0 >= 0.0, "alpha0 must be non-negative");
  return alpha0 / std::sqrt((alpha0 + alpha1) * (alpha0 + alpha2));
}

/// Divides entry (a,b) by sqrt(C_aa C_bb); the diagonal becomes exactly 1.
inline CovMatrix normalize_to_correlation(const CovMatrix &c) {
  const Index dim = c.values.rows();
  require(dim == c.n * c.p && c.values.cols() == dim,
          "covariance matrix does not match its n x p layout");
  VectorXd inv_sd(dim);
  for (Index a = 0; a < dim; ++a) {
    const double v = c.values(a, a);
    require(std::isfinite(v) && v > 0.0,
            "normalization needs strictly positive diagonal entries");
    inv_sd(a) = 1.0 / std::sqrt(v);
  }
  CovMatrix out = c;
  for (Index a = 0; a < dim; ++a) {
    for (Index b = 0; b < dim; ++b) {
      out.values(a, b) = a == b ? 1.0 : c.values(a, b) * inv_sd(a) * inv_sd(b);
    }
  }
  return out;
}

/*
 * Assembles the np x np covariance of the general model at the given sites.
 * Entry (i*n+k, j*n+l) is eval_general_cross_cov(i, j, |s_k - s_l|).
 */
inline CovMatrix build_cov_matrix(const MatrixXd &site_distances,
                                  const CovarianceParams &params) {
  params.validate();
  const Index n = site_distances.rows();
  const Index p = params.p();
  require(n >= 1 && site_distances.cols() == n, "distance matrix must be square");
  const MixingSpec mix = unit_rate_mixing(params);
  CovMatrix out{n, p, MatrixXd(n * p, n * p)};
  for (Index i = 0; i < p; ++i) {
    for (Index j = 0; j <= i; ++j) {
      const double scale = params.sigma(i) * params.sigma(j);
      const double b = params.b(i, j);
      const double gamma2 = params.delta(i, j);
      for (Index k = 0; k < n; ++k) {
        for (Index l = 0; l <= k; ++l) {
          const double h = site_distances(k, l);
          require(std::isfinite(h) && h >= 0.0, "invalid site distance");
          const double v = detail::mixture_kernel(scale, h / b, gamma2, mix);
          out.values(i * n + k, j * n + l) = v;
          out.values(i * n + l, j * n + k) = v;
          out.values(j * n + k, i * n + l) = v;
          out.values(j * n + l, i * n + k) = v;
        }
      }
    }
  }
  return out;
}

inline CovMatrix build_cov_matrix(const std::vector<Site> &sites,
                                  const CovarianceParams &params) {
  SpatialDataset geometry;
  geometry.sites = sites;
  return build_cov_matrix(geometry.distance_matrix(), params);
}

/// Cholesky of an assembled covariance under the nugget policy; nullopt
/// marks the parameter value as invalid.
inline std::optional<CholeskyFactor> check_validity(const CovMatrix &c,
                                                    const NuggetPolicy &policy = {}) {
  return factorize(c.values, policy);
}

inline MatrixXd cauchy_correlation_matrix(const MatrixXd &site_distances, double phi) {
  require(std::isfinite(phi) && phi > 0.0, "phi must be positive");
  const Index n = site_distances.rows();
  MatrixXd r(n, n);
  for (Index k = 0; k < n; ++k) {
    for (Index l = 0; l <= k; ++l) {
      r(k, l) = r(l, k) = eval_univariate_cauchy(site_distances(k, l), 1.0, phi);
    }
  }
  return r;
}

/*
 * Separable covariance Sigma = A (x) R with the factors kept, so that
 *   log|Sigma| = n log|A| + p log|R|,   Sigma^-1 = A^-1 (x) R^-1.
 */
class KroneckerCov {
public:
  KroneckerCov(MatrixXd a, MatrixXd r, CholeskyFactor a_factor,
               CholeskyFactor r_factor)
      : a_(std::move(a)), r_(std::move(r)), a_factor_(std::move(a_factor)),
        r_factor_(std::move(r_factor)) {}

  /*
   * Returns nullopt when R fails the nugget policy. Throws when A is not
   * positive definite.
   */
  static std::optional<KroneckerCov> make(const MatrixXd &a, const MatrixXd &r,
                                          const NuggetPolicy &policy = {}) {
    require(a.rows() == a.cols() && r.rows() == r.cols(),
            "Kronecker factors must be square");
    auto a_factor = detail::try_llt(a);
    if (!a_factor) {
      throw NumericError("component covariance matrix is not positive definite");
    }
    auto r_factor = factorize(r, policy);
    if (!r_factor) {
      return std::nullopt;
    }
    MatrixXd r_used = r;
    r_used.diagonal().array() += r_factor->nugget();
    return KroneckerCov(a, std::move(r_used), CholeskyFactor(std::move(*a_factor), 0.0),
                        std::move(*r_factor));
  }

  Index n() const { return r_.rows(); }
  Index p() const { return a_.rows(); }
  const MatrixXd &a() const { return a_; }
  /// Spatial correlation including any nugget that was applied.
  const MatrixXd &r() const { return r_; }
  const CholeskyFactor &a_factor() const { return a_factor_; }
  const CholeskyFactor &r_factor() const { return r_factor_; }

  MatrixXd dense() const { return kronecker(a_, r_); }

  double log_det() const {
    return static_cast<double>(n()) * a_factor_.log_det() +
           static_cast<double>(p()) * r_factor_.log_det();
  }

  /// Sigma^-1 applied to each column of x (length n*p, component-major).
  MatrixXd solve(const MatrixXd &x) const {
    require(x.rows() == n() * p(), "solve: dimension mismatch");
    MatrixXd out(x.rows(), x.cols());
    for (Index c = 0; c < x.cols(); ++c) {
      Eigen::Map<const MatrixXd> block(x.col(c).data(), n(), p());
      MatrixXd s = r_factor_.solve(block);           // R^-1 X
      MatrixXd t = a_factor_.solve(s.transpose());   // A^-1 (R^-1 X)^T
      Eigen::Map<MatrixXd>(out.col(c).data(), n(), p()) = t.transpose();
    }
    return out;
  }

  /// Sum over columns of x_c^T Sigma^-1 x_c.
  double quadratic_form(const MatrixXd &x) const {
    double acc = 0.0;
    for (Index c = 0; c < x.cols(); ++c) {
      Eigen::Map<const MatrixXd> block(x.col(c).data(), n(), p());
      MatrixXd w = r_factor_.whiten(block);               // L_R^-1 X
      MatrixXd z = a_factor_.whiten(w.transpose());       // L_A^-1 (..)^T
      acc += z.squaredNorm();
    }
    return acc;
  }

private:
  MatrixXd a_;
  MatrixXd r_;
  CholeskyFactor a_factor_;
  CholeskyFactor r_factor_;
};

/// A (x) R with the Cauchy correlation (1 + (h/phi)^2)^-1.
inline std::optional<KroneckerCov> build_separable_cov(const MatrixXd &site_distances,
                                                       const SeparableParams &sep,
                                                       const NuggetPolicy &policy = {}) {
  require(sep.a.allFinite(), "component covariance must be finite");
  return KroneckerCov::make(sep.a, cauchy_correlation_matrix(site_distances, sep.phi),
                            policy);
}

} // namespace mvcov
