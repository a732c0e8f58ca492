#pragma once

#include "mvcov/dataset.hpp"
#include "mvcov/error.hpp"
#include "mvcov/kernels.hpp"
#include "mvcov/linalg.hpp"

#include <Eigen/QR>

#include <optional>
#include <string>
#include <vector>

namespace mvcov {

/*
 * Block design for mu = X beta. Each component has its own intercept and
 * covariate coefficients; beta is ordered covariate-major,
 * (b_10, ..., b_p0, b_11, ..., b_p1, ..., b_1q, ..., b_pq), so column
 * c*p + i carries covariate c (0 = intercept) for component i.
 */
struct MeanModel {
  MatrixXd design; // (n*p) x (p*(q+1))
  VectorXd beta;
  std::vector<std::string> column_names;
};

inline Index beta_index(Index covariate, Index component, Index p) {
  return covariate * p + component;
}

/// One design row for component `component` at a site with covariates `x`.
inline Eigen::RowVectorXd design_row(const Eigen::RowVectorXd &x, Index component,
                                     Index p, const CovariateTransform &tf) {
  const Index q = x.size();
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(p * (q + 1));
  row(beta_index(0, component, p)) = 1.0;
  for (Index c = 0; c < q; ++c) {
    row(beta_index(c + 1, component, p)) = tf.apply(c, x(c));
  }
  return row;
}

inline std::vector<std::string> design_column_names(const SpatialDataset &data) {
  std::vector<std::string> names;
  const Index p = data.p();
  for (Index c = 0; c <= data.q(); ++c) {
    for (Index i = 0; i < p; ++i) {
      const std::string cov =
          c == 0 ? "intercept" : data.covariate_names[static_cast<size_t>(c - 1)];
      names.push_back(cov + "[" + data.component_names[static_cast<size_t>(i)] + "]");
    }
  }
  return names;
}

inline MatrixXd design_matrix(const SpatialDataset &data, const CovariateTransform &tf) {
  const Index n = data.n();
  const Index p = data.p();
  MatrixXd x(n * p, p * (data.q() + 1));
  for (Index i = 0; i < p; ++i) {
    for (Index k = 0; k < n; ++k) {
      x.row(i * n + k) = design_row(data.covariates.row(k), i, p, tf);
    }
  }
  return x;
}

/// Design built with the dataset's recorded covariate transform. Reports
/// rank deficiency with the names of the dependent columns.
inline MeanModel build_design(const SpatialDataset &data) {
  if (!data.covariates.allFinite()) {
    throw DataError("covariates must be finite");
  }
  MeanModel model;
  model.design = design_matrix(data, data.transform);
  model.column_names = design_column_names(data);
  model.beta = VectorXd::Zero(model.design.cols());

  Eigen::ColPivHouseholderQR<MatrixXd> qr(model.design);
  if (qr.rank() < model.design.cols()) {
    std::string offending;
    MatrixXd kept(model.design.rows(), 0);
    Index rank = 0;
    for (Index c = 0; c < model.design.cols(); ++c) {
      MatrixXd trial(model.design.rows(), kept.cols() + 1);
      trial << kept, model.design.col(c);
      Eigen::ColPivHouseholderQR<MatrixXd> step(trial);
      if (step.rank() > rank) {
        kept = trial;
        rank = step.rank();
      } else {
        offending += (offending.empty() ? "" : ", ") +
                     model.column_names[static_cast<size_t>(c)];
      }
    }
    throw DataError("design matrix is rank deficient; dependent columns: " + offending);
  }
  return model;
}

/// Residuals y_t - X beta stacked as columns.
inline MatrixXd residuals(const SpatialDataset &data, const MatrixXd &design,
                          const VectorXd &beta) {
  MatrixXd e = data.responses;
  e.colwise() -= design * beta;
  return e;
}

/// Sum of T Gaussian log-densities sharing one factorized covariance.
inline double gaussian_log_density(const CholeskyFactor &factor,
                                   const MatrixXd &residual_columns) {
  const double dim = static_cast<double>(factor.size());
  const double t = static_cast<double>(residual_columns.cols());
  const double quad = factor.whiten(residual_columns).squaredNorm();
  return -0.5 * dim * t * log_two_pi - 0.5 * t * factor.log_det() - 0.5 * quad;
}

inline void require_complete(const SpatialDataset &data) {
  if (data.has_missing()) {
    throw DataError("training responses contain missing values");
  }
}

/*
 * Log-likelihood of T independent replicates under the general model.
 * nullopt signals a covariance that fails the validity check.
 */
inline std::optional<double> log_likelihood(const SpatialDataset &data,
                                            const CovarianceParams &params,
                                            const NuggetPolicy &policy = {}) {
  require_complete(data);
  const MatrixXd x = design_matrix(data, data.transform);
  require(params.beta.size() == x.cols(), "beta has the wrong length");
  auto factor = check_validity(build_cov_matrix(data.distance_matrix(), params), policy);
  if (!factor) {
    return std::nullopt;
  }
  return gaussian_log_density(*factor, residuals(data, x, params.beta));
}

inline double kronecker_log_density(const KroneckerCov &cov,
                                    const MatrixXd &residual_columns) {
  const double dim = static_cast<double>(cov.n() * cov.p());
  const double t = static_cast<double>(residual_columns.cols());
  return -0.5 * dim * t * log_two_pi - 0.5 * t * cov.log_det() -
         0.5 * cov.quadratic_form(residual_columns);
}

/// Same value as the dense likelihood on A (x) R, computed from the factors.
inline std::optional<double> log_likelihood_kronecker(const SpatialDataset &data,
                                                      const SeparableParams &sep,
                                                      const VectorXd &beta,
                                                      const NuggetPolicy &policy = {}) {
  require_complete(data);
  const MatrixXd x = design_matrix(data, data.transform);
  require(beta.size() == x.cols(), "beta has the wrong length");
  require(sep.a.rows() == data.p(), "A must be p x p");
  auto cov = build_separable_cov(data.distance_matrix(), sep, policy);
  if (!cov) {
    return std::nullopt;
  }
  return kronecker_log_density(*cov, residuals(data, x, beta));
}

} // namespace mvcov
