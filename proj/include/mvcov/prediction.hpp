#pragma once

#include "mvcov/chain.hpp"
#include "mvcov/dataset.hpp"
#include "mvcov/diagnostics.hpp"
#include "mvcov/error.hpp"
#include "mvcov/linalg.hpp"
#include "mvcov/model.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <vector>

namespace mvcov {

/// One (site, component) cell of the dataset.
struct Entry {
  Index site = 0;
  Index component = 0;

  friend bool operator<(const Entry &a, const Entry &b) {
    return a.component != b.component ? a.component < b.component : a.site < b.site;
  }
  friend bool operator==(const Entry &a, const Entry &b) {
    return a.site == b.site && a.component == b.component;
  }
};

/*
 * Observed cells and target cells, shared by every listed replicate. Each
 * replicate is conditioned separately.
 */
struct PredictionTask {
  std::vector<Entry> observed;
  std::vector<Entry> targets;
  std::vector<Index> replicates;

  Index scalar_count() const {
    return static_cast<Index>(targets.size() * replicates.size());
  }

  void validate(const SpatialDataset &data) const {
    std::set<Entry> seen;
    auto check = [&](const Entry &e) {
      if (e.site < 0 || e.site >= data.n() || e.component < 0 || e.component >= data.p()) {
        throw DataError("prediction task references a cell outside the dataset");
      }
    };
    for (const auto &e : observed) {
      check(e);
      seen.insert(e);
    }
    for (const auto &e : targets) {
      check(e);
      if (seen.count(e)) {
        throw DataError("observed and target cells overlap");
      }
    }
    for (Index t : replicates) {
      if (t < 0 || t >= data.T()) {
        throw DataError("prediction task references an unknown replicate");
      }
      for (const auto &e : observed) {
        if (!std::isfinite(data.value(t, e.site, e.component))) {
          throw DataError("observed cell is missing a response");
        }
      }
    }
    if (targets.empty() || replicates.empty()) {
      throw DataError("prediction task has no targets");
    }
  }
};

/// Hold out whole sites: every component at those sites becomes a target.
inline PredictionTask holdout_task(const SpatialDataset &data,
                                   const std::vector<Index> &holdout_sites) {
  std::set<Index> held(holdout_sites.begin(), holdout_sites.end());
  PredictionTask task;
  for (Index i = 0; i < data.p(); ++i) {
    for (Index k = 0; k < data.n(); ++k) {
      (held.count(k) ? task.targets : task.observed).push_back({k, i});
    }
  }
  for (Index t = 0; t < data.T(); ++t) {
    task.replicates.push_back(t);
  }
  return task;
}

inline std::vector<Index> complement_sites(Index n, const std::vector<Index> &sites) {
  std::set<Index> held(sites.begin(), sites.end());
  std::vector<Index> out;
  for (Index k = 0; k < n; ++k) {
    if (!held.count(k)) {
      out.push_back(k);
    }
  }
  return out;
}

inline MatrixXd cross_cov_block(const ModelParams &theta, const SpatialDataset &data,
                                const std::vector<Entry> &rows,
                                const std::vector<Entry> &cols) {
  MatrixXd out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (size_t a = 0; a < rows.size(); ++a) {
    for (size_t b = 0; b < cols.size(); ++b) {
      const double h = distance(data.sites[static_cast<size_t>(rows[a].site)],
                                data.sites[static_cast<size_t>(cols[b].site)]);
      out(static_cast<Index>(a), static_cast<Index>(b)) =
          cross_cov(theta, rows[a].component, cols[b].component, h);
    }
  }
  return out;
}

/// Full np x np covariance in dataset order (component-major).
inline MatrixXd model_covariance(const ModelParams &theta, const MatrixXd &site_distances) {
  if (const auto *c = std::get_if<CovarianceParams>(&theta)) {
    return build_cov_matrix(site_distances, *c).values;
  }
  const Index n = site_distances.rows();
  const Index p = component_count(theta);
  MatrixXd out = MatrixXd::Zero(n * p, n * p);
  for (Index i = 0; i < p; ++i) {
    for (Index j = 0; j < p; ++j) {
      for (Index k = 0; k < n; ++k) {
        for (Index l = 0; l < n; ++l) {
          out(i * n + k, j * n + l) = cross_cov(theta, i, j, site_distances(k, l));
        }
      }
    }
  }
  return out;
}

inline VectorXd mean_vector(const ModelParams &theta, const SpatialDataset &data,
                            const std::vector<Entry> &cells) {
  const VectorXd &beta = beta_of(theta);
  VectorXd mu(static_cast<Index>(cells.size()));
  for (size_t a = 0; a < cells.size(); ++a) {
    mu(static_cast<Index>(a)) =
        design_row(data.covariates.row(cells[a].site), cells[a].component, data.p(),
                   data.transform)
            .dot(beta);
  }
  return mu;
}

struct ConditionalGaussian {
  MatrixXd mean;       // targets x replicates
  MatrixXd covariance; // targets x targets, shared by replicates
};

/*
 * mu* = mu_u + S_uo S_oo^-1 (y_o - mu_o),  S* = S_uu - S_uo S_oo^-1 S_ou,
 * through a Cholesky factor of S_oo. nullopt when S_oo is invalid.
 */
inline std::optional<ConditionalGaussian>
conditional_gaussian(const ModelParams &theta, const PredictionTask &task,
                     const SpatialDataset &data, const NuggetPolicy &policy = {}) {
  const MatrixXd s_uu = cross_cov_block(theta, data, task.targets, task.targets);
  const VectorXd mu_u = mean_vector(theta, data, task.targets);
  const auto reps = static_cast<Index>(task.replicates.size());
  ConditionalGaussian out;
  if (task.observed.empty()) {
    out.mean = mu_u.replicate(1, reps);
    out.covariance = s_uu;
    return out;
  }
  const MatrixXd s_oo = cross_cov_block(theta, data, task.observed, task.observed);
  auto factor = factorize(s_oo, policy);
  if (!factor) {
    return std::nullopt;
  }
  const MatrixXd s_ou = cross_cov_block(theta, data, task.observed, task.targets);
  const VectorXd mu_o = mean_vector(theta, data, task.observed);
  MatrixXd resid(static_cast<Index>(task.observed.size()), reps);
  for (Index r = 0; r < reps; ++r) {
    const Index t = task.replicates[static_cast<size_t>(r)];
    for (size_t a = 0; a < task.observed.size(); ++a) {
      resid(static_cast<Index>(a), r) =
          data.value(t, task.observed[a].site, task.observed[a].component) -
          mu_o(static_cast<Index>(a));
    }
  }
  const MatrixXd w = factor->whiten(s_ou);
  const MatrixXd z = factor->whiten(resid);
  out.mean = (w.transpose() * z).colwise() + mu_u;
  out.covariance = s_uu - w.transpose() * w;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  if (!out.mean.allFinite() || !out.covariance.allFinite()) {
    return std::nullopt;
  }
  return out;
}

/// Square root used to draw from N(0, S); falls back to a clamped
/// eigendecomposition when S is only semi-definite.
inline MatrixXd covariance_root(const MatrixXd &s) {
  Eigen::LLT<MatrixXd> llt(s);
  if (llt.info() == Eigen::Success) {
    return llt.matrixL();
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s);
  VectorXd ev = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * ev.asDiagonal();
}

/*
 * Pooled predictive summary over posterior draws. Scalar target a*R + r
 * is target cell a in replicate r. The mean is the exact mixture mean
 * (average of the per-draw conditional means); interval bounds are
 * equal-tailed empirical quantiles of the pooled draws.
 */
struct PredictiveSummary {
  std::vector<Entry> targets;
  std::vector<Index> replicates;
  double alpha = 0.05;
  VectorXd mean;
  VectorXd lower;
  VectorXd upper;
  VectorXd truth;
  MatrixXd draws;        // scalar targets x (used thetas * draws_per_theta)
  MatrixXd theta_means;  // scalar targets x used thetas
  MatrixXd theta_vars;   // scalar targets x used thetas
  long used_thetas = 0;
  long skipped_thetas = 0;

  Index scalar_count() const { return mean.size(); }
  Index scalar_index(Index target, Index replicate) const {
    return target * static_cast<Index>(replicates.size()) + replicate;
  }
};

inline PredictiveSummary predictive_mixture(const std::vector<ModelParams> &thetas,
                                            const PredictionTask &task,
                                            const SpatialDataset &data,
                                            long draws_per_theta, std::uint64_t seed,
                                            double alpha = 0.05,
                                            const NuggetPolicy &policy = {}) {
  if (thetas.empty()) {
    throw NumericError("predictive mixture needs at least one posterior draw");
  }
  if (draws_per_theta < 1) {
    throw ConfigError("draws_per_theta must be positive");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("interval level alpha must lie in (0, 1)");
  }
  task.validate(data);
  const auto n_targets = static_cast<Index>(task.targets.size());
  const auto reps = static_cast<Index>(task.replicates.size());
  const Index scalars = n_targets * reps;

  PredictiveSummary out;
  out.targets = task.targets;
  out.replicates = task.replicates;
  out.alpha = alpha;
  out.truth.resize(scalars);
  for (Index a = 0; a < n_targets; ++a) {
    for (Index r = 0; r < reps; ++r) {
      const auto &cell = task.targets[static_cast<size_t>(a)];
      out.truth(out.scalar_index(a, r)) =
          data.value(task.replicates[static_cast<size_t>(r)], cell.site, cell.component);
    }
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<VectorXd> pooled;
  std::vector<VectorXd> means;
  std::vector<VectorXd> vars;
  for (const auto &theta : thetas) {
    auto cond = conditional_gaussian(theta, task, data, policy);
    if (!cond) {
      ++out.skipped_thetas;
      continue;
    }
    ++out.used_thetas;
    const MatrixXd root = covariance_root(cond->covariance);
    VectorXd m(scalars);
    VectorXd v(scalars);
    for (Index a = 0; a < n_targets; ++a) {
      for (Index r = 0; r < reps; ++r) {
        m(out.scalar_index(a, r)) = cond->mean(a, r);
        v(out.scalar_index(a, r)) = std::max(cond->covariance(a, a), 0.0);
      }
    }
    means.push_back(m);
    vars.push_back(v);
    VectorXd z(n_targets);
    for (long d = 0; d < draws_per_theta; ++d) {
      VectorXd sample(scalars);
      for (Index r = 0; r < reps; ++r) {
        for (Index a = 0; a < n_targets; ++a) {
          z(a) = normal(rng);
        }
        const VectorXd x = cond->mean.col(r) + root * z;
        for (Index a = 0; a < n_targets; ++a) {
          sample(out.scalar_index(a, r)) = x(a);
        }
      }
      pooled.push_back(std::move(sample));
    }
  }
  if (out.used_thetas == 0) {
    throw NumericError("every posterior draw is invalid for the prediction task");
  }
  out.draws.resize(scalars, static_cast<Index>(pooled.size()));
  for (size_t d = 0; d < pooled.size(); ++d) {
    out.draws.col(static_cast<Index>(d)) = pooled[d];
  }
  out.theta_means.resize(scalars, static_cast<Index>(means.size()));
  out.theta_vars.resize(scalars, static_cast<Index>(vars.size()));
  for (size_t d = 0; d < means.size(); ++d) {
    out.theta_means.col(static_cast<Index>(d)) = means[d];
    out.theta_vars.col(static_cast<Index>(d)) = vars[d];
  }
  out.mean = out.theta_means.rowwise().mean();
  out.lower.resize(scalars);
  out.upper.resize(scalars);
  for (Index s = 0; s < scalars; ++s) {
    std::vector<double> row;
    row.reserve(static_cast<size_t>(out.draws.cols()));
    for (Index d = 0; d < out.draws.cols(); ++d) {
      row.push_back(out.draws(s, d));
    }
    out.lower(s) = quantile(row, 0.5 * alpha);
    out.upper(s) = quantile(row, 1.0 - 0.5 * alpha);
  }
  return out;
}

inline PredictiveSummary predictive_mixture(const PosteriorChain &chain,
                                            const PredictionTask &task,
                                            const SpatialDataset &data,
                                            long draws_per_theta, std::uint64_t seed,
                                            double alpha = 0.05,
                                            const NuggetPolicy &policy = {}) {
  if (chain.draws.empty()) {
    throw NumericError("predictive mixture of an empty chain");
  }
  std::vector<ModelParams> thetas;
  thetas.reserve(chain.draws.size());
  for (const auto &d : chain.draws) {
    thetas.push_back(d.params);
  }
  return predictive_mixture(thetas, task, data, draws_per_theta, seed, alpha, policy);
}

/// Pooled predictive variance per scalar target (law of total variance).
inline VectorXd mixture_variance(const PredictiveSummary &s) {
  const VectorXd within = s.theta_vars.rowwise().mean();
  const MatrixXd centered = s.theta_means.colwise() - s.mean;
  const VectorXd between = centered.array().square().rowwise().mean();
  return within + between;
}

} // namespace mvcov
