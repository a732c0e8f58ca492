#pragma once

#include "mvcov/error.hpp"
#include "mvcov/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace mvcov {

inline constexpr double missing_value = std::numeric_limits<double>::quiet_NaN();

struct Site {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const Site &a, const Site &b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

/// Affine map applied to covariates before they enter a design matrix.
struct CovariateTransform {
  VectorXd center;
  VectorXd scale;

  static CovariateTransform identity(Index q) {
    return {VectorXd::Zero(q), VectorXd::Ones(q)};
  }

  /// Mean 0, sd 1 per column. Constant columns keep scale 1 and are left
  /// for the rank check in the design builder to report.
  static CovariateTransform standardize(const MatrixXd &covariates) {
    const Index q = covariates.cols();
    CovariateTransform tf = identity(q);
    const double n = static_cast<double>(covariates.rows());
    for (Index c = 0; c < q; ++c) {
      const double mean = covariates.col(c).mean();
      double ss = (covariates.col(c).array() - mean).square().sum();
      const double sd = n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
      tf.center(c) = mean;
      tf.scale(c) = sd > 0.0 ? sd : 1.0;
    }
    return tf;
  }

  double apply(Index column, double value) const {
    return (value - center(column)) / scale(column);
  }
};

/// How site coordinates were produced from the raw input.
struct ProjectionInfo {
  std::string mode = "planar"; // "planar" or "lonlat"
  double lon0 = 0.0;
  double lat0 = 0.0;
};

/*
 * Sites, covariates and a (component-major) response block.
 *
 * responses has n*p rows and T columns; row `i * n + k` holds component i
 * at site k. This is the layout used by every covariance matrix in the
 * library, so Sigma = A (x) R for separable structures.
 */
struct SpatialDataset {
  std::vector<std::string> site_ids;
  std::vector<Site> sites;
  std::vector<std::string> covariate_names;
  MatrixXd covariates; // n x q, raw values
  std::vector<std::string> component_names;
  std::vector<long> replicate_ids;
  MatrixXd responses; // (n*p) x T, NaN marks missing
  CovariateTransform transform;
  ProjectionInfo projection;

  Index n() const { return static_cast<Index>(sites.size()); }
  Index p() const { return static_cast<Index>(component_names.size()); }
  Index q() const { return covariates.cols(); }
  Index T() const { return responses.cols(); }

  Index index(Index site, Index component) const {
    return component * n() + site;
  }

  double value(Index replicate, Index site, Index component) const {
    return responses(index(site, component), replicate);
  }

  bool has_missing() const { return responses.hasNaN(); }

  Index site_index(const std::string &id) const {
    auto it = std::find(site_ids.begin(), site_ids.end(), id);
    if (it == site_ids.end()) {
      throw DataError("unknown site id '" + id + "'");
    }
    return static_cast<Index>(it - site_ids.begin());
  }

  void validate() const {
    if (n() < 1 || p() < 1 || T() < 1) {
      throw DataError("dataset needs at least one site, component and replicate");
    }
    if (static_cast<Index>(site_ids.size()) != n() || covariates.rows() != n()) {
      throw DataError("covariate rows do not align with sites");
    }
    if (responses.rows() != n() * p()) {
      throw DataError("response block has the wrong number of rows");
    }
    if (static_cast<Index>(replicate_ids.size()) != T()) {
      throw DataError("replicate labels do not match response columns");
    }
    if (!covariates.allFinite()) {
      throw DataError("covariates must be finite");
    }
    for (const auto &s : sites) {
      if (!std::isfinite(s.x) || !std::isfinite(s.y)) {
        throw DataError("site coordinates must be finite");
      }
    }
    if (transform.center.size() != q() || transform.scale.size() != q()) {
      throw DataError("covariate transform does not match covariate count");
    }
  }

  MatrixXd distance_matrix() const {
    const Index sites_n = n();
    MatrixXd d(sites_n, sites_n);
    for (Index k = 0; k < sites_n; ++k) {
      d(k, k) = 0.0;
      for (Index l = 0; l < k; ++l) {
        d(k, l) = d(l, k) = distance(sites[k], sites[l]);
      }
    }
    return d;
  }

  /// Keeps the listed sites (in the given order) and the recorded transform.
  SpatialDataset subset_sites(const std::vector<Index> &keep) const {
    SpatialDataset out;
    out.covariate_names = covariate_names;
    out.component_names = component_names;
    out.replicate_ids = replicate_ids;
    out.transform = transform;
    out.projection = projection;
    const Index m = static_cast<Index>(keep.size());
    out.covariates.resize(m, q());
    out.responses.resize(m * p(), T());
    for (Index r = 0; r < m; ++r) {
      const Index k = keep[static_cast<size_t>(r)];
      out.site_ids.push_back(site_ids[static_cast<size_t>(k)]);
      out.sites.push_back(sites[static_cast<size_t>(k)]);
      out.covariates.row(r) = covariates.row(k);
      for (Index i = 0; i < p(); ++i) {
        out.responses.row(i * m + r) = responses.row(index(k, i));
      }
    }
    return out;
  }
};

/// Median over the n(n-1)/2 distinct site pairs.
inline double median_pair_distance(const std::vector<Site> &sites) {
  std::vector<double> d;
  d.reserve(sites.size() * (sites.size() - 1) / 2);
  for (size_t k = 0; k < sites.size(); ++k) {
    for (size_t l = 0; l < k; ++l) {
      d.push_back(distance(sites[k], sites[l]));
    }
  }
  if (d.empty()) {
    throw DataError("median distance needs at least two sites");
  }
  const size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double upper = d[mid];
  if (d.size() % 2 == 1) {
    return upper;
  }
  double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

} // namespace mvcov
