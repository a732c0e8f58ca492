#pragma once

#include "mvcov/dataset.hpp"
#include "mvcov/error.hpp"
#include "mvcov/kernels.hpp"
#include "mvcov/linalg.hpp"
#include "mvcov/mcmc.hpp"
#include "mvcov/model.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mvcov {

/// Produces the raw n x q covariate matrix for a set of sites.
using CovariateGenerator = std::function<MatrixXd(const std::vector<Site> &, Rng &)>;

/// Columns: latitude (y), longitude (x), altitude ~ U(0, 1).
inline MatrixXd lat_lon_alt_covariates(const std::vector<Site> &sites, Rng &rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MatrixXd c(static_cast<Index>(sites.size()), 3);
  for (size_t k = 0; k < sites.size(); ++k) {
    const auto r = static_cast<Index>(k);
    c(r, 0) = sites[k].y;
    c(r, 1) = sites[k].x;
    c(r, 2) = unit(rng);
  }
  return c;
}

/*
 * A synthetic design. truth.beta acts on raw covariates (intercept first,
 * covariate-major like every beta in the library).
 */
struct ScenarioSpec {
  std::string name;
  Index n = 0;
  Index p = 0;
  Index T = 0;
  std::optional<std::vector<Site>> fixed_sites; // otherwise U([0,1]^2)
  CovarianceParams truth;
  std::vector<std::string> covariate_names{"latitude", "longitude", "altitude"};
  CovariateGenerator covariates = lat_lon_alt_covariates;
  Index holdout = 0;
  std::uint64_t seed = 1;

  void validate() const {
    if (n < 1 || p < 1 || T < 1) {
      throw ConfigError("scenario '" + name + "': n, p and T must be positive");
    }
    if (holdout < 0 || holdout >= n) {
      throw ConfigError("scenario '" + name + "': hold-out count must be below n");
    }
    if (fixed_sites && static_cast<Index>(fixed_sites->size()) != n) {
      throw ConfigError("scenario '" + name + "': fixed site list does not have n sites");
    }
    if (truth.p() != p) {
      throw ConfigError("scenario '" + name + "': truth has the wrong component count");
    }
    try {
      truth.validate();
    } catch (const NumericError &e) {
      throw ConfigError("scenario '" + name + "': " + e.what());
    }
    const Index q = static_cast<Index>(covariate_names.size());
    if (truth.beta.size() != (q + 1) * p) {
      throw ConfigError("scenario '" + name + "': beta must have (q + 1) * p entries");
    }
  }
};

struct SimulatedData {
  SpatialDataset data; // all n sites, covariates standardized by data.transform
  CovarianceParams truth;
  std::vector<Index> holdout_sites; // sorted
  std::vector<Index> training_sites;

  SpatialDataset training() const { return data.subset_sites(training_sites); }
};

inline std::string site_label(Index k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%03ld", static_cast<long>(k + 1));
  return buf;
}

/*
 * T independent replicates of N(X beta, Sigma(truth)). Streams: 0 sites,
 * 1 covariates, 2 hold-out shuffle, 16 + t replicate t. The output depends
 * only on the scenario (including its seed).
 */
inline SimulatedData simulate_dataset(const ScenarioSpec &spec) {
  spec.validate();
  SimulatedData out;
  out.truth = spec.truth;
  SpatialDataset &d = out.data;
  const Index n = spec.n;
  const Index p = spec.p;

  if (spec.fixed_sites) {
    d.sites = *spec.fixed_sites;
  } else {
    Rng rng(derive_seed(spec.seed, 0));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Index k = 0; k < n; ++k) {
      const double x = unit(rng);
      const double y = unit(rng);
      d.sites.push_back({x, y});
    }
  }
  for (Index k = 0; k < n; ++k) {
    d.site_ids.push_back(site_label(k));
  }
  {
    Rng rng(derive_seed(spec.seed, 1));
    d.covariates = spec.covariates(d.sites, rng);
  }
  if (d.covariates.rows() != n ||
      d.covariates.cols() != static_cast<Index>(spec.covariate_names.size())) {
    throw ConfigError("covariate generator returned the wrong shape");
  }
  d.covariate_names = spec.covariate_names;
  for (Index i = 0; i < p; ++i) {
    d.component_names.push_back("y" + std::to_string(i + 1));
  }
  for (Index t = 0; t < spec.T; ++t) {
    d.replicate_ids.push_back(static_cast<long>(t + 1));
  }

  const CovariateTransform raw = CovariateTransform::identity(d.covariates.cols());
  const VectorXd mu = design_matrix(d, raw) * spec.truth.beta;
  auto factor = check_validity(build_cov_matrix(d.distance_matrix(), spec.truth));
  if (!factor) {
    throw NumericError("scenario '" + spec.name + "': truth covariance is not positive definite");
  }
  const MatrixXd l = factor->lower();
  d.responses.resize(n * p, spec.T);
  std::normal_distribution<double> normal;
  for (Index t = 0; t < spec.T; ++t) {
    Rng rng(derive_seed(spec.seed, 16 + static_cast<std::uint64_t>(t)));
    VectorXd z(n * p);
    for (Index a = 0; a < n * p; ++a) {
      z(a) = normal(rng);
    }
    normal.reset();
    d.responses.col(t) = mu + l * z;
  }
  d.transform = CovariateTransform::standardize(d.covariates);
  d.validate();

  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  {
    Rng rng(derive_seed(spec.seed, 2));
    std::shuffle(order.begin(), order.end(), rng);
  }
  out.holdout_sites.assign(order.begin(), order.begin() + spec.holdout);
  std::sort(out.holdout_sites.begin(), out.holdout_sites.end());
  for (Index k = 0; k < n; ++k) {
    if (!std::binary_search(out.holdout_sites.begin(), out.holdout_sites.end(), k)) {
      out.training_sites.push_back(k);
    }
  }
  return out;
}

/// Stacks per-component coefficient vectors (intercept first) covariate-major.
inline VectorXd stack_beta(const std::vector<std::vector<double>> &per_component) {
  const auto p = static_cast<Index>(per_component.size());
  const auto width = static_cast<Index>(per_component.front().size());
  VectorXd beta(p * width);
  for (Index i = 0; i < p; ++i) {
    require(static_cast<Index>(per_component[static_cast<size_t>(i)].size()) == width,
            "every component needs the same number of coefficients");
    for (Index c = 0; c < width; ++c) {
      beta(beta_index(c, i, p)) =
          per_component[static_cast<size_t>(i)][static_cast<size_t>(c)];
    }
  }
  return beta;
}

namespace detail {

inline ScenarioSpec two_component_scenario(const std::string &name, double rho,
                                           Index n, Index T, Index holdout) {
  ScenarioSpec s;
  s.name = name;
  s.n = n;
  s.p = 2;
  s.T = T;
  s.holdout = holdout;
  s.truth = CovarianceParams::make(2, 0.05);
  s.truth.sigma << 1.0, 1.0;
  s.truth.delta.set(0, 1, 1.5);
  // rho = a0 / (a0 + 1) when a1 = a2 = 1
  s.truth.alpha0 = rho / (1.0 - rho);
  s.truth.beta = stack_beta({{1.0, -0.2, -0.8, 0.5}, {1.5, 0.6, -0.5, -0.8}});
  return s;
}

inline ScenarioSpec three_component_scenario(const std::string &name, double alpha0,
                                             const std::vector<double> &sigma,
                                             const std::vector<double> &delta, Index n,
                                             Index T, Index holdout) {
  ScenarioSpec s;
  s.name = name;
  s.n = n;
  s.p = 3;
  s.T = T;
  s.holdout = holdout;
  s.truth = CovarianceParams::make(3, 0.1);
  s.truth.sigma << sigma[0], sigma[1], sigma[2];
  s.truth.delta.set(0, 1, delta[0]);
  s.truth.delta.set(0, 2, delta[1]);
  s.truth.delta.set(1, 2, delta[2]);
  s.truth.alpha0 = alpha0;
  s.truth.beta = stack_beta(
      {{1.0, -0.2, -0.8, 0.5}, {1.5, 0.6, -0.5, -0.8}, {1.8, -0.4, -0.3, 0.6}});
  return s;
}

} // namespace detail

/*
 * Named designs. The "-desk" variants keep every parameter and shrink the
 * sizes: two-component designs fit 40 sites (plus 3 held out) with T = 10,
 * three-component designs fit 30 sites (plus 3 held out) with T = 10.
 */
inline std::vector<ScenarioSpec> builtin_scenarios() {
  std::vector<ScenarioSpec> out;
  const std::pair<const char *, double> rhos[] = {
      {"sec5-rho000", 0.0}, {"sec5-rho005", 0.05}, {"sec5-rho010", 0.10}, {"sec5-rho020", 0.20}};
  for (const auto &[name, rho] : rhos) {
    out.push_back(detail::two_component_scenario(name, rho, 80, 20, 0));
  }
  for (const auto &[name, rho] : rhos) {
    out.push_back(detail::two_component_scenario(std::string(name) + "-desk", rho, 43, 10, 3));
  }
  const std::vector<double> sigma1{2.0, -1.0, 2.5};
  const std::vector<double> delta1{0.1, 0.2, 0.15};
  const std::vector<double> sigma2{2.0, 1.0, 2.5};
  const std::vector<double> delta2{2.0, 2.2, 1.9};
  out.push_back(detail::three_component_scenario("sec6-dataset1", 0.0, sigma1, delta1, 55, 20, 3));
  out.push_back(detail::three_component_scenario("sec6-dataset2", 0.22, sigma2, delta2, 55, 20, 3));
  out.push_back(
      detail::three_component_scenario("sec6-dataset1-desk", 0.0, sigma1, delta1, 33, 10, 3));
  out.push_back(
      detail::three_component_scenario("sec6-dataset2-desk", 0.22, sigma2, delta2, 33, 10, 3));
  return out;
}

inline ScenarioSpec find_scenario(const std::string &name) {
  for (auto &s : builtin_scenarios()) {
    if (s.name == name) {
      return s;
    }
  }
  throw ConfigError("unknown scenario '" + name + "'");
}

} // namespace mvcov
