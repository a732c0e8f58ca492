#pragma once

#include "mvcov/error.hpp"
#include "mvcov/kernels.hpp"
#include "mvcov/linalg.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace mvcov {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

/// Normal prior parametrized by mean and variance.
struct NormalPrior {
  double mean = 0.0;
  double variance = 100.0;

  double log_density(double x) const {
    const double z = x - mean;
    return -0.5 * (log_two_pi + std::log(variance)) - 0.5 * z * z / variance;
  }

  template <typename Rng> double sample(Rng &rng) const {
    return std::normal_distribution<double>(mean, std::sqrt(variance))(rng);
  }
};

/// Gamma prior in shape/rate form (mean shape/rate).
struct GammaPrior {
  double shape = 1.0;
  double rate = 1.0;

  double mean() const { return shape / rate; }

  double log_density(double x) const {
    if (!(x > 0.0) || !std::isfinite(x)) {
      return neg_inf;
    }
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) -
           rate * x;
  }

  template <typename Rng> double sample(Rng &rng) const {
    return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
  }

  void validate(const char *what) const {
    if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) ||
        !std::isfinite(rate)) {
      throw ConfigError(std::string(what) + ": gamma shape and rate must be positive");
    }
  }
};

/// A positive smoothness parameter that is either held fixed or gamma.
struct ShapePrior {
  std::optional<double> fixed = 1.0;
  GammaPrior gamma{1.0, 1.0};

  bool is_fixed() const { return fixed.has_value(); }

  double log_density(double x) const {
    if (fixed) {
      return x == *fixed ? 0.0 : neg_inf;
    }
    return gamma.log_density(x);
  }

  double initial_value() const { return fixed ? *fixed : gamma.mean(); }
};

struct MultivariateNormalPrior {
  VectorXd mean;
  MatrixXd covariance;

  static MultivariateNormalPrior isotropic(Index dim, double mean, double variance) {
    return {VectorXd::Constant(dim, mean), MatrixXd::Identity(dim, dim) * variance};
  }

  Index size() const { return mean.size(); }

  MatrixXd precision() const { return covariance.inverse(); }

  double log_density(const VectorXd &x) const {
    Eigen::LLT<MatrixXd> llt(covariance);
    const VectorXd z = llt.matrixL().solve(x - mean);
    double log_det = 0.0;
    for (Index i = 0; i < size(); ++i) {
      log_det += 2.0 * std::log(llt.matrixLLT()(i, i));
    }
    return -0.5 * (static_cast<double>(size()) * log_two_pi + log_det) -
           0.5 * z.squaredNorm();
  }

  template <typename Rng> VectorXd sample(Rng &rng) const {
    Eigen::LLT<MatrixXd> llt(covariance);
    VectorXd z(size());
    std::normal_distribution<double> normal;
    for (Index i = 0; i < size(); ++i) {
      z(i) = normal(rng);
    }
    return mean + llt.matrixL() * z;
  }
};

/// Point mass p0 at alpha0 = 0 plus (1 - p0) times a gamma slab.
struct PointMassMixture {
  double p0 = 0.5;
  GammaPrior slab{1.0, 3.0};
};

inline double log_multivariate_gamma(double a, Index p) {
  double acc = 0.25 * static_cast<double>(p * (p - 1)) * std::log(M_PI);
  for (Index j = 0; j < p; ++j) {
    acc += std::lgamma(a - 0.5 * static_cast<double>(j));
  }
  return acc;
}

struct InverseWishartPrior {
  MatrixXd scale;
  double df = 4.0;

  double log_density(const MatrixXd &a) const {
    const Index p = a.rows();
    Eigen::LLT<MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
      return neg_inf;
    }
    const double log_det_a = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double log_det_s =
        2.0 * Eigen::LLT<MatrixXd>(scale).matrixLLT().diagonal().array().log().sum();
    const double trace = (llt.solve(scale)).trace();
    const double pd = static_cast<double>(p);
    return 0.5 * df * log_det_s - 0.5 * df * pd * std::log(2.0) -
           log_multivariate_gamma(0.5 * df, p) - 0.5 * (df + pd + 1.0) * log_det_a -
           0.5 * trace;
  }
};

/// Draw from IW(scale, df) through the Bartlett decomposition of the
/// Wishart(scale^-1, df) precision.
template <typename Rng>
MatrixXd sample_inverse_wishart(const MatrixXd &scale, double df, Rng &rng) {
  const Index p = scale.rows();
  require(df > static_cast<double>(p) - 1.0, "inverse Wishart df too small");
  const MatrixXd scale_inv = scale.inverse();
  const MatrixXd l = Eigen::LLT<MatrixXd>(0.5 * (scale_inv + scale_inv.transpose())).matrixL();
  MatrixXd bartlett = MatrixXd::Zero(p, p);
  std::normal_distribution<double> normal;
  for (Index i = 0; i < p; ++i) {
    const double shape = 0.5 * (df - static_cast<double>(i));
    bartlett(i, i) = std::sqrt(2.0 * std::gamma_distribution<double>(shape, 1.0)(rng));
    for (Index j = 0; j < i; ++j) {
      bartlett(i, j) = normal(rng);
    }
  }
  const MatrixXd lb = l * bartlett;
  const MatrixXd precision = lb * lb.transpose();
  MatrixXd a = precision.inverse();
  return 0.5 * (a + a.transpose());
}

/*
 * Priors of the general model. The range prior is Ga(u_ij * m, u_ij) with
 * m the median inter-site distance, so its mean is m for every pair.
 * delta_prior and range_u are indexed by component pair.
 */
struct PriorSpec {
  std::vector<NormalPrior> sigma;
  std::vector<std::vector<GammaPrior>> delta;
  GammaPrior alpha0{1.0, 1.0};
  ShapePrior alpha1;
  ShapePrior alpha2;
  SymmetricMatrix range_u;
  double median_distance = 1.0;
  MultivariateNormalPrior beta;
  std::optional<PointMassMixture> alpha0_mixture;

  Index p() const { return static_cast<Index>(sigma.size()); }

  GammaPrior range_prior(Index i, Index j) const {
    const double u = range_u(i, j);
    return {u * median_distance, u};
  }

  const GammaPrior &delta_prior(Index i, Index j) const {
    return delta[static_cast<size_t>(i)][static_cast<size_t>(j)];
  }

  /// Default hyperparameters; the range prior has mean `median_distance`.
  static PriorSpec defaults(Index p, Index n_beta, double median_distance) {
    PriorSpec spec;
    spec.sigma.assign(static_cast<size_t>(p), NormalPrior{0.0, 100.0});
    spec.delta.assign(static_cast<size_t>(p),
                      std::vector<GammaPrior>(static_cast<size_t>(p), GammaPrior{1.0, 0.5}));
    spec.alpha0 = {1.0, 1.0};
    spec.range_u = SymmetricMatrix(p, 0.75);
    spec.median_distance = median_distance;
    spec.beta = MultivariateNormalPrior::isotropic(n_beta, 0.0, 1000.0);
    return spec;
  }

  void validate() const {
    const Index n = p();
    if (n < 1) {
      throw ConfigError("prior: no components");
    }
    if (static_cast<Index>(delta.size()) != n || range_u.size() != n) {
      throw ConfigError("prior: delta and range blocks must be p x p");
    }
    for (const auto &s : sigma) {
      if (!(s.variance > 0.0)) {
        throw ConfigError("prior: sigma variance must be positive");
      }
    }
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < i; ++j) {
        delta_prior(i, j).validate("prior.delta");
      }
      for (Index j = 0; j <= i; ++j) {
        if (!(range_u(i, j) > 0.0)) {
          throw ConfigError("prior: range multiplier must be positive");
        }
      }
    }
    if (!(median_distance > 0.0)) {
      throw ConfigError("prior: median distance must be positive");
    }
    alpha0.validate("prior.alpha0");
    if (!alpha1.is_fixed()) {
      alpha1.gamma.validate("prior.alpha1");
    }
    if (!alpha2.is_fixed()) {
      alpha2.gamma.validate("prior.alpha2");
    }
    if (alpha0_mixture) {
      if (!(alpha0_mixture->p0 >= 0.0 && alpha0_mixture->p0 <= 1.0)) {
        throw ConfigError("prior: p0 must lie in [0, 1]");
      }
      alpha0_mixture->slab.validate("prior.alpha0_mixture.slab");
    }
    if (beta.covariance.rows() != beta.mean.size() ||
        beta.covariance.cols() != beta.mean.size()) {
      throw ConfigError("prior: beta covariance does not match its mean");
    }
  }
};

/*
 * Joint log prior. Out-of-support values give -inf. With a mixture prior
 * the alpha0 term is log p0 on the separable model and
 * log(1 - p0) + log slab(alpha0) otherwise.
 */
inline double log_prior(const CovarianceParams &params, const PriorSpec &spec,
                        bool sep_indicator) {
  const Index p = params.p();
  if (p != spec.p() || params.beta.size() != spec.beta.size()) {
    throw NumericError("log_prior: parameter dimensions do not match the prior");
  }
  double acc = 0.0;
  for (Index i = 0; i < p; ++i) {
    acc += spec.sigma[static_cast<size_t>(i)].log_density(params.sigma(i));
    for (Index j = 0; j < i; ++j) {
      acc += spec.delta_prior(i, j).log_density(params.delta(i, j));
    }
  }
  if (params.common_range) {
    acc += spec.range_prior(0, 0).log_density(params.phi());
  } else {
    for (Index i = 0; i < p; ++i) {
      for (Index j = 0; j <= i; ++j) {
        acc += spec.range_prior(i, j).log_density(params.b(i, j));
      }
    }
  }
  if (spec.alpha0_mixture) {
    const auto &mix = *spec.alpha0_mixture;
    if (sep_indicator) {
      acc += params.alpha0 == 0.0 ? std::log(mix.p0) : neg_inf;
    } else {
      acc += std::log1p(-mix.p0) + mix.slab.log_density(params.alpha0);
    }
  } else {
    acc += sep_indicator ? neg_inf : spec.alpha0.log_density(params.alpha0);
  }
  acc += spec.alpha1.log_density(params.alpha1);
  acc += spec.alpha2.log_density(params.alpha2);
  acc += spec.beta.log_density(params.beta);
  return std::isnan(acc) ? neg_inf : acc;
}

struct PriorDraw {
  CovarianceParams params;
  bool sep_indicator = false;
};

template <typename Rng>
PriorDraw sample_prior(const PriorSpec &spec, bool common_range, Rng &rng) {
  spec.validate();
  const Index p = spec.p();
  PriorDraw draw;
  auto &params = draw.params;
  params = CovarianceParams::make(p, 1.0);
  params.common_range = common_range;
  for (Index i = 0; i < p; ++i) {
    params.sigma(i) = spec.sigma[static_cast<size_t>(i)].sample(rng);
    for (Index j = 0; j < i; ++j) {
      params.delta.set(i, j, spec.delta_prior(i, j).sample(rng));
    }
  }
  if (common_range) {
    params.set_phi(spec.range_prior(0, 0).sample(rng));
  } else {
    for (Index i = 0; i < p; ++i) {
      for (Index j = 0; j <= i; ++j) {
        params.b.set(i, j, spec.range_prior(i, j).sample(rng));
      }
    }
  }
  if (spec.alpha0_mixture) {
    std::bernoulli_distribution separable(spec.alpha0_mixture->p0);
    draw.sep_indicator = separable(rng);
    params.alpha0 = draw.sep_indicator ? 0.0 : spec.alpha0_mixture->slab.sample(rng);
  } else {
    params.alpha0 = spec.alpha0.sample(rng);
  }
  params.alpha1 = spec.alpha1.is_fixed() ? *spec.alpha1.fixed : spec.alpha1.gamma.sample(rng);
  params.alpha2 = spec.alpha2.is_fixed() ? *spec.alpha2.fixed : spec.alpha2.gamma.sample(rng);
  params.beta = spec.beta.sample(rng);
  return draw;
}

template <typename Rng = std::mt19937_64>
PriorDraw sample_prior(const PriorSpec &spec, bool common_range, std::uint64_t seed) {
  Rng rng(seed);
  return sample_prior(spec, common_range, rng);
}

/// Priors of the separable Cauchy model A (x) R(phi).
struct SeparablePriorSpec {
  InverseWishartPrior a;
  double range_u = 0.75;
  double median_distance = 1.0;
  MultivariateNormalPrior beta;

  GammaPrior range_prior() const { return {range_u * median_distance, range_u}; }

  static SeparablePriorSpec defaults(Index p, Index n_beta, double median_distance) {
    return {{MatrixXd::Identity(p, p), 4.0}, 0.75, median_distance,
            MultivariateNormalPrior::isotropic(n_beta, 0.0, 1000.0)};
  }
};

/// Priors of one univariate Cauchy fit: precision 1/sigma^2 ~ gamma.
struct UnivariatePriorSpec {
  GammaPrior precision{1.0, 0.25};
  double range_u = 0.1;
  double median_distance = 1.0;
  MultivariateNormalPrior beta;

  GammaPrior range_prior() const { return {range_u * median_distance, range_u}; }
};

} // namespace mvcov
