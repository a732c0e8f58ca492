#include <gtest/gtest.h>

#include "mvcov/priors.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <random>

using namespace mvcov;

namespace {

// Two-sided Kolmogorov-Smirnov statistic against a continuous CDF.
template <typename Cdf> double ks_distance(std::vector<double> x, Cdf cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (size_t k = 0; k < x.size(); ++k) {
    const double f = cdf(x[k]);
    d = std::max({d, f - static_cast<double>(k) / n, static_cast<double>(k + 1) / n - f});
  }
  return d;
}

PriorSpec bivariate_spec() {
  PriorSpec spec = PriorSpec::defaults(2, 2, 0.4);
  spec.alpha0_mixture = PointMassMixture{0.5, GammaPrior{1.0, 3.0}};
  return spec;
}

} // namespace

TEST(GammaPrior, LogDensityValues) {
  const GammaPrior g{1.0, 0.5};
  EXPECT_NEAR(g.log_density(2.0), std::log(0.5) - 1.0, 1e-14);
  EXPECT_EQ(g.log_density(0.0), neg_inf);
  EXPECT_EQ(g.log_density(-1.0), neg_inf);
  const GammaPrior h{3.0, 2.0};
  // 2^3 x^2 e^{-2x} / Gamma(3) at x = 1.5
  EXPECT_NEAR(h.log_density(1.5), std::log(8.0 * 2.25 * std::exp(-3.0) / 2.0), 1e-13);
}

TEST(GammaPrior, DeltaDrawsMatchCdf) {
  const PriorSpec spec = bivariate_spec();
  std::mt19937_64 rng(11);
  std::vector<double> draws;
  for (int k = 0; k < 100000; ++k) {
    draws.push_back(sample_prior(spec, true, rng).params.delta(0, 1));
  }
  const GammaPrior g = spec.delta_prior(1, 0);
  const double d = ks_distance(draws, [&](double x) {
    return boost::math::gamma_p(g.shape, g.rate * x);
  });
  EXPECT_LT(d, 0.01);
}

TEST(GammaPrior, RangeDrawsHaveMedianDistanceMean) {
  const PriorSpec spec = bivariate_spec();
  std::mt19937_64 rng(12);
  const int n = 100000;
  double sum = 0.0;
  for (int k = 0; k < n; ++k) {
    sum += sample_prior(spec, true, rng).params.phi();
  }
  const GammaPrior g = spec.range_prior(0, 0);
  const double se = std::sqrt(g.shape / (g.rate * g.rate) / n);
  EXPECT_NEAR(sum / n, spec.median_distance, 4.0 * se);
}

TEST(PointMass, IndicatorFrequencyFollowsP0) {
  PriorSpec spec = bivariate_spec();
  for (double p0 : {0.0, 0.3, 1.0}) {
    spec.alpha0_mixture->p0 = p0;
    std::mt19937_64 rng(13);
    const int n = 20000;
    int separable = 0;
    for (int k = 0; k < n; ++k) {
      const PriorDraw d = sample_prior(spec, true, rng);
      if (d.sep_indicator) {
        ++separable;
        EXPECT_EQ(d.params.alpha0, 0.0);
      } else {
        EXPECT_GT(d.params.alpha0, 0.0);
      }
    }
    const double f = static_cast<double>(separable) / n;
    EXPECT_NEAR(f, p0, 4.0 * std::sqrt(0.25 / n));
    if (p0 == 0.0 || p0 == 1.0) {
      EXPECT_EQ(f, p0);
    }
  }
}

TEST(LogPrior, MatchesTermByTermOracle) {
  const PriorSpec spec = bivariate_spec();
  CovarianceParams c = CovarianceParams::make(2, 0.3);
  c.sigma << 0.8, -1.2;
  c.delta.set(0, 1, 0.7);
  c.alpha0 = 0.25;
  c.beta = VectorXd::Constant(2, 0.5);

  auto normal = [](double x, double m, double v) {
    return -0.5 * std::log(2.0 * M_PI * v) - 0.5 * (x - m) * (x - m) / v;
  };
  auto gamma = [](double x, double a, double b) {
    return a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(x) - b * x;
  };
  const double common = normal(0.8, 0, 100) + normal(-1.2, 0, 100) + gamma(0.7, 1.0, 0.5) +
                        gamma(0.3, 0.75 * 0.4, 0.75) + 2.0 * normal(0.5, 0, 1000);
  const double slab = std::log(0.5) + gamma(0.25, 1.0, 3.0);
  EXPECT_NEAR(log_prior(c, spec, false), common + slab, 1e-12);

  c.alpha0 = 0.0;
  EXPECT_NEAR(log_prior(c, spec, true), common + std::log(0.5), 1e-12);
  c.alpha0 = 0.25;
  EXPECT_EQ(log_prior(c, spec, true), neg_inf);
}

TEST(LogPrior, OutOfSupportIsNegativeInfinity) {
  const PriorSpec spec = bivariate_spec();
  CovarianceParams c = CovarianceParams::make(2, 0.3);
  c.beta = VectorXd::Zero(2);
  c.delta.set(0, 1, -0.1);
  EXPECT_EQ(log_prior(c, spec, false), neg_inf);
  c.delta.set(0, 1, 0.1);
  c.set_phi(-1.0);
  EXPECT_EQ(log_prior(c, spec, false), neg_inf);
  c.set_phi(0.2);
  c.alpha1 = 2.0; // alpha1 held at 1
  EXPECT_EQ(log_prior(c, spec, false), neg_inf);
}

TEST(LogPrior, DimensionMismatchThrows) {
  const PriorSpec spec = bivariate_spec();
  CovarianceParams c = CovarianceParams::make(3, 0.3);
  c.beta = VectorXd::Zero(2);
  EXPECT_THROW(log_prior(c, spec, false), NumericError);
}

TEST(PriorSpec, ValidationRejectsBadHyperparameters) {
  PriorSpec spec = bivariate_spec();
  spec.alpha0_mixture->p0 = 1.5;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = bivariate_spec();
  spec.median_distance = 0.0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = bivariate_spec();
  spec.delta[1][0].rate = 0.0;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(InverseWishart, ScalarCaseIsInverseGamma) {
  // IW(s, nu) on 1x1 matrices is inverse gamma with shape nu/2, scale s/2.
  const double s = 1.7;
  const double nu = 5.0;
  const InverseWishartPrior iw{MatrixXd::Constant(1, 1, s), nu};
  for (double a : {0.1, 0.5, 2.0}) {
    const double shape = 0.5 * nu;
    const double scale = 0.5 * s;
    const double oracle =
        shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(a) - scale / a;
    EXPECT_NEAR(iw.log_density(MatrixXd::Constant(1, 1, a)), oracle, 1e-12);
  }
}

TEST(InverseWishart, SampleMeanIsScaleOverDfMinusDimMinusOne) {
  MatrixXd scale(2, 2);
  scale << 2.0, 0.6, 0.6, 1.0;
  const double df = 9.0;
  std::mt19937_64 rng(21);
  MatrixXd sum = MatrixXd::Zero(2, 2);
  const int n = 40000;
  for (int k = 0; k < n; ++k) {
    sum += sample_inverse_wishart(scale, df, rng);
  }
  const MatrixXd expected = scale / (df - 2.0 - 1.0);
  EXPECT_LT((sum / n - expected).cwiseAbs().maxCoeff(), 0.02);
}

TEST(InverseWishart, NonPositiveDefiniteHasZeroDensity) {
  const InverseWishartPrior iw{MatrixXd::Identity(2, 2), 4.0};
  MatrixXd a(2, 2);
  a << 1.0, 2.0, 2.0, 1.0;
  EXPECT_EQ(iw.log_density(a), neg_inf);
}

TEST(MultivariateNormal, LogDensityMatchesProductOfUnivariates) {
  const MultivariateNormalPrior mvn = MultivariateNormalPrior::isotropic(3, 1.0, 4.0);
  VectorXd x(3);
  x << 0.0, 2.0, 5.0;
  double oracle = 0.0;
  for (Index i = 0; i < 3; ++i) {
    oracle += NormalPrior{1.0, 4.0}.log_density(x(i));
  }
  EXPECT_NEAR(mvn.log_density(x), oracle, 1e-12);
}
