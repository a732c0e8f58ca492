#pragma once

#include "mvcov/chain.hpp"
#include "mvcov/error.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace mvcov {

/// Fraction of retained draws sitting on the separable model (alpha0 = 0).
inline double posterior_sep_probability(const PosteriorChain &chain) {
  if (chain.draws.empty()) {
    throw NumericError("posterior separability probability of an empty chain");
  }
  long count = 0;
  for (const auto &d : chain.draws) {
    count += d.sep_indicator ? 1 : 0;
  }
  return static_cast<double>(count) / static_cast<double>(chain.draws.size());
}

struct BayesFactor {
  double value = 1.0;
  /// Posterior probability at 0 or 1: the factor is 0 or +inf.
  bool overwhelming = false;
};

/// Posterior odds against separability over prior odds against it.
inline BayesFactor bayes_factor(double p_tilde, double p0) {
  if (!(p0 > 0.0 && p0 < 1.0)) {
    throw ConfigError("bayes factor needs 0 < p0 < 1");
  }
  if (!(p_tilde >= 0.0 && p_tilde <= 1.0)) {
    throw NumericError("posterior probability must lie in [0, 1]");
  }
  if (p_tilde == 0.0) {
    return {std::numeric_limits<double>::infinity(), true};
  }
  if (p_tilde == 1.0) {
    return {0.0, true};
  }
  return {((1.0 - p_tilde) / p_tilde) / ((1.0 - p0) / p0), false};
}

struct DecisionConfig {
  double w0 = 1.0; // loss of rejecting a true H0
  double w1 = 1.0; // loss of keeping a false H0
  double p0 = 0.5;

  void validate() const {
    if (!(w0 > 0.0) || !(w1 > 0.0)) {
      throw ConfigError("decision losses must be positive");
    }
    if (!(p0 > 0.0 && p0 < 1.0)) {
      throw ConfigError("decision p0 must lie strictly between 0 and 1");
    }
  }
};

/// Strength of evidence against separability.
enum class Evidence { bare_mention, substantial, strong, very_strong };

inline std::string to_string(Evidence e) {
  switch (e) {
  case Evidence::bare_mention:
    return "not worth more than a bare mention";
  case Evidence::substantial:
    return "substantial nonseparability";
  case Evidence::strong:
    return "strong nonseparability";
  case Evidence::very_strong:
    return "very strong nonseparability";
  }
  return "unknown";
}

inline Evidence evidence_category(double p_tilde) {
  if (p_tilde >= 0.25) {
    return Evidence::bare_mention;
  }
  if (p_tilde > 0.05) {
    return Evidence::substantial;
  }
  if (p_tilde > 0.01) {
    return Evidence::strong;
  }
  return Evidence::very_strong;
}

struct SeparabilityDecision {
  bool reject_h0 = false;
  Evidence evidence = Evidence::bare_mention;
  double threshold = 0.5;
};

/// Rejects H0 (separability) when p_tilde <= w1 / (w0 + w1).
inline SeparabilityDecision separability_decision(double p_tilde, const DecisionConfig &cfg) {
  cfg.validate();
  const double threshold = cfg.w1 / (cfg.w0 + cfg.w1);
  return {p_tilde <= threshold, evidence_category(p_tilde), threshold};
}

} // namespace mvcov
