#pragma once

#include "mvcov/chain.hpp"
#include "mvcov/dataset.hpp"
#include "mvcov/error.hpp"
#include "mvcov/linalg.hpp"
#include "mvcov/model.hpp"
#include "mvcov/prediction.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace mvcov {

/// (u - l) + (2/alpha)(l - x)[x < l] + (2/alpha)(x - u)[x > u]
inline double interval_score(double l, double u, double x, double alpha) {
  if (!(l <= u)) {
    throw NumericError("interval score needs lower <= upper");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("interval score alpha must lie in (0, 1)");
  }
  double score = u - l;
  if (x < l) {
    score += 2.0 / alpha * (l - x);
  } else if (x > u) {
    score += 2.0 / alpha * (x - u);
  }
  return score;
}

/*
 * Running harmonic mean in log space. Adds -log p per draw with a moving
 * max-shift; the linear-space reciprocal sum is never formed.
 */
class LogHarmonicAccumulator {
public:
  void add(double log_p) {
    ++count_;
    if (!std::isfinite(log_p)) {
      flagged_ = true;
      return;
    }
    const double x = -log_p;
    if (x > shift_) {
      sum_ = sum_ * std::exp(shift_ - x) + 1.0;
      shift_ = x;
    } else {
      sum_ += std::exp(x - shift_);
    }
    ++finite_;
  }

  long count() const { return count_; }
  bool flagged() const { return flagged_; }

  /// log of (K^-1 sum 1/p_k)^-1 over the finite terms.
  double log_value() const {
    if (finite_ == 0) {
      return -std::numeric_limits<double>::infinity();
    }
    return -(shift_ + std::log(sum_) - std::log(static_cast<double>(finite_)));
  }

private:
  double shift_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
  long count_ = 0;
  long finite_ = 0;
  bool flagged_ = false;
};

struct CpoEstimate {
  double log_cpo = 0.0;
  /// Some draw had a zero or non-finite likelihood; those draws are excluded.
  bool unstable = false;

  double value() const { return std::exp(log_cpo); }
};

inline CpoEstimate cpo_harmonic_log(const std::vector<double> &log_likelihoods) {
  if (log_likelihoods.empty()) {
    throw NumericError("CPO needs at least one draw");
  }
  LogHarmonicAccumulator acc;
  for (double v : log_likelihoods) {
    acc.add(v);
  }
  return {acc.log_value(), acc.flagged()};
}

inline CpoEstimate cpo_harmonic(const std::vector<double> &likelihoods) {
  std::vector<double> logs;
  logs.reserve(likelihoods.size());
  for (double v : likelihoods) {
    logs.push_back(v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity());
  }
  return cpo_harmonic_log(logs);
}

inline double lpml(const std::vector<double> &cpo) {
  double acc = 0.0;
  for (double c : cpo) {
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw NumericError("LPML needs strictly positive CPO values");
    }
    acc += std::log(c);
  }
  return acc;
}

inline double lpml_from_log(const std::vector<double> &log_cpo) {
  double acc = 0.0;
  for (double c : log_cpo) {
    if (!std::isfinite(c)) {
      throw NumericError("LPML needs strictly positive CPO values");
    }
    acc += c;
  }
  return acc;
}

/*
 * Per-observation density given theta.
 *   conditional: p(y_a | y_-a, theta) within the same replicate, from
 *     Q = Sigma^-1: mean residual e_a - (Qe)_a / Q_aa, variance 1 / Q_aa.
 *   marginal: p(y_a | theta) = N(mu_a, Sigma_aa).
 */
enum class CpoMode { conditional, marginal };

inline std::string to_string(CpoMode m) {
  return m == CpoMode::conditional ? "conditional" : "marginal";
}

inline CpoMode parse_cpo_mode(const std::string &s) {
  if (s == "conditional") {
    return CpoMode::conditional;
  }
  if (s == "marginal") {
    return CpoMode::marginal;
  }
  throw ConfigError("unknown CPO mode '" + s + "'");
}

/// Log densities for every scalar, laid out like data.responses.
inline std::optional<MatrixXd> observation_log_densities(const ModelParams &theta,
                                                         const SpatialDataset &data,
                                                         const MatrixXd &design,
                                                         const MatrixXd &site_distances,
                                                         CpoMode mode,
                                                         const NuggetPolicy &policy = {}) {
  const MatrixXd sigma = model_covariance(theta, site_distances);
  const MatrixXd e = residuals(data, design, beta_of(theta));
  MatrixXd out(e.rows(), e.cols());
  if (mode == CpoMode::marginal) {
    for (Index a = 0; a < e.rows(); ++a) {
      const double v = sigma(a, a);
      if (!(v > 0.0)) {
        return std::nullopt;
      }
      for (Index t = 0; t < e.cols(); ++t) {
        out(a, t) = -0.5 * (log_two_pi + std::log(v) + e(a, t) * e(a, t) / v);
      }
    }
    return out;
  }
  auto factor = factorize(sigma, policy);
  if (!factor) {
    return std::nullopt;
  }
  const MatrixXd q = factor->inverse();
  const MatrixXd qe = q * e;
  for (Index a = 0; a < e.rows(); ++a) {
    const double qaa = q(a, a);
    if (!(qaa > 0.0)) {
      return std::nullopt;
    }
    for (Index t = 0; t < e.cols(); ++t) {
      out(a, t) = -0.5 * (log_two_pi - std::log(qaa) + qe(a, t) * qe(a, t) / qaa);
    }
  }
  return out;
}

struct CpoReport {
  CpoMode mode = CpoMode::conditional;
  MatrixXd log_cpo; // laid out like data.responses
  double lpml = 0.0;
  long used_draws = 0;
  long skipped_draws = 0;
  long unstable_observations = 0;
};

inline CpoReport compute_cpo(const PosteriorChain &chain, const SpatialDataset &data,
                             CpoMode mode = CpoMode::conditional,
                             const NuggetPolicy &policy = {}) {
  if (chain.draws.empty()) {
    throw NumericError("CPO of an empty chain");
  }
  require_complete(data);
  const MatrixXd design = design_matrix(data, data.transform);
  const MatrixXd dist = data.distance_matrix();
  const Index rows = data.responses.rows();
  const Index cols = data.responses.cols();
  std::vector<LogHarmonicAccumulator> acc(static_cast<size_t>(rows * cols));
  CpoReport report;
  report.mode = mode;
  for (const auto &draw : chain.draws) {
    auto dens = observation_log_densities(draw.params, data, design, dist, mode, policy);
    if (!dens) {
      ++report.skipped_draws;
      continue;
    }
    ++report.used_draws;
    for (Index t = 0; t < cols; ++t) {
      for (Index a = 0; a < rows; ++a) {
        acc[static_cast<size_t>(t * rows + a)].add((*dens)(a, t));
      }
    }
  }
  if (report.used_draws == 0) {
    throw NumericError("every posterior draw is invalid on the training data");
  }
  report.log_cpo.resize(rows, cols);
  for (Index t = 0; t < cols; ++t) {
    for (Index a = 0; a < rows; ++a) {
      const auto &cell = acc[static_cast<size_t>(t * rows + a)];
      report.log_cpo(a, t) = cell.log_value();
      report.unstable_observations += cell.flagged() ? 1 : 0;
    }
  }
  report.lpml = report.log_cpo.sum();
  return report;
}

struct ScoreReport {
  std::string model;
  double alpha = 0.05;
  double average_is = 0.0;
  VectorXd interval_scores; // per scalar target
  long scored_targets = 0;
  double coverage = 0.0;
  double lpml = 0.0;
  CpoReport cpo;
};

/// Interval scores of a predictive summary against its recorded truth.
inline ScoreReport score_predictions(const PredictiveSummary &pred, std::string model) {
  ScoreReport r;
  r.model = std::move(model);
  r.alpha = pred.alpha;
  r.interval_scores.resize(pred.scalar_count());
  long covered = 0;
  long scored = 0;
  double total = 0.0;
  for (Index s = 0; s < pred.scalar_count(); ++s) {
    const double x = pred.truth(s);
    if (!std::isfinite(x)) {
      r.interval_scores(s) = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double is = interval_score(pred.lower(s), pred.upper(s), x, pred.alpha);
    r.interval_scores(s) = is;
    total += is;
    ++scored;
    covered += (x >= pred.lower(s) && x <= pred.upper(s)) ? 1 : 0;
  }
  if (scored == 0) {
    throw DataError("no prediction target has a recorded truth");
  }
  r.scored_targets = scored;
  r.average_is = total / static_cast<double>(scored);
  r.coverage = static_cast<double>(covered) / static_cast<double>(scored);
  return r;
}

} // namespace mvcov
