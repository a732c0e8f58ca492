#pragma once

#include "mvcov/chain.hpp"
#include "mvcov/dataset.hpp"
#include "mvcov/error.hpp"
#include "mvcov/kernels.hpp"
#include "mvcov/linalg.hpp"
#include "mvcov/model.hpp"
#include "mvcov/priors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace mvcov {

using Rng = std::mt19937_64;

/// Independent seed for stream `stream` derived from a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct McmcSettings {
  long iterations = 20000;
  long burn_in = 10000;
  long thin = 5;
  double target_acceptance = 0.44;
  long adapt_batch = 50;
  double initial_scale = 0.5;
  bool common_range = true;
  NuggetPolicy nugget;

  void validate() const {
    if (iterations <= burn_in) {
      throw ConfigError("mcmc: no iterations after burn-in, the chain would be empty");
    }
    if (burn_in < 0 || thin < 1 || adapt_batch < 1) {
      throw ConfigError("mcmc: burn_in >= 0, thin >= 1 and adapt_batch >= 1 required");
    }
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0) || !(initial_scale > 0.0)) {
      throw ConfigError("mcmc: invalid adaptation settings");
    }
  }

  long retained_draws() const { return (iterations - burn_in) / thin; }
};

/// Everything needed to fit one model family.
struct FitSpec {
  Family family = Family::nonseparable_mixture;
  PriorSpec prior;
  SeparablePriorSpec separable;
  UnivariatePriorSpec univariate;
  McmcSettings mcmc;
};

// ---------------------------------------------------------------------------
// Conjugate update for the regression coefficients.

struct GaussianConditional {
  VectorXd mean;
  MatrixXd covariance;
  MatrixXd precision;
};

/*
 * beta | Sigma, y ~ N(m, V), V = (L^-1 + T X' S^-1 X)^-1,
 * m = V (L^-1 l + X' S^-1 sum_t y_t), with N(l, L) the prior.
 * `sigma_inv_x` is S^-1 X; `y_sum` is sum_t y_t.
 */
inline GaussianConditional beta_conditional(const MatrixXd &design,
                                            const MatrixXd &sigma_inv_x,
                                            const VectorXd &y_sum, Index replicates,
                                            const MultivariateNormalPrior &prior) {
  const MatrixXd prior_precision = prior.precision();
  MatrixXd precision = prior_precision +
                       static_cast<double>(replicates) * design.transpose() * sigma_inv_x;
  precision = 0.5 * (precision + precision.transpose());
  const VectorXd rhs = prior_precision * prior.mean + sigma_inv_x.transpose() * y_sum;
  Eigen::LLT<MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(precision, Eigen::EigenvaluesOnly);
    const auto &ev = eig.eigenvalues();
    std::ostringstream msg;
    msg << "beta full conditional is singular (condition number "
        << std::abs(ev.maxCoeff()) / std::abs(ev.minCoeff()) << ")";
    throw NumericError(msg.str());
  }
  GaussianConditional out;
  out.precision = precision;
  out.mean = llt.solve(rhs);
  out.covariance = llt.solve(MatrixXd::Identity(precision.rows(), precision.cols()));
  return out;
}

template <typename R> VectorXd sample_gaussian_precision(const GaussianConditional &g, R &rng) {
  Eigen::LLT<MatrixXd> llt(g.precision);
  std::normal_distribution<double> normal;
  VectorXd z(g.mean.size());
  for (Index i = 0; i < z.size(); ++i) {
    z(i) = normal(rng);
  }
  // Q = L L'  =>  L'^-1 z ~ N(0, Q^-1)
  return g.mean + llt.matrixU().solve(z);
}

inline VectorXd ordinary_least_squares(const MatrixXd &design, const MatrixXd &responses) {
  const VectorXd y_mean = responses.rowwise().mean();
  return design.colPivHouseholderQr().solve(y_mean);
}

// ---------------------------------------------------------------------------
// General (nonseparable) model.

enum class Block { sigma, delta, range, alpha1, alpha2, alpha0, indicator };

inline std::string to_string(Block b) {
  switch (b) {
  case Block::sigma:
    return "sigma";
  case Block::delta:
    return "delta";
  case Block::range:
    return "range";
  case Block::alpha1:
    return "alpha1";
  case Block::alpha2:
    return "alpha2";
  case Block::alpha0:
    return "alpha0";
  case Block::indicator:
    return "sep_indicator";
  }
  return "unknown";
}

/// Data, design and priors of the general model; evaluates likelihoods.
class NonseparableTarget {
public:
  NonseparableTarget(const SpatialDataset &data, PriorSpec prior, bool mixture,
                     NuggetPolicy nugget = {})
      : responses_(data.responses), prior_(std::move(prior)), nugget_(nugget) {
    require_complete(data);
    design_ = build_design(data).design;
    distances_ = data.distance_matrix();
    y_sum_ = responses_.rowwise().sum();
    if (mixture && !prior_.alpha0_mixture) {
      throw ConfigError("mixture family requires prior.alpha0_mixture");
    }
    if (!mixture) {
      prior_.alpha0_mixture.reset();
    }
    prior_.validate();
    if (prior_.p() != data.p() || prior_.beta.size() != design_.cols()) {
      throw ConfigError("prior dimensions do not match the data");
    }
  }

  bool mixture() const { return prior_.alpha0_mixture.has_value(); }
  const PriorSpec &prior() const { return prior_; }
  const MatrixXd &design() const { return design_; }
  const MatrixXd &responses() const { return responses_; }
  const MatrixXd &distances() const { return distances_; }
  const VectorXd &y_sum() const { return y_sum_; }
  Index replicates() const { return responses_.cols(); }

  std::optional<CholeskyFactor> factorize_params(const CovarianceParams &params) const {
    for (Index i = 0; i < params.p(); ++i) {
      for (Index j = 0; j <= i; ++j) {
        if (!(params.b(i, j) > 0.0) || !std::isfinite(params.b(i, j)) ||
            !(params.delta(i, j) >= 0.0) || !std::isfinite(params.delta(i, j))) {
          return std::nullopt;
        }
      }
    }
    if (!params.sigma.allFinite() || !(params.alpha1 > 0.0) || !(params.alpha2 > 0.0) ||
        !(params.alpha0 >= 0.0)) {
      return std::nullopt;
    }
    return check_validity(build_cov_matrix(distances_, params), nugget_);
  }

  double log_likelihood(const CholeskyFactor &factor, const VectorXd &beta) const {
    return gaussian_log_density(factor, residuals_for(beta));
  }

  MatrixXd residuals_for(const VectorXd &beta) const {
    MatrixXd e = responses_;
    e.colwise() -= design_ * beta;
    return e;
  }

private:
  MatrixXd responses_;
  PriorSpec prior_;
  NuggetPolicy nugget_;
  MatrixXd design_;
  MatrixXd distances_;
  VectorXd y_sum_;
};

struct NonseparableState {
  CovarianceParams params;
  bool sep_indicator = false;
  CholeskyFactor factor;
  double log_lik = 0.0;
  double log_prior = 0.0;
  long iteration = 0;

  double log_post() const { return log_lik + log_prior; }
};

/// Per-scalar random-walk scales, adapted during burn-in.
struct ProposalScales {
  std::map<std::string, double> log_scale;
  std::map<std::string, BlockAcceptance> batch;
  double initial = 0.5;

  double scale(const std::string &name) {
    auto it = log_scale.find(name);
    if (it == log_scale.end()) {
      it = log_scale.emplace(name, std::log(initial)).first;
    }
    return std::exp(it->second);
  }

  void record(const std::string &name, bool accepted) {
    auto &b = batch[name];
    ++b.attempts;
    b.accepted += accepted ? 1 : 0;
  }

  /// Nudges each log scale toward the target rate; step shrinks with the
  /// batch count.
  void adapt(long batch_index, double target, long iteration,
             std::vector<AdaptationRecord> *history) {
    const double step = std::min(0.5, 1.0 / std::sqrt(static_cast<double>(batch_index)));
    for (auto &[name, acc] : batch) {
      if (acc.attempts == 0) {
        continue;
      }
      const double rate = acc.rate();
      double &ls = log_scale[name];
      ls += rate > target ? step : -step;
      if (history) {
        history->push_back({iteration, name, ls, rate});
      }
      acc = {};
    }
  }
};

struct ScalarSlot {
  Block block;
  Index i = 0;
  Index j = 0;
  std::string name;
  bool log_scale = true;
};

inline double get_scalar(const CovarianceParams &p, const ScalarSlot &s) {
  switch (s.block) {
  case Block::sigma:
    return p.sigma(s.i);
  case Block::delta:
    return p.delta(s.i, s.j);
  case Block::range:
    return p.b(s.i, s.j);
  case Block::alpha1:
    return p.alpha1;
  case Block::alpha2:
    return p.alpha2;
  case Block::alpha0:
    return p.alpha0;
  case Block::indicator:
    break;
  }
  throw NumericError("indicator has no scalar slot");
}

inline void set_scalar(CovarianceParams &p, const ScalarSlot &s, double v) {
  switch (s.block) {
  case Block::sigma:
    p.sigma(s.i) = v;
    return;
  case Block::delta:
    p.delta.set(s.i, s.j, v);
    return;
  case Block::range:
    if (p.common_range) {
      p.set_phi(v);
    } else {
      p.b.set(s.i, s.j, v);
    }
    return;
  case Block::alpha1:
    p.alpha1 = v;
    return;
  case Block::alpha2:
    p.alpha2 = v;
    return;
  case Block::alpha0:
    p.alpha0 = v;
    return;
  case Block::indicator:
    break;
  }
  throw NumericError("indicator has no scalar slot");
}

inline std::vector<ScalarSlot> block_slots(Block block, Index p, bool common_range) {
  std::vector<ScalarSlot> slots;
  auto idx = [](Index i) { return std::to_string(i + 1); };
  switch (block) {
  case Block::sigma:
    for (Index i = 0; i < p; ++i) {
      slots.push_back({block, i, i, "sigma_" + idx(i), false});
    }
    break;
  case Block::delta:
    for (Index i = 0; i < p; ++i) {
      for (Index j = i + 1; j < p; ++j) {
        slots.push_back({block, i, j, "delta_" + idx(i) + "_" + idx(j), true});
      }
    }
    break;
  case Block::range:
    if (common_range) {
      slots.push_back({block, 0, 0, "phi", true});
    } else {
      for (Index i = 0; i < p; ++i) {
        for (Index j = i; j < p; ++j) {
          slots.push_back({block, i, j, "b_" + idx(i) + "_" + idx(j), true});
        }
      }
    }
    break;
  case Block::alpha1:
    slots.push_back({block, 0, 0, "alpha1", true});
    break;
  case Block::alpha2:
    slots.push_back({block, 0, 0, "alpha2", true});
    break;
  case Block::alpha0:
    slots.push_back({block, 0, 0, "alpha0", true});
    break;
  case Block::indicator:
    break;
  }
  return slots;
}

/// Keeps sigma_1 > 0 by flipping the whole sigma vector; Sigma only
/// depends on products sigma_i sigma_j.
inline void reflect_sigma(NonseparableState &state, const NonseparableTarget &target) {
  if (state.params.sigma(0) < 0.0) {
    state.params.sigma = -state.params.sigma;
    state.log_prior = log_prior(state.params, target.prior(), state.sep_indicator);
  }
}

template <typename R>
void gibbs_update_beta(NonseparableState &state, const NonseparableTarget &target, R &rng) {
  const MatrixXd sigma_inv_x = state.factor.solve(target.design());
  const auto cond = beta_conditional(target.design(), sigma_inv_x, target.y_sum(),
                                     target.replicates(), target.prior().beta);
  state.params.beta = sample_gaussian_precision(cond, rng);
  state.log_lik = target.log_likelihood(state.factor, state.params.beta);
  state.log_prior = log_prior(state.params, target.prior(), state.sep_indicator);
}

/*
 * One Metropolis step for a single scalar. Positive parameters move on the
 * log scale with the Jacobian term; sigma moves on the identity scale.
 * A proposal whose covariance fails the validity check is rejected.
 */
template <typename R>
bool mh_update_scalar(NonseparableState &state, const NonseparableTarget &target,
                      const ScalarSlot &slot, double scale, R &rng) {
  const double current = get_scalar(state.params, slot);
  const double z = std::normal_distribution<double>(0.0, scale)(rng);
  const double proposed = slot.log_scale ? current * std::exp(z) : current + z;
  const double log_jacobian = slot.log_scale ? z : 0.0;

  CovarianceParams candidate = state.params;
  set_scalar(candidate, slot, proposed);
  const double lp = log_prior(candidate, target.prior(), state.sep_indicator);
  if (!std::isfinite(lp)) {
    return false;
  }
  auto factor = target.factorize_params(candidate);
  if (!factor) {
    return false;
  }
  const double ll = target.log_likelihood(*factor, candidate.beta);
  if (!std::isfinite(ll)) {
    return false;
  }
  const double log_ratio = ll + lp - state.log_post() + log_jacobian;
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (log_ratio >= 0.0 || std::log(u) < log_ratio) {
    state.params = std::move(candidate);
    state.factor = std::move(*factor);
    state.log_lik = ll;
    state.log_prior = lp;
    return true;
  }
  return false;
}

/// Updates every scalar of a block in turn; returns attempts/accepts.
template <typename R>
BlockAcceptance mh_update_block(NonseparableState &state, const NonseparableTarget &target,
                                Block block, R &rng, ProposalScales &scales) {
  BlockAcceptance acc;
  if (block == Block::alpha0 && state.sep_indicator) {
    return acc;
  }
  for (const auto &slot : block_slots(block, state.params.p(), state.params.common_range)) {
    const bool accepted = mh_update_scalar(state, target, slot, scales.scale(slot.name), rng);
    scales.record(slot.name, accepted);
    ++acc.attempts;
    acc.accepted += accepted ? 1 : 0;
  }
  if (block == Block::sigma) {
    reflect_sigma(state, target);
  }
  return acc;
}

/*
 * Between-model move for the point mass at alpha0 = 0. Birth proposes
 * alpha0 from the slab; death proposes alpha0 = 0. The acceptance ratio is
 * the posterior ratio divided by the slab density on birth (multiplied on
 * death), which keeps the joint posterior over (model, alpha0) invariant.
 */
template <typename R>
bool update_sep_indicator(NonseparableState &state, const NonseparableTarget &target, R &rng) {
  if (!target.mixture()) {
    return false;
  }
  const auto &slab = target.prior().alpha0_mixture->slab;
  CovarianceParams candidate = state.params;
  double log_proposal_correction = 0.0;
  const bool to_separable = !state.sep_indicator;
  if (to_separable) {
    candidate.alpha0 = 0.0;
    log_proposal_correction = slab.log_density(state.params.alpha0);
  } else {
    candidate.alpha0 = slab.sample(rng);
    log_proposal_correction = -slab.log_density(candidate.alpha0);
  }
  const double lp = log_prior(candidate, target.prior(), to_separable);
  if (!std::isfinite(lp)) {
    return false;
  }
  auto factor = target.factorize_params(candidate);
  if (!factor) {
    return false;
  }
  const double ll = target.log_likelihood(*factor, candidate.beta);
  if (!std::isfinite(ll)) {
    return false;
  }
  const double log_ratio = ll + lp - state.log_post() + log_proposal_correction;
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (log_ratio >= 0.0 || std::log(u) < log_ratio) {
    state.params = std::move(candidate);
    state.sep_indicator = to_separable;
    state.factor = std::move(*factor);
    state.log_lik = ll;
    state.log_prior = lp;
    return true;
  }
  return false;
}

/// Starting point: OLS beta, residual sd for sigma, prior means elsewhere,
/// range at a third of the median distance.
inline NonseparableState initial_state(const NonseparableTarget &target, bool common_range) {
  const PriorSpec &prior = target.prior();
  const Index p = prior.p();
  NonseparableState state;
  auto &params = state.params;
  params = CovarianceParams::make(p, prior.median_distance / 3.0);
  params.common_range = common_range;
  params.beta = ordinary_least_squares(target.design(), target.responses());
  const MatrixXd e = target.residuals_for(params.beta);
  const Index n = e.rows() / p;
  for (Index i = 0; i < p; ++i) {
    const auto block = e.middleRows(i * n, n);
    const double mean = block.mean();
    const double var = (block.array() - mean).square().sum() /
                       std::max<double>(1.0, static_cast<double>(block.size()) - 1.0);
    params.sigma(i) = std::sqrt(std::max(var, 1e-12));
    for (Index j = 0; j < i; ++j) {
      params.delta.set(i, j, prior.delta_prior(i, j).mean());
    }
  }
  params.alpha1 = prior.alpha1.initial_value();
  params.alpha2 = prior.alpha2.initial_value();
  params.alpha0 = prior.alpha0_mixture ? prior.alpha0_mixture->slab.mean() : prior.alpha0.mean();
  state.sep_indicator = false;

  // Name the block responsible for a non-finite start.
  auto check = [](double v, const std::string &what) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite log-posterior at initialization: " + what);
    }
  };
  for (Index i = 0; i < p; ++i) {
    check(prior.sigma[static_cast<size_t>(i)].log_density(params.sigma(i)), "sigma");
    for (Index j = 0; j < i; ++j) {
      check(prior.delta_prior(i, j).log_density(params.delta(i, j)), "delta");
    }
  }
  check(prior.range_prior(0, 0).log_density(params.phi()), "range");
  check(prior.alpha1.log_density(params.alpha1), "alpha1");
  check(prior.alpha2.log_density(params.alpha2), "alpha2");
  check(prior.beta.log_density(params.beta), "beta");
  state.log_prior = log_prior(params, prior, false);
  check(state.log_prior, "alpha0");
  auto factor = target.factorize_params(params);
  if (!factor) {
    throw NumericError(
        "non-finite log-posterior at initialization: covariance fails the validity check");
  }
  state.factor = std::move(*factor);
  state.log_lik = target.log_likelihood(state.factor, params.beta);
  check(state.log_lik, "likelihood");
  return state;
}

inline std::vector<Block> active_blocks(const PriorSpec &prior, bool mixture) {
  std::vector<Block> blocks{Block::sigma, Block::delta, Block::range};
  if (prior.p() < 2) {
    blocks.erase(blocks.begin() + 1);
  }
  if (!prior.alpha1.is_fixed()) {
    blocks.push_back(Block::alpha1);
  }
  if (!prior.alpha2.is_fixed()) {
    blocks.push_back(Block::alpha2);
  }
  blocks.push_back(Block::alpha0);
  if (mixture) {
    blocks.push_back(Block::indicator);
  }
  return blocks;
}

inline PosteriorChain run_nonseparable_chain(const SpatialDataset &data, const FitSpec &spec,
                                             std::uint64_t seed) {
  spec.mcmc.validate();
  const bool mixture = spec.family == Family::nonseparable_mixture;
  const NonseparableTarget target(data, spec.prior, mixture, spec.mcmc.nugget);
  Rng rng(seed);
  NonseparableState state = initial_state(target, spec.mcmc.common_range);

  PosteriorChain chain;
  chain.family = spec.family;
  chain.seed = seed;
  chain.iterations = spec.mcmc.iterations;
  chain.burn_in = spec.mcmc.burn_in;
  chain.thin = spec.mcmc.thin;
  chain.draws.reserve(static_cast<size_t>(spec.mcmc.retained_draws()));

  ProposalScales scales;
  scales.initial = spec.mcmc.initial_scale;
  const auto blocks = active_blocks(target.prior(), mixture);
  for (Block b : blocks) {
    chain.acceptance[to_string(b)] = {};
  }
  long batch_index = 0;
  for (long it = 1; it <= spec.mcmc.iterations; ++it) {
    const bool sampling = it > spec.mcmc.burn_in;
    gibbs_update_beta(state, target, rng);
    for (Block b : blocks) {
      BlockAcceptance acc;
      if (b == Block::indicator) {
        acc.attempts = 1;
        acc.accepted = update_sep_indicator(state, target, rng) ? 1 : 0;
      } else {
        acc = mh_update_block(state, target, b, rng, scales);
      }
      if (sampling) {
        auto &total = chain.acceptance[to_string(b)];
        total.attempts += acc.attempts;
        total.accepted += acc.accepted;
      }
    }
    state.iteration = it;
    if (!sampling && it % spec.mcmc.adapt_batch == 0) {
      scales.adapt(++batch_index, spec.mcmc.target_acceptance, it, &chain.adaptation);
    }
    if (sampling && (it - spec.mcmc.burn_in) % spec.mcmc.thin == 0) {
      chain.draws.push_back({state.params, state.sep_indicator, state.log_post(), it});
    }
  }
  return chain;
}

// ---------------------------------------------------------------------------
// Separable Cauchy model, A (x) R(phi).

class SeparableTarget {
public:
  SeparableTarget(const SpatialDataset &data, SeparablePriorSpec prior,
                  NuggetPolicy nugget = {})
      : responses_(data.responses), prior_(std::move(prior)), nugget_(nugget),
        n_(data.n()), p_(data.p()) {
    require_complete(data);
    design_ = build_design(data).design;
    distances_ = data.distance_matrix();
    y_sum_ = responses_.rowwise().sum();
    if (prior_.a.scale.rows() != p_ || prior_.beta.size() != design_.cols()) {
      throw ConfigError("separable prior dimensions do not match the data");
    }
    if (!(prior_.a.df > static_cast<double>(p_) - 1.0)) {
      throw ConfigError("inverse Wishart df must exceed p - 1");
    }
  }

  const SeparablePriorSpec &prior() const { return prior_; }
  const MatrixXd &design() const { return design_; }
  const MatrixXd &responses() const { return responses_; }
  const VectorXd &y_sum() const { return y_sum_; }
  Index n() const { return n_; }
  Index p() const { return p_; }
  Index replicates() const { return responses_.cols(); }

  MatrixXd correlation(double phi) const { return cauchy_correlation_matrix(distances_, phi); }

  std::optional<KroneckerCov> covariance(const MatrixXd &a, const MatrixXd &r) const {
    return KroneckerCov::make(a, r, nugget_);
  }

  MatrixXd residuals_for(const VectorXd &beta) const {
    MatrixXd e = responses_;
    e.colwise() -= design_ * beta;
    return e;
  }

  double log_prior(const SeparableModelParams &m) const {
    return prior_.a.log_density(m.cov.a) + prior_.range_prior().log_density(m.cov.phi) +
           prior_.beta.log_density(m.beta);
  }

private:
  MatrixXd responses_;
  SeparablePriorSpec prior_;
  NuggetPolicy nugget_;
  Index n_;
  Index p_;
  MatrixXd design_;
  MatrixXd distances_;
  VectorXd y_sum_;
};

struct SeparableState {
  SeparableModelParams params;
  MatrixXd r; // correlation without nugget
  std::optional<KroneckerCov> cov;
  double log_lik = 0.0;
  double log_prior = 0.0;

  double log_post() const { return log_lik + log_prior; }
};

template <typename R>
void gibbs_update_beta(SeparableState &state, const SeparableTarget &target, R &rng) {
  const MatrixXd sigma_inv_x = state.cov->solve(target.design());
  const auto cond = beta_conditional(target.design(), sigma_inv_x, target.y_sum(),
                                     target.replicates(), target.prior().beta);
  state.params.beta = sample_gaussian_precision(cond, rng);
  state.log_lik = kronecker_log_density(*state.cov, target.residuals_for(state.params.beta));
  state.log_prior = target.log_prior(state.params);
}

/// A | rest ~ IW(Psi + sum_t E_t' R^-1 E_t, nu + nT), E_t the n x p residuals.
template <typename R>
void gibbs_update_a(SeparableState &state, const SeparableTarget &target, R &rng) {
  const MatrixXd e = target.residuals_for(state.params.beta);
  const Index n = target.n();
  const Index p = target.p();
  MatrixXd scatter = target.prior().a.scale;
  for (Index t = 0; t < e.cols(); ++t) {
    Eigen::Map<const MatrixXd> block(e.col(t).data(), n, p);
    const MatrixXd w = state.cov->r_factor().whiten(block);
    scatter += w.transpose() * w;
  }
  const double df =
      target.prior().a.df + static_cast<double>(n) * static_cast<double>(target.replicates());
  state.params.cov.a = sample_inverse_wishart(scatter, df, rng);
  state.cov = target.covariance(state.params.cov.a, state.r);
  if (!state.cov) {
    throw NumericError("spatial correlation became invalid during the A update");
  }
  state.log_lik = kronecker_log_density(*state.cov, e);
  state.log_prior = target.log_prior(state.params);
}

template <typename R>
bool mh_update_range(SeparableState &state, const SeparableTarget &target, double scale,
                     R &rng) {
  const double z = std::normal_distribution<double>(0.0, scale)(rng);
  SeparableModelParams candidate = state.params;
  candidate.cov.phi = state.params.cov.phi * std::exp(z);
  const double lp = target.log_prior(candidate);
  if (!std::isfinite(lp)) {
    return false;
  }
  MatrixXd r = target.correlation(candidate.cov.phi);
  auto cov = target.covariance(candidate.cov.a, r);
  if (!cov) {
    return false;
  }
  const double ll = kronecker_log_density(*cov, target.residuals_for(candidate.beta));
  const double log_ratio = ll + lp - state.log_post() + z;
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (std::isfinite(ll) && (log_ratio >= 0.0 || std::log(u) < log_ratio)) {
    state.params = std::move(candidate);
    state.r = std::move(r);
    state.cov = std::move(cov);
    state.log_lik = ll;
    state.log_prior = lp;
    return true;
  }
  return false;
}

inline SeparableState initial_state(const SeparableTarget &target) {
  SeparableState state;
  state.params.beta = ordinary_least_squares(target.design(), target.responses());
  const MatrixXd e = target.residuals_for(state.params.beta);
  const Index n = target.n();
  const Index p = target.p();
  MatrixXd scatter = MatrixXd::Zero(p, p);
  for (Index t = 0; t < e.cols(); ++t) {
    Eigen::Map<const MatrixXd> block(e.col(t).data(), n, p);
    scatter += block.transpose() * block;
  }
  const double count = static_cast<double>(n * e.cols());
  state.params.cov.a = scatter / std::max(1.0, count - 1.0) +
                       1e-9 * MatrixXd::Identity(p, p);
  state.params.cov.phi = target.prior().median_distance / 3.0;
  state.r = target.correlation(state.params.cov.phi);
  state.cov = target.covariance(state.params.cov.a, state.r);
  if (!state.cov) {
    throw NumericError("non-finite log-posterior at initialization: range");
  }
  state.log_lik = kronecker_log_density(*state.cov, e);
  state.log_prior = target.log_prior(state.params);
  if (!std::isfinite(state.log_prior)) {
    throw NumericError("non-finite log-posterior at initialization: separable prior");
  }
  return state;
}

inline PosteriorChain run_separable_chain(const SpatialDataset &data,
                                          const SeparablePriorSpec &prior,
                                          const McmcSettings &mcmc, std::uint64_t seed,
                                          Family family = Family::separable) {
  mcmc.validate();
  const SeparableTarget target(data, prior, mcmc.nugget);
  Rng rng(seed);
  SeparableState state = initial_state(target);

  PosteriorChain chain;
  chain.family = family;
  chain.seed = seed;
  chain.iterations = mcmc.iterations;
  chain.burn_in = mcmc.burn_in;
  chain.thin = mcmc.thin;
  chain.acceptance["range"] = {};
  ProposalScales scales;
  scales.initial = mcmc.initial_scale;
  long batch_index = 0;
  for (long it = 1; it <= mcmc.iterations; ++it) {
    const bool sampling = it > mcmc.burn_in;
    gibbs_update_beta(state, target, rng);
    gibbs_update_a(state, target, rng);
    const bool accepted = mh_update_range(state, target, scales.scale("phi"), rng);
    scales.record("phi", accepted);
    if (sampling) {
      auto &acc = chain.acceptance["range"];
      ++acc.attempts;
      acc.accepted += accepted ? 1 : 0;
    }
    if (!sampling && it % mcmc.adapt_batch == 0) {
      scales.adapt(++batch_index, mcmc.target_acceptance, it, &chain.adaptation);
    }
    if (sampling && (it - mcmc.burn_in) % mcmc.thin == 0) {
      chain.draws.push_back({state.params, false, state.log_post(), it});
    }
  }
  return chain;
}

// ---------------------------------------------------------------------------
// Independent univariate Cauchy fits.

inline SpatialDataset component_slice(const SpatialDataset &data, Index component) {
  SpatialDataset out = data;
  out.component_names = {data.component_names[static_cast<size_t>(component)]};
  out.responses = data.responses.middleRows(component * data.n(), data.n());
  return out;
}

/*
 * One chain per component with precision 1/sigma^2 ~ Ga(a, b), i.e.
 * sigma^2 ~ IW(2b, 2a) in the p = 1 separable sampler. Draws are zipped by
 * index into a joint parameter set.
 */
inline PosteriorChain run_independent_chain(const SpatialDataset &data,
                                            const UnivariatePriorSpec &prior,
                                            const McmcSettings &mcmc, std::uint64_t seed) {
  const Index p = data.p();
  const Index q = data.q();
  std::vector<PosteriorChain> parts;
  for (Index i = 0; i < p; ++i) {
    SeparablePriorSpec sp;
    sp.a = {MatrixXd::Constant(1, 1, 2.0 * prior.precision.rate), 2.0 * prior.precision.shape};
    sp.range_u = prior.range_u;
    sp.median_distance = prior.median_distance;
    if (prior.beta.size() != q + 1) {
      throw ConfigError("univariate beta prior must have q + 1 entries");
    }
    sp.beta = prior.beta;
    parts.push_back(run_separable_chain(component_slice(data, i), sp, mcmc,
                                        derive_seed(seed, static_cast<std::uint64_t>(i)),
                                        Family::independent));
  }
  PosteriorChain chain;
  chain.family = Family::independent;
  chain.seed = seed;
  chain.iterations = mcmc.iterations;
  chain.burn_in = mcmc.burn_in;
  chain.thin = mcmc.thin;
  for (Index i = 0; i < p; ++i) {
    auto &part = parts[static_cast<size_t>(i)];
    chain.acceptance["range_" + std::to_string(i + 1)] = part.acceptance["range"];
    for (auto rec : part.adaptation) {
      rec.parameter += "_" + std::to_string(i + 1);
      chain.adaptation.push_back(rec);
    }
  }
  const size_t draws = parts.front().draws.size();
  for (size_t d = 0; d < draws; ++d) {
    IndependentModelParams joint{VectorXd(p), VectorXd(p), VectorXd(p * (q + 1))};
    double log_post = 0.0;
    for (Index i = 0; i < p; ++i) {
      const auto &s = std::get<SeparableModelParams>(parts[static_cast<size_t>(i)].draws[d].params);
      joint.sigma2(i) = s.cov.a(0, 0);
      joint.phi(i) = s.cov.phi;
      for (Index c = 0; c <= q; ++c) {
        joint.beta(beta_index(c, i, p)) = s.beta(c);
      }
      log_post += parts[static_cast<size_t>(i)].draws[d].log_post;
    }
    chain.draws.push_back({joint, false, log_post, parts.front().draws[d].iteration});
  }
  return chain;
}

/// Runs the sampler of the requested family; deterministic given the seed.
inline PosteriorChain run_chain(const SpatialDataset &data, const FitSpec &spec,
                                std::uint64_t seed) {
  switch (spec.family) {
  case Family::nonseparable:
  case Family::nonseparable_mixture:
    return run_nonseparable_chain(data, spec, seed);
  case Family::separable:
    return run_separable_chain(data, spec.separable, spec.mcmc, seed);
  case Family::independent:
    return run_independent_chain(data, spec.univariate, spec.mcmc, seed);
  }
  throw ConfigError("unknown family");
}

} // namespace mvcov
