#pragma once

#include "mvcov/chain.hpp"
#include "mvcov/dataset.hpp"
#include "mvcov/diagnostics.hpp"
#include "mvcov/error.hpp"
#include "mvcov/io.hpp"
#include "mvcov/mcmc.hpp"
#include "mvcov/model.hpp"
#include "mvcov/prediction.hpp"
#include "mvcov/priors.hpp"
#include "mvcov/scoring.hpp"
#include "mvcov/separability.hpp"
#include "mvcov/simulation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace mvcov::cli {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration

inline void check_keys(const json &j, const std::set<std::string> &allowed,
                       const std::string &where) {
  if (!j.is_object()) {
    throw ConfigError(where + " must be an object");
  }
  for (const auto &[key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
T get_or(const json &j, const std::string &key, T fallback, const std::string &where) {
  if (!j.contains(key)) {
    return fallback;
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception &) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

template <typename T> T get_required(const json &j, const std::string &key, const std::string &where) {
  if (!j.contains(key)) {
    throw ConfigError(where + ": missing required key '" + key + "'");
  }
  return get_or<T>(j, key, T{}, where);
}

inline const json &require_block(const json &cfg, const std::string &name,
                                 const std::string &command) {
  if (!cfg.contains(name)) {
    throw ConfigError(command + ": missing required '" + name + "' block");
  }
  return cfg.at(name);
}

/// Parsed configuration plus command-line overrides.
struct RunConfig {
  json raw;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  int threads = 1;
  bool verbose = false;
  std::string hash;

  void log(const std::string &msg) const {
    if (verbose) {
      std::cerr << "[mvcov] " << msg << '\n';
    }
  }

  std::string path(const std::string &name) const {
    return (std::filesystem::path(out_dir) / name).string();
  }
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  int threads = 1;
  bool verbose = false;
};

inline RunConfig parse_config(json raw, const Overrides &ov = {}) {
  check_keys(raw,
             {"seed", "output", "data", "model", "prior", "mcmc", "decision", "prediction",
              "compare", "chain", "profile"},
             "config");
  if (ov.seed) {
    raw["seed"] = *ov.seed;
  }
  RunConfig cfg;
  if (!raw.contains("seed")) {
    throw ConfigError("config: a seed is required");
  }
  cfg.seed = get_required<std::uint64_t>(raw, "seed", "config");
  cfg.out_dir = ov.out_dir.value_or(get_or<std::string>(raw, "output", ".", "config"));
  if (ov.threads < 1) {
    throw ConfigError("--threads must be at least 1");
  }
  cfg.threads = ov.threads;
  cfg.verbose = ov.verbose;
  raw.erase("output");
  cfg.hash = fnv1a_hex(raw.dump());
  cfg.raw = std::move(raw);
  return cfg;
}

inline RunConfig load_config(const std::string &path, const Overrides &ov = {}) {
  auto in = open_input(path);
  json raw;
  try {
    raw = json::parse(in, nullptr, true, true);
  } catch (const json::exception &e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(std::move(raw), ov);
}

// ---------------------------------------------------------------------------
// Data

struct LoadedData {
  SpatialDataset full;
  std::vector<Index> holdout; // sorted site indices
  std::optional<CovarianceParams> truth;
  std::string scenario;

  SpatialDataset training() const {
    return holdout.empty() ? full : full.subset_sites(complement_sites(full.n(), holdout));
  }
};

inline LoadedData load_data(const RunConfig &cfg, const std::string &command) {
  const json &d = require_block(cfg.raw, "data", command);
  check_keys(d,
             {"scenario", "scenario_seed", "n", "T", "holdout", "csv", "coordinates", "lon0",
              "lat0", "holdout_sites"},
             "data");
  LoadedData out;
  if (d.contains("scenario") == d.contains("csv")) {
    throw ConfigError("data: give exactly one of 'scenario' or 'csv'");
  }
  if (d.contains("scenario")) {
    for (const char *k : {"coordinates", "lon0", "lat0", "holdout_sites"}) {
      if (d.contains(k)) {
        throw ConfigError(std::string("data.") + k + " only applies to csv input");
      }
    }
    ScenarioSpec spec = find_scenario(get_required<std::string>(d, "scenario", "data"));
    spec.seed = get_or<std::uint64_t>(d, "scenario_seed", cfg.seed, "data");
    spec.n = get_or<Index>(d, "n", spec.n, "data");
    spec.T = get_or<Index>(d, "T", spec.T, "data");
    spec.holdout = get_or<Index>(d, "holdout", spec.holdout, "data");
    auto sim = simulate_dataset(spec);
    out.full = std::move(sim.data);
    out.holdout = std::move(sim.holdout_sites);
    out.truth = sim.truth;
    out.scenario = spec.name;
    return out;
  }
  for (const char *k : {"scenario_seed", "n", "T", "holdout"}) {
    if (d.contains(k)) {
      throw ConfigError(std::string("data.") + k + " only applies to scenario input");
    }
  }
  IngestOptions opt;
  opt.coordinates = get_or<std::string>(d, "coordinates", "planar", "data");
  if (d.contains("lon0")) {
    opt.lon0 = get_or<double>(d, "lon0", 0.0, "data");
  }
  if (d.contains("lat0")) {
    opt.lat0 = get_or<double>(d, "lat0", 0.0, "data");
  }
  out.full = ingest_csv(get_required<std::string>(d, "csv", "data"), opt);
  for (const auto &id : get_or<std::vector<std::string>>(d, "holdout_sites", {}, "data")) {
    out.holdout.push_back(out.full.site_index(id));
  }
  std::sort(out.holdout.begin(), out.holdout.end());
  if (std::adjacent_find(out.holdout.begin(), out.holdout.end()) != out.holdout.end()) {
    throw ConfigError("data.holdout_sites lists a site twice");
  }
  if (static_cast<Index>(out.holdout.size()) >= out.full.n()) {
    throw ConfigError("data.holdout_sites leaves no training sites");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Priors and sampler settings

inline GammaPrior parse_gamma(const json &j, const std::string &where) {
  check_keys(j, {"shape", "rate"}, where);
  GammaPrior g{get_required<double>(j, "shape", where), get_required<double>(j, "rate", where)};
  g.validate(where.c_str());
  return g;
}

inline ShapePrior parse_shape(const json &j, const std::string &where) {
  check_keys(j, {"fixed", "shape", "rate"}, where);
  ShapePrior s;
  if (j.contains("fixed")) {
    if (j.contains("shape") || j.contains("rate")) {
      throw ConfigError(where + ": give either 'fixed' or a gamma prior");
    }
    s.fixed = get_required<double>(j, "fixed", where);
    if (!(*s.fixed > 0.0)) {
      throw ConfigError(where + ".fixed must be positive");
    }
  } else {
    s.fixed.reset();
    s.gamma = parse_gamma(j, where);
  }
  return s;
}

inline std::pair<double, double> parse_normal(const json &j, const std::string &where,
                                              double mean, double variance) {
  check_keys(j, {"mean", "variance"}, where);
  const double m = get_or<double>(j, "mean", mean, where);
  const double v = get_or<double>(j, "variance", variance, where);
  if (!(v > 0.0)) {
    throw ConfigError(where + ".variance must be positive");
  }
  return {m, v};
}

inline McmcSettings parse_mcmc(const json &j) {
  check_keys(j,
             {"iterations", "burn_in", "thin", "target_acceptance", "adapt_batch",
              "initial_scale", "common_range"},
             "mcmc");
  McmcSettings m;
  m.iterations = get_or<long>(j, "iterations", m.iterations, "mcmc");
  m.burn_in = get_or<long>(j, "burn_in", m.burn_in, "mcmc");
  m.thin = get_or<long>(j, "thin", m.thin, "mcmc");
  m.target_acceptance = get_or<double>(j, "target_acceptance", m.target_acceptance, "mcmc");
  m.adapt_batch = get_or<long>(j, "adapt_batch", m.adapt_batch, "mcmc");
  m.initial_scale = get_or<double>(j, "initial_scale", m.initial_scale, "mcmc");
  m.common_range = get_or<bool>(j, "common_range", m.common_range, "mcmc");
  m.validate();
  return m;
}

/*
 * Every prior block key is optional; absent keys take the PriorSpec
 * defaults. The block itself must be present.
 */
inline FitSpec build_fit_spec(const RunConfig &cfg, Family family, const SpatialDataset &train,
                              const std::string &command) {
  const json &pj = require_block(cfg.raw, "prior", command);
  check_keys(pj,
             {"sigma", "delta", "alpha0", "alpha0_mixture", "alpha1", "alpha2", "range_u",
              "median_distance", "beta", "separable", "univariate"},
             "prior");
  const json &mj = require_block(cfg.raw, "mcmc", command);

  FitSpec fs;
  fs.family = family;
  fs.mcmc = parse_mcmc(mj);
  const Index p = train.p();
  const Index n_beta = (train.q() + 1) * p;

  double med = 0.0;
  if (pj.contains("median_distance") && pj.at("median_distance").is_number()) {
    med = pj.at("median_distance").get<double>();
  } else if (pj.contains("median_distance") &&
             pj.at("median_distance") != json("auto")) {
    throw ConfigError("prior.median_distance must be a number or \"auto\"");
  } else {
    med = median_pair_distance(train.sites);
  }

  fs.prior = PriorSpec::defaults(p, n_beta, med);
  if (pj.contains("sigma")) {
    auto [m, v] = parse_normal(pj.at("sigma"), "prior.sigma", 0.0, 100.0);
    fs.prior.sigma.assign(static_cast<size_t>(p), NormalPrior{m, v});
  }
  if (pj.contains("delta")) {
    const GammaPrior g = parse_gamma(pj.at("delta"), "prior.delta");
    fs.prior.delta.assign(static_cast<size_t>(p),
                          std::vector<GammaPrior>(static_cast<size_t>(p), g));
  }
  if (pj.contains("alpha0")) {
    fs.prior.alpha0 = parse_gamma(pj.at("alpha0"), "prior.alpha0");
  }
  if (pj.contains("alpha1")) {
    fs.prior.alpha1 = parse_shape(pj.at("alpha1"), "prior.alpha1");
  }
  if (pj.contains("alpha2")) {
    fs.prior.alpha2 = parse_shape(pj.at("alpha2"), "prior.alpha2");
  }
  if (pj.contains("range_u")) {
    fs.prior.range_u = SymmetricMatrix(p, get_or<double>(pj, "range_u", 0.75, "prior"));
  }
  double beta_mean = 0.0;
  double beta_var = 1000.0;
  if (pj.contains("beta")) {
    std::tie(beta_mean, beta_var) = parse_normal(pj.at("beta"), "prior.beta", 0.0, 1000.0);
  }
  fs.prior.beta = MultivariateNormalPrior::isotropic(n_beta, beta_mean, beta_var);
  if (family == Family::nonseparable_mixture) {
    PointMassMixture mix;
    if (pj.contains("alpha0_mixture")) {
      const json &x = pj.at("alpha0_mixture");
      check_keys(x, {"p0", "slab"}, "prior.alpha0_mixture");
      mix.p0 = get_or<double>(x, "p0", mix.p0, "prior.alpha0_mixture");
      if (!(mix.p0 > 0.0 && mix.p0 < 1.0)) {
        throw ConfigError("prior.alpha0_mixture.p0 must lie strictly between 0 and 1");
      }
      if (x.contains("slab")) {
        mix.slab = parse_gamma(x.at("slab"), "prior.alpha0_mixture.slab");
      }
    }
    fs.prior.alpha0_mixture = mix;
  }
  fs.prior.validate();

  fs.separable = SeparablePriorSpec::defaults(p, n_beta, med);
  if (pj.contains("separable")) {
    const json &s = pj.at("separable");
    check_keys(s, {"iw_scale", "iw_df", "range_u"}, "prior.separable");
    fs.separable.a.scale =
        get_or<double>(s, "iw_scale", 1.0, "prior.separable") * MatrixXd::Identity(p, p);
    fs.separable.a.df = get_or<double>(s, "iw_df", 4.0, "prior.separable");
    fs.separable.range_u = get_or<double>(s, "range_u", 0.75, "prior.separable");
    if (!(fs.separable.a.df > static_cast<double>(p) - 1.0) ||
        !(fs.separable.a.scale(0, 0) > 0.0) || !(fs.separable.range_u > 0.0)) {
      throw ConfigError("prior.separable: need iw_df > p - 1 and positive scale and range_u");
    }
  }
  fs.separable.beta = fs.prior.beta;

  fs.univariate.median_distance = med;
  fs.univariate.beta = MultivariateNormalPrior::isotropic(train.q() + 1, beta_mean, beta_var);
  if (pj.contains("univariate")) {
    const json &u = pj.at("univariate");
    check_keys(u, {"precision", "range_u"}, "prior.univariate");
    if (u.contains("precision")) {
      fs.univariate.precision = parse_gamma(u.at("precision"), "prior.univariate.precision");
    }
    fs.univariate.range_u = get_or<double>(u, "range_u", 0.1, "prior.univariate");
    if (!(fs.univariate.range_u > 0.0)) {
      throw ConfigError("prior.univariate.range_u must be positive");
    }
  }
  return fs;
}

inline Family config_family(const RunConfig &cfg, const std::string &command) {
  const json &m = require_block(cfg.raw, "model", command);
  check_keys(m, {"family"}, "model");
  return parse_family(get_required<std::string>(m, "family", "model"));
}

/// Stream ids below keep each command's RNG use isolated.
inline std::uint64_t family_stream(Family f) { return 100 + static_cast<std::uint64_t>(f); }

// ---------------------------------------------------------------------------
// Artifacts

inline void write_json(const std::string &path, const ordered_json &j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

inline ordered_json provenance(const RunConfig &cfg, const std::string &command) {
  return {{"command", command}, {"seed", cfg.seed}, {"config_hash", cfg.hash}};
}

inline ordered_json params_json(const ModelParams &m) {
  ordered_json j = ordered_json::object();
  const auto names = parameter_names(m);
  const auto values = flatten(m);
  for (size_t k = 0; k < names.size(); ++k) {
    j[names[k]] = values[k];
  }
  return j;
}

inline ChainMeta make_meta(const RunConfig &cfg, const PosteriorChain &chain,
                           const SpatialDataset &train, double med) {
  ChainMeta meta;
  meta.family = chain.family;
  meta.p = train.p();
  meta.n_beta = (train.q() + 1) * train.p();
  meta.common_range = true;
  if (const auto *c = std::get_if<CovarianceParams>(&chain.draws.front().params)) {
    meta.common_range = c->common_range;
  }
  meta.seed = chain.seed;
  meta.config_hash = cfg.hash;
  meta.median_distance = med;
  meta.design_columns = design_column_names(train);
  return meta;
}

inline void write_chain_artifacts(const RunConfig &cfg, const PosteriorChain &chain,
                                  const SpatialDataset &train, double med,
                                  const std::string &stem) {
  {
    auto out = open_output(cfg.path(stem + ".csv"));
    write_chain_csv(out, chain);
  }
  ordered_json meta = chain_meta_json(chain, make_meta(cfg, chain, train, med));
  meta["master_seed"] = cfg.seed;
  write_json(cfg.path(stem + ".meta.json"), meta);
}

inline ordered_json diagnostics_json(const PosteriorChain &chain) {
  ordered_json j;
  if (chain.draws.size() < 100) {
    j["skipped"] = "fewer than 100 retained draws";
    return j;
  }
  const auto rep = diagnostics(chain);
  j["draws"] = rep.draws;
  ordered_json params = ordered_json::array();
  for (const auto &s : rep.parameters) {
    params.push_back({{"name", s.name},
                      {"mean", s.mean},
                      {"sd", s.sd},
                      {"q025", s.q025},
                      {"q500", s.q500},
                      {"q975", s.q975},
                      {"ess", s.ess},
                      {"geweke_z", s.geweke}});
  }
  j["parameters"] = params;
  j["acceptance"] = rep.acceptance_rates;
  return j;
}

// ---------------------------------------------------------------------------
// Commands

inline void ensure_out_dir(const RunConfig &cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) {
    throw DataError("cannot create output directory '" + cfg.out_dir + "': " + ec.message());
  }
}

inline void cmd_simulate(const RunConfig &cfg) {
  const LoadedData data = load_data(cfg, "simulate");
  if (!data.truth) {
    throw ConfigError("simulate: data must name a scenario");
  }
  write_dataset_csv(cfg.path("data.csv"), data.full);
  ordered_json j = provenance(cfg, "simulate");
  j["scenario"] = data.scenario;
  j["truth"] = params_json(*data.truth);
  j["rho_tilde"] =
      separability_measure(data.truth->alpha0, data.truth->alpha1, data.truth->alpha2);
  std::vector<std::string> held;
  for (Index k : data.holdout) {
    held.push_back(data.full.site_ids[static_cast<size_t>(k)]);
  }
  j["holdout_sites"] = held;
  write_json(cfg.path("truth.json"), j);
  cfg.log("wrote " + std::to_string(data.full.n()) + " sites to " + cfg.path("data.csv"));
}

struct FitResult {
  Family family;
  PosteriorChain chain;
  FitSpec spec;
};

inline FitResult fit_family(const RunConfig &cfg, Family family, const SpatialDataset &train,
                            const std::string &command) {
  FitSpec fs = build_fit_spec(cfg, family, train, command);
  cfg.log("fitting " + to_string(family) + " on " + std::to_string(train.n()) + " sites");
  PosteriorChain chain = run_chain(train, fs, derive_seed(cfg.seed, family_stream(family)));
  return {family, std::move(chain), std::move(fs)};
}

inline void cmd_fit(const RunConfig &cfg) {
  const Family family = config_family(cfg, "fit");
  const LoadedData data = load_data(cfg, "fit");
  const SpatialDataset train = data.training();
  require_complete(train);
  FitResult fit = fit_family(cfg, family, train, "fit");
  write_chain_artifacts(cfg, fit.chain, train, fit.spec.prior.median_distance, "chain");
  ordered_json d = provenance(cfg, "fit");
  d["diagnostics"] = diagnostics_json(fit.chain);
  write_json(cfg.path("diagnostics.json"), d);
}

struct PredictionSettings {
  long draws_per_theta = 50;
  double alpha = 0.05;
  long theta_stride = 1;
};

inline PredictionSettings parse_prediction(const RunConfig &cfg) {
  PredictionSettings s;
  if (!cfg.raw.contains("prediction")) {
    return s;
  }
  const json &j = cfg.raw.at("prediction");
  check_keys(j, {"draws_per_theta", "alpha", "theta_stride"}, "prediction");
  s.draws_per_theta = get_or<long>(j, "draws_per_theta", s.draws_per_theta, "prediction");
  s.alpha = get_or<double>(j, "alpha", s.alpha, "prediction");
  s.theta_stride = get_or<long>(j, "theta_stride", s.theta_stride, "prediction");
  if (s.draws_per_theta < 1 || s.theta_stride < 1 || !(s.alpha > 0.0 && s.alpha < 1.0)) {
    throw ConfigError("prediction: draws_per_theta, theta_stride >= 1 and 0 < alpha < 1");
  }
  return s;
}

inline PredictiveSummary predict_holdout(const RunConfig &cfg, const PosteriorChain &chain,
                                         const LoadedData &data, const PredictionSettings &ps) {
  if (data.holdout.empty()) {
    throw ConfigError("prediction needs hold-out sites");
  }
  const PredictionTask task = holdout_task(data.full, data.holdout);
  std::vector<ModelParams> thetas;
  for (size_t d = 0; d < chain.draws.size(); d += static_cast<size_t>(ps.theta_stride)) {
    thetas.push_back(chain.draws[d].params);
  }
  return predictive_mixture(thetas, task, data.full, ps.draws_per_theta,
                            derive_seed(cfg.seed, 200 + static_cast<std::uint64_t>(chain.family)),
                            ps.alpha);
}

inline ordered_json score_json(const ScoreReport &r) {
  return {{"model", r.model},
          {"alpha", r.alpha},
          {"average_interval_score", r.average_is},
          {"scored_targets", r.scored_targets},
          {"coverage", r.coverage}};
}

/// Uses a saved chain when the config has a 'chain' block, otherwise fits.
inline void cmd_predict(const RunConfig &cfg) {
  const LoadedData data = load_data(cfg, "predict");
  const PredictionSettings ps = parse_prediction(cfg);
  PosteriorChain chain;
  if (cfg.raw.contains("chain")) {
    const json &c = cfg.raw.at("chain");
    check_keys(c, {"csv", "meta"}, "chain");
    auto [loaded, meta] = read_chain(get_required<std::string>(c, "csv", "chain"),
                                     get_required<std::string>(c, "meta", "chain"));
    if (meta.p != data.full.p() || meta.n_beta != (data.full.q() + 1) * data.full.p()) {
      throw DataError("saved chain does not match the dataset dimensions");
    }
    chain = std::move(loaded);
  } else {
    const SpatialDataset train = data.training();
    require_complete(train);
    chain = fit_family(cfg, config_family(cfg, "predict"), train, "predict").chain;
  }
  const PredictiveSummary pred = predict_holdout(cfg, chain, data, ps);
  {
    auto out = open_output(cfg.path("predictions.csv"));
    write_predictions_csv(out, pred, data.full);
  }
  ordered_json j = provenance(cfg, "predict");
  j["family"] = to_string(chain.family);
  j["used_thetas"] = pred.used_thetas;
  j["skipped_thetas"] = pred.skipped_thetas;
  if (pred.truth.array().isFinite().any()) {
    j["score"] = score_json(score_predictions(pred, to_string(chain.family)));
  }
  write_json(cfg.path("prediction.json"), j);
}

inline DecisionConfig parse_decision(const RunConfig &cfg, double p0) {
  DecisionConfig d;
  d.p0 = p0;
  if (cfg.raw.contains("decision")) {
    const json &j = cfg.raw.at("decision");
    check_keys(j, {"w0", "w1"}, "decision");
    d.w0 = get_or<double>(j, "w0", d.w0, "decision");
    d.w1 = get_or<double>(j, "w1", d.w1, "decision");
  }
  d.validate();
  return d;
}

struct SeparabilityOutcome {
  double p_tilde = 0.0;
  BayesFactor bf;
  SeparabilityDecision decision;
  double p0 = 0.5;
};

inline ordered_json separability_json(const SeparabilityOutcome &o) {
  ordered_json j;
  j["p_tilde"] = o.p_tilde;
  j["p0"] = o.p0;
  if (std::isinf(o.bf.value)) {
    j["bayes_factor"] = "inf";
  } else {
    j["bayes_factor"] = o.bf.value;
  }
  j["bayes_factor_overwhelming"] = o.bf.overwhelming;
  j["threshold"] = o.decision.threshold;
  j["reject_separability"] = o.decision.reject_h0;
  j["evidence_against_separability"] = to_string(o.decision.evidence);
  return j;
}

inline SeparabilityOutcome separability_outcome(const PosteriorChain &chain, const FitSpec &fs,
                                                const DecisionConfig &dc) {
  SeparabilityOutcome o;
  o.p0 = fs.prior.alpha0_mixture->p0;
  o.p_tilde = posterior_sep_probability(chain);
  o.bf = bayes_factor(o.p_tilde, o.p0);
  o.decision = separability_decision(o.p_tilde, dc);
  return o;
}

inline void cmd_test_separability(const RunConfig &cfg) {
  if (cfg.raw.contains("model")) {
    const Family f = config_family(cfg, "test-separability");
    if (f != Family::nonseparable_mixture) {
      throw ConfigError("test-separability requires the nonseparable-mixture family");
    }
  }
  const LoadedData data = load_data(cfg, "test-separability");
  const SpatialDataset train = data.training();
  require_complete(train);
  FitResult fit = fit_family(cfg, Family::nonseparable_mixture, train, "test-separability");
  const DecisionConfig dc = parse_decision(cfg, fit.spec.prior.alpha0_mixture->p0);
  write_chain_artifacts(cfg, fit.chain, train, fit.spec.prior.median_distance, "chain");
  ordered_json j = provenance(cfg, "test-separability");
  j["result"] = separability_json(separability_outcome(fit.chain, fit.spec, dc));
  write_json(cfg.path("separability.json"), j);
}

struct ComparisonRow {
  Family family;
  ScoreReport score;
  std::optional<double> p_tilde;
};

/*
 * Fits every family on the same training sites and scores all of them on
 * the same hold-out sites. Fits may run concurrently; each uses its own
 * seed stream, so results do not depend on the thread count.
 */
inline std::vector<ComparisonRow> compare_families(const RunConfig &cfg, const LoadedData &data,
                                                   const std::vector<Family> &families,
                                                   CpoMode mode) {
  const SpatialDataset train = data.training();
  require_complete(train);
  const PredictionSettings ps = parse_prediction(cfg);
  auto run_one = [&](Family f) {
    FitResult fit = fit_family(cfg, f, train, "compare");
    const PredictiveSummary pred = predict_holdout(cfg, fit.chain, data, ps);
    ComparisonRow row{f, score_predictions(pred, to_string(f)), std::nullopt};
    row.score.cpo = compute_cpo(fit.chain, train, mode, fit.spec.mcmc.nugget);
    row.score.lpml = row.score.cpo.lpml;
    if (f == Family::nonseparable_mixture) {
      row.p_tilde = posterior_sep_probability(fit.chain);
    }
    return row;
  };
  std::vector<ComparisonRow> rows;
  for (size_t start = 0; start < families.size(); start += static_cast<size_t>(cfg.threads)) {
    const size_t stop = std::min(families.size(), start + static_cast<size_t>(cfg.threads));
    if (stop - start == 1) {
      rows.push_back(run_one(families[start]));
      continue;
    }
    std::vector<std::future<ComparisonRow>> jobs;
    for (size_t k = start; k < stop; ++k) {
      jobs.push_back(std::async(std::launch::async, run_one, families[k]));
    }
    for (auto &job : jobs) {
      rows.push_back(job.get());
    }
  }
  return rows;
}

inline void cmd_compare(const RunConfig &cfg) {
  std::vector<Family> families{Family::separable, Family::nonseparable,
                               Family::nonseparable_mixture};
  CpoMode mode = CpoMode::conditional;
  if (cfg.raw.contains("compare")) {
    const json &c = cfg.raw.at("compare");
    check_keys(c, {"families", "cpo_mode"}, "compare");
    if (c.contains("families")) {
      families.clear();
      for (const auto &name : get_or<std::vector<std::string>>(c, "families", {}, "compare")) {
        families.push_back(parse_family(name));
      }
      if (families.empty()) {
        throw ConfigError("compare.families is empty");
      }
    }
    mode = parse_cpo_mode(get_or<std::string>(c, "cpo_mode", "conditional", "compare"));
  }
  const LoadedData data = load_data(cfg, "compare");
  const auto rows = compare_families(cfg, data, families, mode);

  ordered_json j = provenance(cfg, "compare");
  j["cpo_mode"] = to_string(mode);
  std::vector<std::string> held;
  for (Index k : data.holdout) {
    held.push_back(data.full.site_ids[static_cast<size_t>(k)]);
  }
  j["holdout_sites"] = held;
  ordered_json models = ordered_json::array();
  auto table = open_output(cfg.path("compare.csv"));
  table << "model,average_is,lpml,p_tilde,scored_targets,coverage\n";
  for (const auto &r : rows) {
    ordered_json m = score_json(r.score);
    m["lpml"] = r.score.lpml;
    m["unstable_cpo"] = r.score.cpo.unstable_observations;
    if (r.p_tilde) {
      m["p_tilde"] = *r.p_tilde;
    }
    models.push_back(m);
    table << to_string(r.family) << ',' << format_double(r.score.average_is) << ','
          << format_double(r.score.lpml) << ','
          << (r.p_tilde ? format_double(*r.p_tilde) : std::string("NA")) << ','
          << r.score.scored_targets << ',' << format_double(r.score.coverage) << '\n';
  }
  j["models"] = models;
  write_json(cfg.path("compare.json"), j);
}

/// Log-likelihood over an alpha0 grid with the other parameters at the
/// scenario truth.
inline void cmd_profile(const RunConfig &cfg) {
  const LoadedData data = load_data(cfg, "profile");
  if (!data.truth) {
    throw ConfigError("profile: data must name a scenario so the other parameters are known");
  }
  double from = 0.0;
  double to = 2.0;
  long steps = 81;
  if (cfg.raw.contains("profile")) {
    const json &p = cfg.raw.at("profile");
    check_keys(p, {"from", "to", "steps"}, "profile");
    from = get_or<double>(p, "from", from, "profile");
    to = get_or<double>(p, "to", to, "profile");
    steps = get_or<long>(p, "steps", steps, "profile");
  }
  if (!(from >= 0.0) || !(to > from) || steps < 2) {
    throw ConfigError("profile: need 0 <= from < to and steps >= 2");
  }
  const SpatialDataset train = data.training();
  CovarianceParams theta = *data.truth;
  // Truth coefficients act on raw covariates; refit them for the standardized design.
  const MatrixXd raw_x = design_matrix(train, CovariateTransform::identity(train.q()));
  const MatrixXd std_x = design_matrix(train, train.transform);
  theta.beta = std_x.colPivHouseholderQr().solve(raw_x * data.truth->beta);
  auto out = open_output(cfg.path("profile.csv"));
  out << "alpha0,rho_tilde,log_likelihood\n";
  for (long s = 0; s < steps; ++s) {
    theta.alpha0 = from + (to - from) * static_cast<double>(s) / static_cast<double>(steps - 1);
    const auto ll = log_likelihood(train, theta);
    out << format_double(theta.alpha0) << ','
        << format_double(separability_measure(theta.alpha0, theta.alpha1, theta.alpha2)) << ','
        << format_double(ll.value_or(missing_value)) << '\n';
  }
}

inline const std::vector<std::pair<std::string, std::function<void(const RunConfig &)>>> &
commands() {
  static const std::vector<std::pair<std::string, std::function<void(const RunConfig &)>>> list{
      {"simulate", cmd_simulate},
      {"fit", cmd_fit},
      {"predict", cmd_predict},
      {"test-separability", cmd_test_separability},
      {"compare", cmd_compare},
      {"profile", cmd_profile}};
  return list;
}

inline void write_error_document(const std::string &dir, const std::string &command,
                                 const std::string &kind, int code, const std::string &message) {
  ordered_json j{{"command", command}, {"error", kind}, {"exit_code", code}, {"message", message}};
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream out(std::filesystem::path(dir) / "error.json", std::ios::binary);
  if (out) {
    out << j.dump(2) << '\n';
  }
  std::cerr << "error: " << message << '\n';
}

/*
 * Runs a command end to end and maps failures to exit codes. A failure
 * leaves error.json in the output directory (or the working directory when
 * the config could not be read).
 */
inline int run(const std::string &command, const std::string &config_path, const Overrides &ov) {
  std::string dir = ov.out_dir.value_or(".");
  try {
    auto it = std::find_if(commands().begin(), commands().end(),
                           [&](const auto &c) { return c.first == command; });
    if (it == commands().end()) {
      throw ConfigError("unknown command '" + command + "'");
    }
    const RunConfig cfg = load_config(config_path, ov);
    dir = cfg.out_dir;
    ensure_out_dir(cfg);
    it->second(cfg);
    return static_cast<int>(ExitCode::success);
  } catch (const Error &e) {
    write_error_document(dir, command, e.kind(), static_cast<int>(e.code()), e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception &e) {
    write_error_document(dir, command, "numeric_failure",
                         static_cast<int>(ExitCode::numeric_failure), e.what());
    return static_cast<int>(ExitCode::numeric_failure);
  }
}

} // namespace mvcov::cli
