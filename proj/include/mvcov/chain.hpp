#pragma once

#include "mvcov/error.hpp"
#include "mvcov/kernels.hpp"
#include "mvcov/linalg.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace mvcov {

enum class Family { independent, separable, nonseparable, nonseparable_mixture };

inline std::string to_string(Family f) {
  switch (f) {
  case Family::independent:
    return "independent";
  case Family::separable:
    return "separable";
  case Family::nonseparable:
    return "nonseparable";
  case Family::nonseparable_mixture:
    return "nonseparable-mixture";
  }
  return "unknown";
}

inline Family parse_family(const std::string &name) {
  for (Family f : {Family::independent, Family::separable, Family::nonseparable,
                   Family::nonseparable_mixture}) {
    if (to_string(f) == name) {
      return f;
    }
  }
  throw ConfigError("unknown model family '" + name + "'");
}

struct SeparableModelParams {
  SeparableParams cov;
  VectorXd beta;
};

/// p univariate Cauchy fields with no cross-covariance.
struct IndependentModelParams {
  VectorXd sigma2;
  VectorXd phi;
  VectorXd beta;
};

using ModelParams =
    std::variant<CovarianceParams, SeparableModelParams, IndependentModelParams>;

inline Index component_count(const ModelParams &m) {
  return std::visit(
      [](const auto &v) -> Index {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, CovarianceParams>) {
          return v.p();
        } else if constexpr (std::is_same_v<T, SeparableModelParams>) {
          return v.cov.a.rows();
        } else {
          return v.sigma2.size();
        }
      },
      m);
}

inline const VectorXd &beta_of(const ModelParams &m) {
  return std::visit([](const auto &v) -> const VectorXd & { return v.beta; }, m);
}

/// Cross-covariance between component i and component j at distance h.
inline double cross_cov(const ModelParams &m, Index i, Index j, double h) {
  return std::visit(
      [&](const auto &v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, CovarianceParams>) {
          return eval_general_cross_cov(i, j, h, v);
        } else if constexpr (std::is_same_v<T, SeparableModelParams>) {
          return eval_univariate_cauchy(h, v.cov.a(i, j), v.cov.phi);
        } else {
          return i == j ? eval_univariate_cauchy(h, v.sigma2(i), v.phi(i)) : 0.0;
        }
      },
      m);
}

struct ChainState {
  ModelParams params;
  bool sep_indicator = false;
  double log_post = 0.0;
  long iteration = 0;
};

struct BlockAcceptance {
  long attempts = 0;
  long accepted = 0;
  double rate() const {
    return attempts > 0 ? static_cast<double>(accepted) / static_cast<double>(attempts)
                        : 0.0;
  }
};

struct AdaptationRecord {
  long iteration = 0;
  std::string parameter;
  double log_scale = 0.0;
  double batch_rate = 0.0;
};

struct PosteriorChain {
  Family family = Family::nonseparable;
  std::vector<ChainState> draws;
  std::map<std::string, BlockAcceptance> acceptance;
  std::vector<AdaptationRecord> adaptation;
  std::uint64_t seed = 0;
  long iterations = 0;
  long burn_in = 0;
  long thin = 1;
};

/// Column names of the flattened parameter vector.
inline std::vector<std::string> parameter_names(const ModelParams &m) {
  std::vector<std::string> names;
  auto idx = [](Index i) { return std::to_string(i + 1); };
  std::visit(
      [&](const auto &v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, CovarianceParams>) {
          const Index p = v.p();
          for (Index i = 0; i < p; ++i) {
            names.push_back("sigma_" + idx(i));
          }
          for (Index i = 0; i < p; ++i) {
            for (Index j = i + 1; j < p; ++j) {
              names.push_back("delta_" + idx(i) + "_" + idx(j));
            }
          }
          names.insert(names.end(), {"alpha0", "alpha1", "alpha2"});
          if (v.common_range) {
            names.push_back("phi");
          } else {
            for (Index i = 0; i < p; ++i) {
              for (Index j = i; j < p; ++j) {
                names.push_back("b_" + idx(i) + "_" + idx(j));
              }
            }
          }
        } else if constexpr (std::is_same_v<T, SeparableModelParams>) {
          const Index p = v.cov.a.rows();
          for (Index i = 0; i < p; ++i) {
            for (Index j = i; j < p; ++j) {
              names.push_back("a_" + idx(i) + "_" + idx(j));
            }
          }
          names.push_back("phi");
        } else {
          for (Index i = 0; i < v.sigma2.size(); ++i) {
            names.push_back("sigma2_" + idx(i));
          }
          for (Index i = 0; i < v.phi.size(); ++i) {
            names.push_back("phi_" + idx(i));
          }
        }
        for (Index k = 0; k < v.beta.size(); ++k) {
          names.push_back("beta_" + idx(k));
        }
      },
      m);
  return names;
}

inline std::vector<double> flatten(const ModelParams &m) {
  std::vector<double> out;
  std::visit(
      [&](const auto &v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, CovarianceParams>) {
          const Index p = v.p();
          for (Index i = 0; i < p; ++i) {
            out.push_back(v.sigma(i));
          }
          for (Index i = 0; i < p; ++i) {
            for (Index j = i + 1; j < p; ++j) {
              out.push_back(v.delta(i, j));
            }
          }
          out.insert(out.end(), {v.alpha0, v.alpha1, v.alpha2});
          if (v.common_range) {
            out.push_back(v.phi());
          } else {
            for (Index i = 0; i < p; ++i) {
              for (Index j = i; j < p; ++j) {
                out.push_back(v.b(i, j));
              }
            }
          }
        } else if constexpr (std::is_same_v<T, SeparableModelParams>) {
          const Index p = v.cov.a.rows();
          for (Index i = 0; i < p; ++i) {
            for (Index j = i; j < p; ++j) {
              out.push_back(v.cov.a(i, j));
            }
          }
          out.push_back(v.cov.phi);
        } else {
          out.insert(out.end(), v.sigma2.data(), v.sigma2.data() + v.sigma2.size());
          out.insert(out.end(), v.phi.data(), v.phi.data() + v.phi.size());
        }
        out.insert(out.end(), v.beta.data(), v.beta.data() + v.beta.size());
      },
      m);
  return out;
}

/// Inverse of flatten for a known family, component count and beta length.
inline ModelParams unflatten(Family family, Index p, Index n_beta, bool common_range,
                             const std::vector<double> &values) {
  size_t pos = 0;
  auto next = [&]() {
    if (pos >= values.size()) {
      throw DataError("parameter row is too short");
    }
    return values[pos++];
  };
  auto read_beta = [&]() {
    VectorXd beta(n_beta);
    for (Index k = 0; k < n_beta; ++k) {
      beta(k) = next();
    }
    return beta;
  };
  ModelParams out;
  if (family == Family::nonseparable || family == Family::nonseparable_mixture) {
    CovarianceParams c = CovarianceParams::make(p, 1.0);
    c.common_range = common_range;
    for (Index i = 0; i < p; ++i) {
      c.sigma(i) = next();
    }
    for (Index i = 0; i < p; ++i) {
      for (Index j = i + 1; j < p; ++j) {
        c.delta.set(i, j, next());
      }
    }
    c.alpha0 = next();
    c.alpha1 = next();
    c.alpha2 = next();
    if (common_range) {
      c.set_phi(next());
    } else {
      for (Index i = 0; i < p; ++i) {
        for (Index j = i; j < p; ++j) {
          c.b.set(i, j, next());
        }
      }
    }
    c.beta = read_beta();
    out = std::move(c);
  } else if (family == Family::separable) {
    SeparableModelParams s;
    s.cov.a.resize(p, p);
    for (Index i = 0; i < p; ++i) {
      for (Index j = i; j < p; ++j) {
        s.cov.a(i, j) = s.cov.a(j, i) = next();
      }
    }
    s.cov.phi = next();
    s.beta = read_beta();
    out = std::move(s);
  } else {
    IndependentModelParams ind;
    ind.sigma2.resize(p);
    ind.phi.resize(p);
    for (Index i = 0; i < p; ++i) {
      ind.sigma2(i) = next();
    }
    for (Index i = 0; i < p; ++i) {
      ind.phi(i) = next();
    }
    ind.beta = read_beta();
    out = std::move(ind);
  }
  if (pos != values.size()) {
    throw DataError("parameter row has unexpected extra values");
  }
  return out;
}

} // namespace mvcov
