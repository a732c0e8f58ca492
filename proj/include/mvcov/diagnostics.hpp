#pragma once

#include "mvcov/chain.hpp"
#include "mvcov/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace mvcov {

/*
 * Effective sample size from Geyer's initial monotone sequence of paired
 * autocorrelations. A constant series has ESS 1.
 */
inline double effective_sample_size(const std::vector<double> &x) {
  const size_t n = x.size();
  if (n < 2) {
    return static_cast<double>(n);
  }
  double mean = 0.0;
  for (double v : x) {
    mean += v;
  }
  mean /= static_cast<double>(n);
  double c0 = 0.0;
  for (double v : x) {
    c0 += (v - mean) * (v - mean);
  }
  c0 /= static_cast<double>(n);
  if (!(c0 > 0.0)) {
    return 1.0;
  }
  auto autocorr = [&](size_t lag) {
    double acc = 0.0;
    for (size_t t = 0; t + lag < n; ++t) {
      acc += (x[t] - mean) * (x[t + lag] - mean);
    }
    return acc / static_cast<double>(n) / c0;
  };
  double sum = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = autocorr(2 * k) + autocorr(2 * k + 1);
    if (pair <= 0.0) {
      break;
    }
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    sum += pair;
  }
  const double tau = std::max(2.0 * sum - 1.0, 1.0 / static_cast<double>(n));
  return std::min(static_cast<double>(n), static_cast<double>(n) / tau);
}

/// Geweke z comparing the first 10% with the last 50% of the series.
inline double geweke_z(const std::vector<double> &x, double first = 0.1, double last = 0.5) {
  const size_t n = x.size();
  const size_t na = static_cast<size_t>(std::floor(first * static_cast<double>(n)));
  const size_t nb = static_cast<size_t>(std::floor(last * static_cast<double>(n)));
  if (na < 2 || nb < 2) {
    throw NumericError("series too short for the Geweke diagnostic");
  }
  auto segment_stats = [](std::vector<double> seg) {
    double mean = 0.0;
    for (double v : seg) {
      mean += v;
    }
    mean /= static_cast<double>(seg.size());
    double var = 0.0;
    for (double v : seg) {
      var += (v - mean) * (v - mean);
    }
    var /= static_cast<double>(seg.size() - 1);
    return std::pair{mean, var / effective_sample_size(seg)};
  };
  const auto [ma, va] = segment_stats({x.begin(), x.begin() + static_cast<std::ptrdiff_t>(na)});
  const auto [mb, vb] = segment_stats({x.end() - static_cast<std::ptrdiff_t>(nb), x.end()});
  if (!(va + vb > 0.0)) {
    return 0.0;
  }
  return (ma - mb) / std::sqrt(va + vb);
}

inline double quantile(std::vector<double> v, double prob) {
  if (v.empty()) {
    throw NumericError("quantile of an empty sample");
  }
  std::sort(v.begin(), v.end());
  const double h = prob * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q500 = 0.0;
  double q975 = 0.0;
  double ess = 0.0;
  double geweke = 0.0;
};

struct DiagnosticsReport {
  std::vector<ParameterSummary> parameters;
  std::map<std::string, double> acceptance_rates;
  long draws = 0;
};

inline std::vector<double> trace(const PosteriorChain &chain, size_t column) {
  std::vector<double> out;
  out.reserve(chain.draws.size());
  for (const auto &d : chain.draws) {
    out.push_back(flatten(d.params)[column]);
  }
  return out;
}

inline DiagnosticsReport diagnostics(const PosteriorChain &chain) {
  if (chain.draws.size() < 100) {
    throw NumericError("diagnostics need at least 100 draws");
  }
  DiagnosticsReport report;
  report.draws = static_cast<long>(chain.draws.size());
  const auto names = parameter_names(chain.draws.front().params);
  std::vector<std::vector<double>> columns(names.size());
  for (const auto &d : chain.draws) {
    const auto row = flatten(d.params);
    for (size_t c = 0; c < names.size(); ++c) {
      columns[c].push_back(row[c]);
    }
  }
  std::vector<double> indicator;
  for (const auto &d : chain.draws) {
    indicator.push_back(d.sep_indicator ? 1.0 : 0.0);
  }
  auto summarize = [](const std::string &name, const std::vector<double> &x) {
    ParameterSummary s;
    s.name = name;
    double mean = 0.0;
    for (double v : x) {
      mean += v;
    }
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) {
      var += (v - mean) * (v - mean);
    }
    s.mean = mean;
    s.sd = std::sqrt(var / static_cast<double>(x.size() - 1));
    s.q025 = quantile(x, 0.025);
    s.q500 = quantile(x, 0.5);
    s.q975 = quantile(x, 0.975);
    s.ess = effective_sample_size(x);
    s.geweke = geweke_z(x);
    return s;
  };
  for (size_t c = 0; c < names.size(); ++c) {
    report.parameters.push_back(summarize(names[c], columns[c]));
  }
  report.parameters.push_back(summarize("sep_indicator", indicator));
  for (const auto &[block, acc] : chain.acceptance) {
    report.acceptance_rates[block] = acc.rate();
  }
  return report;
}

} // namespace mvcov
