#pragma once

#include "mvcov/chain.hpp"
#include "mvcov/dataset.hpp"
#include "mvcov/error.hpp"
#include "mvcov/linalg.hpp"
#include "mvcov/prediction.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <tuple>
#include <limits>
#include <cstdio>
#include <vector>

namespace mvcov {

/// Shortest decimal text that parses back to the same double. NaN is "NA".
inline std::string format_double(double v) {
  if (std::isnan(v)) {
    return "NA";
  }
  if (std::isinf(v)) {
    return v > 0 ? "inf" : "-inf";
  }
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s == "NA" || s == "NaN" || s == "nan" || s.empty()) {
    return missing_value;
  }
  if (s == "inf") {
    return std::numeric_limits<double>::infinity();
  }
  if (s == "-inf") {
    return -std::numeric_limits<double>::infinity();
  }
  if (!s.empty() && s.front() == '+') {
    s.remove_prefix(1);
  }
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    return std::nullopt;
  }
  return v;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(const std::string &line) {
  std::vector<std::string> out;
  std::string_view rest(line);
  while (true) {
    const auto pos = rest.find(',');
    out.push_back(trim(rest.substr(0, pos)));
    if (pos == std::string_view::npos) {
      break;
    }
    rest.remove_prefix(pos + 1);
  }
  return out;
}

/// FNV-1a 64-bit, rendered as 16 hex digits.
inline std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::ofstream open_output(const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot open '" + path + "' for writing");
  }
  return out;
}

inline std::ifstream open_input(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open '" + path + "'");
  }
  return in;
}

// ---------------------------------------------------------------------------
// Dataset CSV, long format:
//   site_id,x,y,<covariates...>,replicate,component,value

struct IngestOptions {
  /// Training mode rejects NA values and absent cells.
  bool allow_missing = false;
  /// "planar": x, y used as given. "lonlat": x = longitude, y = latitude in
  /// degrees, projected to km by an equirectangular map about (lon0, lat0).
  std::string coordinates = "planar";
  std::optional<double> lon0;
  std::optional<double> lat0;
};

inline constexpr double earth_radius_km = 6371.0;

inline Site project_lonlat(double lon, double lat, double lon0, double lat0) {
  const double rad = std::numbers::pi / 180.0;
  return {earth_radius_km * (lon - lon0) * rad * std::cos(lat0 * rad),
          earth_radius_km * (lat - lat0) * rad};
}

inline SpatialDataset parse_dataset_csv(std::istream &in, const IngestOptions &opt = {},
                                        const std::string &source = "<input>") {
  if (opt.coordinates != "planar" && opt.coordinates != "lonlat") {
    throw ConfigError("coordinates must be 'planar' or 'lonlat'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError(source + ": empty file");
  }
  const auto header = split_csv_line(line);
  if (header.size() < 6 || header[0] != "site_id" || header[1] != "x" || header[2] != "y" ||
      header[header.size() - 3] != "replicate" || header[header.size() - 2] != "component" ||
      header.back() != "value") {
    throw DataError(source +
                    ": header must be site_id,x,y,<covariates...>,replicate,component,value");
  }
  const size_t q = header.size() - 6;

  struct RawSite {
    double x, y;
    std::vector<double> cov;
    long line;
  };
  std::vector<std::string> site_order;
  std::map<std::string, RawSite> sites;
  std::vector<std::string> comp_order;
  std::set<long> replicate_set;
  struct Cell {
    double value;
    long line;
  };
  std::map<std::tuple<std::string, long, std::string>, Cell> cells;

  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) {
      continue;
    }
    const auto f = split_csv_line(line);
    const std::string where = source + ":" + std::to_string(lineno);
    if (f.size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(f.size()));
    }
    auto number = [&](size_t col) {
      auto v = parse_double(f[col]);
      if (!v || std::isnan(*v)) {
        throw DataError(where + ": column '" + header[col] + "' is not a number");
      }
      return *v;
    };
    const std::string &id = f[0];
    if (id.empty()) {
      throw DataError(where + ": empty site_id");
    }
    RawSite rs{number(1), number(2), {}, lineno};
    for (size_t c = 0; c < q; ++c) {
      rs.cov.push_back(number(3 + c));
    }
    auto it = sites.find(id);
    if (it == sites.end()) {
      sites.emplace(id, rs);
      site_order.push_back(id);
    } else if (it->second.x != rs.x || it->second.y != rs.y || it->second.cov != rs.cov) {
      throw DataError(where + ": site '" + id + "' has coordinates or covariates that differ from line " +
                      std::to_string(it->second.line));
    }
    long rep = 0;
    {
      const std::string &r = f[header.size() - 3];
      const auto res = std::from_chars(r.data(), r.data() + r.size(), rep);
      if (res.ec != std::errc() || res.ptr != r.data() + r.size()) {
        throw DataError(where + ": replicate must be an integer");
      }
    }
    replicate_set.insert(rep);
    const std::string &comp = f[header.size() - 2];
    if (comp.empty()) {
      throw DataError(where + ": empty component");
    }
    if (std::find(comp_order.begin(), comp_order.end(), comp) == comp_order.end()) {
      comp_order.push_back(comp);
    }
    auto v = parse_double(f.back());
    if (!v) {
      throw DataError(where + ": value is not a number");
    }
    if (std::isnan(*v) && !opt.allow_missing) {
      throw DataError(where + ": missing value in training data");
    }
    auto key = std::make_tuple(id, rep, comp);
    auto [pos, inserted] = cells.emplace(key, Cell{*v, lineno});
    if (!inserted) {
      throw DataError(where + ": duplicate row for site '" + id + "', replicate " +
                      std::to_string(rep) + ", component '" + comp + "' (first seen on line " +
                      std::to_string(pos->second.line) + ")");
    }
  }
  if (sites.empty()) {
    throw DataError(source + ": no data rows");
  }

  SpatialDataset d;
  d.covariate_names.assign(header.begin() + 3, header.end() - 3);
  d.component_names = comp_order;
  d.replicate_ids.assign(replicate_set.begin(), replicate_set.end());
  const auto n = static_cast<Index>(site_order.size());
  const auto p = static_cast<Index>(comp_order.size());
  const auto T = static_cast<Index>(d.replicate_ids.size());

  // Every (site, component) must carry the same replicate count.
  std::map<std::pair<std::string, std::string>, long> counts;
  for (const auto &[key, cell] : cells) {
    ++counts[{std::get<0>(key), std::get<2>(key)}];
  }
  if (!opt.allow_missing) {
    for (const auto &id : site_order) {
      for (const auto &comp : comp_order) {
        const long c = counts[{id, comp}];
        if (c != static_cast<long>(T)) {
          throw DataError(source + ": site '" + id + "', component '" + comp + "' has " +
                          std::to_string(c) + " replicates, expected " + std::to_string(T));
        }
      }
    }
  }

  double lon0 = 0.0;
  double lat0 = 0.0;
  if (opt.coordinates == "lonlat") {
    for (const auto &id : site_order) {
      lon0 += sites[id].x;
      lat0 += sites[id].y;
    }
    lon0 = opt.lon0.value_or(lon0 / static_cast<double>(n));
    lat0 = opt.lat0.value_or(lat0 / static_cast<double>(n));
    d.projection = {"lonlat", lon0, lat0};
  }
  d.covariates.resize(n, static_cast<Index>(q));
  for (Index k = 0; k < n; ++k) {
    const auto &rs = sites[site_order[static_cast<size_t>(k)]];
    d.site_ids.push_back(site_order[static_cast<size_t>(k)]);
    d.sites.push_back(opt.coordinates == "lonlat" ? project_lonlat(rs.x, rs.y, lon0, lat0)
                                                  : Site{rs.x, rs.y});
    for (size_t c = 0; c < q; ++c) {
      d.covariates(k, static_cast<Index>(c)) = rs.cov[c];
    }
  }
  d.responses = MatrixXd::Constant(n * p, T, missing_value);
  for (const auto &[key, cell] : cells) {
    const auto k = static_cast<Index>(
        std::find(site_order.begin(), site_order.end(), std::get<0>(key)) - site_order.begin());
    const auto i = static_cast<Index>(
        std::find(comp_order.begin(), comp_order.end(), std::get<2>(key)) - comp_order.begin());
    const auto t = static_cast<Index>(
        std::find(d.replicate_ids.begin(), d.replicate_ids.end(), std::get<1>(key)) -
        d.replicate_ids.begin());
    d.responses(d.index(k, i), t) = cell.value;
  }
  d.transform = CovariateTransform::standardize(d.covariates);
  d.validate();
  return d;
}

inline SpatialDataset ingest_csv(const std::string &path, const IngestOptions &opt = {}) {
  auto in = open_input(path);
  return parse_dataset_csv(in, opt, path);
}

/// Rows ordered by replicate, then site, then component. Coordinates are
/// written as stored (projected when the input was lon/lat).
inline void write_dataset_csv(std::ostream &out, const SpatialDataset &d) {
  out << "site_id,x,y";
  for (const auto &c : d.covariate_names) {
    out << ',' << c;
  }
  out << ",replicate,component,value\n";
  for (Index t = 0; t < d.T(); ++t) {
    for (Index k = 0; k < d.n(); ++k) {
      for (Index i = 0; i < d.p(); ++i) {
        const auto &s = d.sites[static_cast<size_t>(k)];
        out << d.site_ids[static_cast<size_t>(k)] << ',' << format_double(s.x) << ','
            << format_double(s.y);
        for (Index c = 0; c < d.q(); ++c) {
          out << ',' << format_double(d.covariates(k, c));
        }
        out << ',' << d.replicate_ids[static_cast<size_t>(t)] << ','
            << d.component_names[static_cast<size_t>(i)] << ','
            << format_double(d.value(t, k, i)) << '\n';
      }
    }
  }
}

inline void write_dataset_csv(const std::string &path, const SpatialDataset &d) {
  auto out = open_output(path);
  write_dataset_csv(out, d);
}

// ---------------------------------------------------------------------------
// Posterior chains: CSV of draws plus a JSON metadata document.

struct ChainMeta {
  Family family = Family::nonseparable;
  Index p = 0;
  Index n_beta = 0;
  bool common_range = true;
  std::uint64_t seed = 0;
  std::string config_hash;
  double median_distance = 0.0;
  std::vector<std::string> design_columns;
};

inline void write_chain_csv(std::ostream &out, const PosteriorChain &chain) {
  if (chain.draws.empty()) {
    throw NumericError("cannot write an empty chain");
  }
  out << "iteration,sep_indicator";
  for (const auto &name : parameter_names(chain.draws.front().params)) {
    out << ',' << name;
  }
  out << ",log_post\n";
  for (const auto &d : chain.draws) {
    out << d.iteration << ',' << (d.sep_indicator ? 1 : 0);
    for (double v : flatten(d.params)) {
      out << ',' << format_double(v);
    }
    out << ',' << format_double(d.log_post) << '\n';
  }
}

inline nlohmann::ordered_json chain_meta_json(const PosteriorChain &chain, const ChainMeta &meta) {
  nlohmann::ordered_json j;
  j["family"] = to_string(chain.family);
  j["components"] = meta.p;
  j["beta_length"] = meta.n_beta;
  j["common_range"] = meta.common_range;
  j["seed"] = meta.seed;
  j["config_hash"] = meta.config_hash;
  j["median_distance"] = meta.median_distance;
  j["design_columns"] = meta.design_columns;
  j["iterations"] = chain.iterations;
  j["burn_in"] = chain.burn_in;
  j["thin"] = chain.thin;
  j["retained_draws"] = chain.draws.size();
  nlohmann::ordered_json acc = nlohmann::ordered_json::object();
  for (const auto &[block, a] : chain.acceptance) {
    acc[block] = {{"attempts", a.attempts}, {"accepted", a.accepted}, {"rate", a.rate()}};
  }
  j["acceptance"] = acc;
  return j;
}

inline ChainMeta parse_chain_meta(const nlohmann::json &j) {
  try {
    ChainMeta m;
    m.family = parse_family(j.at("family").get<std::string>());
    m.p = j.at("components").get<Index>();
    m.n_beta = j.at("beta_length").get<Index>();
    m.common_range = j.at("common_range").get<bool>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.median_distance = j.at("median_distance").get<double>();
    m.design_columns = j.at("design_columns").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("chain metadata: ") + e.what());
  }
}

inline PosteriorChain parse_chain_csv(std::istream &in, const ChainMeta &meta,
                                      const std::string &source = "<chain>") {
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError(source + ": empty chain file");
  }
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "iteration" || header[1] != "sep_indicator" ||
      header.back() != "log_post") {
    throw DataError(source + ": not a chain file");
  }
  PosteriorChain chain;
  chain.family = meta.family;
  chain.seed = meta.seed;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) {
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw DataError(source + ":" + std::to_string(lineno) + ": wrong field count");
    }
    std::vector<double> values;
    for (size_t c = 2; c + 1 < f.size(); ++c) {
      auto v = parse_double(f[c]);
      if (!v) {
        throw DataError(source + ":" + std::to_string(lineno) + ": bad number");
      }
      values.push_back(*v);
    }
    ChainState s{unflatten(meta.family, meta.p, meta.n_beta, meta.common_range, values),
                 f[1] == "1", parse_double(f.back()).value_or(missing_value),
                 std::stol(f[0])};
    chain.draws.push_back(std::move(s));
  }
  if (chain.draws.empty()) {
    throw DataError(source + ": chain has no draws");
  }
  if (parameter_names(chain.draws.front().params) !=
      std::vector<std::string>(header.begin() + 2, header.end() - 1)) {
    throw DataError(source + ": chain columns do not match its metadata");
  }
  return chain;
}

inline std::pair<PosteriorChain, ChainMeta> read_chain(const std::string &csv_path,
                                                       const std::string &meta_path) {
  auto mi = open_input(meta_path);
  nlohmann::json j;
  try {
    mi >> j;
  } catch (const nlohmann::json::exception &e) {
    throw DataError(meta_path + ": " + e.what());
  }
  ChainMeta meta = parse_chain_meta(j);
  auto ci = open_input(csv_path);
  return {parse_chain_csv(ci, meta, csv_path), meta};
}

// ---------------------------------------------------------------------------
// Predictions CSV.

inline void write_predictions_csv(std::ostream &out, const PredictiveSummary &s,
                                  const SpatialDataset &data) {
  out << "target_id,site_id,component,replicate,truth,mean,lower,upper\n";
  for (size_t a = 0; a < s.targets.size(); ++a) {
    for (size_t r = 0; r < s.replicates.size(); ++r) {
      const auto &e = s.targets[a];
      const auto &site = data.site_ids[static_cast<size_t>(e.site)];
      const auto &comp = data.component_names[static_cast<size_t>(e.component)];
      const long rep = data.replicate_ids[static_cast<size_t>(s.replicates[r])];
      const Index idx = s.scalar_index(static_cast<Index>(a), static_cast<Index>(r));
      out << site << ':' << comp << ':' << rep << ',' << site << ',' << comp << ',' << rep
          << ',' << format_double(s.truth(idx)) << ',' << format_double(s.mean(idx)) << ','
          << format_double(s.lower(idx)) << ',' << format_double(s.upper(idx)) << '\n';
    }
  }
}

} // namespace mvcov
