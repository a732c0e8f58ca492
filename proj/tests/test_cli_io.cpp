#include <gtest/gtest.h>

#include "mvcov/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mvcov;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
  const fs::path p = fs::temp_directory_path() / ("mvcov_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path &p, const std::string &text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

int run_cli(const std::string &args) {
  const std::string cmd = std::string(MVCOV_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char *small_config = R"({
  "seed": 3,
  "data": {"scenario": "sec5-rho010-desk", "n": 14, "T": 3, "holdout": 2},
  "model": {"family": "nonseparable-mixture"},
  "prior": {"alpha0_mixture": {"p0": 0.5}},
  "mcmc": {"iterations": 200, "burn_in": 100, "thin": 2},
  "prediction": {"draws_per_theta": 5}
})";

} // namespace

TEST(Text, FormatParseRoundTrip) {
  for (double v : {0.1, -1e-300, 1.0 / 3.0, 12345.678, 5e-324, 1.7976931348623157e308}) {
    EXPECT_EQ(*parse_double(format_double(v)), v);
  }
  EXPECT_EQ(format_double(missing_value), "NA");
  EXPECT_TRUE(std::isnan(*parse_double("NA")));
  EXPECT_FALSE(parse_double("1.2x").has_value());
  EXPECT_EQ(split_csv_line(" a, b ,c"), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
}

TEST(DatasetCsv, RoundTripIsExact) {
  const SimulatedData sim = simulate_dataset(find_scenario("sec6-dataset2-desk"));
  std::ostringstream first;
  write_dataset_csv(first, sim.data);
  std::istringstream in(first.str());
  const SpatialDataset back = parse_dataset_csv(in);
  EXPECT_EQ(back.responses, sim.data.responses);
  EXPECT_EQ(back.covariates, sim.data.covariates);
  EXPECT_EQ(back.site_ids, sim.data.site_ids);
  EXPECT_EQ(back.component_names, sim.data.component_names);
  std::ostringstream second;
  write_dataset_csv(second, back);
  EXPECT_EQ(first.str(), second.str());
}

TEST(DatasetCsv, DuplicateRowNamesBothLines) {
  std::istringstream in("site_id,x,y,replicate,component,value\n"
                        "a,0,0,1,y1,0.5\n"
                        "b,1,0,1,y1,0.7\n"
                        "a,0,0,1,y1,0.9\n");
  try {
    parse_dataset_csv(in);
    FAIL() << "duplicate accepted";
  } catch (const DataError &e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(":4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  }
}

TEST(DatasetCsv, MissingValuesAndCellsRejectedForTraining) {
  std::istringstream na("site_id,x,y,replicate,component,value\n"
                        "a,0,0,1,y1,NA\n");
  EXPECT_THROW(parse_dataset_csv(na), DataError);
  std::istringstream absent("site_id,x,y,replicate,component,value\n"
                            "a,0,0,1,y1,1\n"
                            "a,0,0,2,y1,1\n"
                            "b,1,0,1,y1,1\n");
  EXPECT_THROW(parse_dataset_csv(absent), DataError);
  std::istringstream absent2("site_id,x,y,replicate,component,value\n"
                             "a,0,0,1,y1,1\n"
                             "a,0,0,2,y1,1\n"
                             "b,1,0,1,y1,1\n");
  IngestOptions opt;
  opt.allow_missing = true;
  const SpatialDataset d = parse_dataset_csv(absent2, opt);
  EXPECT_TRUE(std::isnan(d.value(1, 1, 0)));
}

TEST(DatasetCsv, InconsistentSiteCovariatesRejected) {
  std::istringstream in("site_id,x,y,elev,replicate,component,value\n"
                        "a,0,0,5,1,y1,1\n"
                        "a,0,0,6,2,y1,1\n");
  EXPECT_THROW(parse_dataset_csv(in), DataError);
  std::istringstream header("site,x,y,replicate,component,value\n");
  EXPECT_THROW(parse_dataset_csv(header), DataError);
}

TEST(DatasetCsv, LonLatProjection) {
  std::istringstream in("site_id,x,y,replicate,component,value\n"
                        "a,10,45,1,y1,1\n"
                        "b,11,45,1,y1,2\n"
                        "c,10,46,1,y1,3\n");
  IngestOptions opt;
  opt.coordinates = "lonlat";
  opt.lon0 = 10.0;
  opt.lat0 = 45.0;
  const SpatialDataset d = parse_dataset_csv(in, opt);
  const double deg = earth_radius_km * M_PI / 180.0;
  EXPECT_NEAR(d.sites[0].x, 0.0, 1e-12);
  EXPECT_NEAR(d.sites[1].x, deg * std::cos(45.0 * M_PI / 180.0), 1e-9);
  EXPECT_NEAR(d.sites[2].y, deg, 1e-9);
  EXPECT_EQ(d.projection.mode, "lonlat");
}

TEST(ChainCsv, RoundTripPreservesDraws) {
  const SimulatedData sim = simulate_dataset(find_scenario("sec5-rho010-desk"));
  const SpatialDataset train = sim.training();
  FitSpec f;
  f.family = Family::nonseparable_mixture;
  const double med = median_pair_distance(train.sites);
  f.prior = PriorSpec::defaults(2, 8, med);
  f.prior.alpha0_mixture = PointMassMixture{};
  f.mcmc.iterations = 60;
  f.mcmc.burn_in = 20;
  f.mcmc.thin = 2;
  const PosteriorChain chain = run_chain(train, f, 4);
  std::ostringstream out;
  write_chain_csv(out, chain);
  ChainMeta meta;
  meta.family = chain.family;
  meta.p = 2;
  meta.n_beta = 8;
  std::istringstream in(out.str());
  const PosteriorChain back = parse_chain_csv(in, meta);
  ASSERT_EQ(back.draws.size(), chain.draws.size());
  for (size_t k = 0; k < chain.draws.size(); ++k) {
    EXPECT_EQ(flatten(back.draws[k].params), flatten(chain.draws[k].params));
    EXPECT_EQ(back.draws[k].sep_indicator, chain.draws[k].sep_indicator);
    EXPECT_EQ(back.draws[k].iteration, chain.draws[k].iteration);
  }
  ChainMeta wrong = meta;
  wrong.family = Family::separable;
  std::istringstream again(out.str());
  EXPECT_THROW(parse_chain_csv(again, wrong), DataError);
}

TEST(Config, SeedRequiredAndUnknownKeysRejected) {
  EXPECT_THROW(cli::parse_config(nlohmann::json::parse(R"({"data": {}})")), ConfigError);
  EXPECT_THROW(cli::parse_config(nlohmann::json::parse(R"({"seed": 1, "colour": 2})")),
               ConfigError);
  const auto cfg = cli::parse_config(nlohmann::json::parse(R"({"seed": 1, "output": "x"})"));
  EXPECT_EQ(cfg.out_dir, "x");
  // output location does not enter the hash
  const auto other = cli::parse_config(nlohmann::json::parse(R"({"seed": 1, "output": "y"})"));
  EXPECT_EQ(cfg.hash, other.hash);
}

TEST(Config, FitSpecNeedsPriorAndMcmcBlocks) {
  const auto cfg = cli::parse_config(nlohmann::json::parse(
      R"({"seed": 1, "data": {"scenario": "sec5-rho000-desk"}, "mcmc": {}})"));
  const auto data = cli::load_data(cfg, "fit");
  EXPECT_THROW(cli::build_fit_spec(cfg, Family::nonseparable, data.training(), "fit"),
               ConfigError);
  const auto bad = cli::parse_config(nlohmann::json::parse(
      R"({"seed": 1, "prior": {"alpha0_mixture": {"p0": 1.0}}, "mcmc": {}})"));
  EXPECT_THROW(cli::build_fit_spec(bad, Family::nonseparable_mixture, data.training(), "fit"),
               ConfigError);
}

TEST(Config, ScenarioOverridesApply) {
  const auto cfg = cli::parse_config(nlohmann::json::parse(
      R"({"seed": 9, "data": {"scenario": "sec5-rho000-desk", "n": 10, "T": 2, "holdout": 1}})"));
  const auto data = cli::load_data(cfg, "simulate");
  EXPECT_EQ(data.full.n(), 10);
  EXPECT_EQ(data.full.T(), 2);
  EXPECT_EQ(data.holdout.size(), 1u);
  EXPECT_EQ(data.training().n(), 9);
}

TEST(Cli, ExitCodesAndErrorDocument) {
  const fs::path dir = scratch("exit");
  write_text(dir / "no_prior.json",
             R"({"seed": 1, "data": {"scenario": "sec5-rho000-desk"}, "model": {"family": "nonseparable"}, "mcmc": {}})");
  EXPECT_EQ(run_cli("fit --config " + (dir / "no_prior.json").string() + " --out " +
                    (dir / "o1").string()),
            2);
  EXPECT_NE(slurp(dir / "o1" / "error.json").find("config_error"), std::string::npos);

  write_text(dir / "bad_csv.json",
             R"({"seed": 1, "data": {"csv": ")" + (dir / "missing.csv").string() +
                 R"("}, "model": {"family": "separable"}, "prior": {}, "mcmc": {}})");
  EXPECT_EQ(run_cli("fit --config " + (dir / "bad_csv.json").string() + " --out " +
                    (dir / "o2").string()),
            4);
  EXPECT_EQ(run_cli("fit"), 2);
  EXPECT_EQ(run_cli("fit --config " + (dir / "no_prior.json").string() + " --threads 0"), 2);
}

TEST(Cli, SimulateFitPredictProduceArtifacts) {
  const fs::path dir = scratch("pipeline");
  write_text(dir / "cfg.json", small_config);
  const std::string base = "--config " + (dir / "cfg.json").string() + " --out ";
  ASSERT_EQ(run_cli("simulate " + base + (dir / "sim").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "sim" / "data.csv"));
  EXPECT_NE(slurp(dir / "sim" / "truth.json").find("rho_tilde"), std::string::npos);

  ASSERT_EQ(run_cli("fit " + base + (dir / "fit").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "fit" / "chain.csv"));
  EXPECT_TRUE(fs::exists(dir / "fit" / "chain.meta.json"));

  // predict from the saved chain
  auto cfg = nlohmann::json::parse(small_config);
  cfg["chain"] = {{"csv", (dir / "fit" / "chain.csv").string()},
                  {"meta", (dir / "fit" / "chain.meta.json").string()}};
  write_text(dir / "pred.json", cfg.dump());
  ASSERT_EQ(run_cli("predict --config " + (dir / "pred.json").string() + " --out " +
                    (dir / "pred").string()),
            0);
  const std::string csv = slurp(dir / "pred" / "predictions.csv");
  EXPECT_EQ(csv.rfind("target_id,site_id,component,replicate,truth,mean,lower,upper\n", 0), 0u);
  // 2 held-out sites x 2 components x 3 replicates
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 12);

  ASSERT_EQ(run_cli("test-separability " + base + (dir / "sep").string()), 0);
  const auto sep = nlohmann::json::parse(slurp(dir / "sep" / "separability.json"));
  const double pt = sep["result"]["p_tilde"].get<double>();
  EXPECT_GE(pt, 0.0);
  EXPECT_LE(pt, 1.0);
}

TEST(Cli, SameSeedGivesIdenticalBytes) {
  const fs::path dir = scratch("repro");
  write_text(dir / "cfg.json", small_config);
  const std::string base = "--config " + (dir / "cfg.json").string() + " --out ";
  ASSERT_EQ(run_cli("predict " + base + (dir / "a").string()), 0);
  ASSERT_EQ(run_cli("predict " + base + (dir / "b").string()), 0);
  EXPECT_EQ(slurp(dir / "a" / "predictions.csv"), slurp(dir / "b" / "predictions.csv"));
  ASSERT_EQ(run_cli("predict " + base + (dir / "c").string() + " --seed 4"), 0);
  EXPECT_NE(slurp(dir / "a" / "predictions.csv"), slurp(dir / "c" / "predictions.csv"));
}

TEST(Cli, ProfileWritesFiniteGrid) {
  const fs::path dir = scratch("profile");
  write_text(dir / "cfg.json",
             R"({"seed": 2, "data": {"scenario": "sec5-rho020", "holdout": 0},
                 "profile": {"from": 0, "to": 2, "steps": 21}})");
  ASSERT_EQ(run_cli("profile --config " + (dir / "cfg.json").string() + " --out " +
                    dir.string()),
            0);
  std::istringstream in(slurp(dir / "profile.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "alpha0,rho_tilde,log_likelihood");
  int rows = 0;
  while (std::getline(in, line)) {
    const auto f = split_csv_line(line);
    ASSERT_EQ(f.size(), 3u);
    EXPECT_TRUE(std::isfinite(*parse_double(f[2])));
    ++rows;
  }
  EXPECT_EQ(rows, 21);
}
