#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sqfield/experiment.hpp"

using namespace sqfield;

namespace {

ExperimentConfig small(const std::string& sub) {
  ExperimentConfig c = default_config(sub);
  c.seed = 5;
  c.workers = 1;
  return c;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const Table& only(const ExperimentResult& r, const std::string& name) { return r.find(name); }

std::size_t column(const Table& t, const std::string& name) {
  for (std::size_t i = 0; i < t.columns.size(); ++i)
    if (t.columns[i] == name) return i;
  throw std::out_of_range(name);
}

}  // namespace

TEST(Config, ParsesKeyValueTextWithComments) {
  ExperimentConfig c;
  apply_config_text(c, "# header\n model = cos  # trailing\n\na=0.5\nladder = 1, 2 ,4\nibp_modes=0:0,-1:2\nseed=42\n");
  EXPECT_EQ(c.model, ModelKind::Cos);
  EXPECT_EQ(c.a, 0.5);
  EXPECT_EQ(c.ladder, (std::vector<int>{1, 2, 4}));
  ASSERT_EQ(c.ibp_modes.size(), 2u);
  EXPECT_EQ(c.ibp_modes[1].k1, -1);
  EXPECT_EQ(c.seed_value(), 42u);
  EXPECT_EQ(c.get("ibp_modes"), "0:0,-1:2");
}

TEST(Config, RejectsMalformedInput) {
  ExperimentConfig c;
  EXPECT_THROW(apply_config_text(c, "bogus = 1\n"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "a 1\n"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "a = 1x\n"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "N = \n"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "model = phi4\n"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "ibp_modes = 1-2\n"), ConfigError);
  try {
    apply_config_text(c, "seed = 1\nthin = two\n", "x.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("x.cfg:2"), std::string::npos);
  }
}

TEST(Config, ValueRoundTripThroughEcho) {
  ExperimentConfig c;
  c.a = 0.1 + 0.2;
  c.p_list = {1.5, 1e-300};
  ExperimentConfig d;
  const auto echo = c.to_json();
  for (const auto& [k, v] : echo.items())
    if (!v.get<std::string>().empty()) d.set(k, v.get<std::string>());
  EXPECT_EQ(d.a, c.a);
  EXPECT_EQ(d.p_list, c.p_list);
  EXPECT_EQ(d.to_json().dump(), c.to_json().dump());
}

TEST(Config, EnvironmentOverridesFileAndFlagsOverrideEnvironment) {
  ExperimentConfig c = default_config("simulate");
  apply_config_text(c, "T = 3\nthin = 2\n");
  ::setenv("SQFIELD_THIN", "5", 1);
  ::setenv("SQFIELD_BURN_IN", "0.5", 1);
  apply_environment(c);
  ::unsetenv("SQFIELD_THIN");
  ::unsetenv("SQFIELD_BURN_IN");
  EXPECT_EQ(c.T, 3.0);
  EXPECT_EQ(c.thin, 5);
  EXPECT_EQ(c.burn_in, 0.5);
  c.set("thin", "7");
  EXPECT_EQ(c.thin, 7);
  EXPECT_EQ(env_name("burn_in"), "SQFIELD_BURN_IN");
  ::setenv("SQFIELD_A", "nope", 1);
  EXPECT_THROW(apply_environment(c), ConfigError);
  ::unsetenv("SQFIELD_A");
}

TEST(Config, SubcommandDefaults) {
  EXPECT_EQ(default_config("wick-norms").N, 2);
  EXPECT_EQ(default_config("wick-norms").n_samples, 100000u);
  EXPECT_EQ(default_config("invariance").n_replicas, 16);
  EXPECT_THROW(default_config("nonsense"), ConfigError);
  EXPECT_EQ(subcommands().size(), 11u);
}

TEST(Validation, SeedIsMandatory) {
  ExperimentConfig c = default_config("green");
  try {
    validate_config(c, "green");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("seed is mandatory"), std::string::npos);
  }
}

TEST(Validation, StandingAssumptionGivesExitTwo) {
  auto c = small("wick-norms");
  c.delta = 0.2;
  c.gamma = 0.9;
  std::ostringstream log;
  EXPECT_EQ(run_and_report("wick-norms", c, log), kExitValidation);
  EXPECT_NE(log.str().find("standing assumption delta + 2*gamma > 2 violated"), std::string::npos);
}

TEST(Validation, ChargeBoundOnlyForMeasureSubcommands) {
  auto c = small("simulate");
  c.a = 4.0;
  EXPECT_NO_THROW(validate_config(c, "simulate"));
  for (const char* sub : {"invariance", "ibp", "generator", "zpartition", "drift-moments"}) {
    auto d = small(sub);
    d.a = 4.0;
    try {
      validate_config(d, sub);
      FAIL() << sub;
    } catch (const ParameterOutOfRange& e) {
      EXPECT_NE(std::string(e.what()).find("charge bound"), std::string::npos);
    }
  }
}

TEST(Validation, ExitCodes) {
  EXPECT_EQ(exit_code_for(BlowupDetected("x")), kExitRuntime);
  EXPECT_EQ(exit_code_for(DegenerateWeights("x")), kExitRuntime);
  EXPECT_EQ(exit_code_for(Overflow("x")), kExitRuntime);
  EXPECT_EQ(exit_code_for(NyquistViolation("x")), kExitValidation);
  EXPECT_EQ(exit_code_for(ConfigError("x")), kExitValidation);
  auto c = small("simulate");
  c.T = 1.0;
  c.burn_in = 0.0;
  c.blowup_bound = 0.5;
  c.out = (std::filesystem::temp_directory_path() / "sqfield_test_blowup").string();
  std::ostringstream log;
  EXPECT_EQ(run_and_report("simulate", c, log), kExitRuntime);
  EXPECT_NE(log.str().find("replica"), std::string::npos);
  auto d = small("ibp");
  d.N = 16;
  d.a = 3.0;
  d.n_samples = 200;
  d.proposal = ProposalKind::FreeField;
  std::ostringstream log2;
  EXPECT_EQ(run_and_report("ibp", d, log2), kExitRuntime);
  EXPECT_NE(log2.str().find("effective sample size"), std::string::npos);
}

TEST(Table, CsvFormatting) {
  Table t{"t", {"name", "x", "n", "ok"}, {}};
  t.add("a,b", 0.1, 3, true);
  t.add(std::string("q\"r"), -2.5e-300, std::size_t{7}, false);
  EXPECT_EQ(t.csv(), "name,x,n,ok\n\"a,b\",0.1,3,true\n\"q\"\"r\",-2.5e-300,7,false\n");
  EXPECT_THROW(t.add(1.0), std::logic_error);
}

TEST(Outputs, ManifestAndCsvFiles) {
  auto c = small("hy-check");
  c.out = (std::filesystem::temp_directory_path() / "sqfield_test_outputs").string();
  std::filesystem::remove_all(c.out);
  std::ostringstream log;
  ASSERT_EQ(run_and_report("hy-check", c, log), kExitOk) << log.str();
  const auto man = nlohmann::json::parse(read_file(std::filesystem::path(c.out) / "manifest.json"));
  EXPECT_EQ(man["subcommand"], "hy-check");
  EXPECT_EQ(man["seed"], 5);
  EXPECT_EQ(man["config"]["N"], "8");
  EXPECT_TRUE(man["versions"].contains("fftw"));
  EXPECT_TRUE(man.contains("wall_time_seconds"));
  EXPECT_TRUE(man["all_pass"].get<bool>());
  const auto csv = read_file(std::filesystem::path(c.out) / "hausdorff_young.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "kind,inner_N,outer_N,q,n,lhs,rhs,pass,reference");
}

TEST(Determinism, IdenticalConfigGivesIdenticalCsv) {
  auto c = small("wick-norms");
  c.n_samples = 600;
  const auto a = run_experiment("wick-norms", c);
  c.workers = 3;
  const auto b = run_experiment("wick-norms", c);
  ASSERT_EQ(a.tables.size(), b.tables.size());
  for (std::size_t i = 0; i < a.tables.size(); ++i) EXPECT_EQ(a.tables[i].csv(), b.tables[i].csv());
  c.seed = 6;
  EXPECT_NE(run_experiment("wick-norms", c).tables[0].csv(), a.tables[0].csv());
}

TEST(Subcommands, EveryRowCarriesReference) {
  auto c = small("sample-gff");
  c.N = 2;
  c.n_samples = 2000;
  const auto r = run_experiment("sample-gff", c);
  EXPECT_TRUE(r.pass());
  const auto& t = only(r, "modes");
  EXPECT_EQ(t.rows.size(), 25u);
  for (const auto& row : t.rows) EXPECT_EQ(row[column(t, "reference")].rfind("free-field-variance", 0), 0u);
  EXPECT_EQ(only(r, "samples").rows.size(), 4u * 25u);
}

TEST(Subcommands, WickNormColumns) {
  auto c = small("wick-norms");
  c.n_samples = 4000;
  const auto r = run_experiment("wick-norms", c);
  const auto& t = only(r, "wick_norms");
  EXPECT_EQ(t.rows.size(), 20u);
  EXPECT_EQ(t.columns[0], "n");
  const std::size_t target = column(t, "nfact_rho_2n");
  const double rho2 = std::pow(rho(*CutoffSet::square(2)), 2);
  EXPECT_DOUBLE_EQ(std::stod(t.rows.back()[target]), 24.0 * rho2 * rho2 * rho2 * rho2);
  EXPECT_TRUE(r.pass());
}

TEST(Subcommands, ZeroChargeInvarianceMatchesFreeField) {
  auto c = small("invariance");
  c.a = 0.0;
  c.N = 2;
  c.panel = PanelKind::AllModes;
  c.T = 10.0;
  c.burn_in = 0.0;
  c.h = 0.05;
  c.thin = 1;
  c.n_replicas = 200;
  const auto r = run_experiment("invariance", c);
  EXPECT_TRUE(r.pass()) << r.failed;
  EXPECT_EQ(only(r, "invariance").rows.size(), 25u + 2u);
  EXPECT_EQ(only(r, "ks").rows.size(), 25u);
}

TEST(Subcommands, GreenAndHausdorffYoungPass) {
  auto c = small("green");
  c.radii = 10;
  EXPECT_TRUE(run_experiment("green", c).pass());
  EXPECT_TRUE(run_experiment("hy-check", small("hy-check")).pass());
}

TEST(Subcommands, MeasureSubcommandsRunAtSmallCutoff) {
  for (const char* sub : {"ibp", "generator", "zpartition", "drift-moments"}) {
    auto c = small(sub);
    c.N = 2;
    c.n_samples = 4000;
    c.n_observables = 2;
    c.ibp_modes = {{0, 0}, {1, -1}};
    const auto r = run_experiment(sub, c);
    EXPECT_GT(r.checks, 0) << sub;
    EXPECT_TRUE(r.pass()) << sub << " " << r.failed;
  }
}
