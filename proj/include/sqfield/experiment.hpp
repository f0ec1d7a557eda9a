#pragma once

#include <fftw3.h>

#include <algorithm>
#include <boost/version.hpp>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sqfield/dynamics.hpp"
#include "sqfield/errors.hpp"
#include "sqfield/gibbs.hpp"
#include "sqfield/green.hpp"
#include "sqfield/model.hpp"
#include "sqfield/wick.hpp"

namespace sqfield {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kEnvPrefix = "SQFIELD_";

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

/// Malformed configuration text or values; maps to exit code 2.
class ConfigError : public ParameterOutOfRange {
 public:
  using ParameterOutOfRange::ParameterOutOfRange;
};

namespace cfg {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const std::string t = trim(text);
  const char* end = t.data() + t.size();
  const auto r = std::from_chars(t.data(), end, v);
  if (t.empty() || r.ec != std::errc() || r.ptr != end)
    throw ConfigError("invalid value '" + text + "' for key '" + key + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  throw ConfigError("invalid boolean '" + text + "' for key '" + key + "'");
}

inline std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_number<T>(key, item));
  if (out.empty()) throw ConfigError("key '" + key + "' needs a non-empty comma-separated list");
  return out;
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_floating_point_v<T>)
      s += format_double(xs[i]);
    else
      s += std::to_string(xs[i]);
  }
  return s;
}

/// "k1:k2,k1:k2,..."
inline std::vector<WaveIndex> parse_modes(const std::string& key, const std::string& text) {
  std::vector<WaveIndex> out;
  for (const auto& item : split(text, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("mode '" + item + "' for key '" + key + "' is not k1:k2");
    out.push_back({parse_number<int>(key, item.substr(0, colon)), parse_number<int>(key, item.substr(colon + 1))});
  }
  if (out.empty()) throw ConfigError("key '" + key + "' needs at least one mode");
  return out;
}

inline std::string join_modes(const std::vector<WaveIndex>& ks) {
  std::string s;
  for (std::size_t i = 0; i < ks.size(); ++i)
    s += (i ? "," : "") + std::to_string(ks[i].k1) + ":" + std::to_string(ks[i].k2);
  return s;
}

}  // namespace cfg

enum class ProposalKind { FreeField, Adaptive };
enum class PanelKind { Default, AllModes };

struct ExperimentConfig {
  ModelKind model = ModelKind::Exp;
  double a = 1.0;
  double gamma = 1.0;
  double delta = 0.5;
  CutoffShape shape = CutoffShape::SquareQ;
  int N = 8;
  int n_g = 0;
  int oversample = kDefaultOversample;

  Integrator integrator = Integrator::OuExact;
  double h = 0.0;
  double T = 100.0;
  double burn_in = 10.0;
  int thin = 1;
  int n_replicas = 8;
  StartKind start = StartKind::FreeField;
  double blowup_bound = kDefaultBlowupBound;
  bool keep_series = true;
  PanelKind panel = PanelKind::Default;

  std::size_t n_samples = 10000;
  ProposalKind proposal = ProposalKind::Adaptive;
  std::optional<std::uint64_t> seed;
  int workers = default_workers();
  std::string out = "sqfield_out";
  double z = 4.0;

  int n_max = 4;
  int nodes = 5;
  double alpha = 0.9;
  std::vector<int> ladder{1, 2, 3, 4, 5};
  double taylor_a = 0.5;
  int taylor_N = 2;
  int taylor_order = 20;
  int taylor_fields = 100;

  std::vector<double> alpha_list{0.25, 0.5, 0.75};
  double route_alpha = 1.0;
  int route_points = 20;
  std::vector<int> green_ladder{8, 16, 32, 64};
  int radii = 50;

  std::vector<double> q_list{2.0, 4.0};
  std::vector<int> n_list{1, 2, 3};
  std::vector<int> hy_cutoffs{2, 4};

  std::vector<WaveIndex> ibp_modes{{0, 0}, {1, 0}, {0, -1}, {2, 1}, {-3, 2}};
  int n_observables = 10;
  int observable_modes = 2;
  std::vector<double> p_list{1.0, 2.0, 4.0, 8.0};
  int export_samples = 4;

  ModelSpec model_spec() const {
    ModelSpec m;
    m.kind = model;
    m.a = a;
    m.gamma = gamma;
    m.delta = delta;
    m.cutoff = CutoffSet::make(shape, N);
    m.n_g = n_g;
    m.oversample = oversample;
    return m;
  }

  std::uint64_t seed_value() const {
    if (!seed) throw ConfigError("seed is mandatory (set seed= in the config, SQFIELD_SEED or --seed)");
    return *seed;
  }

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  nlohmann::ordered_json to_json() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

namespace cfg {

template <class T>
ConfigKey number_key(std::string name, T ExperimentConfig::*field, std::string help) {
  const std::string n = name;
  return {std::move(name), std::move(help),
          [field, n](ExperimentConfig& c, const std::string& v) { c.*field = parse_number<T>(n, v); },
          [field](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>)
              return format_double(c.*field);
            else
              return std::to_string(c.*field);
          }};
}

template <class T>
ConfigKey list_key(std::string name, std::vector<T> ExperimentConfig::*field, std::string help) {
  const std::string n = name;
  return {std::move(name), std::move(help),
          [field, n](ExperimentConfig& c, const std::string& v) { c.*field = parse_list<T>(n, v); },
          [field](const ExperimentConfig& c) { return join(c.*field); }};
}

}  // namespace cfg

/// Every recognised key, in manifest order.
inline const std::vector<ConfigKey>& config_keys() {
  using C = ExperimentConfig;
  using namespace cfg;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back({"model", "exp or cos",
                 [](C& c, const std::string& v) {
                   try {
                     c.model = parse_model_kind(trim(v));
                   } catch (const ParameterOutOfRange& e) {
                     throw ConfigError(e.what());
                   }
                 },
                 [](const C& c) { return to_string(c.model); }});
    k.push_back(number_key("a", &C::a, "charge"));
    k.push_back(number_key("gamma", &C::gamma, "preconditioning exponent, (0, 1]"));
    k.push_back(number_key("delta", &C::delta, "state-space Sobolev index, delta + 2 gamma > 2"));
    k.push_back({"cutoff", "cutoff shape: Q (square) or D (disc)",
                 [](C& c, const std::string& v) {
                   const auto t = trim(v);
                   if (t == "Q") c.shape = CutoffShape::SquareQ;
                   else if (t == "D") c.shape = CutoffShape::DiscD;
                   else throw ConfigError("invalid cutoff shape '" + v + "' (expected Q or D)");
                 },
                 [](const C& c) { return to_string(c.shape); }});
    k.push_back(number_key("N", &C::N, "cutoff radius"));
    k.push_back(number_key("n_g", &C::n_g, "grid size, 0 for automatic"));
    k.push_back(number_key("oversample", &C::oversample, "grid oversampling factor"));
    k.push_back({"integrator", "euler or ou-exact",
                 [](C& c, const std::string& v) {
                   try {
                     c.integrator = parse_integrator(trim(v));
                   } catch (const ParameterOutOfRange& e) {
                     throw ConfigError(e.what());
                   }
                 },
                 [](const C& c) { return to_string(c.integrator); }});
    k.push_back(number_key("h", &C::h, "time step, 0 for 0.01/lambda_max^(1-gamma)"));
    k.push_back(number_key("T", &C::T, "simulated time per replica"));
    k.push_back(number_key("burn_in", &C::burn_in, "discarded initial time"));
    k.push_back(number_key("thin", &C::thin, "record every thin-th step"));
    k.push_back(number_key("n_replicas", &C::n_replicas, "independent trajectories"));
    k.push_back({"start", "zero or free (free-field draw)",
                 [](C& c, const std::string& v) {
                   const auto t = trim(v);
                   if (t == "zero") c.start = StartKind::Zero;
                   else if (t == "free") c.start = StartKind::FreeField;
                   else throw ConfigError("invalid start '" + v + "' (expected zero or free)");
                 },
                 [](const C& c) { return std::string(c.start == StartKind::Zero ? "zero" : "free"); }});
    k.push_back(number_key("blowup_bound", &C::blowup_bound, "largest admissible |z_k|"));
    k.push_back({"keep_series", "write the recorded time series",
                 [](C& c, const std::string& v) { c.keep_series = parse_bool("keep_series", v); },
                 [](const C& c) { return std::string(c.keep_series ? "true" : "false"); }});
    k.push_back({"panel", "default (3 modes, V, H^-delta norm) or all (every cutoff mode)",
                 [](C& c, const std::string& v) {
                   const auto t = trim(v);
                   if (t == "default") c.panel = PanelKind::Default;
                   else if (t == "all") c.panel = PanelKind::AllModes;
                   else throw ConfigError("invalid panel '" + v + "' (expected default or all)");
                 },
                 [](const C& c) { return std::string(c.panel == PanelKind::Default ? "default" : "all"); }});
    k.push_back(number_key("n_samples", &C::n_samples, "Monte Carlo / importance samples"));
    k.push_back({"proposal", "importance proposal: mu0 or adaptive",
                 [](C& c, const std::string& v) {
                   const auto t = trim(v);
                   if (t == "mu0") c.proposal = ProposalKind::FreeField;
                   else if (t == "adaptive") c.proposal = ProposalKind::Adaptive;
                   else throw ConfigError("invalid proposal '" + v + "' (expected mu0 or adaptive)");
                 },
                 [](const C& c) { return std::string(c.proposal == ProposalKind::FreeField ? "mu0" : "adaptive"); }});
    k.push_back({"seed", "master seed (mandatory)",
                 [](C& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
                 [](const C& c) { return c.seed ? std::to_string(*c.seed) : std::string(); }});
    k.push_back(number_key("workers", &C::workers, "worker threads"));
    k.push_back({"out", "output directory", [](C& c, const std::string& v) { c.out = trim(v); },
                 [](const C& c) { return c.out; }});
    k.push_back(number_key("z", &C::z, "tolerance in standard errors"));
    k.push_back(number_key("n_max", &C::n_max, "largest Wick order"));
    k.push_back(number_key("nodes", &C::nodes, "grid nodes probed by wick-norms"));
    k.push_back(number_key("alpha", &C::alpha, "Sobolev index of the cutoff ladder"));
    k.push_back(list_key("ladder", &C::ladder, "square cutoffs of the convergence ladder"));
    k.push_back(number_key("taylor_a", &C::taylor_a, "charge of the Taylor check"));
    k.push_back(number_key("taylor_N", &C::taylor_N, "cutoff of the Taylor check"));
    k.push_back(number_key("taylor_order", &C::taylor_order, "truncation order of the Taylor check"));
    k.push_back(number_key("taylor_fields", &C::taylor_fields, "sampled fields in the Taylor check"));
    k.push_back(list_key("alpha_list", &C::alpha_list, "orders of the integral bound check"));
    k.push_back(number_key("route_alpha", &C::route_alpha, "order of the Fourier/image comparison"));
    k.push_back(number_key("route_points", &C::route_points, "points of the Fourier/image comparison"));
    k.push_back(list_key("green_ladder", &C::green_ladder, "Fourier cutoffs for the kernel checks"));
    k.push_back(number_key("radii", &C::radii, "radii of the integral bound check"));
    k.push_back(list_key("q_list", &C::q_list, "Hausdorff-Young exponents q"));
    k.push_back(list_key("n_list", &C::n_list, "Hausdorff-Young orders n"));
    k.push_back(list_key("hy_cutoffs", &C::hy_cutoffs, "square cutoffs for Hausdorff-Young"));
    k.push_back({"ibp_modes", "directions e_k as k1:k2,...",
                 [](C& c, const std::string& v) { c.ibp_modes = parse_modes("ibp_modes", v); },
                 [](const C& c) { return join_modes(c.ibp_modes); }});
    k.push_back(number_key("n_observables", &C::n_observables, "random cylinder observables"));
    k.push_back(number_key("observable_modes", &C::observable_modes, "max-norm of modes in observables"));
    k.push_back(list_key("p_list", &C::p_list, "moment orders"));
    k.push_back(number_key("export_samples", &C::export_samples, "free-field samples written by sample-gff"));
    return k;
  }();
  return keys;
}

inline void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (const auto& k : config_keys())
    if (k.name == key) {
      k.set(*this, value);
      return;
    }
  throw ConfigError("unknown configuration key '" + key + "'");
}

inline std::string ExperimentConfig::get(const std::string& key) const {
  for (const auto& k : config_keys())
    if (k.name == key) return k.get(*this);
  throw ConfigError("unknown configuration key '" + key + "'");
}

inline nlohmann::ordered_json ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  for (const auto& k : config_keys()) j[k.name] = k.get(*this);
  return j;
}

/// Flat key = value lines; '#' starts a comment.
inline void apply_config_text(ExperimentConfig& c, const std::string& text, const std::string& origin = "config") {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = cfg::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = cfg::trim(std::string_view(t).substr(0, eq));
    try {
      c.set(key, cfg::trim(std::string_view(t).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline void apply_config_file(ExperimentConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(c, ss.str(), path);
}

inline std::string env_name(const std::string& key) {
  std::string s = kEnvPrefix;
  for (char ch : key) s += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return s;
}

/// SQFIELD_<KEY> for every key, e.g. SQFIELD_SEED, SQFIELD_BURN_IN.
inline void apply_environment(ExperimentConfig& c) {
  for (const auto& k : config_keys())
    if (const char* v = std::getenv(env_name(k.name).c_str())) {
      try {
        k.set(c, v);
      } catch (const ConfigError& e) {
        throw ConfigError(env_name(k.name) + ": " + e.what());
      }
    }
}

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s{"sample-gff", "wick-norms", "wick-converge", "green",
                                          "hy-check",   "simulate",   "invariance",    "ibp",
                                          "generator",  "zpartition", "drift-moments"};
  return s;
}

inline bool is_measure_subcommand(const std::string& sub) {
  return sub == "invariance" || sub == "ibp" || sub == "generator" || sub == "zpartition" ||
         sub == "drift-moments";
}

/// Defaults for a subcommand, before any file, environment or flag.
inline ExperimentConfig default_config(const std::string& sub) {
  ExperimentConfig c;
  if (sub == "sample-gff") {
    c.N = 4;
    c.n_samples = 20000;
  } else if (sub == "wick-norms") {
    c.N = 2;
    c.n_samples = 100000;
    c.n_max = 4;
  } else if (sub == "wick-converge") {
    c.n_samples = 6000;
    c.n_max = 3;
  } else if (sub == "simulate") {
    c.T = 20.0;
    c.burn_in = 2.0;
    c.n_replicas = 4;
  } else if (sub == "invariance") {
    c.T = 500.0;
    c.burn_in = 200.0;
    c.n_replicas = 16;
    c.h = 0.01;
    c.thin = 10;
    c.n_samples = 20000;
    c.keep_series = false;
  } else if (sub == "ibp" || sub == "generator" || sub == "zpartition" || sub == "drift-moments") {
    c.n_samples = 20000;
    if (sub == "drift-moments") c.p_list = {1.0, 2.0, 4.0};
  } else if (std::find(subcommands().begin(), subcommands().end(), sub) == subcommands().end()) {
    throw ConfigError("unknown subcommand '" + sub + "'");
  }
  return c;
}

/// Checks that do not need any computation; messages name the violated condition.
inline void validate_config(const ExperimentConfig& c, const std::string& sub) {
  c.seed_value();
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  if (!(c.z > 0.0)) throw ConfigError("tolerance z must be positive");
  const ModelSpec m = c.model_spec();
  m.validate();
  if (is_measure_subcommand(sub)) {
    m.validate_measure();
    if (c.n_samples < 100) throw ConfigError("n_samples must be >= 100 for importance sampling");
  } else if (c.n_samples < 2) {
    throw ConfigError("n_samples must be >= 2");
  }
  if (sub == "simulate" || sub == "invariance") {
    if (!(c.T > 0.0)) throw ConfigError("simulation time T must be positive");
    if (!(c.h >= 0.0)) throw ConfigError("time step h must be >= 0");
    if (c.burn_in < 0.0 || c.burn_in >= c.T) throw ConfigError("burn_in must lie in [0, T)");
    if (c.thin < 1) throw ConfigError("thin must be >= 1");
    if (c.n_replicas < 1) throw ConfigError("n_replicas must be >= 1");
    if (sub == "invariance" && c.n_replicas < 2)
      throw ConfigError("invariance needs n_replicas >= 2 for a standard error");
  }
  if (sub == "wick-norms" && (c.nodes < 1 || c.n_max < 1)) throw ConfigError("wick-norms needs nodes >= 1 and n_max >= 1");
  if ((sub == "ibp" || sub == "generator") && c.n_observables < 1) throw ConfigError("n_observables must be >= 1");
  if (sub == "drift-moments")
    for (double p : c.p_list)
      if (!(p >= 1.0)) throw ConfigError("drift-moments needs every p >= 1");
  if (sub == "zpartition")
    for (double p : c.p_list)
      if (!(p > 0.0)) throw ConfigError("zpartition needs every p > 0");
}

/// CSV table; cells are formatted once, doubles in shortest round-trip form.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  static std::string cell(double x) { return cfg::format_double(x); }
  static std::string cell(bool b) { return b ? "true" : "false"; }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  template <class I>
    requires std::is_integral_v<I>
  static std::string cell(I i) {
    return std::to_string(i);
  }

  template <class... Args>
  void add(const Args&... args) {
    if (sizeof...(Args) != columns.size())
      throw std::logic_error("table " + name + ": row width differs from header");
    rows.push_back({cell(args)...});
  }

  std::string csv() const {
    auto quote = [](const std::string& s) {
      if (s.find_first_of(",\"\n") == std::string::npos) return s;
      std::string q = "\"";
      for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      return q + "\"";
    };
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + quote(columns[i]);
    out += '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + quote(r[i]);
      out += '\n';
    }
    return out;
  }
};

struct ExperimentResult {
  std::string subcommand;
  std::vector<Table> tables;
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  std::vector<std::string> warnings;
  int checks = 0;
  int failed = 0;

  Table& table(std::string name, std::vector<std::string> columns) {
    tables.push_back({std::move(name), std::move(columns), {}});
    return tables.back();
  }
  bool check(bool ok) {
    ++checks;
    if (!ok) ++failed;
    return ok;
  }
  bool pass() const { return failed == 0; }
  const Table& find(const std::string& name) const {
    for (const auto& t : tables)
      if (t.name == name) return t;
    throw std::out_of_range("no table " + name);
  }
};

/// Reference-value identifiers written in the `reference` column.
namespace formula {
inline constexpr const char* kFreeVariance = "free-field-variance:1/lambda_k";
inline constexpr const char* kFreeMean = "free-field-mean:0";
inline constexpr const char* kWickNorm = "wick-second-moment:n!*rho^(2n)";
inline constexpr const char* kWickCov = "wick-covariance:n!*sum_k f_k g_k int K_N^n cos(k.u) du";
inline constexpr const char* kLadder = "ladder-distance:n!*sum_k lambda_k^-alpha int (K_M^n-K_N^n) cos(k.u) du";
inline constexpr const char* kLadderExp = "ladder-distance-exp:sum_k lambda_k^-alpha int (e^(a^2 K_M)-e^(a^2 K_N)) cos(k.u) du";
inline constexpr const char* kTaylor = "exp-taylor-tail:sum_{n>n_max} a^n rho^n |He_n|/n!";
inline constexpr const char* kImageSum = "green-image-sum:sum_m G(|x+2pi m|)";
inline constexpr const char* kGreenBound = "green-integral-bound:4^(1-alpha)*Gamma(1-alpha)";
inline constexpr const char* kLogSing = "log-singularity:K(x)+log|x|/(2pi) bounded";
inline constexpr const char* kHy = "hausdorff-young:(2pi)^(-2(r-1)/r)*(sum lambda^(-r/(r-1)))^((r-1)/r)";
inline constexpr const char* kHyDiff = "hausdorff-young-difference:same sum over Lambda'\\Lambda";
inline constexpr const char* kTimeAverage = "dynamics:replica time averages";
inline constexpr const char* kImportance = "importance-sampling:self-normalized exp(-V) d(mu0)";
inline constexpr const char* kFreeSecond = "free-field:E z_k^2=1/lambda_k; V=4pi^2; E|z|^2_{H^-delta}=sum lambda^(-1-delta)";
inline constexpr const char* kOuLaw = "ou-law:N(0,lambda^-1(1-e^(-lambda^(1-gamma) t)))";
inline constexpr const char* kIbp = "integration-by-parts:residual=0";
inline constexpr const char* kDirichlet = "dirichlet-form:(1/2)E[(A^gamma DF,DG)]=-E[LF G]";
inline constexpr const char* kPartition = "partition:E_mu0[exp(-pV)]; Jensen bound exp(-4pi^2 p)";
inline constexpr const char* kFroehlich = "froehlich-n1:4pi^2*int exp(a^2 K(u)) du";
inline constexpr const char* kOuDrift = "ou-drift-second-moment:sum lambda^-(delta+2gamma-1)";
inline constexpr const char* kDoubling = "self-consistency:n vs 2n samples";
}  // namespace formula

namespace detail {

/// Independent Philox key for a secondary purpose of the run.
inline std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t purpose) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ull * (purpose + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

enum Purpose : std::uint64_t { kImportanceSeed = 1, kObservableSeed = 2, kDoublingSeed = 3, kTaylorSeed = 4 };

inline GibbsOptions gibbs_options(const ExperimentConfig& c, bool adaptive) {
  GibbsOptions o;
  o.n_samples = c.n_samples;
  o.seed = derived_seed(c.seed_value(), kImportanceSeed);
  o.workers = c.workers;
  o.adaptive = adaptive;
  return o;
}

inline MonteCarloOptions mc_options(const ExperimentConfig& c) {
  MonteCarloOptions mc;
  mc.n_samples = c.n_samples;
  mc.seed = c.seed_value();
  mc.workers = c.workers;
  return mc;
}

inline std::string mode_name(WaveIndex k) { return std::to_string(k.k1) + ":" + std::to_string(k.k2); }

inline void run_sample_gff(const ExperimentConfig& c, ExperimentResult& r) {
  const ModelSpec m = c.model_spec();
  const auto& cut = m.cutoff;
  const std::uint64_t seed = c.seed_value();
  const GffSampler gff(cut, seed, 0);
  struct Acc {
    std::vector<MeanAccumulator> first, second;
  };
  const auto parts = map_chunks<Acc>(c.n_samples, 256, c.workers, [&](std::size_t b, std::size_t e, std::size_t) {
    Acc acc{std::vector<MeanAccumulator>(cut->size()), std::vector<MeanAccumulator>(cut->size())};
    FieldCoeffs z(cut);
    for (std::size_t s = b; s < e; ++s) {
      RandomStream rs(seed, s);
      gff.fill(z, rs);
      for (std::size_t i = 0; i < z.size(); ++i) {
        acc.first[i].add(z[i]);
        acc.second[i].add(z[i] * z[i]);
      }
    }
    return acc;
  });
  std::vector<MeanAccumulator> first(cut->size()), second(cut->size());
  for (const auto& p : parts)
    for (std::size_t i = 0; i < first.size(); ++i) {
      first[i].merge(p.first[i]);
      second[i].merge(p.second[i]);
    }
  auto& t = r.table("modes", {"k1", "k2", "lambda", "mean", "mean_se", "second_moment", "second_moment_se",
                              "exact_second_moment", "pass", "reference"});
  for (std::size_t i = 0; i < cut->size(); ++i) {
    const WaveIndex k = cut->member(i);
    const double lam = cut->lambda(i);
    const Estimate mu{first[i].mean, first[i].se()}, sq{second[i].mean, second[i].se()};
    const bool ok = r.check(agrees(mu, 0.0, c.z) && agrees(sq, 1.0 / lam, c.z));
    t.add(k.k1, k.k2, lam, mu.value, mu.se, sq.value, sq.se, 1.0 / lam, ok,
          std::string(formula::kFreeVariance) + ";" + formula::kFreeMean);
  }
  auto& ex = r.table("samples", {"sample", "k1", "k2", "coefficient"});
  FieldCoeffs z(cut);
  for (int s = 0; s < std::min<long long>(c.export_samples, static_cast<long long>(c.n_samples)); ++s) {
    RandomStream rs(seed, static_cast<std::uint64_t>(s));
    gff.fill(z, rs);
    for (std::size_t i = 0; i < z.size(); ++i) ex.add(s, cut->member(i).k1, cut->member(i).k2, z[i]);
  }
  r.summary["rho"] = rho(*cut);
  r.summary["modes"] = cut->size();
}

inline void run_wick_norms(const ExperimentConfig& c, ExperimentResult& r) {
  const ModelSpec m = c.model_spec();
  const int n_g = m.grid();
  std::vector<std::pair<int, int>> nodes;
  for (int p = 0; p < c.nodes; ++p) {
    // Spread along a lattice line with irrational-looking slope; node 0 is the origin.
    nodes.push_back({(p * 5 * n_g / (2 * c.nodes + 1)) % n_g, (p * 3 * n_g / (c.nodes + 2)) % n_g});
  }
  const auto mc = mc_options(c);
  const auto rows = wick_norm_check(c.n_max, m.cutoff, n_g, nodes, mc, c.z);
  auto& t = r.table("wick_norms", {"n", "i1", "i2", "x1", "x2", "measured", "nfact_rho_2n", "se", "pass", "reference"});
  const GridField probe(n_g);
  for (const auto& row : rows)
    t.add(row.n, row.i1, row.i2, probe.node(row.i1), probe.node(row.i2), row.measured.value, row.target,
          row.measured.se, r.check(row.pass), formula::kWickNorm);
  const auto inner_set = m.cutoff;
  const auto outer_set = CutoffSet::make(m.cutoff->shape(), m.cutoff->radius() + 1);
  const auto cov = wick_covariance_check(std::min(c.n_max, 3), inner_set, outer_set, mc, c.z);
  auto& tc = r.table("wick_covariance", {"n", "f", "g", "inner_N", "outer_N", "measured", "se", "exact", "pass", "reference"});
  for (const auto& row : cov)
    tc.add(row.n, row.f, row.g, inner_set->radius(), outer_set->radius(), row.measured.value, row.measured.se,
           row.exact, r.check(row.pass), formula::kWickCov);
  r.summary["rho"] = rho(*m.cutoff);
  r.summary["grid"] = n_g;
}

inline void run_wick_converge(const ExperimentConfig& c, ExperimentResult& r) {
  const auto mc = mc_options(c);
  std::vector<ConvergenceReport> reps;
  for (int n = 1; n <= c.n_max; ++n) reps.push_back(chaos_convergence_report(n, c.alpha, c.ladder, mc, c.z));
  reps.push_back(exp_convergence_report(c.a, c.alpha, c.ladder, mc, c.oversample, c.z));
  auto& t = r.table("ladder", {"kind", "lo", "hi", "exact", "estimate", "se", "pass", "reference"});
  auto& s = r.table("ladder_summary", {"kind", "exact_decreasing", "estimate_decreasing", "matches_exact", "pass"});
  for (const auto& rep : reps) {
    for (const auto& row : rep.rows)
      t.add(rep.kind, row.lo, row.hi, row.exact, row.estimate.value, row.estimate.se,
            agrees(row.estimate, row.exact, c.z), rep.kind == "exp" ? formula::kLadderExp : formula::kLadder);
    s.add(rep.kind, rep.exact_decreasing, rep.estimate_decreasing, rep.matches_exact, r.check(rep.pass()));
  }
  const auto q = CutoffSet::square(c.taylor_N);
  const int n_g = grid_above(c.oversample * c.taylor_N);
  GffSampler gff(q, derived_seed(c.seed_value(), kTaylorSeed), 0);
  auto& tt = r.table("taylor", {"field", "a", "n_max", "max_residual", "max_bound", "min_margin", "pass", "reference"});
  for (int f = 0; f < c.taylor_fields; ++f) {
    const auto chk = exp_taylor_check(gff.sample(), c.taylor_a, q, n_g, c.taylor_order);
    tt.add(f, c.taylor_a, c.taylor_order, chk.max_residual, chk.max_bound, chk.min_margin, r.check(chk.pass),
           formula::kTaylor);
  }
}

inline void run_green(const ExperimentConfig& c, ExperimentResult& r) {
  const auto routes = route_agreement(c.route_alpha, route_panel(c.route_points), c.green_ladder);
  auto& t = r.table("routes", {"alpha", "x1", "x2", "image", "fourier", "difference", "budget", "pass", "reference"});
  for (const auto& p : routes.points)
    t.add(c.route_alpha, p.x1, p.x2, p.image, p.fourier, std::abs(p.image - p.fourier), p.budget, r.check(p.pass),
          formula::kImageSum);
  auto& rms = r.table("route_rms", {"N", "rms"});
  for (std::size_t l = 0; l < routes.ladder.size(); ++l) rms.add(routes.ladder[l], routes.rms[l]);
  r.summary["route_rms_decreasing"] = routes.rms_decreasing;
  auto& b = r.table("integral_bound", {"alpha", "r", "I", "bound", "pass", "reference"});
  for (double alpha : c.alpha_list) {
    const double bound = green_integral_bound(alpha);
    for (int i = 0; i < c.radii; ++i) {
      const double rad = c.radii == 1 ? 1.0 : 1e-3 * std::pow(1e4, double(i) / (c.radii - 1));
      const double val = green_integral_I(alpha, rad);
      b.add(alpha, rad, val, bound, r.check(val <= bound), formula::kGreenBound);
    }
  }
  const auto ls = log_singularity_check(c.green_ladder);
  auto& l = r.table("log_singularity", {"r", "remainder", "reference"});
  for (std::size_t i = 0; i < ls.radii.size(); ++i) l.add(ls.radii[i], ls.remainder[i], formula::kLogSing);
  auto& ls_sum = r.table("log_singularity_summary",
                         {"sup_remainder", "settle", "half_order_product", "half_order_reference", "pass", "reference"});
  ls_sum.add(ls.sup_remainder, ls.settle, ls.half_order_product, ls.half_order_reference, r.check(ls.pass),
             formula::kLogSing);
}

inline void run_hy_check(const ExperimentConfig& c, ExperimentResult& r) {
  auto& t = r.table("hausdorff_young", {"kind", "inner_N", "outer_N", "q", "n", "lhs", "rhs", "pass", "reference"});
  std::vector<int> cuts = c.hy_cutoffs;
  std::sort(cuts.begin(), cuts.end());
  for (int cut : cuts)
    for (double q : c.q_list)
      for (int n : c.n_list) {
        const auto res = hausdorff_young_check(CutoffSet::square(cut), q, n);
        t.add("single", 0, cut, q, n, res.lhs, res.rhs, r.check(res.pass), formula::kHy);
      }
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    for (double q : c.q_list)
      for (int n : c.n_list) {
        const auto res =
            hausdorff_young_difference_check(CutoffSet::square(cuts[i]), CutoffSet::square(cuts[i + 1]), q, n);
        t.add("difference", cuts[i], cuts[i + 1], q, n, res.lhs, res.rhs, r.check(res.pass), formula::kHyDiff);
      }
}

inline SimulationOptions simulation_options(const ExperimentConfig& c) {
  SimulationOptions o;
  o.T = c.T;
  o.h = c.h;
  o.thin = c.thin;
  o.n_replicas = c.n_replicas;
  o.burn_in = c.burn_in;
  o.integrator = c.integrator;
  o.start = c.start;
  o.seed = c.seed_value();
  o.workers = c.workers;
  o.blowup_bound = c.blowup_bound;
  return o;
}

inline ObservablePanel make_panel(const ExperimentConfig& c, const ModelSpec& m) {
  ObservablePanel p;
  if (c.panel == PanelKind::AllModes) {
    const auto all = m.cutoff->members();
    p.modes.assign(all.begin(), all.end());
  }
  for (auto k : p.modes)
    if (!m.cutoff->contains(k)) throw ConfigError("panel mode " + mode_name(k) + " lies outside the cutoff");
  return p;
}

inline void replica_tables(const SimulationResult& sim, const ExperimentConfig& c, ExperimentResult& r) {
  std::vector<std::string> cols{"replica", "steps", "max_drift_norm", "max_field"};
  for (const auto& n : sim.names) cols.push_back("mean_" + n);
  auto& t = r.table("replicas", cols);
  for (std::size_t i = 0; i < sim.replicas.size(); ++i) {
    const auto& rep = sim.replicas[i];
    t.rows.push_back({Table::cell(i), Table::cell(rep.stats.steps), Table::cell(rep.stats.max_drift_norm),
                      Table::cell(rep.stats.max_field)});
    for (const auto& a : rep.averages) t.rows.back().push_back(Table::cell(a.mean));
  }
  if (c.keep_series) {
    std::vector<std::string> sc{"replica", "step", "t"};
    for (const auto& n : sim.names) sc.push_back(n);
    auto& s = r.table("series", sc);
    for (const auto& rep : sim.replicas)
      for (const auto& rec : rep.series) {
        s.rows.push_back({Table::cell(rec.replica), Table::cell(rec.step), Table::cell(rec.t)});
        for (double v : rec.values) s.rows.back().push_back(Table::cell(v));
      }
  }
  r.summary["h"] = sim.h;
}

inline void run_simulate(const ExperimentConfig& c, ExperimentResult& r) {
  const ModelSpec m = c.model_spec();
  auto opt = simulation_options(c);
  opt.keep_series = c.keep_series;
  opt.keep_final = true;
  const auto sim = simulate(m, opt, make_panel(c, m));
  auto& t = r.table("averages", {"observable", "estimate", "se", "reference"});
  for (std::size_t j = 0; j < sim.names.size(); ++j) {
    const auto e = sim.estimate(j);
    t.add(sim.names[j], e.value, e.se, formula::kTimeAverage);
  }
  replica_tables(sim, c, r);
  std::vector<FieldCoeffs> finals;
  for (const auto& rep : sim.replicas) finals.push_back(rep.final_state);
  const auto bias = grid_doubling_bias(m, finals);
  r.summary["grid"] = bias.n_g;
  r.summary["grid_doubling_rel_value"] = bias.max_rel_value;
  r.summary["grid_doubling_rel_grad"] = bias.max_rel_grad;
  if (bias.max_rel_value > 1e-3 || bias.max_rel_grad > 1e-3)
    r.warnings.push_back("grid doubling changes V or its gradient by more than 1e-3; increase n_g");
}

/// Exact free-field values of the panel at a = 0.
inline std::vector<double> free_panel_values(const ObservablePanel& p, const ModelSpec& m) {
  std::vector<double> out;
  for (auto k : p.modes) out.push_back(1.0 / lambda_of(k));
  if (p.potential) out.push_back(kTorusArea);
  if (p.sobolev) {
    double s = 0.0;
    for (double l : m.cutoff->lambdas()) s += std::pow(l, -1.0 - m.delta);
    out.push_back(s);
  }
  return out;
}

inline void run_invariance(const ExperimentConfig& c, ExperimentResult& r) {
  const ModelSpec m = c.model_spec();
  const ObservablePanel panel = make_panel(c, m);
  auto opt = simulation_options(c);
  opt.keep_series = c.keep_series;
  const bool free = m.a == 0.0;
  opt.keep_final = free;
  const auto sim = simulate(m, opt, panel);

  std::vector<Estimate> ref(panel.size());
  if (free) {
    const auto exact = free_panel_values(panel, m);
    for (std::size_t j = 0; j < ref.size(); ++j) ref[j] = {exact[j], 0.0};
  } else {
    const WeightedEnsemble ens(m, gibbs_options(c, c.proposal == ProposalKind::Adaptive), false);
    std::vector<std::vector<double>> vals(panel.size(), std::vector<double>(ens.size()));
    std::vector<double> v(panel.size());
    for (std::size_t i = 0; i < ens.size(); ++i) {
      panel.evaluate(ens.samples().z[i], ens.samples().v[i], m.delta, v);
      for (std::size_t j = 0; j < v.size(); ++j) vals[j][i] = v[j];
    }
    for (std::size_t j = 0; j < ref.size(); ++j) ref[j] = ens.mean(vals[j]);
    r.summary["ess"] = ens.ess();
  }
  auto& t = r.table("invariance", {"observable", "dynamics", "dynamics_se", "reference_value", "reference_se",
                                   "z_score", "pass", "reference"});
  for (std::size_t j = 0; j < ref.size(); ++j) {
    const auto d = sim.estimate(j);
    const double se = std::hypot(d.se, ref[j].se);
    const double zs = se > 0.0 ? (d.value - ref[j].value) / se : (d.value == ref[j].value ? 0.0 : INFINITY);
    const bool ok = r.check(std::abs(d.value - ref[j].value) <= c.z * se);
    t.add(sim.names[j], d.value, d.se, ref[j].value, ref[j].se, zs, ok,
          free ? formula::kFreeSecond : formula::kImportance);
  }
  if (free) {
    // Kolmogorov-Smirnov per mode on the final states, Bonferroni over modes at level 1%.
    auto& ks = r.table("ks", {"k1", "k2", "replicas", "t", "variance", "statistic", "p_value", "threshold", "pass",
                              "reference"});
    const double level = 0.01 / static_cast<double>(m.cutoff->size());
    const double t_end = sim.replicas.front().stats.steps * sim.h;
    for (std::size_t i = 0; i < m.cutoff->size(); ++i) {
      const double lam = m.cutoff->lambda(i);
      double var = 1.0 / lam;
      if (c.start == StartKind::Zero) var *= -std::expm1(-std::pow(lam, 1.0 - m.gamma) * t_end);
      std::vector<double> xs;
      for (const auto& rep : sim.replicas) xs.push_back(rep.final_state[i]);
      const double sd = std::sqrt(var);
      const double d = ks_statistic(xs, [sd](double x) { return normal_cdf(x, sd); });
      const double pv = ks_pvalue(d, xs.size());
      ks.add(m.cutoff->member(i).k1, m.cutoff->member(i).k2, xs.size(), t_end, var, d, pv, level,
             r.check(pv >= level), formula::kOuLaw);
    }
  }
  replica_tables(sim, c, r);
}

inline std::vector<CylinderObservable> random_observables(const ExperimentConfig& c, const ModelSpec& m, int count) {
  RandomStream rs(derived_seed(c.seed_value(), kObservableSeed), 0);
  std::vector<CylinderObservable> out;
  for (int i = 0; i < count; ++i) out.push_back(CylinderObservable::random(m.cutoff, c.observable_modes, rs));
  return out;
}

inline void run_ibp(const ExperimentConfig& c, ExperimentResult& r) {
  const ModelSpec m = c.model_spec();
  for (auto k : c.ibp_modes)
    if (!m.cutoff->contains(k)) throw ConfigError("ibp mode " + mode_name(k) + " lies outside the cutoff");
  const WeightedEnsemble ens(m, gibbs_options(c, c.proposal == ProposalKind::Adaptive), true);
  const auto obs = random_observables(c, m, c.n_observables);
  auto& t = r.table("ibp", {"model", "observable", "arity", "k1", "k2", "residual", "se", "lhs", "lhs_se", "ess",
                            "pass", "reference"});
  for (std::size_t o = 0; o < obs.size(); ++o)
    for (auto k : c.ibp_modes) {
      const auto res = ibp_residual(obs[o], FieldCoeffs::basis(m.cutoff, k), ens, c.z);
      t.add(to_string(m.kind), o, obs[o].arity(), k.k1, k.k2, res.residual.value, res.residual.se, res.lhs.value,
            res.lhs.se, res.ess, r.check(res.pass), formula::kIbp);
    }
  r.summary["ess"] = ens.ess();
}

inline void run_generator(const ExperimentConfig& c, ExperimentResult& r) {
  const ModelSpec m = c.model_spec();
  const WeightedEnsemble ens(m, gibbs_options(c, c.proposal == ProposalKind::Adaptive), true);
  const auto obs = random_observables(c, m, 2 * c.n_observables);
  auto& t = r.table("generator", {"model", "pair", "energy", "energy_se", "minus_lf_g", "minus_lf_g_se", "minus_lg_f",
                                  "minus_lg_f_se", "diff_fg", "diff_fg_se", "diff_gf", "diff_gf_se", "pass",
                                  "reference"});
  for (int p = 0; p < c.n_observables; ++p) {
    const auto g = generator_symmetry(obs[2 * p], obs[2 * p + 1], ens, c.z);
    t.add(to_string(m.kind), p, g.energy.value, g.energy.se, g.minus_lf_g.value, g.minus_lf_g.se, g.minus_lg_f.value,
          g.minus_lg_f.se, g.diff_fg.value, g.diff_fg.se, g.diff_gf.value, g.diff_gf.se, r.check(g.pass),
          formula::kDirichlet);
  }
  r.summary["ess"] = ens.ess();
}

inline constexpr double kMinPartitionEss = 100.0;

inline void run_zpartition(const ExperimentConfig& c, ExperimentResult& r) {
  const ModelSpec m = c.model_spec();
  // Exp weights exp(-pV) from mu_0 draws are checked against (0, 1]; that needs the mu_0 proposal.
  const bool adaptive = m.kind == ModelKind::Cos && c.proposal == ProposalKind::Adaptive;
  auto& t = r.table("partition", {"model", "p", "log_z", "z", "rel_se", "ess", "min_weight", "max_weight", "proposal",
                                  "weights_in_unit_interval", "jensen_log_bound", "pass", "reference"});
  // The moment sweep is a cos-model statement; the exp model reports Z itself.
  const std::vector<double> ps = m.kind == ModelKind::Cos ? c.p_list : std::vector<double>{1.0};
  for (double p : ps) {
    auto o = gibbs_options(c, adaptive);
    o.beta = p;
    const auto z = partition_function(m, o);
    const bool unit = !z.free_field_proposal || (z.min_weight > 0.0 && z.max_weight <= 1.0);
    const double jensen = -p * kTorusArea;
    bool ok = std::isfinite(z.log_z) && z.z() > 0.0 && std::isfinite(z.rel_se) && z.log_z >= jensen;
    if (m.kind == ModelKind::Exp) ok = ok && unit;
    else ok = ok && z.ess > kMinPartitionEss;
    t.add(to_string(m.kind), p, z.log_z, z.z(), z.rel_se, z.ess, z.min_weight, z.max_weight,
          z.free_field_proposal ? "mu0" : "adaptive", unit, jensen, r.check(ok), formula::kPartition);
  }
  const auto f = froehlich_check(m, c.n_samples, derived_seed(c.seed_value(), kDoublingSeed), c.workers, c.z);
  auto& ft = r.table("froehlich", {"a", "measured", "se", "exact", "pass", "reference"});
  ft.add(m.a, f.measured.value, f.measured.se, f.exact, r.check(f.pass), formula::kFroehlich);
}

inline void run_drift_moments(const ExperimentConfig& c, ExperimentResult& r) {
  const ModelSpec m = c.model_spec();
  const bool adaptive = c.proposal == ProposalKind::Adaptive;
  const WeightedEnsemble ens(m, gibbs_options(c, adaptive), true);
  auto o2 = gibbs_options(c, adaptive);
  o2.seed = derived_seed(c.seed_value(), kDoublingSeed);
  o2.n_samples = 2 * c.n_samples;
  const WeightedEnsemble ens2(m, o2, true);
  const auto rows = drift_moment_estimate(ens, c.p_list);
  const auto rows2 = drift_moment_estimate(ens2, c.p_list);
  const double bound = admissible_p_bound(m.a, m.gamma);
  auto& t = r.table("drift_moments", {"p", "admissible", "p_bound", "ou", "ou_se", "interaction", "interaction_se",
                                      "ou_2n", "ou_2n_se", "interaction_2n", "interaction_2n_se", "stable", "exact_ou",
                                      "pass", "reference"});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& a = rows[i];
    const auto& b = rows2[i];
    const bool finite = std::isfinite(a.ou.value) && std::isfinite(a.interaction.value);
    const bool stable = agrees(a.ou, b.ou, c.z) && agrees(a.interaction, b.interaction, c.z);
    double exact = NAN;
    bool ok = finite && stable;
    std::string ref = formula::kDoubling;
    if (m.a == 0.0 && a.p == 1.0) {
      exact = ou_drift_second_moment_exact(m);
      ok = ok && agrees(a.ou, exact, c.z) && a.interaction.value == 0.0;
      ref = formula::kOuDrift;
    }
    // Moment growth near the admissible boundary is reported, not judged.
    t.add(a.p, a.admissible, bound, a.ou.value, a.ou.se, a.interaction.value, a.interaction.se, b.ou.value, b.ou.se,
          b.interaction.value, b.interaction.se, stable, exact, r.check(ok), ref);
  }
  r.summary["ess"] = ens.ess();
  r.summary["ess_2n"] = ens2.ess();
}

}  // namespace detail

/// Runs one subcommand; throws on validation or runtime failure.
inline ExperimentResult run_experiment(const std::string& sub, const ExperimentConfig& c) {
  validate_config(c, sub);
  ExperimentResult r;
  r.subcommand = sub;
  for (const auto& w : c.model_spec().warnings()) r.warnings.push_back(w);
  if (sub == "sample-gff") detail::run_sample_gff(c, r);
  else if (sub == "wick-norms") detail::run_wick_norms(c, r);
  else if (sub == "wick-converge") detail::run_wick_converge(c, r);
  else if (sub == "green") detail::run_green(c, r);
  else if (sub == "hy-check") detail::run_hy_check(c, r);
  else if (sub == "simulate") detail::run_simulate(c, r);
  else if (sub == "invariance") detail::run_invariance(c, r);
  else if (sub == "ibp") detail::run_ibp(c, r);
  else if (sub == "generator") detail::run_generator(c, r);
  else if (sub == "zpartition") detail::run_zpartition(c, r);
  else if (sub == "drift-moments") detail::run_drift_moments(c, r);
  else throw ConfigError("unknown subcommand '" + sub + "'");
  return r;
}

inline nlohmann::ordered_json version_info() {
  nlohmann::ordered_json v;
  v["sqfield"] = kVersion;
  v["fftw"] = std::string(fftw_version);
  v["boost"] = BOOST_LIB_VERSION;
#ifdef EIGEN_WORLD_VERSION
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
#endif
  v["json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
              std::to_string(NLOHMANN_JSON_VERSION_PATCH);
#ifdef __VERSION__
  v["compiler"] = __VERSION__;
#endif
  v["cxx_standard"] = static_cast<long>(__cplusplus);
  return v;
}

/// Writes <out>/<table>.csv for each table and <out>/manifest.json.
inline void write_outputs(const ExperimentResult& r, const ExperimentConfig& c, double wall_seconds) {
  namespace fs = std::filesystem;
  const fs::path dir(c.out);
  fs::create_directories(dir);
  nlohmann::ordered_json man;
  man["subcommand"] = r.subcommand;
  man["seed"] = c.seed_value();
  man["config"] = c.to_json();
  man["versions"] = version_info();
  man["wall_time_seconds"] = wall_seconds;
  man["checks"] = r.checks;
  man["failed_checks"] = r.failed;
  man["all_pass"] = r.pass();
  man["warnings"] = r.warnings;
  man["summary"] = r.summary;
  auto files = nlohmann::ordered_json::array();
  for (const auto& t : r.tables) {
    const auto name = t.name + ".csv";
    std::ofstream out(dir / name, std::ios::binary);
    out << t.csv();
    if (!out) throw Error("failed to write " + (dir / name).string());
    files.push_back({{"file", name}, {"rows", t.rows.size()}, {"columns", t.columns}});
  }
  man["files"] = files;
  std::ofstream mf(dir / "manifest.json", std::ios::binary);
  mf << man.dump(2) << '\n';
  if (!mf) throw Error("failed to write manifest");
}

/// Validation problems (bad config, standing assumption, charge bound, grid) give 2;
/// blowup, degenerate weights and other runtime failures give 3.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ParameterOutOfRange*>(&e) || dynamic_cast<const NyquistViolation*>(&e) ||
      dynamic_cast<const OrderOverflow*>(&e))
    return kExitValidation;
  return kExitRuntime;
}

/// Runs, writes outputs, reports to `log`; returns the process exit code.
inline int run_and_report(const std::string& sub, const ExperimentConfig& c, std::ostream& log) {
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run_experiment(sub, c);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_outputs(r, c, wall);
    for (const auto& w : r.warnings) log << "warning: " << w << '\n';
    log << sub << ": " << (r.checks - r.failed) << "/" << r.checks << " checks passed, outputs in " << c.out << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    log << (code == kExitValidation ? "validation failure: " : "runtime failure: ") << e.what() << '\n';
    return code;
  }
}

}  // namespace sqfield
