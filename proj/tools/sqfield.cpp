// Command-line driver: sqfield <subcommand> [--config PATH] [--seed U64] [--workers N] [--out DIR] [--<key> VALUE ...]
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "sqfield/experiment.hpp"

namespace {

std::string flag_name(const std::string& key) {
  std::string s = key;
  for (char& ch : s)
    if (ch == '_') ch = '-';
  return "--" + s;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace sqfield;
  CLI::App app{"Finite-cutoff stochastic quantization experiments"};
  app.fallthrough();
  app.require_subcommand(1, 1);
  app.set_help_flag("--help", "print this help and exit");
  app.set_version_flag("--version", kVersion);

  std::string config_path;
  std::map<std::string, std::string> overrides;
  app.add_option("--config", config_path, "flat key = value file ('#' comments)");
  for (const auto& key : config_keys()) {
    std::string help = key.help + " (env " + env_name(key.name) + ")";
    app.add_option_function<std::string>(
           flag_name(key.name), [&overrides, name = key.name](const std::string& v) { overrides[name] = v; }, help)
        ->type_name(key.name == "seed" ? "U64" : "VALUE");
  }
  for (const auto& sub : subcommands()) app.add_subcommand(sub, "run the " + sub + " experiment");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kExitValidation;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    ExperimentConfig cfg = default_config(sub);
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    apply_environment(cfg);
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    return run_and_report(sub, cfg, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "validation failure: " << e.what() << '\n';
    return exit_code_for(e);
  }
}
