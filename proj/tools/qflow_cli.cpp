#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/cfg/env.h>
#include <spdlog/spdlog.h>

#include "qflow/scenario.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitIntegration = 2;
constexpr int kExitViolation = 3;

int run(const std::string& config_path, const std::string& preset, const std::string& out_dir) {
  qflow::ScenarioConfig cfg;
  try {
    if (!preset.empty()) {
      const auto p = qflow::find_preset(preset);
      if (!p) throw qflow::ConfigError("unknown preset '" + preset + "' (see list-presets)");
      cfg = p->config;
    } else if (!config_path.empty()) {
      cfg = qflow::load_config(config_path);
    } else {
      throw qflow::ConfigError("run needs a config file or --preset");
    }
    if (!out_dir.empty()) cfg.output_path = out_dir;
    qflow::validate_config(cfg);
  } catch (const qflow::ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kExitConfig;
  }

  spdlog::info("running '{}' (model {}, engine {}, {} steps)", cfg.name, qflow::to_string(cfg.model.model),
               qflow::to_string(cfg.engine), cfg.grid.n_steps);
  qflow::ScenarioResult res;
  try {
    res = qflow::run_scenario(cfg);
  } catch (const qflow::IntegrationError& e) {
    spdlog::error("integration failure: {}", e.what());
    return kExitIntegration;
  } catch (const qflow::ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    spdlog::error("config error: {}", e.what());
    return kExitConfig;
  }

  const auto csv = qflow::write_outputs(res, cfg.output_path);
  spdlog::info("wrote {} rows to {}", res.table.size(), csv.string());
  if (res.violations > 0) {
    for (const auto& m : res.violation_messages) spdlog::error("violation: {}", m);
    spdlog::error("{} invariant violation(s)", res.violations);
    return kExitViolation;
  }
  return EXIT_SUCCESS;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::default_logger()->clone("qflow"));
  spdlog::set_pattern("[%l] %v");
  spdlog::cfg::load_env_levels();
  if (const char* lvl = std::getenv("QFLOW_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(lvl));

  CLI::App app{"Thermodynamic flow uncertainty simulator"};
  app.require_subcommand(1);

  std::string config_path, preset, out_dir;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario from a config file or a preset");
  run_cmd->add_option("config", config_path, "YAML scenario file");
  auto* preset_opt = run_cmd->add_option("--preset", preset, "Built-in preset name");
  run_cmd->add_option("--out", out_dir, "Output directory (overrides output_path)");
  preset_opt->excludes(run_cmd->get_option("config"));

  auto* list_cmd = app.add_subcommand("list-presets", "List built-in presets");
  bool as_yaml = false;
  list_cmd->add_flag("--yaml", as_yaml, "Print each preset as a config file");

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a config file without running it");
  validate_cmd->add_option("config", validate_path, "YAML scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (*run_cmd) return run(config_path, preset, out_dir);

  if (*list_cmd) {
    for (const auto& p : qflow::presets()) {
      if (as_yaml) {
        std::cout << "---\n" << qflow::to_yaml(p.config);
      } else {
        std::cout << p.name << ": " << p.caption << '\n';
      }
    }
    return EXIT_SUCCESS;
  }

  if (*validate_cmd) {
    try {
      const auto cfg = qflow::load_config(validate_path);
      std::cout << "ok: " << cfg.name << '\n';
      return EXIT_SUCCESS;
    } catch (const qflow::ConfigError& e) {
      std::cerr << "invalid: " << e.what() << '\n';
      return kExitConfig;
    }
  }
  return kExitConfig;
}
