// gmcorr: run or validate an experiment configuration.
//
//   gmcorr run --config <path> [--threads K] [--seed S] [--out DIR]
//   gmcorr validate --config <path>
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <chrono>
#include <iostream>

#include <CLI11.hpp>

#include "gmcorr/experiment.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kNumericalFailure = 3;

gmcorr::ExperimentConfig load(const std::string& path, const std::optional<std::uint64_t>& seed) {
  auto file = gmcorr::load_config(path);
  if (seed) file.set("seed", std::to_string(*seed));
  return gmcorr::parse_experiment(file);
}

int run(const std::string& path, std::optional<unsigned> threads, std::optional<std::uint64_t> seed,
        std::optional<std::string> out_dir) {
  const auto cfg = load(path, seed);
  unsigned k = threads.value_or(cfg.threads);
  if (k == 0) k = gmcorr::default_thread_count();
  const std::filesystem::path dir = out_dir.value_or(cfg.output_dir);
  const auto warnings = cfg.scenario == gmcorr::Scenario::dicke_validate ? std::vector<std::string>{}
                                                                           : gmcorr::check_step_guards(cfg);
  gmcorr::ensure_writable(dir);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  const auto t0 = std::chrono::steady_clock::now();
  const auto result = gmcorr::run_experiment(cfg, k, [](const std::string& msg) { std::cerr << msg << "\n"; });
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto files = gmcorr::write_outputs(dir, cfg, result, {k, wall});
  for (const auto& f : files) std::cout << f.string() << "\n";
  for (std::size_t i = warnings.size(); i < result.warnings.size(); ++i)
    std::cerr << "warning: " << result.warnings[i] << "\n";
  for (const auto& f : result.failures) std::cerr << "error: " << f << "\n";
  return result.failures.empty() ? 0 : kNumericalFailure;
}

int validate(const std::string& path) {
  const auto cfg = load(path, std::nullopt);
  if (cfg.scenario != gmcorr::Scenario::dicke_validate)
    for (const auto& w : gmcorr::check_step_guards(cfg)) std::cerr << "warning: " << w << "\n";
  const auto points = gmcorr::expand_sweep(cfg);
  std::cout << "ok: scenario " << gmcorr::scenario_name(cfg.scenario) << ", " << points.size()
            << " sweep point(s), manifest hash " << gmcorr::manifest_hash(cfg) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Genuine multipartite correlations along quantum trajectories"};
  app.set_version_flag("--version", std::string(GMCORR_VERSION));
  app.require_subcommand(1);

  std::string config;
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;

  auto* run_cmd = app.add_subcommand("run", "Run a scenario and write data files plus a manifest");
  run_cmd->add_option("--config", config, "Config file or run manifest (.json)")->required();
  run_cmd->add_option("--threads", threads, "Worker threads (default: config value, else all cores)")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--seed", seed, "Override the master seed");
  run_cmd->add_option("--out", out_dir, "Output directory (default: config output_dir)");

  auto* validate_cmd = app.add_subcommand("validate", "Check a config file without running it");
  validate_cmd->add_option("--config", config, "Config file or run manifest (.json)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    if (*run_cmd) return run(config, threads, seed, out_dir);
    return validate(config);
  } catch (const gmcorr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const gmcorr::TrajectoryFailure& e) {
    std::cerr << "numerical failure in trajectory " << e.index() << ": " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const gmcorr::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
