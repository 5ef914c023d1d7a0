#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>

#include "mft/experiments.hpp"

namespace {

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("MFT_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mean-field team numerical laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  long long seed = -1;
  int threads = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("config", config_path, "experiment config (JSON)")->required();
    cmd->add_option("--seed", seed, "override monte_carlo.seed");
    cmd->add_option("--threads", threads, "worker cap (never changes output bytes)");
    cmd->add_option("--out", out_dir, "override output_dir");
  };
  CLI::App* run = app.add_subcommand("run", "execute the experiment and emit artifacts");
  add_common(run);
  CLI::App* describe = app.add_subcommand("describe", "print the resolved plan (dry run)");
  add_common(describe);

  CLI11_PARSE(app, argc, argv);

  mft::ExperimentConfig cfg;
  try {
    cfg = mft::load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (!out_dir.empty()) cfg.output_dir = out_dir;

  try {
    if (describe->parsed()) {
      std::cout << mft::describe_experiment(cfg);
      return 0;
    }
    const int status = mft::run_experiment(cfg, resolve_threads(threads));
    if (status != 0)
      std::cerr << "error: experiment failed, see " << cfg.output_dir
                << "/summary.json\n";
    return status;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
