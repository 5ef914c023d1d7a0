#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mft/cc_solver.hpp"
#include "mft/model.hpp"
#include "mft/stochastics.hpp"

namespace mft {

struct ExperimentConfig {
  ModelSpec model;
  std::string experiment;  // solve-cc | check-wellposedness | population-sweep |
                           // equivalence | gap-vs-n | diagnostics
  TimeGrid grid{1.0, 100};
  int paths = 1000;
  int replications = 16;
  std::uint64_t seed = 1;
  CCOptions solver;
  std::vector<int> sweep;
  std::string output_dir = ".";
};

// Throws std::invalid_argument on malformed documents or invariant violations
// of the config itself (model validity is checked at run time instead).
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

// Executes the named experiment and writes summary.json, curves.csv and
// sweep.csv under output_dir. Returns the process exit status; any failure
// leaves a machine-readable "error" object in summary.json. The thread count
// never affects output bytes.
int run_experiment(const ExperimentConfig& cfg, int threads = 1);

// Dry run: resolved grid, ensemble sizes, constants preview and a memory
// estimate. No simulation, no files written.
std::string describe_experiment(const ExperimentConfig& cfg);

// 17 significant digits, '.' decimal separator (the CSV cell format).
std::string format_sig17(double v);

}  // namespace mft
