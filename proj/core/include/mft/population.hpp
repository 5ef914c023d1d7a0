#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mft/cc_solver.hpp"

namespace mft {

struct PopulationRun {
  int N = 0;
  int replications = 0;
  TimeGrid grid;
  // replication -> agent -> step
  std::vector<std::vector<std::vector<Vector>>> states;    // realized, K+1 per agent
  std::vector<std::vector<std::vector<Vector>>> controls;  // K per agent
  std::vector<std::vector<Vector>> state_average;          // replication -> K+1

  double social_cost = 0.0;     // per-agent social cost, replication average
  double social_cost_se = 0.0;  // standard error over replications
  // sup over grid times of mean |x^{(N)}(t) - mean state curve|^2
  double consistency_error = 0.0;
  // mean over agents/replications of sup_t |frozen - realized|^2
  double frozen_gap = 0.0;
};

PopulationRun simulate_population(const ModelSpec& spec, const DecentralizedPolicy& policy,
                                  int N, int replications, std::uint64_t seed);
PopulationRun simulate_population(const ModelSpec& spec, const CCSolution& sol, int N,
                                  int replications, std::uint64_t seed);

// Exact discrete-time optimal per-agent social cost of the stacked N-agent
// system on the same Euler grid and trapezoid weights as simulate_population,
// so simulated costs can never beat it beyond Monte Carlo noise.
double centralized_oracle(const ModelSpec& spec, int N, const TimeGrid& grid);

std::pair<double, double> optimality_gap(const ModelSpec& spec, const DecentralizedPolicy& policy,
                                         int N, int replications, std::uint64_t seed);
std::pair<double, double> optimality_gap(const ModelSpec& spec, const CCSolution& sol, int N,
                                         int replications, std::uint64_t seed);

struct VariationalDiagnostics {
  int N = 0;
  int replications = 0;
  TimeGrid grid;
  // Replication-averaged trajectories (K+1 entries each).
  std::vector<Vector> delta_x_i;
  std::vector<Vector> delta_x_minus_i;
  std::vector<Vector> x_star_j;     // first minor agent's limit process
  std::vector<Vector> x_star_star;  // diversity-integrated limit ODE
  double gap_rescaled_minor = 0.0;  // E sup_t |N dx_j - x_j^*|^2
  double gap_aggregate_esup = 0.0;  // E sup_t |x^{**} - dx_{-i}|^2
  double gap_aggregate_supe = 0.0;  // sup_t E |x^{**} - dx_{-i}|^2
};

// Perturbs agent 0 by the deterministic control path `perturbation` (K steps)
// and compares the finite-N variation system against its mean-field limits.
VariationalDiagnostics variational_diagnostics(const ModelSpec& spec, const CCSolution& sol,
                                               int N, const std::vector<Vector>& perturbation,
                                               std::uint64_t seed, int replications = 64);

}  // namespace mft
