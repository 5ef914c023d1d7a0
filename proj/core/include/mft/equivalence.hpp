#pragma once

#include <cstdint>
#include <vector>

#include "mft/model.hpp"
#include "mft/stochastics.hpp"

namespace mft {

// Sample statistics of one simulated process, indexed by grid time.
struct MomentCurve {
  std::vector<Vector> mean, mean_se;      // K+1 entries
  std::vector<double> second, second_se;  // E|x|^2 of the state part
};

struct SystemsComparison {
  TimeGrid grid;

  // Single-agent constructions: mixture process per system.
  MomentCurve p1, p2, p3;
  std::vector<MomentCurve> p2_parts, p3_parts;  // per diversity node
  // sum_{j<l} m_j m_l E<x_j, x_l> per grid time (cross moments of the mixture)
  std::vector<double> p2_cross, p3_cross;
  std::vector<double> p2_cross_se, p3_cross_se;

  // Population constructions: replication-wise empirical average curves.
  int N = 0;
  std::vector<std::vector<Vector>> m1_avg, m2_avg, m3_avg, m_het_avg;
  // replication-mean of sup_t (worst pairwise squared average discrepancy)
  double max_pairwise_disc = 0.0;
  // per-component simulation versus the stacked augmented-state form
  bool stacked_bitwise_equal = false;
};

// Single-agent systems under one common deterministic open-loop control:
// random-type single-noise McKean-Vlasov closure, shared-noise mixture, and
// independent-noise mixture.
SystemsComparison simulate_p_systems(const ModelSpec& spec, const std::vector<Vector>& u,
                                     const TimeGrid& grid, int paths, std::uint64_t seed);

// Weakly coupled N-agent counterparts, including the post-sampled
// heterogeneous system with proportional type counts, plus the bitwise
// stacked-state cross-check of the independent-noise construction.
SystemsComparison simulate_m_systems(const ModelSpec& spec, const std::vector<Vector>& u,
                                     int N, int replications, const TimeGrid& grid,
                                     std::uint64_t seed);

}  // namespace mft
