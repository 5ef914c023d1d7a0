#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mft/model.hpp"

namespace mft {

struct TimeGrid {
  double horizon = 1.0;
  int steps = 1;

  double dt() const { return horizon / steps; }
  double time(int k) const { return horizon * k / steps; }
};

// Counter-based substream: path randomness is a pure function of (seed, stream id),
// so generation order and worker count never matter.
class PathRng {
 public:
  PathRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();
  double uniform();  // (0, 1)
  double normal();   // standard normal

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

struct PathEnsemble {
  int paths = 0;
  int steps = 0;
  std::uint64_t seed = 0;
  // dw[p * steps + k] ~ N(0, dt)
  std::vector<double> dw;
  std::vector<int> theta_node;    // diversity node index per path
  std::vector<double> theta;      // node label per path

  double increment(int p, int k) const { return dw[static_cast<std::size_t>(p) * steps + k]; }
  // W(t) partial sum over the first k increments.
  double brownian_at(int p, int k) const;
};

PathEnsemble make_ensemble(const TimeGrid& grid, int paths, const DiversityLaw& law,
                           std::uint64_t seed);

// Componentwise sample mean and standard error (sample std / sqrt(M)).
std::pair<Vector, Vector> mean_and_se(const std::vector<Vector>& values);
std::pair<double, double> mean_and_se(const std::vector<double>& values);

// Draw a diversity node index from one uniform variate (shared by ensemble and
// population samplers so type draws are reproducible everywhere).
int sample_node(const DiversityLaw& law, double u);

}  // namespace mft
