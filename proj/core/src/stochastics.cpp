#include "mft/stochastics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mft {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

PathRng::PathRng(std::uint64_t seed, std::uint64_t stream) {
  // Mix seed and stream through two rounds so nearby streams decorrelate.
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s = a ^ (stream * 0xD1342543DE82EF95ull + 0x2545F4914F6CDD1Dull);
  (void)splitmix64(s);
  state_ = s;
}

std::uint64_t PathRng::next_u64() { return splitmix64(state_); }

double PathRng::uniform() {
  // 53-bit mantissa in (0,1); never returns 0 so log() below is safe.
  const std::uint64_t bits = next_u64() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double PathRng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  cached_ = r * std::sin(phi);
  has_cached_ = true;
  return r * std::cos(phi);
}

double PathEnsemble::brownian_at(int p, int k) const {
  double w = 0.0;
  const std::size_t base = static_cast<std::size_t>(p) * steps;
  for (int j = 0; j < k; ++j) w += dw[base + j];
  return w;
}

int sample_node(const DiversityLaw& law, double u) {
  double acc = 0.0;
  const int K = static_cast<int>(law.node_count());
  for (int k = 0; k < K; ++k) {
    acc += law.weights[k];
    if (u < acc) return k;
  }
  return K - 1;
}

PathEnsemble make_ensemble(const TimeGrid& grid, int paths, const DiversityLaw& law,
                           std::uint64_t seed) {
  if (paths < 1) throw std::invalid_argument("ensemble needs at least one path");
  PathEnsemble ens;
  ens.paths = paths;
  ens.steps = grid.steps;
  ens.seed = seed;
  ens.dw.resize(static_cast<std::size_t>(paths) * grid.steps);
  ens.theta_node.resize(paths);
  ens.theta.resize(paths);
  const double sqrt_dt = std::sqrt(grid.dt());
  for (int p = 0; p < paths; ++p) {
    PathRng rng(seed, static_cast<std::uint64_t>(p));
    const int node = sample_node(law, rng.uniform());
    ens.theta_node[p] = node;
    ens.theta[p] = law.nodes[node];
    const std::size_t base = static_cast<std::size_t>(p) * grid.steps;
    for (int k = 0; k < grid.steps; ++k) ens.dw[base + k] = sqrt_dt * rng.normal();
  }
  return ens;
}

std::pair<Vector, Vector> mean_and_se(const std::vector<Vector>& values) {
  const std::size_t M = values.size();
  if (M < 2) throw std::invalid_argument("mean_and_se needs at least two samples");
  const Eigen::Index d = values.front().size();
  Vector mean = Vector::Zero(d);
  for (const auto& v : values) mean += v;
  mean /= static_cast<double>(M);
  Vector var = Vector::Zero(d);
  for (const auto& v : values) var += (v - mean).cwiseAbs2();
  var /= static_cast<double>(M - 1);
  Vector se = (var / static_cast<double>(M)).cwiseSqrt();
  return {mean, se};
}

std::pair<double, double> mean_and_se(const std::vector<double>& values) {
  const std::size_t M = values.size();
  if (M < 2) throw std::invalid_argument("mean_and_se needs at least two samples");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(M);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(M - 1);
  return {mean, std::sqrt(var / static_cast<double>(M))};
}

}  // namespace mft
