#include "mft/projections.hpp"

#include <cmath>
#include <stdexcept>

namespace mft {

namespace {

bool is_diagonal(const Matrix& R) {
  for (int i = 0; i < R.rows(); ++i)
    for (int j = 0; j < R.cols(); ++j)
      if (i != j && R(i, j) != 0.0) return false;
  return true;
}

double clamp_coord(const ConstraintSpec& c, int j, double x) {
  switch (c.kind) {
    case ConstraintKind::FullSpace:
      return x;
    case ConstraintKind::NonnegativeOrthant:
      return x < 0.0 ? 0.0 : x;
    case ConstraintKind::Box:
      if (x < c.lo[j]) return c.lo[j];
      if (x > c.hi[j]) return c.hi[j];
      return x;
  }
  return x;
}

}  // namespace

WeightedProjection::WeightedProjection(Matrix R_in, ConstraintSpec constraint_in)
    : R(std::move(R_in)), constraint(std::move(constraint_in)) {
  if (R.rows() != R.cols()) throw std::invalid_argument("projection weight must be square");
  diagonal_ = is_diagonal(R);
}

Vector WeightedProjection::operator()(const Vector& v) const {
  if (constraint.kind == ConstraintKind::FullSpace) return v;
  // Diagonal weight: the R-projection separates per coordinate into a clamp.
  Vector w = constraint.clamp(v);
  if (diagonal_) return w;
  // Cyclic coordinate descent on the strongly convex 0.5 <R(w-v), w-v>.
  // Starting from the clamp keeps feasible inputs bitwise fixed points.
  const int m = static_cast<int>(v.size());
  for (int sweep = 0; sweep < 10000; ++sweep) {
    double max_change = 0.0;
    for (int j = 0; j < m; ++j) {
      double cross = 0.0;
      for (int l = 0; l < m; ++l)
        if (l != j) cross += R(j, l) * (w[l] - v[l]);
      const double cand = clamp_coord(constraint, j, v[j] - cross / R(j, j));
      max_change = std::max(max_change, std::abs(cand - w[j]));
      w[j] = cand;
    }
    if (max_change <= 1e-14) break;
  }
  return w;
}

Vector project_gamma(const WeightedProjection& p, const Vector& v) { return p(v); }

Matrix ls_fitted(const Matrix& basis, const Matrix& targets) {
  Eigen::ColPivHouseholderQR<Matrix> qr(basis);
  qr.setThreshold(1e-10);
  return basis * qr.solve(targets);
}

std::vector<Vector> condition(const InfoPattern& pattern, const PathEnsemble& ensemble,
                              int t_index, const TimeGrid& grid,
                              const std::vector<Vector>& values) {
  const int M = static_cast<int>(values.size());
  if (M != ensemble.paths) throw std::invalid_argument("values/ensemble size mismatch");
  if (M == 0) return {};
  const Eigen::Index d = values.front().size();

  switch (pattern.kind) {
    case InfoKind::Full:
      return values;
    case InfoKind::Trivial: {
      Vector mean = Vector::Zero(d);
      for (const auto& v : values) mean += v;
      mean /= static_cast<double>(M);
      return std::vector<Vector>(M, mean);
    }
    case InfoKind::Delayed:
      break;
  }

  const double t = grid.time(t_index);
  const bool pre_delay = t <= pattern.delay + 1e-12;

  // Group paths by diversity node; within each group regress on the delayed
  // Brownian observation (or take the mean when nothing but the type is known).
  std::size_t node_count = 0;
  for (int p = 0; p < M; ++p)
    node_count = std::max(node_count, static_cast<std::size_t>(ensemble.theta_node[p]) + 1);
  std::vector<std::vector<int>> groups(node_count);
  for (int p = 0; p < M; ++p) groups[ensemble.theta_node[p]].push_back(p);

  int lag_index = 0;
  if (!pre_delay) {
    lag_index = static_cast<int>(std::floor((t - pattern.delay) / grid.dt() + 1e-9));
    lag_index = std::min(lag_index, grid.steps);
    if (M < 3) throw std::invalid_argument("fewer paths than regression basis dimension");
  }

  std::vector<Vector> out(M, Vector::Zero(d));
  for (const auto& group : groups) {
    if (group.empty()) continue;
    const int g = static_cast<int>(group.size());
    if (pre_delay || g < 3) {
      Vector mean = Vector::Zero(d);
      for (int p : group) mean += values[p];
      mean /= static_cast<double>(g);
      for (int p : group) out[p] = mean;
      continue;
    }
    Matrix basis(g, 3);
    Matrix target(g, d);
    for (int r = 0; r < g; ++r) {
      const double w = ensemble.brownian_at(group[r], lag_index);
      basis(r, 0) = 1.0;
      basis(r, 1) = w;
      basis(r, 2) = w * w;
      target.row(r) = values[group[r]].transpose();
    }
    const Matrix fitted = ls_fitted(basis, target);
    for (int r = 0; r < g; ++r) out[group[r]] = fitted.row(r).transpose();
  }
  return out;
}

}  // namespace mft
