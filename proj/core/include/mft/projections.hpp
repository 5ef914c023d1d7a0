#pragma once

#include <vector>

#include "mft/model.hpp"
#include "mft/stochastics.hpp"

namespace mft {

// Metric projection onto the constraint set under the R-weighted norm
// |v|_R^2 = <Rv, v>.
struct WeightedProjection {
  Matrix R;
  ConstraintSpec constraint;

  WeightedProjection(Matrix R_in, ConstraintSpec constraint_in);

  Vector operator()(const Vector& v) const;

  bool diagonal_weight() const { return diagonal_; }

 private:
  bool diagonal_ = true;
};

Vector project_gamma(const WeightedProjection& p, const Vector& v);

// Sample conditional expectation of per-path values given the information
// available at grid time t_index:
//   Full    -> values unchanged,
//   Trivial -> sample mean on every path,
//   Delayed -> per-theta-group least squares on {1, W(t-delta), W(t-delta)^2}
//              (group means when t <= delta, where only the type is known).
std::vector<Vector> condition(const InfoPattern& pattern, const PathEnsemble& ensemble,
                              int t_index, const TimeGrid& grid,
                              const std::vector<Vector>& values);

// Fitted values of a least-squares regression of targets on basis columns,
// via a rank-tolerant pseudo-inverse of the Gram matrix (collinear bases
// degrade to the projection onto their span rather than erroring).
// basis: M x p design matrix, targets: M x d. Returns M x d fitted matrix.
Matrix ls_fitted(const Matrix& basis, const Matrix& targets);

}  // namespace mft
