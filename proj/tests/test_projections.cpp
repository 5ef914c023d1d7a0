#include <doctest.h>

#include <cmath>

#include "mft/projections.hpp"

using namespace mft;

namespace {

Matrix random_spd(PathRng& rng, int m, bool diagonal) {
  if (diagonal) {
    Matrix R = Matrix::Zero(m, m);
    for (int i = 0; i < m; ++i) R(i, i) = 0.1 + 3.0 * rng.uniform();
    return R;
  }
  Matrix G(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) G(i, j) = rng.normal();
  return G * G.transpose() + 0.1 * Matrix::Identity(m, m);
}

double weighted_dist2(const Matrix& R, const Vector& a, const Vector& b) {
  return (a - b).dot(R * (a - b));
}

}  // namespace

TEST_CASE("projection axioms on random weighted instances") {
  PathRng rng(2024, 0);
  for (int trial = 0; trial < 300; ++trial) {
    const int m = 1 + static_cast<int>(rng.uniform() * 4.0);
    ConstraintSpec cons;
    const double pick = rng.uniform();
    if (pick < 0.34) {
      cons = ConstraintSpec::nonnegative_orthant();
    } else if (pick < 0.67) {
      Vector lo(m), hi(m);
      for (int i = 0; i < m; ++i) {
        const double a = 2.0 * rng.normal(), b = 2.0 * rng.normal();
        lo[i] = std::min(a, b);
        hi[i] = std::max(a, b);
      }
      cons = ConstraintSpec::box(lo, hi);
    }
    const Matrix R = random_spd(rng, m, trial % 2 == 0);
    const WeightedProjection proj(R, cons);

    Vector v(m), u(m);
    for (int i = 0; i < m; ++i) {
      v[i] = 3.0 * rng.normal();
      u[i] = 3.0 * rng.normal();
    }
    const Vector pv = proj(v);
    const Vector pu = proj(u);

    CHECK(cons.contains(pv, 1e-12));
    // idempotence, bitwise for feasible points
    CHECK((proj(pv) - pv).cwiseAbs().maxCoeff() == 0.0);
    // nonexpansive in the R-metric
    CHECK(weighted_dist2(R, pv, pu) <= weighted_dist2(R, v, u) + 1e-10);
    // variational inequality <R(v - Pv), w - Pv> <= 0 for feasible w
    Vector w(m);
    for (int i = 0; i < m; ++i) w[i] = 3.0 * rng.normal();
    w = cons.clamp(w);
    CHECK((v - pv).dot(R * (w - pv)) <= 1e-10);
  }
}

TEST_CASE("full space projection is the identity") {
  const WeightedProjection proj(Matrix::Identity(3, 3), ConstraintSpec::full_space());
  Vector v(3);
  v << -5.0, 0.0, 7.0;
  CHECK((proj(v) - v).cwiseAbs().maxCoeff() == 0.0);
  CHECK((project_gamma(proj, v) - v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("non-diagonal weight changes the projection") {
  // With R = [[2, 1], [1, 2]] and the nonnegative orthant, projecting
  // (-1, 1) must trade off coordinates: minimize (w+1, w-1) R (w+1, w-1).
  Matrix R(2, 2);
  R << 2.0, 1.0, 1.0, 2.0;
  const WeightedProjection proj(R, ConstraintSpec::nonnegative_orthant());
  Vector v(2);
  v << -1.0, 1.0;
  const Vector w = proj(v);
  CHECK(w[0] == 0.0);
  // stationarity in the free coordinate: R(1,0)(w0 + 1) + R(1,1)(w1 - 1) = 0
  CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("conditioning under trivial information is the sample mean") {
  const TimeGrid grid{1.0, 4};
  const auto e = make_ensemble(grid, 5, DiversityLaw::dirac(), 1);
  std::vector<Vector> vals;
  for (int p = 0; p < 5; ++p) vals.push_back(Vector::Constant(1, static_cast<double>(p)));
  const auto out = condition(InfoPattern::trivial(), e, 2, grid, vals);
  for (const auto& v : out) CHECK(v[0] == doctest::Approx(2.0));
  const auto full = condition(InfoPattern::full(), e, 2, grid, vals);
  for (int p = 0; p < 5; ++p) CHECK(full[p][0] == vals[p][0]);
}

TEST_CASE("delayed conditioning reproduces exact quadratic functionals") {
  const TimeGrid grid{1.0, 10};
  const auto e = make_ensemble(grid, 500, DiversityLaw::dirac(), 17);
  const InfoPattern info = InfoPattern::delayed(0.3);
  // values are an exact function of W(t - delta): regression recovers them
  const int t_index = 8;
  const int lag = 5;  // (0.8 - 0.3) / 0.1
  std::vector<Vector> vals;
  for (int p = 0; p < 500; ++p) {
    const double w = e.brownian_at(p, lag);
    vals.push_back(Vector::Constant(1, 2.0 + 3.0 * w - 0.5 * w * w));
  }
  const auto out = condition(info, e, t_index, grid, vals);
  for (int p = 0; p < 500; ++p) CHECK(out[p][0] == doctest::Approx(vals[p][0]).epsilon(1e-8));
}

TEST_CASE("least squares fit tolerates collinear bases") {
  Matrix basis(4, 3);
  basis << 1, 2, 4, 1, 3, 6, 1, 4, 8, 1, 5, 10;  // third column = 2 * second
  Matrix target(4, 1);
  target << 3, 4, 5, 6;  // exactly 1 + col2
  const Matrix fitted = ls_fitted(basis, target);
  for (int r = 0; r < 4; ++r) CHECK(fitted(r, 0) == doctest::Approx(target(r, 0)).epsilon(1e-10));
}
