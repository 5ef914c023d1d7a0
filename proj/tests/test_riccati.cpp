#include <doctest.h>

#include <cmath>

#include "mft/cc_solver.hpp"

using namespace mft;

namespace {

ModelSpec drift_only_spec(double A, double Q, double H, double R, double xi) {
  ScalarCoeffs c;
  c.A = A;
  c.B = 1.0;
  c.Q = Q;
  c.H = H;
  c.R = R;
  return make_scalar_spec(c, 1.0, xi);
}

}  // namespace

TEST_CASE("scalar riccati solution matches tanh closed form") {
  // A = 0, B = Q = R = 1, H = 0: Pi' = -1 + Pi^2, Pi(1) = 0 => Pi(t) = tanh(1 - t)
  const auto spec = drift_only_spec(0.0, 1.0, 0.0, 1.0, 1.0);
  const TimeGrid grid{1.0, 50};
  const auto sol = solve_reduced_ode(spec, grid);
  for (int k = 0; k <= 50; ++k) {
    const double t = grid.time(k);
    CHECK(sol.Pi[k](0, 0) == doctest::Approx(std::tanh(1.0 - t)).epsilon(1e-8));
    CHECK(sol.gamma_bar[k][0] ==
          doctest::Approx(sol.Pi[k](0, 0) * sol.alpha_bar[k][0]).epsilon(1e-12));
  }
  CHECK(sol.alpha_bar[0][0] == 1.0);
}

TEST_CASE("mean state decays under optimal feedback") {
  const auto spec = drift_only_spec(0.0, 1.0, 0.0, 1.0, 1.0);
  const TimeGrid grid{1.0, 50};
  const auto sol = solve_reduced_ode(spec, grid);
  for (int k = 1; k <= 50; ++k) CHECK(sol.alpha_bar[k][0] < sol.alpha_bar[k - 1][0]);
  CHECK(sol.alpha_bar[50][0] > 0.0);
}

TEST_CASE("reduced solver rejects diffusion controls and couplings") {
  ScalarCoeffs c;
  c.A = 0.0;
  c.B = 1.0;
  c.C = 0.5;
  c.Q = 1.0;
  c.R = 1.0;
  const auto spec = make_scalar_spec(c, 1.0, 1.0);
  CHECK_THROWS(solve_reduced_ode(spec, TimeGrid{1.0, 20}));
}

TEST_CASE("mean-field decoupling agrees with the reduced solve when uncoupled") {
  const auto spec = drift_only_spec(-0.5, 1.0, 0.3, 1.0, 1.0);
  const TimeGrid grid{1.0, 40};
  const auto reduced = solve_reduced_ode(spec, grid);
  const auto mf = solve_riccati_mf(spec, grid);
  REQUIRE(mf.converged);
  CHECK(mf.mean_dynamics_residual < 1e-7);
  for (int k = 0; k <= 40; ++k) {
    CHECK(mf.xbar[k][0] == doctest::Approx(reduced.alpha_bar[k][0]).epsilon(1e-7));
    CHECK(mf.gbar[k][0] == doctest::Approx(reduced.gamma_bar[k][0]).epsilon(1e-7));
  }
}

TEST_CASE("decoupling handles couplings and heterogeneous types") {
  ScalarCoeffs c;
  c.A = -1.0;
  c.B = 1.0;
  c.C = 0.2;
  c.D = 0.1;
  c.F = 0.3;
  c.F_tilde = 0.1;
  c.Q = 1.0;
  c.H = 0.4;
  c.R = 1.0;
  auto spec = make_scalar_spec(c, 1.0, 1.0, DiversityLaw::finite({0.0, 1.0}, {0.4, 0.6}));
  spec.A.per_node[1] = CoefficientTable(Matrix::Constant(1, 1, -2.0));
  REQUIRE(validate(spec).empty());
  const TimeGrid grid{1.0, 40};
  const auto mf = solve_riccati_mf(spec, grid);
  REQUIRE(mf.converged);
  CHECK(mf.mean_dynamics_residual < 1e-7);
  // terminal conditions of the backward curves
  for (std::size_t node = 0; node < 2; ++node) {
    CHECK(mf.P[node][40].cwiseAbs().maxCoeff() == 0.0);
    CHECK(mf.phi[node][40].cwiseAbs().maxCoeff() == 0.0);
    CHECK(mf.y2[node][40].cwiseAbs().maxCoeff() == 0.0);
  }
  // law-weighted mean of the node means is the population mean
  for (int k = 0; k <= 40; ++k)
    CHECK(mf.xbar[k][0] ==
          doctest::Approx(0.4 * mf.a[0][k][0] + 0.6 * mf.a[1][k][0]).epsilon(1e-12));
}

TEST_CASE("exact affine policy is consistent with its own mean curve") {
  const auto spec = drift_only_spec(-0.5, 1.0, 0.3, 1.0, 1.0);
  const TimeGrid grid{1.0, 40};
  const auto policy = make_riccati_policy(spec, grid);
  REQUIRE(policy.kind == DecentralizedPolicy::Kind::Affine);
  // advance the mean with the policy's own control: must reproduce mean_alpha
  Vector x = spec.initial_state;
  const double dt = grid.dt();
  for (int k = 0; k < 40; ++k) {
    CHECK((x - policy.mean_alpha[k]).cwiseAbs().maxCoeff() < 1e-9);
    const Vector u = policy.evaluate(k, 0, x, 0.0);
    const double t = grid.time(k);
    x += dt * (spec.A.at(0, t) * x + spec.B.at(t) * u + spec.F.at(t) * policy.mean_alpha[k]);
  }
}

TEST_CASE("regression policy reproduces the solved controls on training paths") {
  const auto spec = drift_only_spec(-1.0, 1.0, 0.2, 1.0, 0.5);
  const TimeGrid grid{1.0, 25};
  const auto ensemble = make_ensemble(grid, 500, spec.diversity, 31);
  const auto sol = solve_cc(spec, grid, ensemble, 1e-8, 60);
  REQUIRE(sol.converged);
  const auto policy = fit_regression_policy(sol, spec);
  double worst = 0.0;
  for (int k = 0; k < 25; ++k)
    for (int p = 0; p < 500; ++p) {
      const Vector u = policy.evaluate(k, sol.theta_node[p], sol.alpha[k].col(p), 0.0);
      worst = std::max(worst, (u - sol.control[k].col(p)).cwiseAbs().maxCoeff());
    }
  // drift-control instance: u is a linear function of the state, so the
  // quadratic basis carries no approximation error
  CHECK(worst < 1e-6);
}
