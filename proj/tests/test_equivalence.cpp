#include <doctest.h>

#include <cmath>

#include "mft/equivalence.hpp"

using namespace mft;

namespace {

// Zero-mean two-type instance: no drift control effect, type-dependent noise
// loadings, state-dependent diffusion.
ModelSpec two_type_spec() {
  ScalarCoeffs c;
  c.A = -0.5;
  c.B = 0.0;
  c.C = 0.3;
  c.D = 0.4;
  c.F = 0.2;
  c.F_tilde = 0.1;
  c.Q = 1.0;
  c.H = 0.0;
  c.R = 1.0;
  auto spec = make_scalar_spec(c, 1.0, 0.0, DiversityLaw::finite({0.0, 1.0}, {0.35, 0.65}));
  spec.A.per_node[1] = CoefficientTable(Matrix::Constant(1, 1, -1.0));
  spec.D.per_node[1] = CoefficientTable(Matrix::Constant(1, 1, 0.7));
  return spec;
}

std::vector<Vector> unit_control(int steps, int m) {
  return std::vector<Vector>(steps, Vector::Ones(m));
}

}  // namespace

TEST_CASE("single-agent systems share the mean dynamics") {
  const auto spec = two_type_spec();
  const TimeGrid grid{1.0, 40};
  const auto cmp = simulate_p_systems(spec, unit_control(40, 1), grid, 8000, 17);
  for (int k = 0; k <= 40; ++k) {
    const double se12 = cmp.p1.mean_se[k][0] + cmp.p2.mean_se[k][0];
    const double se13 = cmp.p1.mean_se[k][0] + cmp.p3.mean_se[k][0];
    CHECK(std::abs(cmp.p1.mean[k][0] - cmp.p2.mean[k][0]) <= 4.0 * se12 + 1e-12);
    CHECK(std::abs(cmp.p1.mean[k][0] - cmp.p3.mean[k][0]) <= 4.0 * se13 + 1e-12);
  }
}

TEST_CASE("mixture square expansion is an algebraic identity") {
  const auto spec = two_type_spec();
  const TimeGrid grid{1.0, 30};
  const auto cmp = simulate_p_systems(spec, unit_control(30, 1), grid, 2000, 3);
  const auto& mass = spec.diversity.weights;
  for (int k = 0; k <= 30; ++k) {
    double diag = 0.0;
    for (std::size_t j = 0; j < mass.size(); ++j)
      diag += mass[j] * mass[j] * cmp.p2_parts[j].second[k];
    CHECK(cmp.p2.second[k] ==
          doctest::Approx(diag + 2.0 * cmp.p2_cross[k]).epsilon(1e-10));
  }
}

TEST_CASE("independent zero-mean components have vanishing cross moments") {
  const auto spec = two_type_spec();
  const TimeGrid grid{1.0, 30};
  const auto cmp = simulate_p_systems(spec, unit_control(30, 1), grid, 20000, 29);
  for (int k = 0; k <= 30; ++k) {
    // cross term of independent zero-mean components: 0 up to Monte Carlo noise
    CHECK(std::abs(cmp.p3_cross[k]) < 0.01);
  }
}

TEST_CASE("population averages of the four constructions stay close") {
  const auto spec = two_type_spec();
  const TimeGrid grid{1.0, 30};
  const auto cmp = simulate_m_systems(spec, unit_control(30, 1), 64, 8, grid, 41);
  CHECK(cmp.N == 64);
  REQUIRE(cmp.m1_avg.size() == 8);
  CHECK(cmp.m1_avg[0].size() == 31);
  // all four averages estimate the same zero-mean curve; fluctuations are O(1/N)
  CHECK(cmp.max_pairwise_disc < 0.1);
}

TEST_CASE("stacked augmented form is bitwise identical") {
  const auto spec = two_type_spec();
  const TimeGrid grid{1.0, 25};
  const auto cmp = simulate_m_systems(spec, unit_control(25, 1), 16, 4, grid, 7);
  CHECK(cmp.stacked_bitwise_equal);
}

TEST_CASE("input validation") {
  const auto spec = two_type_spec();
  const TimeGrid grid{1.0, 10};
  CHECK_THROWS(simulate_p_systems(spec, unit_control(5, 1), grid, 100, 1));
  CHECK_THROWS(simulate_p_systems(spec, unit_control(10, 1), grid, 1, 1));
  CHECK_THROWS(simulate_m_systems(spec, unit_control(10, 1), 0, 4, grid, 1));
}
