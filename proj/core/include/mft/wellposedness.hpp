#pragma once

#include <array>
#include <utility>

#include "mft/model.hpp"

namespace mft {

// Growth/monotonicity constants of the consistency-condition system in its
// stacked (X, Y, Z) form, the dissipativity verdict, and the best Picard
// contraction modulus found. k[i] follows the 1-based naming (k[0] unused).
struct ContractionReport {
  double rho1_star = 0.0;  // esssup Lmax(+(A+A')/2): forward drift monotonicity
  double rho2_star = 0.0;  // esssup Lmax(-(B2+B2')/2) on the 3n-stacked block
  std::array<double, 18> k{};

  // Raw norms kept for the independent inequality recomputation.
  double norm_F = 0.0, norm_C = 0.0, norm_F_tilde = 0.0;

  bool a4_satisfied = false;
  double a4_lhs = 0.0, a4_rhs = 0.0, a4_margin = 0.0;

  // Discounting parameters and the certified modulus (infinity if none found).
  double rho = 0.0;
  std::array<double, 9> l{};  // l[1..8]
  double modulus = 0.0;
  bool certified = false;
};

ContractionReport compute_constants(const ModelSpec& spec);

// Evaluates the strict dissipativity inequality; margin = RHS - LHS.
std::pair<bool, double> check_a4(const ContractionReport& report);

// Appendix product bound for the Picard map at given discount rate and
// Young-inequality weights; +infinity when (rho, l) is infeasible.
double contraction_modulus(const ContractionReport& report, double rho,
                           const std::array<double, 9>& l);

// Grid/coordinate search over rho in [-50, 50] and log-spaced l minimizing the
// modulus; fills rho, l, modulus, certified on a copy of the report.
ContractionReport optimize_modulus(const ContractionReport& report);

}  // namespace mft
