#pragma once

#include <limits>
#include <vector>

#include "mft/model.hpp"
#include "mft/projections.hpp"
#include "mft/stochastics.hpp"

namespace mft {

// Per-step ensemble field: entry k is an n x M matrix (column = path).
using Field = std::vector<Matrix>;

struct CCOptions {
  double tol = 1e-8;
  int max_iter = 60;
  double damping = 1.0;  // iterate update new = (1-w) old + w sweep
  // Discount rate of the residual norm; NaN derives it from the dissipativity
  // report (optimized rate when the certificate holds, else 0).
  double rho = std::numeric_limits<double>::quiet_NaN();
};

struct CCSolution {
  TimeGrid grid;
  int n = 0, m = 0, paths = 0;

  Field alpha;        // K+1 entries
  Field gamma;        // K+1 (terminal zero)
  Field vartheta;     // K
  Field y1;           // K+1 (terminal zero)
  Field beta1;        // K
  Field control;      // K, m x M, valued in the constraint set
  Field pre_control;  // K, m x M, R^{-1} conditional value before projection

  std::vector<std::vector<Vector>> y2;  // node -> K+1 (deterministic)
  std::vector<Vector> y2_mean;          // K+1, integral of y2 over the diversity law

  std::vector<Vector> mean_alpha;  // K+1
  std::vector<Vector> mean_gamma;  // K+1
  std::vector<Vector> mean_y1;     // K+1
  std::vector<Vector> mean_beta1;  // K

  std::vector<int> theta_node;  // per path

  int iterations = 0;
  bool converged = false;
  double rho = 0.0;  // discount rate actually used
  // Squared discounted L2 distances between successive (X, Y, Z) iterates;
  // squared so successive ratios compare against the contraction modulus.
  std::vector<double> residual_history;
};

CCSolution solve_cc(const ModelSpec& spec, const TimeGrid& grid, const PathEnsemble& ensemble,
                    const CCOptions& options);
CCSolution solve_cc(const ModelSpec& spec, const TimeGrid& grid, const PathEnsemble& ensemble,
                    double tol, int max_iter);

// Mean ODE system of the drift-controlled, uncoupled, unconstrained reduction,
// solved by backward Riccati decoupling with fine-grid RK4.
struct ReducedOdeSolution {
  std::vector<Vector> alpha_bar;  // K+1
  std::vector<Vector> gamma_bar;  // K+1
  std::vector<Matrix> Pi;         // K+1, gamma_bar = Pi alpha_bar
};
ReducedOdeSolution solve_reduced_ode(const ModelSpec& spec, const TimeGrid& grid);

// Deterministic decoupling of the unconstrained full-information system:
// per node, gamma = P alpha + phi and y1 = Y alpha + psi, with the mean curves
// fixed-pointed over the diversity law. Exact oracle for solve_cc.
struct RiccatiMFSolution {
  TimeGrid grid;
  int n = 0, m = 0;
  // Node-indexed curves at grid times.
  std::vector<std::vector<Matrix>> P;      // node -> K+1
  std::vector<std::vector<Vector>> phi;    // node -> K+1
  std::vector<std::vector<Matrix>> Ygain;  // node -> K+1
  std::vector<std::vector<Vector>> psi;    // node -> K+1
  std::vector<std::vector<Matrix>> Kfb;    // node -> K+1, feedback gain u = -K x - c
  std::vector<std::vector<Vector>> cfb;    // node -> K+1
  std::vector<std::vector<Vector>> a;      // node -> K+1, per-node state mean
  std::vector<std::vector<Vector>> y2;     // node -> K+1
  std::vector<Vector> xbar;     // K+1, integral of a over the law
  std::vector<Vector> gbar;     // K+1, mean of gamma
  std::vector<Vector> y1bar;    // K+1
  std::vector<Vector> beta1bar; // K+1
  std::vector<Vector> y2bar;    // K+1
  int iterations = 0;
  bool converged = false;
  // sup-norm residual of the independently integrated mean dynamics versus the
  // affine reconstruction (algebra self-check, should be ~1e-10).
  double mean_dynamics_residual = 0.0;
};
RiccatiMFSolution solve_riccati_mf(const ModelSpec& spec, const TimeGrid& grid);

// Decentralized strategy for a fresh agent: evaluates
// u(t) = P_Gamma[R^{-1} E[-B' p - D' q | G_t]] from frozen mean-field offsets.
// Affine kind carries exact Riccati feedback (unconstrained, full information);
// Regression kind carries per-(step, node) least-squares feedback in the
// information variables, with the projection applied at evaluation.
struct DecentralizedPolicy {
  enum class Kind { Affine, Regression };
  Kind kind = Kind::Affine;
  TimeGrid grid;
  int n = 0, m = 0;
  InfoPattern info;
  ConstraintSpec constraint;
  std::vector<Matrix> R_at;                    // K entries, projection weight per step
  std::vector<std::vector<Matrix>> Kfb;        // Affine: node -> K
  std::vector<std::vector<Vector>> cfb;        // Affine: node -> K
  std::vector<std::vector<Matrix>> reg_coeff;  // Regression: node -> K, m x basis
  std::vector<std::vector<Vector>> a;          // node -> K+1, Euler-consistent mean
  std::vector<Vector> mean_alpha;              // K+1, population mean curve

  // x: agent state at step k; w_lag: delayed Brownian observation (Delayed only).
  Vector evaluate(int k, int node, const Vector& x, double w_lag) const;
  int basis_dim() const;
};

// Policy read off a converged Monte Carlo solution (regression kind; affine
// kind when the instance is unconstrained with full information).
DecentralizedPolicy decentralized_control(const CCSolution& sol, const ModelSpec& spec);

// Exact affine policy from the deterministic decoupling (no Monte Carlo noise).
DecentralizedPolicy make_riccati_policy(const ModelSpec& spec, const TimeGrid& grid);

// Fit the regression policy directly (used by decentralized_control and tests).
// The ensemble is needed only under delayed information, where the regression
// features are the training paths' lagged Brownian observations.
DecentralizedPolicy fit_regression_policy(const CCSolution& sol, const ModelSpec& spec,
                                          const PathEnsemble* ensemble = nullptr);

}  // namespace mft
