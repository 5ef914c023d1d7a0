#include "mft/wellposedness.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

namespace mft {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double spectral_norm(const Matrix& mat) {
  if (mat.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(mat);
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

double lambda_max_sym(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  return es.eigenvalues().maxCoeff();
}

// Breakpoints of every table; the coefficients are piecewise constant so all
// essential suprema are attained here.
std::vector<double> all_breakpoints(const ModelSpec& spec) {
  std::set<double> ts;
  auto add = [&ts](const CoefficientTable& t) {
    for (double x : t.times) ts.insert(x);
  };
  for (const auto& t : spec.A.per_node) add(t);
  for (const auto& t : spec.D.per_node) add(t);
  add(spec.B);
  add(spec.C);
  add(spec.F);
  add(spec.F_tilde);
  add(spec.Q);
  add(spec.H);
  add(spec.R);
  return {ts.begin(), ts.end()};
}

}  // namespace

ContractionReport compute_constants(const ModelSpec& spec) {
  ContractionReport rep;
  const int n = spec.n;
  const auto times = all_breakpoints(spec);
  const std::size_t nodes = spec.diversity.node_count();

  double norm_B = 0.0, norm_Rinv = 0.0, norm_D = 0.0;
  double rho1 = -kInf, rho2 = -kInf;
  double nA2 = 0.0, nA2bar = 0.0, nB2bar = 0.0, nB2tilde = 0.0, nC2 = 0.0, nC2bar = 0.0;

  for (double t : times) {
    const Matrix& B = spec.B.at(t);
    const Matrix& C = spec.C.at(t);
    const Matrix& F = spec.F.at(t);
    const Matrix& Ft = spec.F_tilde.at(t);
    const Matrix& Q = spec.Q.at(t);
    const Matrix& H = spec.H.at(t);
    const Matrix& R = spec.R.at(t);

    rep.norm_F = std::max(rep.norm_F, spectral_norm(F));
    rep.norm_C = std::max(rep.norm_C, spectral_norm(C));
    rep.norm_F_tilde = std::max(rep.norm_F_tilde, spectral_norm(Ft));
    norm_B = std::max(norm_B, spectral_norm(B));
    norm_Rinv = std::max(norm_Rinv, spectral_norm(R.inverse()));

    const Matrix Sbar = Q * H + H * Q - H * Q * H;

    Matrix A2 = Matrix::Zero(3 * n, n);
    A2.topRows(n) = -Q;
    A2.middleRows(n, n) = Q;
    nA2 = std::max(nA2, spectral_norm(A2));

    Matrix A2bar = Matrix::Zero(3 * n, n);
    A2bar.topRows(n) = Sbar;
    A2bar.bottomRows(n) = -Sbar;
    nA2bar = std::max(nA2bar, spectral_norm(A2bar));

    Matrix B2bar = Matrix::Zero(3 * n, 3 * n);
    B2bar.block(0, n, n, n) = F.transpose();
    B2bar.block(2 * n, n, n, n) = -F.transpose();
    nB2bar = std::max(nB2bar, spectral_norm(B2bar));

    Matrix B2tilde = Matrix::Zero(3 * n, 3 * n);
    B2tilde.block(0, 2 * n, n, n) = F.transpose();
    nB2tilde = std::max(nB2tilde, spectral_norm(B2tilde));

    Matrix C2 = Matrix::Zero(3 * n, 3 * n);
    C2.block(0, 0, n, n) = -C.transpose();
    C2.block(n, n, n, n) = -C.transpose();
    nC2 = std::max(nC2, spectral_norm(C2));

    Matrix C2bar = Matrix::Zero(3 * n, 3 * n);
    C2bar.block(0, n, n, n) = Ft.transpose();
    C2bar.block(2 * n, n, n, n) = -Ft.transpose();
    nC2bar = std::max(nC2bar, spectral_norm(C2bar));

    for (std::size_t node = 0; node < nodes; ++node) {
      const Matrix& A = spec.A.at(static_cast<int>(node), t);
      const Matrix& D = spec.D.at(static_cast<int>(node), t);
      norm_D = std::max(norm_D, spectral_norm(D));
      rho1 = std::max(rho1, lambda_max_sym(0.5 * (A + A.transpose())));

      Matrix B2 = Matrix::Zero(3 * n, 3 * n);
      B2.block(0, 0, n, n) = -A.transpose();
      B2.block(n, n, n, n) = -A.transpose();
      B2.block(2 * n, 2 * n, n, n) = -A.transpose() - F.transpose();
      rho2 = std::max(rho2, lambda_max_sym(-0.5 * (B2 + B2.transpose())));
    }
  }

  rep.rho1_star = rho1;
  rep.rho2_star = rho2;
  rep.k[1] = rep.norm_F;
  rep.k[2] = 0.0;
  rep.k[3] = norm_B * norm_Rinv * norm_B;
  rep.k[4] = 0.0;
  rep.k[5] = norm_B * norm_Rinv * norm_D;
  rep.k[6] = nA2;
  rep.k[7] = nA2bar;
  rep.k[8] = nB2bar;
  rep.k[9] = nB2tilde;
  rep.k[10] = nC2;
  rep.k[11] = nC2bar;
  rep.k[12] = std::sqrt(3.0) * rep.norm_C;
  rep.k[13] = std::sqrt(3.0) * rep.norm_F_tilde;
  rep.k[14] = 0.0;
  rep.k[15] = std::sqrt(6.0) * norm_D * norm_Rinv * norm_B;
  rep.k[16] = 0.0;
  rep.k[17] = std::sqrt(6.0) * norm_D * norm_Rinv * norm_D;

  auto [sat, margin] = check_a4(rep);
  rep.a4_satisfied = sat;
  rep.a4_margin = margin;
  rep.a4_lhs = 2.0 * rep.rho1_star + 2.0 * rep.rho2_star;
  rep.a4_rhs = rep.a4_lhs + margin;
  return rep;
}

std::pair<bool, double> check_a4(const ContractionReport& r) {
  const double lhs = 2.0 * r.rho1_star + 2.0 * r.rho2_star;
  const double rhs = -2.0 * r.norm_F - 2.0 * r.k[8] - 2.0 * r.k[9] - r.k[10] * r.k[10] -
                     r.k[11] * r.k[11] - 3.0 * r.norm_C * r.norm_C -
                     3.0 * r.norm_F_tilde * r.norm_F_tilde;
  return {lhs < rhs, rhs - lhs};
}

double contraction_modulus(const ContractionReport& r, double rho, const std::array<double, 9>& l) {
  for (int i = 1; i <= 8; ++i)
    if (!(l[i] > 0.0)) return kInf;
  const auto& k = r.k;
  const double rho1_bar = rho - 2.0 * r.rho1_star - 2.0 * k[1] - k[2] / l[1] - k[3] / l[2] -
                          k[4] / l[3] - k[5] / l[4] - k[12] * k[12] - k[13] * k[13];
  const double rho2_bar = -rho - 2.0 * r.rho2_star - 2.0 * k[8] - 2.0 * k[9] - k[6] / l[5] -
                          k[7] / l[6] - k[10] / l[7] - k[11] / l[8];
  const double z_margin = 1.0 - k[10] * l[7] - k[11] * l[8];
  if (!(rho1_bar > 0.0) || !(rho2_bar > 0.0) || !(z_margin > 0.0)) return kInf;
  const double backward_gain = k[6] * l[5] + k[7] * l[6];
  const double forward_gain_y = k[2] * l[1] + k[3] * l[2] + k[14] * k[14] + k[15] * k[15];
  const double forward_gain_z = k[4] * l[3] + k[5] * l[4] + k[12] * k[12] + k[16] * k[16] +
                                k[17] * k[17];
  return (1.0 / rho2_bar + 1.0 / z_margin) * (1.0 / rho1_bar) * backward_gain *
         std::max(forward_gain_y, forward_gain_z);
}

namespace {

// Coordinate descent over log-spaced l values at fixed rho.
double optimize_l(const ContractionReport& rep, double rho, std::array<double, 9>& l) {
  static const std::vector<double> grid = [] {
    std::vector<double> g;
    for (int e = -24; e <= 24; ++e) g.push_back(std::pow(10.0, e / 4.0));
    return g;
  }();
  for (int i = 1; i <= 8; ++i) l[i] = 1.0;
  double best = contraction_modulus(rep, rho, l);
  // l_i is paired with this k index in both the rho-bar terms and the gains.
  static constexpr int paired_k[9] = {0, 2, 3, 4, 5, 6, 7, 10, 11};
  for (int sweep = 0; sweep < 6; ++sweep) {
    bool improved = false;
    for (int i = 1; i <= 8; ++i) {
      if (rep.k[paired_k[i]] == 0.0) continue;  // l_i drops out of the formula
      const double keep = l[i];
      double local_best = best;
      double local_arg = keep;
      for (double cand : grid) {
        l[i] = cand;
        const double q = contraction_modulus(rep, rho, l);
        if (q < local_best) {
          local_best = q;
          local_arg = cand;
        }
      }
      l[i] = local_arg;
      if (local_best < best) {
        best = local_best;
        improved = true;
      }
    }
    if (!improved) break;
  }
  return best;
}

}  // namespace

ContractionReport optimize_modulus(const ContractionReport& report) {
  ContractionReport best = report;
  best.modulus = kInf;
  best.certified = false;
  best.rho = 0.0;
  for (int i = 1; i <= 8; ++i) best.l[i] = 1.0;

  auto consider = [&best, &report](double rho) {
    std::array<double, 9> l{};
    const double q = optimize_l(report, rho, l);
    if (q < best.modulus) {
      best.modulus = q;
      best.rho = rho;
      best.l = l;
    }
  };

  for (int i = 0; i <= 200; ++i) consider(-50.0 + 0.5 * i);
  // Refine around the incumbent.
  if (std::isfinite(best.modulus)) {
    const double center = best.rho;
    for (int i = -20; i <= 20; ++i) consider(center + 0.025 * i);
  }
  best.certified = best.modulus < 1.0;
  return best;
}

}  // namespace mft
