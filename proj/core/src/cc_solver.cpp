#include "mft/cc_solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "mft/wellposedness.hpp"

namespace mft {

namespace {

// Piecewise-constant data evaluated once per grid step.
struct StepCoeffs {
  Matrix B, C, F, Ft, Q, Sbar, Rinv;
  std::vector<Matrix> A, D;  // per diversity node
};

std::vector<StepCoeffs> tabulate(const ModelSpec& spec, const TimeGrid& grid) {
  const std::size_t nodes = spec.diversity.node_count();
  std::vector<StepCoeffs> out(grid.steps);
  for (int k = 0; k < grid.steps; ++k) {
    const double t = grid.time(k);
    StepCoeffs& c = out[k];
    c.B = spec.B.at(t);
    c.C = spec.C.at(t);
    c.F = spec.F.at(t);
    c.Ft = spec.F_tilde.at(t);
    c.Q = spec.Q.at(t);
    const Matrix& H = spec.H.at(t);
    c.Sbar = c.Q * H + H * c.Q - H * c.Q * H;
    c.Rinv = spec.R.at(t).inverse();
    c.A.reserve(nodes);
    c.D.reserve(nodes);
    for (std::size_t j = 0; j < nodes; ++j) {
      c.A.push_back(spec.A.at(static_cast<int>(j), t));
      c.D.push_back(spec.D.at(static_cast<int>(j), t));
    }
  }
  return out;
}

// Fitted least squares of target rows on the columns of G (basis x samples),
// via rank-revealing QR so collinear bases degrade to a fit on their span.
// Rows are normalized before the rank cut so the truncation is scale
// invariant; near-collinear directions are dropped rather than amplified,
// which keeps the Z-regression feedback of the Picard sweep stable.
struct BasisFit {
  Matrix scaled;
  Eigen::ColPivHouseholderQR<Matrix> qr;

  explicit BasisFit(const Matrix& G) : scaled(G) {
    for (Eigen::Index r = 0; r < scaled.rows(); ++r) {
      const double norm = scaled.row(r).norm();
      if (norm > 0.0) scaled.row(r) /= norm;
    }
    qr.setThreshold(1e-6);
    qr.compute(scaled.transpose());
  }
  Matrix fitted(const Eigen::Ref<const Matrix>& target) const {
    return qr.solve(target.transpose()).transpose() * scaled;
  }
};

// Conditional mean m = E_k[y] and Z-field z = E_k[y dW]/dt for one block.
// The dW regression acts on the centered residual y - m: the two targets
// agree in conditional expectation since dW is independent of the basis,
// but centering removes the O(1/sqrt(dt)) noise of the mean component.
void fit_mean_and_z(const BasisFit& fit, const Eigen::Ref<const Matrix>& y,
                    const Eigen::Ref<const Vector>& dw_over_dt, Matrix& m, Matrix& z) {
  m = fit.fitted(y);
  const Matrix zt =
      ((y - m).array().rowwise() * dw_over_dt.transpose().array()).matrix();
  z = fit.fitted(zt);
}

Matrix fit_one(const Matrix& G, const Eigen::Ref<const Matrix>& target) {
  return BasisFit(G).fitted(target);
}

// Polynomial regression basis {1, w, w^2} in the Brownian level over one
// theta block. The basis is exogenous: it does not move with the Picard
// iterate, so every sweep is affine in the fields and the fixed-point
// iteration cannot feed regression jitter back into itself.
Matrix level_basis(const Eigen::Ref<const Vector>& wlev) {
  Matrix G(3, wlev.size());
  G.row(0).setOnes();
  G.row(1) = wlev.transpose();
  G.row(2) = wlev.array().square().matrix().transpose();
  return G;
}

}  // namespace

CCSolution solve_cc(const ModelSpec& spec, const TimeGrid& grid, const PathEnsemble& ensemble,
                    double tol, int max_iter) {
  CCOptions opt;
  opt.tol = tol;
  opt.max_iter = max_iter;
  return solve_cc(spec, grid, ensemble, opt);
}

CCSolution solve_cc(const ModelSpec& spec, const TimeGrid& grid, const PathEnsemble& ensemble,
                    const CCOptions& options) {
  {
    const auto errors = validate(spec);
    if (!errors.empty()) throw std::invalid_argument("invalid model: " + errors.front());
  }
  if (ensemble.steps != grid.steps || ensemble.paths <= 0)
    throw std::invalid_argument("ensemble does not match grid");
  if (ensemble.dw.size() != static_cast<std::size_t>(ensemble.paths) * grid.steps ||
      ensemble.theta_node.size() != static_cast<std::size_t>(ensemble.paths))
    throw std::invalid_argument("ensemble is malformed");
  if (!(options.tol > 0.0) || options.max_iter < 1 || !(options.damping > 0.0) ||
      options.damping > 1.0)
    throw std::invalid_argument("bad solver options");

  const int K = grid.steps;
  const int M = ensemble.paths;
  const int n = spec.n;
  const int m = spec.m;
  const double dt = grid.dt();
  const double w = options.damping;
  const std::size_t nodes = spec.diversity.node_count();

  double rho = options.rho;
  if (std::isnan(rho)) {
    const ContractionReport rep = optimize_modulus(compute_constants(spec));
    rho = rep.a4_satisfied ? rep.rho : 0.0;
  }

  const auto coeffs = tabulate(spec, grid);

  // Paths are processed in theta-sorted slots so per-node work is contiguous.
  std::vector<int> slot_path(M);
  std::vector<int> node_lo(nodes + 1, 0);
  {
    std::vector<int> count(nodes, 0);
    for (int p = 0; p < M; ++p) ++count[ensemble.theta_node[p]];
    for (std::size_t j = 0; j < nodes; ++j) node_lo[j + 1] = node_lo[j] + count[j];
    std::vector<int> cursor(node_lo.begin(), node_lo.end() - 1);
    for (int p = 0; p < M; ++p) slot_path[cursor[ensemble.theta_node[p]]++] = p;
  }

  Matrix dws(M, K);  // column k = increments of step k in slot order
  for (int s = 0; s < M; ++s)
    for (int k = 0; k < K; ++k) dws(s, k) = ensemble.increment(slot_path[s], k);

  Matrix wcum(M, K + 1);  // Brownian levels in slot order
  wcum.col(0).setZero();
  for (int k = 0; k < K; ++k) wcum.col(k + 1) = wcum.col(k) + dws.col(k);

  // One regression fit per (step, node); factored once since the basis is
  // a function of the noise alone.
  std::vector<std::vector<BasisFit>> fits(K);
  for (int k = 0; k < K; ++k) {
    fits[k].reserve(nodes);
    for (std::size_t j = 0; j < nodes; ++j) {
      const int lo = node_lo[j], len = node_lo[j + 1] - node_lo[j];
      fits[k].emplace_back(level_basis(wcum.col(k).segment(lo, std::max(len, 0))));
    }
  }

  auto zeros = [&](int count, int rows) { return Field(count, Matrix::Zero(rows, M)); };
  Field alpha = zeros(K + 1, n);
  Field gamma = zeros(K + 1, n);
  Field vartheta = zeros(K, n);
  Field y1 = zeros(K + 1, n);
  Field beta1 = zeros(K, n);
  Field control = zeros(K, m);
  Field pre_control = zeros(K, m);
  std::vector<std::vector<Vector>> y2(nodes, std::vector<Vector>(K + 1, Vector::Zero(n)));

  for (int s = 0; s < M; ++s) alpha[0].col(s) = spec.initial_state;

  std::vector<Vector> xbar(K + 1), ybar1(K + 1), b1bar(K), y2bar(K + 1);
  ybar1[K] = Vector::Zero(n);
  y2bar[K] = Vector::Zero(n);

  const bool diag_R = [&] {
    for (int k = 0; k < K; ++k) {
      const Matrix& R = spec.R.at(grid.time(k));
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
          if (i != j && R(i, j) != 0.0) return false;
    }
    return true;
  }();

  auto project_step = [&](int k, const Matrix& pre, Matrix& out) {
    switch (spec.constraint.kind) {
      case ConstraintKind::FullSpace:
        out = pre;
        return;
      case ConstraintKind::NonnegativeOrthant:
        if (diag_R) {
          out = pre.cwiseMax(0.0);
          return;
        }
        break;
      case ConstraintKind::Box:
        if (diag_R) {
          out = pre;
          for (int i = 0; i < m; ++i)
            out.row(i) = out.row(i).cwiseMax(spec.constraint.lo[i]).cwiseMin(spec.constraint.hi[i]);
          return;
        }
        break;
    }
    const WeightedProjection proj(spec.R.at(grid.time(k)), spec.constraint);
    out.resizeLike(pre);
    for (int s = 0; s < M; ++s) out.col(s) = proj(pre.col(s));
  };

  // Conditional expectation given the information sigma-algebra at step k,
  // applied to an m x M matrix of per-slot values.
  Matrix cond_buf;
  auto condition_step = [&](int k, const Matrix& raw) -> const Matrix& {
    switch (spec.info.kind) {
      case InfoKind::Full:
        return raw;
      case InfoKind::Trivial: {
        const Vector mu = raw.rowwise().mean();
        cond_buf = mu.replicate(1, M);
        return cond_buf;
      }
      case InfoKind::Delayed:
        break;
    }
    const double t = grid.time(k);
    const bool pre_delay = t <= spec.info.delay + 1e-12;
    int lag = 0;
    if (!pre_delay) {
      lag = std::min(static_cast<int>(std::floor((t - spec.info.delay) / dt + 1e-9)), K);
    }
    cond_buf.resizeLike(raw);
    for (std::size_t j = 0; j < nodes; ++j) {
      const int lo = node_lo[j], len = node_lo[j + 1] - node_lo[j];
      if (len == 0) continue;
      if (pre_delay || len < 3) {
        const Vector mu = raw.middleCols(lo, len).rowwise().mean();
        cond_buf.middleCols(lo, len) = mu.replicate(1, len);
        continue;
      }
      Matrix G(3, len);
      G.row(0).setOnes();
      G.row(1) = wcum.col(lag).segment(lo, len).transpose();
      G.row(2) = G.row(1).array().square().matrix();
      cond_buf.middleCols(lo, len) = fit_one(G, raw.middleCols(lo, len));
    }
    return cond_buf;
  };

  CCSolution sol;
  sol.grid = grid;
  sol.n = n;
  sol.m = m;
  sol.paths = M;
  sol.rho = rho;
  sol.theta_node = ensemble.theta_node;

  const double tol_sq = options.tol * options.tol;
  Matrix cand, raw, pre, m1, z1;

  for (int iter = 0; iter < options.max_iter; ++iter) {
    double res = 0.0;
    auto weight = [&](int k) { return std::exp(-rho * grid.time(k)) * dt; };

    // (i) control field from the previous (gamma, vartheta) iterate
    for (int k = 0; k < K; ++k) {
      raw.resize(m, M);
      for (std::size_t j = 0; j < nodes; ++j) {
        const int lo = node_lo[j], len = node_lo[j + 1] - node_lo[j];
        if (len == 0) continue;
        raw.middleCols(lo, len).noalias() = -(coeffs[k].B.transpose() * gamma[k].middleCols(lo, len));
        raw.middleCols(lo, len).noalias() -= coeffs[k].D[j].transpose() * vartheta[k].middleCols(lo, len);
      }
      const Matrix& conditioned = condition_step(k, raw);
      pre_control[k].noalias() = coeffs[k].Rinv * conditioned;
      project_step(k, pre_control[k], control[k]);
    }

    // (ii) forward Euler for alpha with running spatial means
    for (int k = 0; k < K; ++k) {
      xbar[k] = alpha[k].rowwise().mean();
      cand.resize(n, M);
      for (std::size_t j = 0; j < nodes; ++j) {
        const int lo = node_lo[j], len = node_lo[j + 1] - node_lo[j];
        if (len == 0) continue;
        auto X = alpha[k].middleCols(lo, len);
        auto U = control[k].middleCols(lo, len);
        Matrix drift = coeffs[k].A[j] * X + coeffs[k].B * U;
        drift.colwise() += coeffs[k].F * xbar[k];
        Matrix diff = coeffs[k].C * X + coeffs[k].D[j] * U;
        diff.colwise() += coeffs[k].Ft * xbar[k];
        cand.middleCols(lo, len) = X + dt * drift +
            (diff.array().rowwise() * dws.col(k).segment(lo, len).transpose().array()).matrix();
      }
      cand -= alpha[k + 1];  // now holds the sweep increment
      res += weight(k + 1) * w * w * cand.squaredNorm() / M;
      alpha[k + 1] += w * cand;
    }
    xbar[K] = alpha[K].rowwise().mean();

    // (iii) backward regression pass for (y1, beta1)
    for (int k = K - 1; k >= 0; --k) {
      for (std::size_t j = 0; j < nodes; ++j) {
        const int lo = node_lo[j], len = node_lo[j + 1] - node_lo[j];
        if (len == 0) continue;
        fit_mean_and_z(fits[k][j], y1[k + 1].middleCols(lo, len),
                       dws.col(k).segment(lo, len) / dt, m1, z1);

        auto B1 = beta1[k].middleCols(lo, len);
        z1 -= B1;
        res += weight(k) * w * w * z1.squaredNorm() / M;
        B1 += w * z1;

        // y1_k = E_k[y1_{k+1}] - dt (Q a - A' E_k[y1_{k+1}] - C' beta1)
        Matrix ycand = m1 - dt * (coeffs[k].Q * alpha[k].middleCols(lo, len) -
                                  coeffs[k].A[j].transpose() * m1 - coeffs[k].C.transpose() * B1);
        auto Y = y1[k].middleCols(lo, len);
        ycand -= Y;
        res += weight(k) * w * w * ycand.squaredNorm() / M;
        Y += w * ycand;
      }
      ybar1[k] = y1[k].rowwise().mean();
      b1bar[k] = beta1[k].rowwise().mean();
    }

    // (iv) deterministic backward Euler for y2 per node
    for (std::size_t j = 0; j < nodes; ++j) {
      for (int k = K - 1; k >= 0; --k) {
        const Vector drift = -coeffs[k].Sbar * xbar[k] - coeffs[k].F.transpose() * ybar1[k] -
                             coeffs[k].Ft.transpose() * b1bar[k] -
                             (coeffs[k].A[j] + coeffs[k].F).transpose() * y2[j][k + 1];
        Vector cand2 = y2[j][k + 1] - dt * drift - y2[j][k];
        res += weight(k) * spec.diversity.weights[j] * w * w * cand2.squaredNorm();
        y2[j][k] += w * cand2;
      }
    }
    for (int k = 0; k <= K; ++k) {
      y2bar[k] = Vector::Zero(n);
      for (std::size_t j = 0; j < nodes; ++j) y2bar[k] += spec.diversity.weights[j] * y2[j][k];
    }

    // (v) backward regression pass for (gamma, vartheta) with the full driver
    for (int k = K - 1; k >= 0; --k) {
      const Vector hvec = coeffs[k].Sbar * xbar[k] +
                          coeffs[k].F.transpose() * (y2bar[k] + ybar1[k]) +
                          coeffs[k].Ft.transpose() * b1bar[k];
      for (std::size_t j = 0; j < nodes; ++j) {
        const int lo = node_lo[j], len = node_lo[j + 1] - node_lo[j];
        if (len == 0) continue;
        fit_mean_and_z(fits[k][j], gamma[k + 1].middleCols(lo, len),
                       dws.col(k).segment(lo, len) / dt, m1, z1);

        auto TH = vartheta[k].middleCols(lo, len);
        z1 -= TH;
        res += weight(k) * w * w * z1.squaredNorm() / M;
        TH += w * z1;

        // gamma_k = E_k[g_{k+1}] - dt (-Q a + Sbar xbar - A' E_k[g_{k+1}] - C' th + h)
        Matrix gcand = m1 - dt * (-(coeffs[k].Q * alpha[k].middleCols(lo, len)) -
                                  coeffs[k].A[j].transpose() * m1 - coeffs[k].C.transpose() * TH);
        gcand.colwise() -= dt * hvec;
        auto GG = gamma[k].middleCols(lo, len);
        gcand -= GG;
        res += weight(k) * w * w * gcand.squaredNorm() / M;
        GG += w * gcand;
      }
    }

    sol.residual_history.push_back(res);
    sol.iterations = iter + 1;
    if (res <= tol_sq) {
      sol.converged = true;
      break;
    }
  }

  // Return fields in path order; the slot layout is an internal detail.
  std::vector<int> slot_of(M);
  for (int s = 0; s < M; ++s) slot_of[slot_path[s]] = s;
  auto unsort = [&](Field& f) {
    Matrix tmp;
    for (auto& mat : f) {
      tmp.resize(mat.rows(), M);
      for (int p = 0; p < M; ++p) tmp.col(p) = mat.col(slot_of[p]);
      mat.swap(tmp);
    }
  };
  unsort(alpha);
  unsort(gamma);
  unsort(vartheta);
  unsort(y1);
  unsort(beta1);
  unsort(control);
  unsort(pre_control);

  sol.alpha = std::move(alpha);
  sol.gamma = std::move(gamma);
  sol.vartheta = std::move(vartheta);
  sol.y1 = std::move(y1);
  sol.beta1 = std::move(beta1);
  sol.control = std::move(control);
  sol.pre_control = std::move(pre_control);
  sol.y2 = std::move(y2);

  auto path_mean = [&](const Field& f, int count) {
    std::vector<Vector> out(count);
    for (int k = 0; k < count; ++k) {
      Vector mu = Vector::Zero(f[k].rows());
      for (int p = 0; p < M; ++p) mu += f[k].col(p);
      out[k] = mu / static_cast<double>(M);
    }
    return out;
  };
  sol.mean_alpha = path_mean(sol.alpha, K + 1);
  sol.mean_gamma = path_mean(sol.gamma, K + 1);
  sol.mean_y1 = path_mean(sol.y1, K + 1);
  sol.mean_beta1 = path_mean(sol.beta1, K);
  sol.y2_mean.resize(K + 1);
  for (int k = 0; k <= K; ++k) {
    sol.y2_mean[k] = Vector::Zero(n);
    for (std::size_t j = 0; j < nodes; ++j)
      sol.y2_mean[k] += spec.diversity.weights[j] * sol.y2[j][k];
  }
  return sol;
}

}  // namespace mft
