#include "mft/population.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mft {

namespace {

// Deterministic proportional type counts (largest remainder).
std::vector<int> proportional_types(const DiversityLaw& law, int N) {
  const int nodes = static_cast<int>(law.node_count());
  std::vector<int> count(nodes, 0);
  std::vector<std::pair<double, int>> frac(nodes);
  int assigned = 0;
  for (int j = 0; j < nodes; ++j) {
    const double share = law.weights[j] * N;
    count[j] = static_cast<int>(std::floor(share));
    assigned += count[j];
    frac[j] = {share - count[j], j};
  }
  std::stable_sort(frac.begin(), frac.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int r = 0; r < N - assigned; ++r) ++count[frac[r % nodes].second];
  std::vector<int> types;
  types.reserve(N);
  for (int j = 0; j < nodes; ++j) types.insert(types.end(), count[j], j);
  return types;
}

int delayed_lag(const InfoPattern& info, const TimeGrid& grid, int k) {
  const double t = grid.time(k);
  if (t <= info.delay + 1e-12) return 0;
  return std::min(static_cast<int>(std::floor((t - info.delay) / grid.dt() + 1e-9)), grid.steps);
}

}  // namespace

PopulationRun simulate_population(const ModelSpec& spec, const DecentralizedPolicy& policy,
                                  int N, int replications, std::uint64_t seed) {
  if (N < 1) throw std::invalid_argument("population size must be at least 1");
  if (replications < 1) throw std::invalid_argument("need at least one replication");
  if (policy.n != spec.n || policy.m != spec.m)
    throw std::invalid_argument("policy does not match model dimensions");

  const TimeGrid grid = policy.grid;
  const int K = grid.steps;
  const int n = spec.n;
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);

  PopulationRun run;
  run.N = N;
  run.replications = replications;
  run.grid = grid;
  run.states.resize(replications);
  run.controls.resize(replications);
  run.state_average.resize(replications);

  std::vector<double> rep_costs(replications, 0.0);
  std::vector<std::vector<double>> avg_dev_sq(K + 1, std::vector<double>());
  double frozen_acc = 0.0;

  for (int r = 0; r < replications; ++r) {
    std::vector<int> node(N);
    std::vector<std::vector<double>> dw(N, std::vector<double>(K));
    std::vector<std::vector<double>> wlevel(N, std::vector<double>(K + 1, 0.0));
    for (int i = 0; i < N; ++i) {
      PathRng rng(seed, (static_cast<std::uint64_t>(r) << 32) | static_cast<std::uint32_t>(i));
      node[i] = sample_node(spec.diversity, rng.uniform());
      for (int k = 0; k < K; ++k) {
        dw[i][k] = sqdt * rng.normal();
        wlevel[i][k + 1] = wlevel[i][k] + dw[i][k];
      }
    }

    std::vector<Vector> x(N, spec.initial_state), l(N, spec.initial_state);
    std::vector<double> frozen_sup(N, 0.0);
    auto& states = run.states[r];
    auto& controls = run.controls[r];
    states.assign(N, std::vector<Vector>(K + 1));
    controls.assign(N, std::vector<Vector>(K));
    auto& avg = run.state_average[r];
    avg.assign(K + 1, Vector::Zero(n));

    double cost = 0.0;
    for (int k = 0; k <= K; ++k) {
      Vector xbar = Vector::Zero(n);
      for (int i = 0; i < N; ++i) {
        states[i][k] = x[i];
        xbar += x[i];
      }
      xbar /= static_cast<double>(N);
      avg[k] = xbar;
      avg_dev_sq[k].push_back((xbar - policy.mean_alpha[k]).squaredNorm());

      const double t = grid.time(k);
      const double wk = (k == 0 || k == K) ? 0.5 : 1.0;
      const Matrix& Q = spec.Q.at(t);
      const Matrix& H = spec.H.at(t);
      for (int i = 0; i < N; ++i) {
        const Vector dev = x[i] - H * xbar;
        cost += wk * dt * 0.5 * dev.dot(Q * dev);
        frozen_sup[i] = std::max(frozen_sup[i], (l[i] - x[i]).squaredNorm());
      }
      if (k == K) break;

      const Matrix& B = spec.B.at(t);
      const Matrix& C = spec.C.at(t);
      const Matrix& F = spec.F.at(t);
      const Matrix& Ft = spec.F_tilde.at(t);
      const Matrix& R = spec.R.at(t);
      const double ck = (k == 0) ? 0.5 : 1.0;
      const int lag = delayed_lag(spec.info, grid, k);
      for (int i = 0; i < N; ++i) {
        const Matrix& A = spec.A.at(node[i], t);
        const Matrix& D = spec.D.at(node[i], t);
        // The strategy is evaluated on the frozen state: it is decentralized,
        // driven only by the agent's own noise and the solved offsets.
        const Vector u = policy.evaluate(k, node[i], l[i], wlevel[i][lag]);
        controls[i][k] = u;
        cost += ck * dt * 0.5 * u.dot(R * u);

        const Vector xn = x[i] + dt * (A * x[i] + B * u + F * xbar) +
                          dw[i][k] * (C * x[i] + D * u + Ft * xbar);
        const Vector ln = l[i] + dt * (A * l[i] + B * u + F * policy.mean_alpha[k]) +
                          dw[i][k] * (C * l[i] + D * u + Ft * policy.mean_alpha[k]);
        x[i] = xn;
        l[i] = ln;
      }
    }
    rep_costs[r] = cost / N;
    frozen_acc += std::accumulate(frozen_sup.begin(), frozen_sup.end(), 0.0) / N;
  }

  auto [mu, se] = mean_and_se(rep_costs);
  run.social_cost = mu;
  run.social_cost_se = se;
  run.frozen_gap = frozen_acc / replications;
  double worst = 0.0;
  for (int k = 0; k <= K; ++k) {
    const double mean_dev =
        std::accumulate(avg_dev_sq[k].begin(), avg_dev_sq[k].end(), 0.0) / replications;
    worst = std::max(worst, mean_dev);
  }
  run.consistency_error = worst;
  return run;
}

PopulationRun simulate_population(const ModelSpec& spec, const CCSolution& sol, int N,
                                  int replications, std::uint64_t seed) {
  return simulate_population(spec, decentralized_control(sol, spec), N, replications, seed);
}

double centralized_oracle(const ModelSpec& spec, int N, const TimeGrid& grid) {
  if (spec.constraint.kind != ConstraintKind::FullSpace || spec.info.kind != InfoKind::Full)
    throw std::invalid_argument("centralized oracle needs full space and full information");
  if (N < 1) throw std::invalid_argument("population size must be at least 1");
  const int n = spec.n, m = spec.m;
  if (static_cast<long long>(N) * n > 256)
    throw std::invalid_argument("stacked dimension guard exceeded (N*n > 256)");

  const int K = grid.steps;
  const double dt = grid.dt();
  const int dn = N * n, dm = N * m;
  const std::vector<int> types = proportional_types(spec.diversity, N);

  auto stacked_Q = [&](double t) {
    const Matrix& Q = spec.Q.at(t);
    const Matrix& H = spec.H.at(t);
    const Matrix mix = (H.transpose() * Q * H - Q * H - H.transpose() * Q) / N;
    Matrix out = Matrix::Zero(dn, dn);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) {
        out.block(i * n, j * n, n, n) = mix;
        if (i == j) out.block(i * n, j * n, n, n) += Q;
      }
    return out;
  };

  // Terminal state weight carries the trapezoid half cell.
  Matrix P = 0.5 * dt * stacked_Q(grid.horizon);

  for (int k = K - 1; k >= 0; --k) {
    const double t = grid.time(k);
    const double ck = (k == 0) ? 0.5 : 1.0;
    const Matrix& B = spec.B.at(t);
    const Matrix& C = spec.C.at(t);
    const Matrix& F = spec.F.at(t);
    const Matrix& Ft = spec.F_tilde.at(t);
    const Matrix& R = spec.R.at(t);

    Matrix Mk = Matrix::Identity(dn, dn);
    Matrix Nk = Matrix::Zero(dn, dm);
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < N; ++j) {
        Mk.block(i * n, j * n, n, n) += dt * F / N;
        if (i == j) Mk.block(i * n, j * n, n, n) += dt * spec.A.at(types[i], t);
      }
      Nk.block(i * n, i * m, n, m) = dt * B;
    }

    // Noise i loads only row-block i: its state row is F~/N everywhere plus C
    // at the diagonal, its control row is D at the diagonal.
    Matrix sumDPD = Matrix::Zero(dm, dm);
    Matrix sumDPC = Matrix::Zero(dm, dn);
    Matrix sumCPC = Matrix::Zero(dn, dn);
    for (int i = 0; i < N; ++i) {
      const Matrix& D = spec.D.at(types[i], t);
      const Matrix Pii = P.block(i * n, i * n, n, n);
      Matrix row(n, dn);
      for (int j = 0; j < N; ++j) row.middleCols(j * n, n) = Ft / N;
      row.middleCols(i * n, n) += C;
      sumDPD.block(i * m, i * m, m, m) = D.transpose() * Pii * D;
      sumDPC.middleRows(i * m, m) = D.transpose() * Pii * row;
      sumCPC += row.transpose() * Pii * row;
    }

    Matrix Lambda = Matrix::Zero(dm, dm);
    for (int i = 0; i < N; ++i) Lambda.block(i * m, i * m, m, m) = ck * dt * R;
    Lambda += Nk.transpose() * P * Nk + dt * sumDPD;
    const Matrix L = Nk.transpose() * P * Mk + dt * sumDPC;
    const Matrix Pnext = ck * dt * stacked_Q(t) + Mk.transpose() * P * Mk + dt * sumCPC -
                         L.transpose() * Lambda.ldlt().solve(L);
    P = 0.5 * (Pnext + Pnext.transpose());
    if (!P.allFinite() || P.cwiseAbs().maxCoeff() > 1e12)
      throw std::runtime_error("stacked riccati blow-up");
  }

  Vector xi0(dn);
  for (int i = 0; i < N; ++i) xi0.segment(i * n, n) = spec.initial_state;
  return 0.5 * xi0.dot(P * xi0) / N;
}

std::pair<double, double> optimality_gap(const ModelSpec& spec, const DecentralizedPolicy& policy,
                                         int N, int replications, std::uint64_t seed) {
  const PopulationRun run = simulate_population(spec, policy, N, replications, seed);
  const double opt = centralized_oracle(spec, N, policy.grid);
  return {run.social_cost - opt, run.social_cost_se};
}

std::pair<double, double> optimality_gap(const ModelSpec& spec, const CCSolution& sol, int N,
                                         int replications, std::uint64_t seed) {
  return optimality_gap(spec, decentralized_control(sol, spec), N, replications, seed);
}

VariationalDiagnostics variational_diagnostics(const ModelSpec& spec, const CCSolution& sol,
                                               int N, const std::vector<Vector>& perturbation,
                                               std::uint64_t seed, int replications) {
  if (N < 2) throw std::invalid_argument("variational diagnostics need N >= 2");
  const TimeGrid grid = sol.grid;
  const int K = grid.steps;
  if (perturbation.size() < static_cast<std::size_t>(K))
    throw std::invalid_argument("perturbation path shorter than the grid");
  const int n = spec.n;
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);
  const int nodes = static_cast<int>(spec.diversity.node_count());

  VariationalDiagnostics diag;
  diag.N = N;
  diag.replications = replications;
  diag.grid = grid;
  diag.delta_x_i.assign(K + 1, Vector::Zero(n));
  diag.delta_x_minus_i.assign(K + 1, Vector::Zero(n));
  diag.x_star_j.assign(K + 1, Vector::Zero(n));
  diag.x_star_star.assign(K + 1, Vector::Zero(n));

  double acc_minor = 0.0, acc_esup = 0.0;
  std::vector<double> e_at(K + 1, 0.0);

  for (int r = 0; r < replications; ++r) {
    std::vector<int> node(N);
    std::vector<std::vector<double>> dw(N, std::vector<double>(K));
    for (int i = 0; i < N; ++i) {
      PathRng rng(seed, (static_cast<std::uint64_t>(r) << 32) | static_cast<std::uint32_t>(i));
      node[i] = sample_node(spec.diversity, rng.uniform());
      for (int k = 0; k < K; ++k) dw[i][k] = sqdt * rng.normal();
    }

    std::vector<Vector> dx(N, Vector::Zero(n));       // finite-N variations
    std::vector<Vector> xstar(N, Vector::Zero(n));    // limits of N*dx_j, j != 0
    std::vector<Vector> xss(nodes, Vector::Zero(n));  // per-node limit ODE
    std::vector<double> minor_sup(N, 0.0);
    double agg_sup = 0.0;

    for (int k = 0; k <= K; ++k) {
      Vector dsum = Vector::Zero(n);
      for (int i = 0; i < N; ++i) dsum += dx[i];
      const Vector dxN = dsum / N;
      const Vector dminus = dsum - dx[0];
      Vector xss_bar = Vector::Zero(n);
      for (int j = 0; j < nodes; ++j) xss_bar += spec.diversity.weights[j] * xss[j];

      diag.delta_x_i[k] += dx[0] / replications;
      diag.delta_x_minus_i[k] += dminus / replications;
      diag.x_star_star[k] += xss_bar / replications;
      if (N > 1) diag.x_star_j[k] += xstar[1] / replications;

      for (int i = 1; i < N; ++i)
        minor_sup[i] = std::max(minor_sup[i], (N * dx[i] - xstar[i]).squaredNorm());
      const double agg = (xss_bar - dminus).squaredNorm();
      agg_sup = std::max(agg_sup, agg);
      e_at[k] += agg / replications;
      if (k == K) break;

      const double t = grid.time(k);
      const Matrix& B = spec.B.at(t);
      const Matrix& C = spec.C.at(t);
      const Matrix& F = spec.F.at(t);
      const Matrix& Ft = spec.F_tilde.at(t);
      const Vector du = perturbation[k];

      std::vector<Vector> dx_new(N), xstar_new(N);
      for (int i = 0; i < N; ++i) {
        const Matrix& A = spec.A.at(node[i], t);
        const Matrix& D = spec.D.at(node[i], t);
        Vector drift = A * dx[i] + F * dxN;
        Vector diff = C * dx[i] + Ft * dxN;
        if (i == 0) {
          drift += B * du;
          diff += D * du;
        }
        dx_new[i] = dx[i] + dt * drift + dw[i][k] * diff;
        if (i > 0) {
          const Vector sdrift = A * xstar[i] + F * dx[0] + F * xss_bar;
          const Vector sdiff = C * xstar[i] + Ft * dx[0] + Ft * xss_bar;
          xstar_new[i] = xstar[i] + dt * sdrift + dw[i][k] * sdiff;
        } else {
          xstar_new[i] = xstar[i];
        }
      }
      for (int j = 0; j < nodes; ++j) {
        const Matrix& A = spec.A.at(j, t);
        xss[j] += dt * (A * xss[j] + F * dx[0] + F * xss[j]);
      }
      dx = std::move(dx_new);
      xstar = std::move(xstar_new);
    }

    for (int i = 1; i < N; ++i) acc_minor += minor_sup[i] / ((N - 1.0) * replications);
    acc_esup += agg_sup / replications;
  }

  diag.gap_rescaled_minor = acc_minor;
  diag.gap_aggregate_esup = acc_esup;
  diag.gap_aggregate_supe = *std::max_element(e_at.begin(), e_at.end());
  return diag;
}

}  // namespace mft
