#include "mft/equivalence.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mft {

namespace {

struct Accum {
  std::vector<Vector> s1, s2;     // per k: sum x, sum x^2 componentwise
  std::vector<double> q1, q2;     // per k: sum |x|^2, sum |x|^4
  int count = 0;

  void init(int K, int n) {
    s1.assign(K + 1, Vector::Zero(n));
    s2.assign(K + 1, Vector::Zero(n));
    q1.assign(K + 1, 0.0);
    q2.assign(K + 1, 0.0);
    count = 0;
  }
  void add(int k, const Vector& x) {
    s1[k] += x;
    s2[k] += x.array().square().matrix();
    const double sq = x.squaredNorm();
    q1[k] += sq;
    q2[k] += sq * sq;
  }
  MomentCurve finish() const {
    MomentCurve c;
    const int K = static_cast<int>(s1.size()) - 1;
    const double M = count;
    c.mean.resize(K + 1);
    c.mean_se.resize(K + 1);
    c.second.resize(K + 1);
    c.second_se.resize(K + 1);
    for (int k = 0; k <= K; ++k) {
      c.mean[k] = s1[k] / M;
      Vector var = (s2[k] / M - c.mean[k].array().square().matrix()).cwiseMax(0.0);
      c.mean_se[k] = (var * (M / std::max(M - 1.0, 1.0)) / M).cwiseSqrt();
      c.second[k] = q1[k] / M;
      const double v = std::max(0.0, q2[k] / M - c.second[k] * c.second[k]);
      c.second_se[k] = std::sqrt(v * (M / std::max(M - 1.0, 1.0)) / M);
    }
    return c;
  }
};

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

}  // namespace

SystemsComparison simulate_p_systems(const ModelSpec& spec, const std::vector<Vector>& u,
                                     const TimeGrid& grid, int paths, std::uint64_t seed) {
  {
    const auto errors = validate(spec);
    if (!errors.empty()) throw std::invalid_argument("invalid model: " + errors.front());
  }
  const int K = grid.steps;
  if (u.size() < static_cast<std::size_t>(K))
    throw std::invalid_argument("control path shorter than the grid");
  if (paths < 2) throw std::invalid_argument("need at least two paths");
  const int n = spec.n;
  const int nodes = static_cast<int>(spec.diversity.node_count());
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);
  const auto& mass = spec.diversity.weights;

  SystemsComparison out;
  out.grid = grid;

  // System 1: one path-level random type, single noise, mean closed by the
  // running ensemble average.
  {
    Accum acc;
    acc.init(K, n);
    acc.count = paths;
    std::vector<int> node(paths);
    std::vector<Vector> x(paths, spec.initial_state);
    std::vector<PathRng> rngs;
    rngs.reserve(paths);
    for (int p = 0; p < paths; ++p) {
      rngs.emplace_back(seed, (1ull << 56) | static_cast<std::uint64_t>(p));
      node[p] = sample_node(spec.diversity, rngs[p].uniform());
    }
    for (int k = 0; k <= K; ++k) {
      Vector xbar = Vector::Zero(n);
      for (int p = 0; p < paths; ++p) {
        acc.add(k, x[p]);
        xbar += x[p];
      }
      if (k == K) break;
      xbar /= static_cast<double>(paths);
      const double t = grid.time(k);
      const Matrix& B = spec.B.at(t);
      const Matrix& C = spec.C.at(t);
      const Matrix& F = spec.F.at(t);
      const Matrix& Ft = spec.F_tilde.at(t);
      for (int p = 0; p < paths; ++p) {
        const double dw = sqdt * rngs[p].normal();
        const Matrix& A = spec.A.at(node[p], t);
        const Matrix& D = spec.D.at(node[p], t);
        x[p] += dt * (A * x[p] + B * u[k] + F * xbar) + dw * (C * x[p] + D * u[k] + Ft * xbar);
      }
    }
    out.p1 = acc.finish();
  }

  // Systems 2 and 3: per-path K-component mixtures, sharing one noise
  // (system 2) or carrying independent component noises (system 3).
  for (int sys = 2; sys <= 3; ++sys) {
    Accum mix;
    mix.init(K, n);
    mix.count = paths;
    std::vector<Accum> parts(nodes);
    for (auto& a : parts) {
      a.init(K, n);
      a.count = paths;
    }
    std::vector<double> cross_s1(K + 1, 0.0), cross_s2(K + 1, 0.0);

    std::vector<std::vector<Vector>> x(paths, std::vector<Vector>(nodes, spec.initial_state));
    std::vector<PathRng> rngs;
    rngs.reserve(paths);
    for (int p = 0; p < paths; ++p)
      rngs.emplace_back(seed, (static_cast<std::uint64_t>(sys) << 56) |
                                  static_cast<std::uint64_t>(p));

    for (int k = 0; k <= K; ++k) {
      Vector mbar = Vector::Zero(n);
      for (int p = 0; p < paths; ++p) {
        Vector mixture = Vector::Zero(n);
        for (int j = 0; j < nodes; ++j) mixture += mass[j] * x[p][j];
        mix.add(k, mixture);
        for (int j = 0; j < nodes; ++j) parts[j].add(k, x[p][j]);
        double cross = 0.0;
        for (int j = 0; j < nodes; ++j)
          for (int l = j + 1; l < nodes; ++l) cross += mass[j] * mass[l] * x[p][j].dot(x[p][l]);
        cross_s1[k] += cross;
        cross_s2[k] += cross * cross;
        mbar += mixture;
      }
      if (k == K) break;
      mbar /= static_cast<double>(paths);
      const double t = grid.time(k);
      const Matrix& B = spec.B.at(t);
      const Matrix& C = spec.C.at(t);
      const Matrix& F = spec.F.at(t);
      const Matrix& Ft = spec.F_tilde.at(t);
      for (int p = 0; p < paths; ++p) {
        double dw_shared = 0.0;
        if (sys == 2) dw_shared = sqdt * rngs[p].normal();
        for (int j = 0; j < nodes; ++j) {
          const double dw = (sys == 2) ? dw_shared : sqdt * rngs[p].normal();
          const Matrix& A = spec.A.at(j, t);
          const Matrix& D = spec.D.at(j, t);
          x[p][j] += dt * (A * x[p][j] + B * u[k] + F * mbar) +
                     dw * (C * x[p][j] + D * u[k] + Ft * mbar);
        }
      }
    }

    auto& target_mix = (sys == 2) ? out.p2 : out.p3;
    auto& target_parts = (sys == 2) ? out.p2_parts : out.p3_parts;
    auto& target_cross = (sys == 2) ? out.p2_cross : out.p3_cross;
    auto& target_cross_se = (sys == 2) ? out.p2_cross_se : out.p3_cross_se;
    target_mix = mix.finish();
    target_parts.resize(nodes);
    for (int j = 0; j < nodes; ++j) target_parts[j] = parts[j].finish();
    target_cross.resize(K + 1);
    target_cross_se.resize(K + 1);
    const double M = paths;
    for (int k = 0; k <= K; ++k) {
      target_cross[k] = cross_s1[k] / M;
      const double var =
          std::max(0.0, cross_s2[k] / M - target_cross[k] * target_cross[k]);
      target_cross_se[k] = std::sqrt(var * (M / std::max(M - 1.0, 1.0)) / M);
    }
  }
  return out;
}

SystemsComparison simulate_m_systems(const ModelSpec& spec, const std::vector<Vector>& u,
                                     int N, int replications, const TimeGrid& grid,
                                     std::uint64_t seed) {
  {
    const auto errors = validate(spec);
    if (!errors.empty()) throw std::invalid_argument("invalid model: " + errors.front());
  }
  const int K = grid.steps;
  if (u.size() < static_cast<std::size_t>(K))
    throw std::invalid_argument("control path shorter than the grid");
  if (N < 1 || replications < 1) throw std::invalid_argument("bad population parameters");
  const int n = spec.n;
  const int nodes = static_cast<int>(spec.diversity.node_count());
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);
  const auto& mass = spec.diversity.weights;
  const std::vector<int> het_types = proportional_types(spec.diversity, N);

  SystemsComparison out;
  out.grid = grid;
  out.N = N;
  out.m1_avg.resize(replications);
  out.m2_avg.resize(replications);
  out.m3_avg.resize(replications);
  out.m_het_avg.resize(replications);
  out.stacked_bitwise_equal = true;

  double disc_acc = 0.0;
  for (int r = 0; r < replications; ++r) {
    const std::uint64_t rtag = static_cast<std::uint64_t>(r) << 32;

    // Pre-draw all randomness so the stacked re-run sees identical noise.
    std::vector<int> m1_node(N);
    std::vector<std::vector<double>> dw1(N, std::vector<double>(K)), dw2(N, std::vector<double>(K));
    std::vector<std::vector<double>> dwh(N, std::vector<double>(K));
    std::vector<std::vector<std::vector<double>>> dw3(
        N, std::vector<std::vector<double>>(nodes, std::vector<double>(K)));
    for (int i = 0; i < N; ++i) {
      PathRng r1(seed, (4ull << 56) | rtag | static_cast<std::uint32_t>(i));
      m1_node[i] = sample_node(spec.diversity, r1.uniform());
      for (int k = 0; k < K; ++k) dw1[i][k] = sqdt * r1.normal();
      PathRng r2(seed, (5ull << 56) | rtag | static_cast<std::uint32_t>(i));
      for (int k = 0; k < K; ++k) dw2[i][k] = sqdt * r2.normal();
      PathRng rh(seed, (7ull << 56) | rtag | static_cast<std::uint32_t>(i));
      for (int k = 0; k < K; ++k) dwh[i][k] = sqdt * rh.normal();
      for (int j = 0; j < nodes; ++j) {
        PathRng r3(seed, (6ull << 56) | rtag | static_cast<std::uint32_t>(i * nodes + j));
        for (int k = 0; k < K; ++k) dw3[i][j][k] = sqdt * r3.normal();
      }
    }

    auto run_single = [&](const std::vector<int>& types,
                          const std::vector<std::vector<double>>& dw) {
      std::vector<Vector> x(N, spec.initial_state);
      std::vector<Vector> avg(K + 1);
      for (int k = 0; k <= K; ++k) {
        Vector xbar = Vector::Zero(n);
        for (int i = 0; i < N; ++i) xbar += x[i];
        xbar /= static_cast<double>(N);
        avg[k] = xbar;
        if (k == K) break;
        const double t = grid.time(k);
        const Matrix& B = spec.B.at(t);
        const Matrix& C = spec.C.at(t);
        const Matrix& F = spec.F.at(t);
        const Matrix& Ft = spec.F_tilde.at(t);
        for (int i = 0; i < N; ++i) {
          const Matrix& A = spec.A.at(types[i], t);
          const Matrix& D = spec.D.at(types[i], t);
          x[i] += dt * (A * x[i] + B * u[k] + F * xbar) + dw[i][k] * (C * x[i] + D * u[k] + Ft * xbar);
        }
      }
      return avg;
    };

    out.m1_avg[r] = run_single(m1_node, dw1);
    out.m_het_avg[r] = run_single(het_types, dwh);

    // Shared-noise mixture population.
    {
      std::vector<std::vector<Vector>> x(N, std::vector<Vector>(nodes, spec.initial_state));
      auto& avg = out.m2_avg[r];
      avg.assign(K + 1, Vector::Zero(n));
      for (int k = 0; k <= K; ++k) {
        Vector xbar = Vector::Zero(n);
        for (int i = 0; i < N; ++i) {
          Vector mixture = Vector::Zero(n);
          for (int j = 0; j < nodes; ++j) mixture += mass[j] * x[i][j];
          xbar += mixture;
        }
        xbar /= static_cast<double>(N);
        avg[k] = xbar;
        if (k == K) break;
        const double t = grid.time(k);
        const Matrix& B = spec.B.at(t);
        const Matrix& C = spec.C.at(t);
        const Matrix& F = spec.F.at(t);
        const Matrix& Ft = spec.F_tilde.at(t);
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < nodes; ++j) {
            const Matrix& A = spec.A.at(j, t);
            const Matrix& D = spec.D.at(j, t);
            x[i][j] += dt * (A * x[i][j] + B * u[k] + F * xbar) +
                       dw2[i][k] * (C * x[i][j] + D * u[k] + Ft * xbar);
          }
      }
    }

    // Independent-noise mixture population, simulated per component and again
    // in the stacked augmented-state form; both accumulate the coupling in
    // block order so the arithmetic agrees exactly.
    {
      std::vector<std::vector<Vector>> x(N, std::vector<Vector>(nodes, spec.initial_state));
      std::vector<Vector> y(N, Vector::Zero(n * nodes));
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < nodes; ++j) y[i].segment(j * n, n) = spec.initial_state;

      auto& avg = out.m3_avg[r];
      avg.assign(K + 1, Vector::Zero(n));
      for (int k = 0; k <= K; ++k) {
        std::vector<Vector> comp_avg(nodes, Vector::Zero(n));
        std::vector<Vector> comp_avg_y(nodes, Vector::Zero(n));
        for (int j = 0; j < nodes; ++j) {
          for (int i = 0; i < N; ++i) comp_avg[j] += x[i][j];
          comp_avg[j] /= static_cast<double>(N);
          for (int i = 0; i < N; ++i) comp_avg_y[j] += y[i].segment(j * n, n);
          comp_avg_y[j] /= static_cast<double>(N);
        }
        Vector xbar = Vector::Zero(n);
        for (int j = 0; j < nodes; ++j) xbar += mass[j] * comp_avg[j];
        avg[k] = xbar;

        for (int i = 0; i < N && out.stacked_bitwise_equal; ++i)
          for (int j = 0; j < nodes; ++j)
            if ((x[i][j] - y[i].segment(j * n, n)).cwiseAbs().maxCoeff() != 0.0)
              out.stacked_bitwise_equal = false;
        if (k == K) break;

        const double t = grid.time(k);
        const Matrix& B = spec.B.at(t);
        const Matrix& C = spec.C.at(t);
        const Matrix& F = spec.F.at(t);
        const Matrix& Ft = spec.F_tilde.at(t);
        Vector couple_d = Vector::Zero(n), couple_s = Vector::Zero(n);
        Vector couple_d_y = Vector::Zero(n), couple_s_y = Vector::Zero(n);
        for (int l = 0; l < nodes; ++l) {
          couple_d += (F * mass[l]) * comp_avg[l];
          couple_s += (Ft * mass[l]) * comp_avg[l];
          couple_d_y += (F * mass[l]) * comp_avg_y[l];
          couple_s_y += (Ft * mass[l]) * comp_avg_y[l];
        }
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < nodes; ++j) {
            const Matrix& A = spec.A.at(j, t);
            const Matrix& D = spec.D.at(j, t);
            x[i][j] += dt * (A * x[i][j] + B * u[k] + couple_d) +
                       dw3[i][j][k] * (C * x[i][j] + D * u[k] + couple_s);
            auto seg = y[i].segment(j * n, n);
            seg += dt * (A * seg + B * u[k] + couple_d_y).eval() +
                   dw3[i][j][k] * (C * seg + D * u[k] + couple_s_y).eval();
          }
      }
    }

    double worst = 0.0;
    for (int k = 0; k <= K; ++k) {
      const std::vector<const Vector*> curves = {&out.m1_avg[r][k], &out.m2_avg[r][k],
                                                 &out.m3_avg[r][k], &out.m_het_avg[r][k]};
      for (std::size_t a = 0; a < curves.size(); ++a)
        for (std::size_t b = a + 1; b < curves.size(); ++b)
          worst = std::max(worst, (*curves[a] - *curves[b]).squaredNorm());
    }
    disc_acc += worst;
  }
  out.max_pairwise_disc = disc_acc / replications;
  return out;
}

}  // namespace mft
