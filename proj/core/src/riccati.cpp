#include "mft/cc_solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mft {

namespace {

constexpr double kBlowup = 1e8;

bool table_is_zero(const CoefficientTable& t) {
  for (const auto& v : t.values)
    if (v.cwiseAbs().maxCoeff() != 0.0) return false;
  return true;
}

// Fine integration grid refining every cell of the coarse grid.
struct FineGrid {
  double horizon;
  int sub;
  int total;  // sub * coarse steps

  double h() const { return horizon / total; }
  double t(int f) const { return horizon * f / total; }
};

FineGrid make_fine(const TimeGrid& grid) {
  const double target = 1e-3;
  int sub = std::max(2, static_cast<int>(std::ceil(grid.dt() / target)));
  while (sub * grid.steps < 4) sub *= 2;  // midpoint interpolation needs 4 points
  return {grid.horizon, sub, sub * grid.steps};
}

// Cubic Lagrange value at the midpoint between fine indices f and f+1,
// keeping RK4 stages fourth-order accurate against stored curves.
template <class T>
T interp_mid(const std::vector<T>& v, int f) {
  const int last = static_cast<int>(v.size()) - 1;
  const int b = std::clamp(f - 1, 0, last - 3);
  const double s = f + 0.5 - b;
  double w[4];
  for (int i = 0; i < 4; ++i) {
    w[i] = 1.0;
    for (int j = 0; j < 4; ++j)
      if (j != i) w[i] *= (s - j) / (i - j);
  }
  return w[0] * v[b] + w[1] * v[b + 1] + w[2] * v[b + 2] + w[3] * v[b + 3];
}

Matrix sbar_at(const ModelSpec& spec, double t) {
  const Matrix& Q = spec.Q.at(t);
  const Matrix& H = spec.H.at(t);
  return Q * H + H * Q - H * Q * H;
}

}  // namespace

ReducedOdeSolution solve_reduced_ode(const ModelSpec& spec, const TimeGrid& grid) {
  {
    const auto errors = validate(spec);
    if (!errors.empty()) throw std::invalid_argument("invalid model: " + errors.front());
  }
  if (spec.diversity.kind != DiversityKind::Dirac ||
      spec.constraint.kind != ConstraintKind::FullSpace || spec.info.kind != InfoKind::Full ||
      !table_is_zero(spec.C) || !table_is_zero(spec.F) || !table_is_zero(spec.F_tilde) ||
      !table_is_zero(spec.D.per_node[0]))
    throw std::invalid_argument("reduced ODE requires the drift-controlled uncoupled case");

  const int n = spec.n;
  const FineGrid fine = make_fine(grid);
  const double h = fine.h();

  auto pi_dot = [&](double t, const Matrix& Pi) -> Matrix {
    const Matrix& A = spec.A.at(0, t);
    const Matrix& B = spec.B.at(t);
    const Matrix S = -spec.Q.at(t) + sbar_at(spec, t);
    return S - A.transpose() * Pi - Pi * A + Pi * B * spec.R.at(t).inverse() * B.transpose() * Pi;
  };

  std::vector<Matrix> Pif(fine.total + 1);
  Pif[fine.total] = Matrix::Zero(n, n);
  for (int f = fine.total; f > 0; --f) {
    const double t1 = fine.t(f);
    const Matrix& P = Pif[f];
    const Matrix k1 = pi_dot(t1, P);
    const Matrix k2 = pi_dot(t1 - h / 2, P - (h / 2) * k1);
    const Matrix k3 = pi_dot(t1 - h / 2, P - (h / 2) * k2);
    const Matrix k4 = pi_dot(t1 - h, P - h * k3);
    Pif[f - 1] = P - (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
    if (!Pif[f - 1].allFinite() || Pif[f - 1].cwiseAbs().maxCoeff() > kBlowup)
      throw std::runtime_error("riccati blow-up on [0, T]");
  }

  auto a_dot = [&](double t, const Matrix& Pi, const Vector& a) -> Vector {
    const Matrix& A = spec.A.at(0, t);
    const Matrix& B = spec.B.at(t);
    return A * a - B * spec.R.at(t).inverse() * B.transpose() * (Pi * a);
  };

  std::vector<Vector> af(fine.total + 1);
  af[0] = spec.initial_state;
  for (int f = 0; f < fine.total; ++f) {
    const double t0 = fine.t(f);
    const Matrix Pm = interp_mid(Pif, f);
    const Vector k1 = a_dot(t0, Pif[f], af[f]);
    const Vector k2 = a_dot(t0 + h / 2, Pm, af[f] + (h / 2) * k1);
    const Vector k3 = a_dot(t0 + h / 2, Pm, af[f] + (h / 2) * k2);
    const Vector k4 = a_dot(t0 + h, Pif[f + 1], af[f] + h * k3);
    af[f + 1] = af[f] + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
  }

  ReducedOdeSolution out;
  out.alpha_bar.resize(grid.steps + 1);
  out.gamma_bar.resize(grid.steps + 1);
  out.Pi.resize(grid.steps + 1);
  for (int k = 0; k <= grid.steps; ++k) {
    const int f = k * fine.sub;
    out.Pi[k] = Pif[f];
    out.alpha_bar[k] = af[f];
    out.gamma_bar[k] = Pif[f] * af[f];
  }
  return out;
}

namespace {

// Everything the offset/mean ODE right-hand sides need at one time point.
struct NodeEval {
  Matrix A, B, C, D, F, Ft, Q, Sbar, R;
  Matrix P, Y, K, Lambda_inv;
  Vector xbar, y1bar, b1bar, y2bar;
};

struct MfWorkspace {
  const ModelSpec& spec;
  FineGrid fine;
  std::vector<std::vector<Matrix>> Pf, Yf, Kf;  // node -> fine index
  std::vector<Vector> xbar, y1bar, b1bar, y2bar;

  NodeEval eval_at(int node, double t, const Matrix& P, const Matrix& Y) const {
    NodeEval e;
    e.A = spec.A.at(node, t);
    e.B = spec.B.at(t);
    e.C = spec.C.at(t);
    e.D = spec.D.at(node, t);
    e.F = spec.F.at(t);
    e.Ft = spec.F_tilde.at(t);
    e.Q = spec.Q.at(t);
    e.Sbar = sbar_at(spec, t);
    e.R = spec.R.at(t);
    e.P = P;
    e.Y = Y;
    e.Lambda_inv = (e.R + e.D.transpose() * P * e.D).inverse();
    e.K = e.Lambda_inv * (e.B.transpose() * P + e.D.transpose() * P * e.C);
    return e;
  }
};

Vector feedforward(const NodeEval& e, const Vector& phi) {
  return e.Lambda_inv * (e.B.transpose() * phi + e.D.transpose() * e.P * e.Ft * e.xbar);
}

}  // namespace

RiccatiMFSolution solve_riccati_mf(const ModelSpec& spec, const TimeGrid& grid) {
  {
    const auto errors = validate(spec);
    if (!errors.empty()) throw std::invalid_argument("invalid model: " + errors.front());
  }
  if (spec.constraint.kind != ConstraintKind::FullSpace || spec.info.kind != InfoKind::Full)
    throw std::invalid_argument("decoupling oracle needs full space and full information");

  const int n = spec.n;
  const int nodes = static_cast<int>(spec.diversity.node_count());
  const FineGrid fine = make_fine(grid);
  const double h = fine.h();
  const int KF = fine.total;

  MfWorkspace ws{spec, fine, {}, {}, {}, {}, {}, {}, {}};
  ws.Pf.assign(nodes, std::vector<Matrix>(KF + 1));
  ws.Yf.assign(nodes, std::vector<Matrix>(KF + 1));
  ws.Kf.assign(nodes, std::vector<Matrix>(KF + 1));

  // Self-contained backward pass: state-feedback Riccati P and the y1 gain Y.
  for (int j = 0; j < nodes; ++j) {
    auto dot = [&](double t, const Matrix& P, const Matrix& Y, Matrix& dP, Matrix& dY) {
      const Matrix& A = spec.A.at(j, t);
      const Matrix& B = spec.B.at(t);
      const Matrix& C = spec.C.at(t);
      const Matrix& D = spec.D.at(j, t);
      const Matrix& Q = spec.Q.at(t);
      const Matrix Lambda = spec.R.at(t) + D.transpose() * P * D;
      const Matrix K = Lambda.inverse() * (B.transpose() * P + D.transpose() * P * C);
      dP = -P * A - A.transpose() * P - Q - C.transpose() * P * C +
           (P * B + C.transpose() * P * D) * K;
      dY = Q - A.transpose() * Y - Y * A - C.transpose() * Y * C +
           (Y * B + C.transpose() * Y * D) * K;
    };
    ws.Pf[j][KF] = Matrix::Zero(n, n);
    ws.Yf[j][KF] = Matrix::Zero(n, n);
    Matrix p1, y1d, p2, y2d, p3, y3d, p4, y4d;
    for (int f = KF; f > 0; --f) {
      const double t1 = fine.t(f);
      const Matrix& P = ws.Pf[j][f];
      const Matrix& Y = ws.Yf[j][f];
      dot(t1, P, Y, p1, y1d);
      dot(t1 - h / 2, P - (h / 2) * p1, Y - (h / 2) * y1d, p2, y2d);
      dot(t1 - h / 2, P - (h / 2) * p2, Y - (h / 2) * y2d, p3, y3d);
      dot(t1 - h, P - h * p3, Y - h * y3d, p4, y4d);
      ws.Pf[j][f - 1] = P - (h / 6) * (p1 + 2 * p2 + 2 * p3 + p4);
      ws.Yf[j][f - 1] = Y - (h / 6) * (y1d + 2 * y2d + 2 * y3d + y4d);
      if (!ws.Pf[j][f - 1].allFinite() || ws.Pf[j][f - 1].cwiseAbs().maxCoeff() > kBlowup ||
          ws.Yf[j][f - 1].cwiseAbs().maxCoeff() > kBlowup)
        throw std::runtime_error("riccati blow-up on [0, T]");
    }
    for (int f = 0; f <= KF; ++f) {
      const double t = fine.t(f);
      const Matrix& D = spec.D.at(j, t);
      const Matrix& P = ws.Pf[j][f];
      const Matrix Lambda = spec.R.at(t) + D.transpose() * P * D;
      ws.Kf[j][f] = Lambda.inverse() *
                    (spec.B.at(t).transpose() * P + D.transpose() * P * spec.C.at(t));
    }
  }

  ws.xbar.assign(KF + 1, Vector::Zero(n));
  ws.y1bar.assign(KF + 1, Vector::Zero(n));
  ws.b1bar.assign(KF + 1, Vector::Zero(n));
  ws.y2bar.assign(KF + 1, Vector::Zero(n));

  std::vector<std::vector<Vector>> phif(nodes, std::vector<Vector>(KF + 1, Vector::Zero(n)));
  std::vector<std::vector<Vector>> psif(nodes, std::vector<Vector>(KF + 1, Vector::Zero(n)));
  std::vector<std::vector<Vector>> y2f(nodes, std::vector<Vector>(KF + 1, Vector::Zero(n)));
  std::vector<std::vector<Vector>> cf(nodes, std::vector<Vector>(KF + 1, Vector::Zero(spec.m)));
  std::vector<std::vector<Vector>> af(nodes, std::vector<Vector>(KF + 1, spec.initial_state));

  // Curve values needed at RK4 stage times; midpoints are interpolated.
  auto curve_eval = [&](int node, double t, const Matrix& P, const Matrix& Y, const Vector& xb,
                        const Vector& y1b, const Vector& b1b, const Vector& y2b) {
    NodeEval e = ws.eval_at(node, t, P, Y);
    e.xbar = xb;
    e.y1bar = y1b;
    e.b1bar = b1b;
    e.y2bar = y2b;
    return e;
  };
  auto eval_point = [&](int node, int f) {
    return curve_eval(node, fine.t(f), ws.Pf[node][f], ws.Yf[node][f], ws.xbar[f], ws.y1bar[f],
                      ws.b1bar[f], ws.y2bar[f]);
  };
  auto eval_mid = [&](int node, int f) {
    return curve_eval(node, fine.t(f) + h / 2, interp_mid(ws.Pf[node], f),
                      interp_mid(ws.Yf[node], f), interp_mid(ws.xbar, f), interp_mid(ws.y1bar, f),
                      interp_mid(ws.b1bar, f), interp_mid(ws.y2bar, f));
  };

  RiccatiMFSolution out;
  out.grid = grid;
  out.n = n;
  out.m = spec.m;

  const int max_iter = 600;
  bool converged = false;
  int iters = 0;
  for (int iter = 0; iter < max_iter && !converged; ++iter) {
    iters = iter + 1;

    // Backward offsets per node given the current mean curves.
    for (int j = 0; j < nodes; ++j) {
      auto dot = [&](const NodeEval& e, const Vector& phi, const Vector& psi, const Vector& y2,
                     Vector& dphi, Vector& dpsi, Vector& dy2) {
        const Vector c = feedforward(e, phi);
        const Vector hterm = e.F.transpose() * (e.y2bar + e.y1bar) + e.Ft.transpose() * e.b1bar;
        dphi = -e.A.transpose() * phi + e.Sbar * e.xbar -
               e.C.transpose() * (e.P * (e.Ft * e.xbar - e.D * c)) + e.P * (e.B * c) -
               e.P * (e.F * e.xbar) + hterm;
        dpsi = -e.A.transpose() * psi - e.Y * (e.F * e.xbar) + e.Y * (e.B * c) -
               e.C.transpose() * (e.Y * (e.Ft * e.xbar - e.D * c));
        dy2 = -e.Sbar * e.xbar - e.F.transpose() * e.y1bar - e.Ft.transpose() * e.b1bar -
              (e.A + e.F).transpose() * y2;
      };
      phif[j][KF].setZero();
      psif[j][KF].setZero();
      y2f[j][KF].setZero();
      Vector f1a, f1b, f1c, f2a, f2b, f2c, f3a, f3b, f3c, f4a, f4b, f4c;
      for (int f = KF; f > 0; --f) {
        const NodeEval e1 = eval_point(j, f);
        const NodeEval em = eval_mid(j, f - 1);
        const NodeEval e0 = eval_point(j, f - 1);
        const Vector &phi = phif[j][f], &psi = psif[j][f], &y2 = y2f[j][f];
        dot(e1, phi, psi, y2, f1a, f1b, f1c);
        dot(em, phi - (h / 2) * f1a, psi - (h / 2) * f1b, y2 - (h / 2) * f1c, f2a, f2b, f2c);
        dot(em, phi - (h / 2) * f2a, psi - (h / 2) * f2b, y2 - (h / 2) * f2c, f3a, f3b, f3c);
        dot(e0, phi - h * f3a, psi - h * f3b, y2 - h * f3c, f4a, f4b, f4c);
        phif[j][f - 1] = phi - (h / 6) * (f1a + 2 * f2a + 2 * f3a + f4a);
        psif[j][f - 1] = psi - (h / 6) * (f1b + 2 * f2b + 2 * f3b + f4b);
        y2f[j][f - 1] = y2 - (h / 6) * (f1c + 2 * f2c + 2 * f3c + f4c);
      }
      for (int f = 0; f <= KF; ++f) cf[j][f] = feedforward(eval_point(j, f), phif[j][f]);
    }

    // Forward per-node means under u = -K a - c.
    for (int j = 0; j < nodes; ++j) {
      auto dot = [&](double t, const Matrix& K, const Vector& c, const Vector& xb,
                     const Vector& a) -> Vector {
        const Matrix& A = spec.A.at(j, t);
        const Matrix& B = spec.B.at(t);
        return A * a - B * (K * a + c) + spec.F.at(t) * xb;
      };
      af[j][0] = spec.initial_state;
      for (int f = 0; f < KF; ++f) {
        const Matrix Km = interp_mid(ws.Kf[j], f);
        const Vector cm = interp_mid(cf[j], f);
        const Vector xm = interp_mid(ws.xbar, f);
        const Vector& a = af[j][f];
        const Vector k1 = dot(fine.t(f), ws.Kf[j][f], cf[j][f], ws.xbar[f], a);
        const Vector k2 = dot(fine.t(f) + h / 2, Km, cm, xm, a + (h / 2) * k1);
        const Vector k3 = dot(fine.t(f) + h / 2, Km, cm, xm, a + (h / 2) * k2);
        const Vector k4 = dot(fine.t(f + 1), ws.Kf[j][f + 1], cf[j][f + 1], ws.xbar[f + 1],
                              a + h * k3);
        af[j][f + 1] = a + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
      }
    }

    // Recompose the mean curves and measure the update.
    double change = 0.0;
    for (int f = 0; f <= KF; ++f) {
      const double t = fine.t(f);
      Vector xb = Vector::Zero(n), y1b = Vector::Zero(n), y2b = Vector::Zero(n);
      for (int j = 0; j < nodes; ++j) {
        const double wgt = spec.diversity.weights[j];
        xb += wgt * af[j][f];
        y1b += wgt * (ws.Yf[j][f] * af[j][f] + psif[j][f]);
        y2b += wgt * y2f[j][f];
      }
      Vector b1b = Vector::Zero(n);
      for (int j = 0; j < nodes; ++j) {
        const double wgt = spec.diversity.weights[j];
        const Matrix& C = spec.C.at(t);
        const Matrix& D = spec.D.at(j, t);
        const Vector diff = C * af[j][f] - D * (ws.Kf[j][f] * af[j][f] + cf[j][f]) +
                            spec.F_tilde.at(t) * xb;
        b1b += wgt * (ws.Yf[j][f] * diff);
      }
      change = std::max(change, (xb - ws.xbar[f]).cwiseAbs().maxCoeff());
      change = std::max(change, (y1b - ws.y1bar[f]).cwiseAbs().maxCoeff());
      change = std::max(change, (b1b - ws.b1bar[f]).cwiseAbs().maxCoeff());
      change = std::max(change, (y2b - ws.y2bar[f]).cwiseAbs().maxCoeff());
      ws.xbar[f] = xb;
      ws.y1bar[f] = y1b;
      ws.b1bar[f] = b1b;
      ws.y2bar[f] = y2b;
    }
    if (change < 1e-12) converged = true;
  }

  // Independent integration of the mean adjoint dynamics as an algebra check.
  double self_check = 0.0;
  for (int j = 0; j < nodes; ++j) {
    // gamma-check integrates the gamma mean equation directly.
    std::vector<Vector> gchk(KF + 1), mchk(KF + 1);
    gchk[KF] = Vector::Zero(n);
    mchk[KF] = Vector::Zero(n);
    auto gdot = [&](const NodeEval& e, const Vector& a, const Vector& th, const Vector& g) {
      const Vector hterm = e.F.transpose() * (e.y2bar + e.y1bar) + e.Ft.transpose() * e.b1bar;
      return Vector(-e.Q * a + e.Sbar * e.xbar - e.A.transpose() * g - e.C.transpose() * th +
                    hterm);
    };
    auto mdot = [&](const NodeEval& e, const Vector& a, const Vector& b1, const Vector& m) {
      return Vector(e.Q * a - e.A.transpose() * m - e.C.transpose() * b1);
    };
    for (int f = KF; f > 0; --f) {
      const NodeEval e1 = eval_point(j, f);
      const NodeEval em = eval_mid(j, f - 1);
      const NodeEval e0 = eval_point(j, f - 1);
      const Vector a1 = af[j][f], am = interp_mid(af[j], f - 1), a0 = af[j][f - 1];
      const Vector phim = interp_mid(phif[j], f - 1);
      auto th_of = [&](const NodeEval& e, const Vector& a, const Vector& phi) -> Vector {
        return e.P * (e.C * a - e.D * (e.K * a + feedforward(e, phi)) + e.Ft * e.xbar);
      };
      auto b1_of = [&](const NodeEval& e, const Vector& a, const Vector& phi) -> Vector {
        return e.Y * (e.C * a - e.D * (e.K * a + feedforward(e, phi)) + e.Ft * e.xbar);
      };
      const Vector th1 = th_of(e1, a1, phif[j][f]);
      const Vector thm = th_of(em, am, phim);
      const Vector th0 = th_of(e0, a0, phif[j][f - 1]);
      const Vector b11 = b1_of(e1, a1, phif[j][f]);
      const Vector b1m = b1_of(em, am, phim);
      const Vector b10 = b1_of(e0, a0, phif[j][f - 1]);

      const Vector g = gchk[f];
      const Vector g1 = gdot(e1, a1, th1, g);
      const Vector g2 = gdot(em, am, thm, g - (h / 2) * g1);
      const Vector g3 = gdot(em, am, thm, g - (h / 2) * g2);
      const Vector g4 = gdot(e0, a0, th0, g - h * g3);
      gchk[f - 1] = g - (h / 6) * (g1 + 2 * g2 + 2 * g3 + g4);

      const Vector mm = mchk[f];
      const Vector m1 = mdot(e1, a1, b11, mm);
      const Vector m2 = mdot(em, am, b1m, mm - (h / 2) * m1);
      const Vector m3 = mdot(em, am, b1m, mm - (h / 2) * m2);
      const Vector m4 = mdot(e0, a0, b10, mm - h * m3);
      mchk[f - 1] = mm - (h / 6) * (m1 + 2 * m2 + 2 * m3 + m4);
    }
    for (int f = 0; f <= KF; ++f) {
      const Vector grec = ws.Pf[j][f] * af[j][f] + phif[j][f];
      const Vector mrec = ws.Yf[j][f] * af[j][f] + psif[j][f];
      self_check = std::max(self_check, (gchk[f] - grec).cwiseAbs().maxCoeff());
      self_check = std::max(self_check, (mchk[f] - mrec).cwiseAbs().maxCoeff());
    }
  }

  out.iterations = iters;
  out.converged = converged;
  out.mean_dynamics_residual = self_check;

  const int sub = fine.sub;
  auto coarse_m = [&](const std::vector<Matrix>& v) {
    std::vector<Matrix> o(grid.steps + 1);
    for (int k = 0; k <= grid.steps; ++k) o[k] = v[k * sub];
    return o;
  };
  auto coarse_v = [&](const std::vector<Vector>& v) {
    std::vector<Vector> o(grid.steps + 1);
    for (int k = 0; k <= grid.steps; ++k) o[k] = v[k * sub];
    return o;
  };
  out.P.resize(nodes);
  out.phi.resize(nodes);
  out.Ygain.resize(nodes);
  out.psi.resize(nodes);
  out.Kfb.resize(nodes);
  out.cfb.resize(nodes);
  out.a.resize(nodes);
  out.y2.resize(nodes);
  for (int j = 0; j < nodes; ++j) {
    out.P[j] = coarse_m(ws.Pf[j]);
    out.phi[j] = coarse_v(phif[j]);
    out.Ygain[j] = coarse_m(ws.Yf[j]);
    out.psi[j] = coarse_v(psif[j]);
    out.Kfb[j] = coarse_m(ws.Kf[j]);
    out.cfb[j] = coarse_v(cf[j]);
    out.a[j] = coarse_v(af[j]);
    out.y2[j] = coarse_v(y2f[j]);
  }
  out.xbar = coarse_v(ws.xbar);
  out.y1bar = coarse_v(ws.y1bar);
  out.beta1bar = coarse_v(ws.b1bar);
  out.y2bar = coarse_v(ws.y2bar);
  out.gbar.resize(grid.steps + 1);
  for (int k = 0; k <= grid.steps; ++k) {
    out.gbar[k] = Vector::Zero(n);
    for (int j = 0; j < nodes; ++j)
      out.gbar[k] +=
          spec.diversity.weights[j] * (out.P[j][k] * out.a[j][k] + out.phi[j][k]);
  }
  return out;
}

Vector DecentralizedPolicy::evaluate(int k, int node, const Vector& x, double w_lag) const {
  if (kind == Kind::Affine) return -(Kfb[node][k] * x) - cfb[node][k];
  const double t = grid.time(k);
  Vector feat;
  switch (info.kind) {
    case InfoKind::Full: {
      feat.resize(1 + 2 * n);
      feat[0] = 1.0;
      feat.segment(1, n) = x;
      feat.segment(1 + n, n) = x.array().square().matrix();
      break;
    }
    case InfoKind::Trivial:
      feat = Vector::Ones(1);
      break;
    case InfoKind::Delayed:
      if (t <= info.delay + 1e-12) {
        feat = Vector::Ones(1);
      } else {
        feat.resize(3);
        feat << 1.0, w_lag, w_lag * w_lag;
      }
      break;
  }
  const Vector v = reg_coeff[node][k] * feat;
  if (constraint.kind == ConstraintKind::FullSpace) return v;
  return WeightedProjection(R_at[k], constraint)(v);
}

int DecentralizedPolicy::basis_dim() const {
  switch (info.kind) {
    case InfoKind::Full:
      return 1 + 2 * n;
    case InfoKind::Trivial:
      return 1;
    case InfoKind::Delayed:
      return 3;
  }
  return 1;
}

DecentralizedPolicy make_riccati_policy(const ModelSpec& spec, const TimeGrid& grid) {
  const RiccatiMFSolution mf = solve_riccati_mf(spec, grid);
  const int nodes = static_cast<int>(spec.diversity.node_count());
  const int K = grid.steps;
  const double dt = grid.dt();

  DecentralizedPolicy pol;
  pol.kind = DecentralizedPolicy::Kind::Affine;
  pol.grid = grid;
  pol.n = spec.n;
  pol.m = spec.m;
  pol.info = spec.info;
  pol.constraint = spec.constraint;
  pol.R_at.resize(K);
  for (int k = 0; k < K; ++k) pol.R_at[k] = spec.R.at(grid.time(k));
  pol.Kfb.assign(nodes, std::vector<Matrix>(K));
  pol.cfb.assign(nodes, std::vector<Vector>(K));
  for (int j = 0; j < nodes; ++j)
    for (int k = 0; k < K; ++k) {
      pol.Kfb[j][k] = mf.Kfb[j][k];
      pol.cfb[j][k] = mf.cfb[j][k];
    }

  // Euler-consistent mean curves: the sample mean of an Euler population under
  // this policy reproduces these exactly in expectation.
  pol.a.assign(nodes, std::vector<Vector>(K + 1));
  pol.mean_alpha.resize(K + 1);
  for (int j = 0; j < nodes; ++j) pol.a[j][0] = spec.initial_state;
  for (int k = 0; k < K; ++k) {
    Vector xb = Vector::Zero(spec.n);
    for (int j = 0; j < nodes; ++j) xb += spec.diversity.weights[j] * pol.a[j][k];
    pol.mean_alpha[k] = xb;
    const double t = grid.time(k);
    for (int j = 0; j < nodes; ++j) {
      const Vector u = -(pol.Kfb[j][k] * pol.a[j][k]) - pol.cfb[j][k];
      pol.a[j][k + 1] = pol.a[j][k] + dt * (spec.A.at(j, t) * pol.a[j][k] + spec.B.at(t) * u +
                                            spec.F.at(t) * xb);
    }
  }
  Vector xbK = Vector::Zero(spec.n);
  for (int j = 0; j < nodes; ++j) xbK += spec.diversity.weights[j] * pol.a[j][K];
  pol.mean_alpha[K] = xbK;
  return pol;
}

DecentralizedPolicy fit_regression_policy(const CCSolution& sol, const ModelSpec& spec,
                                          const PathEnsemble* ensemble) {
  if (!sol.converged) throw std::invalid_argument("policy requires a converged solution");
  if (spec.info.kind == InfoKind::Delayed && ensemble == nullptr)
    throw std::invalid_argument("delayed-information policy needs the training ensemble");

  const int K = sol.grid.steps;
  const int M = sol.paths;
  const int nodes = static_cast<int>(spec.diversity.node_count());
  DecentralizedPolicy pol;
  pol.kind = DecentralizedPolicy::Kind::Regression;
  pol.grid = sol.grid;
  pol.n = sol.n;
  pol.m = sol.m;
  pol.info = spec.info;
  pol.constraint = spec.constraint;
  pol.R_at.resize(K);
  for (int k = 0; k < K; ++k) pol.R_at[k] = spec.R.at(sol.grid.time(k));

  std::vector<std::vector<int>> groups(nodes);
  for (int p = 0; p < M; ++p) groups[sol.theta_node[p]].push_back(p);

  pol.reg_coeff.assign(nodes, std::vector<Matrix>(K));
  for (int k = 0; k < K; ++k) {
    const double t = sol.grid.time(k);
    for (int j = 0; j < nodes; ++j) {
      const auto& grp = groups[j];
      const int len = static_cast<int>(grp.size());
      int p_dim = pol.basis_dim();
      if (spec.info.kind == InfoKind::Delayed && t <= spec.info.delay + 1e-12) p_dim = 1;
      Matrix G(p_dim, std::max(len, 1));
      Matrix target = Matrix::Zero(sol.m, std::max(len, 1));
      G.setZero();
      G.row(0).setOnes();
      for (int r = 0; r < len; ++r) {
        const int p = grp[r];
        if (spec.info.kind == InfoKind::Full) {
          G.col(r).segment(1, sol.n) = sol.alpha[k].col(p);
          G.col(r).segment(1 + sol.n, sol.n) = sol.alpha[k].col(p).array().square().matrix();
        } else if (spec.info.kind == InfoKind::Delayed && p_dim == 3) {
          const int lag = std::min(
              static_cast<int>(std::floor((t - spec.info.delay) / sol.grid.dt() + 1e-9)), K);
          const double wl = ensemble->brownian_at(p, lag);
          G(1, r) = wl;
          G(2, r) = wl * wl;
        }
        target.col(r) = sol.pre_control[k].col(p);
      }
      Eigen::ColPivHouseholderQR<Matrix> qr(G.transpose());
      qr.setThreshold(1e-10);
      pol.reg_coeff[j][k] = qr.solve(target.transpose()).transpose();
    }
  }

  // Mean curves from the training sample (Monte Carlo level accuracy).
  pol.mean_alpha = sol.mean_alpha;
  pol.a.assign(nodes, std::vector<Vector>(K + 1, Vector::Zero(sol.n)));
  for (int j = 0; j < nodes; ++j) {
    const auto& grp = groups[j];
    for (int k = 0; k <= K; ++k) {
      Vector mu = Vector::Zero(sol.n);
      for (int p : grp) mu += sol.alpha[k].col(p);
      if (!grp.empty()) mu /= static_cast<double>(grp.size());
      pol.a[j][k] = mu;
    }
  }
  return pol;
}

DecentralizedPolicy decentralized_control(const CCSolution& sol, const ModelSpec& spec) {
  if (!sol.converged) throw std::invalid_argument("policy requires a converged solution");
  if (spec.constraint.kind == ConstraintKind::FullSpace && spec.info.kind == InfoKind::Full)
    return make_riccati_policy(spec, sol.grid);
  return fit_regression_policy(sol, spec, nullptr);
}

}  // namespace mft
