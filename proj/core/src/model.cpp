#include "mft/model.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mft {

DiversityLaw DiversityLaw::dirac(double theta0) {
  DiversityLaw law;
  law.kind = DiversityKind::Dirac;
  law.nodes = {theta0};
  law.weights = {1.0};
  return law;
}

DiversityLaw DiversityLaw::finite(std::vector<double> nodes, std::vector<double> masses) {
  DiversityLaw law;
  law.kind = DiversityKind::FiniteDiscrete;
  law.nodes = std::move(nodes);
  law.weights = std::move(masses);
  return law;
}

DiversityLaw DiversityLaw::quadrature(std::vector<double> nodes, std::vector<double> weights) {
  DiversityLaw law;
  law.kind = DiversityKind::ContinuumQuadrature;
  law.nodes = std::move(nodes);
  law.weights = std::move(weights);
  return law;
}

int DiversityLaw::node_index(double theta) const {
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (nodes[k] == theta) return static_cast<int>(k);
  }
  return -1;
}

ConstraintSpec ConstraintSpec::full_space() { return ConstraintSpec{}; }

ConstraintSpec ConstraintSpec::nonnegative_orthant() {
  ConstraintSpec c;
  c.kind = ConstraintKind::NonnegativeOrthant;
  return c;
}

ConstraintSpec ConstraintSpec::box(Vector lo, Vector hi) {
  ConstraintSpec c;
  c.kind = ConstraintKind::Box;
  c.lo = std::move(lo);
  c.hi = std::move(hi);
  return c;
}

Vector ConstraintSpec::clamp(const Vector& v) const {
  switch (kind) {
    case ConstraintKind::FullSpace:
      return v;
    case ConstraintKind::NonnegativeOrthant:
      return v.cwiseMax(0.0);
    case ConstraintKind::Box:
      return v.cwiseMax(lo).cwiseMin(hi);
  }
  return v;
}

bool ConstraintSpec::contains(const Vector& v, double tol) const {
  switch (kind) {
    case ConstraintKind::FullSpace:
      return true;
    case ConstraintKind::NonnegativeOrthant:
      return (v.array() >= -tol).all();
    case ConstraintKind::Box:
      return ((v - lo).array() >= -tol).all() && ((hi - v).array() >= -tol).all();
  }
  return true;
}

InfoPattern InfoPattern::full() { return InfoPattern{}; }

InfoPattern InfoPattern::trivial() { return InfoPattern{InfoKind::Trivial, 0.0}; }

InfoPattern InfoPattern::delayed(double delta) { return InfoPattern{InfoKind::Delayed, delta}; }

CoefficientTable::CoefficientTable(Matrix constant) : times{0.0} { values.push_back(std::move(constant)); }

const Matrix& CoefficientTable::at(double t) const {
  if (values.empty()) throw std::invalid_argument("empty coefficient table");
  std::size_t i = values.size() - 1;
  while (i > 0 && times[i] > t) --i;
  return values[i];
}

const char* coef_name(Coef c) {
  switch (c) {
    case Coef::A: return "A";
    case Coef::B: return "B";
    case Coef::C: return "C";
    case Coef::D: return "D";
    case Coef::F: return "F";
    case Coef::Ftilde: return "F_tilde";
    case Coef::Q: return "Q";
    case Coef::H: return "H";
    case Coef::R: return "R";
  }
  return "?";
}

Coef coef_from_name(const std::string& name) {
  if (name == "A") return Coef::A;
  if (name == "B") return Coef::B;
  if (name == "C") return Coef::C;
  if (name == "D") return Coef::D;
  if (name == "F") return Coef::F;
  if (name == "F_tilde") return Coef::Ftilde;
  if (name == "Q") return Coef::Q;
  if (name == "H") return Coef::H;
  if (name == "R") return Coef::R;
  throw std::invalid_argument("unknown coefficient name: " + name);
}

namespace {

void check_shape(std::vector<std::string>& out, const CoefficientTable& table, const char* name,
                 int rows, int cols, double T) {
  if (table.values.empty()) {
    out.push_back(std::string(name) + ": no table entries");
    return;
  }
  if (table.times.size() != table.values.size()) {
    out.push_back(std::string(name) + ": times/values length mismatch");
    return;
  }
  for (std::size_t i = 0; i < table.values.size(); ++i) {
    const Matrix& v = table.values[i];
    if (v.rows() != rows || v.cols() != cols) {
      std::ostringstream os;
      os << name << ": entry " << i << " has shape " << v.rows() << "x" << v.cols()
         << ", expected " << rows << "x" << cols;
      out.push_back(os.str());
    }
    if (!v.allFinite()) {
      std::ostringstream os;
      os << name << ": entry " << i << " has non-finite values";
      out.push_back(os.str());
    }
  }
  if (table.times.front() != 0.0)
    out.push_back(std::string(name) + ": table must start at t=0");
  if (!std::is_sorted(table.times.begin(), table.times.end()))
    out.push_back(std::string(name) + ": breakpoints not sorted");
  if (table.times.back() > T)
    out.push_back(std::string(name) + ": breakpoint beyond horizon");
}

}  // namespace

std::vector<std::string> validate(const ModelSpec& spec) {
  std::vector<std::string> out;
  if (spec.n < 1) out.push_back("state dimension must be positive");
  if (spec.m < 1) out.push_back("control dimension must be positive");
  if (!(spec.horizon > 0.0)) out.push_back("horizon must be positive");
  if (spec.initial_state.size() != spec.n)
    out.push_back("initial state has wrong dimension");

  const double T = spec.horizon;
  const std::size_t nodes = spec.diversity.node_count();
  if (nodes == 0) out.push_back("diversity law has no nodes");
  if (spec.diversity.weights.size() != nodes)
    out.push_back("diversity nodes/weights length mismatch");
  double mass = 0.0;
  for (double w : spec.diversity.weights) {
    if (w < 0.0) out.push_back("diversity weight negative");
    mass += w;
  }
  if (std::abs(mass - 1.0) > 1e-12) {
    std::ostringstream os;
    os << "diversity masses sum to " << mass;
    out.push_back(os.str());
  }
  if (spec.diversity.kind == DiversityKind::Dirac && nodes != 1)
    out.push_back("Dirac law must have exactly one node");
  {
    std::set<double> uniq(spec.diversity.nodes.begin(), spec.diversity.nodes.end());
    if (uniq.size() != spec.diversity.nodes.size())
      out.push_back("diversity nodes must be distinct");
  }

  if (spec.A.per_node.size() != nodes) out.push_back("A: one table per diversity node required");
  if (spec.D.per_node.size() != nodes) out.push_back("D: one table per diversity node required");
  for (std::size_t k = 0; k < spec.A.per_node.size(); ++k)
    check_shape(out, spec.A.per_node[k], "A", spec.n, spec.n, T);
  for (std::size_t k = 0; k < spec.D.per_node.size(); ++k)
    check_shape(out, spec.D.per_node[k], "D", spec.n, spec.m, T);
  check_shape(out, spec.B, "B", spec.n, spec.m, T);
  check_shape(out, spec.C, "C", spec.n, spec.n, T);
  check_shape(out, spec.F, "F", spec.n, spec.n, T);
  check_shape(out, spec.F_tilde, "F_tilde", spec.n, spec.n, T);
  check_shape(out, spec.Q, "Q", spec.n, spec.n, T);
  check_shape(out, spec.H, "H", spec.n, spec.n, T);
  check_shape(out, spec.R, "R", spec.m, spec.m, T);

  auto check_sym_psd = [&out](const CoefficientTable& table, const char* name, double floor) {
    for (std::size_t i = 0; i < table.values.size(); ++i) {
      const Matrix& v = table.values[i];
      if (v.rows() != v.cols()) continue;  // shape violation already recorded
      if ((v - v.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        std::ostringstream os;
        os << name << " not symmetric at t=" << table.times[i];
        out.push_back(os.str());
        continue;
      }
      Eigen::SelfAdjointEigenSolver<Matrix> es(v);
      const double lam = es.eigenvalues().minCoeff();
      if (lam < floor) {
        std::ostringstream os;
        if (floor > 0.0)
          os << name << " not >> 0 at t=" << table.times[i] << " (min eigenvalue " << lam << ")";
        else
          os << name << " not >= 0 at t=" << table.times[i] << " (min eigenvalue " << lam << ")";
        out.push_back(os.str());
      }
    }
  };
  check_sym_psd(spec.Q, "Q", 0.0);
  check_sym_psd(spec.R, "R", kEpsR);

  if (spec.constraint.kind == ConstraintKind::Box) {
    if (spec.constraint.lo.size() != spec.m || spec.constraint.hi.size() != spec.m)
      out.push_back("box constraint bounds have wrong dimension");
    else if (((spec.constraint.hi - spec.constraint.lo).array() < 0.0).any())
      out.push_back("box constraint has lo > hi");
  }
  if (spec.info.kind == InfoKind::Delayed) {
    if (spec.info.delay < 0.0) out.push_back("information delay must be nonnegative");
    if (spec.info.delay > T) out.push_back("information delay exceeds horizon");
  }
  return out;
}

Matrix coefficient_at(const ModelSpec& spec, Coef which, double theta, double t) {
  if (t < 0.0 || t > spec.horizon) throw std::out_of_range("time outside [0, T]");
  if (which == Coef::A || which == Coef::D) {
    const int node = spec.diversity.node_index(theta);
    if (node < 0) throw std::invalid_argument("theta not a diversity node");
    return (which == Coef::A) ? spec.A.at(node, t) : spec.D.at(node, t);
  }
  switch (which) {
    case Coef::B: return spec.B.at(t);
    case Coef::C: return spec.C.at(t);
    case Coef::F: return spec.F.at(t);
    case Coef::Ftilde: return spec.F_tilde.at(t);
    case Coef::Q: return spec.Q.at(t);
    case Coef::H: return spec.H.at(t);
    case Coef::R: return spec.R.at(t);
    default: break;
  }
  throw std::invalid_argument("unknown coefficient");
}

ModelSpec make_constant_spec(int n, int m, double T, Vector xi, std::vector<Matrix> A_nodes,
                             Matrix B, Matrix C, std::vector<Matrix> D_nodes, Matrix F,
                             Matrix F_tilde, Matrix Q, Matrix H, Matrix R, DiversityLaw law,
                             ConstraintSpec constraint, InfoPattern info) {
  ModelSpec spec;
  spec.n = n;
  spec.m = m;
  spec.horizon = T;
  spec.initial_state = std::move(xi);
  for (auto& a : A_nodes) spec.A.per_node.emplace_back(std::move(a));
  for (auto& d : D_nodes) spec.D.per_node.emplace_back(std::move(d));
  spec.B = CoefficientTable(std::move(B));
  spec.C = CoefficientTable(std::move(C));
  spec.F = CoefficientTable(std::move(F));
  spec.F_tilde = CoefficientTable(std::move(F_tilde));
  spec.Q = CoefficientTable(std::move(Q));
  spec.H = CoefficientTable(std::move(H));
  spec.R = CoefficientTable(std::move(R));
  spec.diversity = std::move(law);
  spec.constraint = std::move(constraint);
  spec.info = info;
  return spec;
}

ModelSpec make_scalar_spec(const ScalarCoeffs& c, double T, double xi, DiversityLaw law,
                           ConstraintSpec constraint, InfoPattern info) {
  auto one = [](double v) { return Matrix::Constant(1, 1, v); };
  const std::size_t K = law.node_count();
  std::vector<Matrix> A_nodes(K, one(c.A));
  std::vector<Matrix> D_nodes(K, one(c.D));
  Vector xi_vec = Vector::Constant(1, xi);
  return make_constant_spec(1, 1, T, xi_vec, A_nodes, one(c.B), one(c.C), D_nodes, one(c.F),
                            one(c.F_tilde), one(c.Q), one(c.H), one(c.R), std::move(law),
                            std::move(constraint), info);
}

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& mat) {
  json flat = json::array();
  for (int i = 0; i < mat.rows(); ++i)
    for (int j = 0; j < mat.cols(); ++j) flat.push_back(mat(i, j));
  return flat;
}

Matrix matrix_from_json(const json& flat, int rows, int cols) {
  if (static_cast<int>(flat.size()) != rows * cols)
    throw std::invalid_argument("matrix entry count mismatch");
  Matrix mat(rows, cols);
  int idx = 0;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) mat(i, j) = flat.at(idx++).get<double>();
  return mat;
}

json table_to_json(const CoefficientTable& table) {
  json j;
  j["times"] = table.times;
  json vals = json::array();
  for (const auto& v : table.values) vals.push_back(matrix_to_json(v));
  j["values"] = vals;
  return j;
}

CoefficientTable table_from_json(const json& j, int rows, int cols) {
  CoefficientTable table;
  table.times = j.at("times").get<std::vector<double>>();
  for (const auto& v : j.at("values")) table.values.push_back(matrix_from_json(v, rows, cols));
  if (table.times.size() != table.values.size())
    throw std::invalid_argument("times/values length mismatch");
  return table;
}

}  // namespace

std::string model_to_json(const ModelSpec& spec) {
  json j;
  j["n"] = spec.n;
  j["m"] = spec.m;
  j["T"] = spec.horizon;
  j["xi"] = std::vector<double>(spec.initial_state.data(),
                                spec.initial_state.data() + spec.initial_state.size());
  j["grid_steps"] = spec.default_grid_steps;

  json coeffs;
  auto node_table = [](const ThetaCoefficient& tc) {
    json arr = json::array();
    for (const auto& t : tc.per_node) arr.push_back(table_to_json(t));
    return arr;
  };
  coeffs["A"] = node_table(spec.A);
  coeffs["D"] = node_table(spec.D);
  coeffs["B"] = table_to_json(spec.B);
  coeffs["C"] = table_to_json(spec.C);
  coeffs["F"] = table_to_json(spec.F);
  coeffs["F_tilde"] = table_to_json(spec.F_tilde);
  coeffs["Q"] = table_to_json(spec.Q);
  coeffs["H"] = table_to_json(spec.H);
  coeffs["R"] = table_to_json(spec.R);
  j["coefficients"] = coeffs;

  json div;
  switch (spec.diversity.kind) {
    case DiversityKind::Dirac: div["kind"] = "dirac"; break;
    case DiversityKind::FiniteDiscrete: div["kind"] = "finite"; break;
    case DiversityKind::ContinuumQuadrature: div["kind"] = "quadrature"; break;
  }
  div["nodes"] = spec.diversity.nodes;
  div["weights"] = spec.diversity.weights;
  j["diversity"] = div;

  json cons;
  switch (spec.constraint.kind) {
    case ConstraintKind::FullSpace: cons["kind"] = "full_space"; break;
    case ConstraintKind::NonnegativeOrthant: cons["kind"] = "nonnegative_orthant"; break;
    case ConstraintKind::Box:
      cons["kind"] = "box";
      cons["lo"] = std::vector<double>(spec.constraint.lo.data(),
                                       spec.constraint.lo.data() + spec.constraint.lo.size());
      cons["hi"] = std::vector<double>(spec.constraint.hi.data(),
                                       spec.constraint.hi.data() + spec.constraint.hi.size());
      break;
  }
  j["constraint"] = cons;

  json info;
  switch (spec.info.kind) {
    case InfoKind::Full: info["kind"] = "full"; break;
    case InfoKind::Trivial: info["kind"] = "trivial"; break;
    case InfoKind::Delayed:
      info["kind"] = "delayed";
      info["delay"] = spec.info.delay;
      break;
  }
  j["info"] = info;

  return j.dump(2);
}

ModelSpec model_from_json(const std::string& text) {
  const json j = json::parse(text);
  ModelSpec spec;
  spec.n = j.at("n").get<int>();
  spec.m = j.at("m").get<int>();
  spec.horizon = j.at("T").get<double>();
  const auto xi = j.at("xi").get<std::vector<double>>();
  spec.initial_state = Eigen::Map<const Vector>(xi.data(), xi.size());
  spec.default_grid_steps = j.value("grid_steps", 100);

  const json& div = j.at("diversity");
  const std::string dkind = div.at("kind").get<std::string>();
  DiversityLaw law;
  law.nodes = div.at("nodes").get<std::vector<double>>();
  law.weights = div.at("weights").get<std::vector<double>>();
  if (dkind == "dirac") law.kind = DiversityKind::Dirac;
  else if (dkind == "finite") law.kind = DiversityKind::FiniteDiscrete;
  else if (dkind == "quadrature") law.kind = DiversityKind::ContinuumQuadrature;
  else throw std::invalid_argument("unknown diversity kind: " + dkind);
  spec.diversity = law;

  const json& coeffs = j.at("coefficients");
  for (const auto& t : coeffs.at("A"))
    spec.A.per_node.push_back(table_from_json(t, spec.n, spec.n));
  for (const auto& t : coeffs.at("D"))
    spec.D.per_node.push_back(table_from_json(t, spec.n, spec.m));
  spec.B = table_from_json(coeffs.at("B"), spec.n, spec.m);
  spec.C = table_from_json(coeffs.at("C"), spec.n, spec.n);
  spec.F = table_from_json(coeffs.at("F"), spec.n, spec.n);
  spec.F_tilde = table_from_json(coeffs.at("F_tilde"), spec.n, spec.n);
  spec.Q = table_from_json(coeffs.at("Q"), spec.n, spec.n);
  spec.H = table_from_json(coeffs.at("H"), spec.n, spec.n);
  spec.R = table_from_json(coeffs.at("R"), spec.m, spec.m);

  const json& cons = j.at("constraint");
  const std::string ckind = cons.at("kind").get<std::string>();
  if (ckind == "full_space") {
    spec.constraint = ConstraintSpec::full_space();
  } else if (ckind == "nonnegative_orthant") {
    spec.constraint = ConstraintSpec::nonnegative_orthant();
  } else if (ckind == "box") {
    const auto lo = cons.at("lo").get<std::vector<double>>();
    const auto hi = cons.at("hi").get<std::vector<double>>();
    spec.constraint = ConstraintSpec::box(Eigen::Map<const Vector>(lo.data(), lo.size()),
                                          Eigen::Map<const Vector>(hi.data(), hi.size()));
  } else {
    throw std::invalid_argument("unknown constraint kind: " + ckind);
  }

  const json& info = j.at("info");
  const std::string ikind = info.at("kind").get<std::string>();
  if (ikind == "full") spec.info = InfoPattern::full();
  else if (ikind == "trivial") spec.info = InfoPattern::trivial();
  else if (ikind == "delayed") spec.info = InfoPattern::delayed(info.at("delay").get<double>());
  else throw std::invalid_argument("unknown info kind: " + ikind);

  return spec;
}

}  // namespace mft
