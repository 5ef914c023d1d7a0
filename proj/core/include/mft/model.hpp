#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace mft {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kEpsR = 1e-8;  // eigenvalue floor standing in for "R >> 0"

enum class DiversityKind { Dirac, FiniteDiscrete, ContinuumQuadrature };

// Law of the diversity index. Nodes are opaque labels; weights sum to 1.
// A ContinuumQuadrature law is operationally a weighted node set too: the
// quadrature rule is also the law of the sampler, keeping spatial means and
// population draws consistent.
struct DiversityLaw {
  DiversityKind kind = DiversityKind::Dirac;
  std::vector<double> nodes{0.0};
  std::vector<double> weights{1.0};

  static DiversityLaw dirac(double theta0 = 0.0);
  static DiversityLaw finite(std::vector<double> nodes, std::vector<double> masses);
  static DiversityLaw quadrature(std::vector<double> nodes, std::vector<double> weights);

  std::size_t node_count() const { return nodes.size(); }
  // Exact node lookup; -1 when theta is not a node.
  int node_index(double theta) const;
};

enum class ConstraintKind { FullSpace, NonnegativeOrthant, Box };

struct ConstraintSpec {
  ConstraintKind kind = ConstraintKind::FullSpace;
  Vector lo, hi;  // Box bounds

  static ConstraintSpec full_space();
  static ConstraintSpec nonnegative_orthant();
  static ConstraintSpec box(Vector lo, Vector hi);

  // Componentwise clamp onto the set (exact projection for diagonal weights).
  Vector clamp(const Vector& v) const;
  bool contains(const Vector& v, double tol = 0.0) const;
};

enum class InfoKind { Full, Trivial, Delayed };

struct InfoPattern {
  InfoKind kind = InfoKind::Full;
  double delay = 0.0;

  static InfoPattern full();
  static InfoPattern trivial();
  static InfoPattern delayed(double delta);
};

// Piecewise-constant coefficient in time: values[i] holds on [times[i], times[i+1)),
// the last cell extending to T (lookup at T returns the T- cell).
struct CoefficientTable {
  std::vector<double> times;
  std::vector<Matrix> values;

  CoefficientTable() = default;
  explicit CoefficientTable(Matrix constant);

  const Matrix& at(double t) const;
  bool constant() const { return values.size() == 1; }
};

// One table per diversity node (A and D carry the node axis).
struct ThetaCoefficient {
  std::vector<CoefficientTable> per_node;

  const Matrix& at(int node, double t) const { return per_node.at(node).at(t); }
};

enum class Coef { A, B, C, D, F, Ftilde, Q, H, R };

const char* coef_name(Coef c);
Coef coef_from_name(const std::string& name);

struct ModelSpec {
  int n = 1;
  int m = 1;
  double horizon = 1.0;
  Vector initial_state;
  ThetaCoefficient A, D;
  CoefficientTable B, C, F, F_tilde, Q, H, R;
  DiversityLaw diversity;
  ConstraintSpec constraint;
  InfoPattern info;
  int default_grid_steps = 100;
};

// Empty result means the standing positivity/normalization assumptions hold on
// the tabulated data; each entry names the violated condition and where.
std::vector<std::string> validate(const ModelSpec& spec);

// Tabulated lookup; throws std::invalid_argument for unknown names / non-node
// theta, std::out_of_range for t outside [0, T].
Matrix coefficient_at(const ModelSpec& spec, Coef which, double theta, double t);

// Constant-coefficient builder used by tests and fixtures. A_nodes/D_nodes are
// indexed by diversity node.
ModelSpec make_constant_spec(int n, int m, double T, Vector xi,
                             std::vector<Matrix> A_nodes, Matrix B, Matrix C,
                             std::vector<Matrix> D_nodes, Matrix F, Matrix F_tilde,
                             Matrix Q, Matrix H, Matrix R, DiversityLaw law,
                             ConstraintSpec constraint = ConstraintSpec::full_space(),
                             InfoPattern info = InfoPattern::full());

// Scalar (n=m=1) convenience wrapper with one A/D value per diversity node.
struct ScalarCoeffs {
  double A = 0.0, B = 0.0, C = 0.0, D = 0.0, F = 0.0, F_tilde = 0.0;
  double Q = 0.0, H = 0.0, R = 1.0;
};
ModelSpec make_scalar_spec(const ScalarCoeffs& c, double T, double xi,
                           DiversityLaw law = DiversityLaw::dirac(),
                           ConstraintSpec constraint = ConstraintSpec::full_space(),
                           InfoPattern info = InfoPattern::full());

// JSON document round-trip (the CLI's on-disk model format).
std::string model_to_json(const ModelSpec& spec);
ModelSpec model_from_json(const std::string& text);

}  // namespace mft
