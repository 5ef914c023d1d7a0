#include "mft/experiments.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mft/equivalence.hpp"
#include "mft/population.hpp"
#include "mft/wellposedness.hpp"

namespace mft {

namespace {

using nlohmann::json;

const char* const kExperiments[] = {"solve-cc",    "check-wellposedness", "population-sweep",
                                    "equivalence", "gap-vs-n",            "diagnostics"};

bool known_experiment(const std::string& name) {
  for (const char* e : kExperiments)
    if (name == e) return true;
  return false;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string run_id_of(const std::string& config_echo) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(config_echo)));
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << bytes;
}

// Time-indexed table of named curves; every cell rendered at 17 significant
// digits so reruns compare byte for byte.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::string render() const {
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) out += ',';
      out += header[i];
    }
    out += '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += ',';
        out += format_sig17(row[i]);
      }
      out += '\n';
    }
    return out;
  }
};

void append_vector(std::vector<double>& row, const Vector& v) {
  for (int i = 0; i < v.size(); ++i) row.push_back(v[i]);
}

void vector_columns(std::vector<std::string>& header, const std::string& base, int n) {
  for (int i = 0; i < n; ++i) header.push_back(base + "_" + std::to_string(i));
}

double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int n = static_cast<int>(x.size());
  for (int i = 0; i < n; ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(std::max(y[i], 1e-300));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<int> sweep_or(const ExperimentConfig& cfg, std::initializer_list<int> fallback) {
  return cfg.sweep.empty() ? std::vector<int>(fallback) : cfg.sweep;
}

bool oracle_available(const ModelSpec& spec, int N) {
  return spec.constraint.kind == ConstraintKind::FullSpace &&
         spec.info.kind == InfoKind::Full && N * spec.n <= 256;
}

json solver_summary(const CCSolution& sol) {
  json j;
  j["iterations"] = sol.iterations;
  j["converged"] = sol.converged;
  j["rho"] = sol.rho;
  j["residual_history"] = sol.residual_history;
  j["final_residual"] =
      sol.residual_history.empty() ? 0.0 : sol.residual_history.back();
  return j;
}

CsvTable cc_curves(const CCSolution& sol) {
  CsvTable t;
  t.header.push_back("t");
  vector_columns(t.header, "mean_alpha", sol.n);
  vector_columns(t.header, "mean_gamma", sol.n);
  vector_columns(t.header, "mean_y1", sol.n);
  vector_columns(t.header, "mean_y2", sol.n);
  for (int k = 0; k <= sol.grid.steps; ++k) {
    std::vector<double> row{sol.grid.time(k)};
    append_vector(row, sol.mean_alpha[k]);
    append_vector(row, sol.mean_gamma[k]);
    append_vector(row, sol.mean_y1[k]);
    append_vector(row, sol.y2_mean[k]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

struct Artifacts {
  json summary;
  CsvTable curves;
  CsvTable sweep;
};

Artifacts run_solve_cc(const ExperimentConfig& cfg) {
  Artifacts art;
  const auto ensemble = make_ensemble(cfg.grid, cfg.paths, cfg.model.diversity, cfg.seed);
  const auto sol = solve_cc(cfg.model, cfg.grid, ensemble, cfg.solver);
  art.summary["solver"] = solver_summary(sol);
  art.curves = cc_curves(sol);
  art.sweep.header = {"N"};
  if (!sol.converged) throw std::runtime_error("consistency solver did not converge");
  return art;
}

Artifacts run_check_wellposedness(const ExperimentConfig& cfg) {
  Artifacts art;
  const auto rep = optimize_modulus(compute_constants(cfg.model));
  json j;
  j["rho1_star"] = rep.rho1_star;
  j["rho2_star"] = rep.rho2_star;
  j["norm_F"] = rep.norm_F;
  j["norm_C"] = rep.norm_C;
  j["norm_F_tilde"] = rep.norm_F_tilde;
  j["k"] = std::vector<double>(rep.k.begin() + 1, rep.k.end());
  j["a4_satisfied"] = rep.a4_satisfied;
  j["a4_lhs"] = rep.a4_lhs;
  j["a4_rhs"] = rep.a4_rhs;
  j["a4_margin"] = rep.a4_margin;
  j["rho"] = rep.rho;
  j["modulus"] = rep.modulus;
  j["certified"] = rep.certified;
  j["l"] = std::vector<double>(rep.l.begin() + 1, rep.l.end());
  art.summary["wellposedness"] = j;
  art.curves.header = {"t"};
  art.sweep.header = {"N"};
  return art;
}

Artifacts run_population_sweep(const ExperimentConfig& cfg) {
  Artifacts art;
  const auto ensemble = make_ensemble(cfg.grid, cfg.paths, cfg.model.diversity, cfg.seed);
  const auto sol = solve_cc(cfg.model, cfg.grid, ensemble, cfg.solver);
  if (!sol.converged) throw std::runtime_error("consistency solver did not converge");
  const auto policy = decentralized_control(sol, cfg.model);
  art.summary["solver"] = solver_summary(sol);
  art.curves = cc_curves(sol);
  art.sweep.header = {"N", "consistency_error", "social_cost", "gap", "se"};

  std::vector<double> ns, errs;
  json per_n = json::array();
  for (int N : sweep_or(cfg, {8, 16, 32, 64})) {
    const auto run = simulate_population(cfg.model, policy, N, cfg.replications, cfg.seed);
    const double gap = oracle_available(cfg.model, N)
                           ? run.social_cost - centralized_oracle(cfg.model, N, cfg.grid)
                           : std::nan("");
    art.sweep.rows.push_back(
        {static_cast<double>(N), run.consistency_error, run.social_cost, gap,
         run.social_cost_se});
    ns.push_back(N);
    errs.push_back(run.consistency_error);
    json row;
    row["N"] = N;
    row["consistency_error"] = run.consistency_error;
    row["social_cost"] = run.social_cost;
    row["social_cost_se"] = run.social_cost_se;
    row["frozen_gap"] = run.frozen_gap;
    per_n.push_back(row);
  }
  art.summary["population"] = per_n;
  if (ns.size() >= 2)
    art.summary["consistency_loglog_slope"] = fit_loglog_slope(ns, errs);
  return art;
}

Artifacts run_gap_vs_n(const ExperimentConfig& cfg) {
  Artifacts art;
  if (cfg.model.constraint.kind != ConstraintKind::FullSpace ||
      cfg.model.info.kind != InfoKind::Full)
    throw std::runtime_error(
        "gap-vs-n requires the unconstrained full-information regime");
  const auto ensemble = make_ensemble(cfg.grid, cfg.paths, cfg.model.diversity, cfg.seed);
  const auto sol = solve_cc(cfg.model, cfg.grid, ensemble, cfg.solver);
  if (!sol.converged) throw std::runtime_error("consistency solver did not converge");
  const auto policy = decentralized_control(sol, cfg.model);
  art.summary["solver"] = solver_summary(sol);
  art.curves = cc_curves(sol);
  art.sweep.header = {"N", "consistency_error", "social_cost", "gap", "se"};

  std::vector<double> ns, gaps;
  json per_n = json::array();
  for (int N : sweep_or(cfg, {2, 4, 8, 16})) {
    if (!oracle_available(cfg.model, N))
      throw std::runtime_error("stacked oracle dimension limit exceeded");
    const auto run = simulate_population(cfg.model, policy, N, cfg.replications, cfg.seed);
    const double gap = run.social_cost - centralized_oracle(cfg.model, N, cfg.grid);
    art.sweep.rows.push_back({static_cast<double>(N), run.consistency_error,
                              run.social_cost, gap, run.social_cost_se});
    ns.push_back(N);
    gaps.push_back(std::max(gap, 0.0));
    json row;
    row["N"] = N;
    row["gap"] = gap;
    row["se"] = run.social_cost_se;
    per_n.push_back(row);
  }
  art.summary["gap"] = per_n;
  if (ns.size() >= 2) art.summary["gap_loglog_slope"] = fit_loglog_slope(ns, gaps);
  return art;
}

Artifacts run_equivalence(const ExperimentConfig& cfg) {
  Artifacts art;
  const auto ensemble = make_ensemble(cfg.grid, cfg.paths, cfg.model.diversity, cfg.seed);
  const auto sol = solve_cc(cfg.model, cfg.grid, ensemble, cfg.solver);
  if (!sol.converged) throw std::runtime_error("consistency solver did not converge");
  std::vector<Vector> u(cfg.grid.steps);
  for (int k = 0; k < cfg.grid.steps; ++k) u[k] = sol.control[k].rowwise().mean();

  const auto p = simulate_p_systems(cfg.model, u, cfg.grid, cfg.paths, cfg.seed);
  const int N = cfg.sweep.empty() ? 32 : cfg.sweep.front();
  const auto m = simulate_m_systems(cfg.model, u, N, cfg.replications, cfg.grid, cfg.seed);

  const auto& mass = cfg.model.diversity.weights;
  const int K = cfg.grid.steps;
  double id_mixture = 0.0, id_independent = 0.0, expansion = 0.0, mean_disc = 0.0;
  for (int k = 0; k <= K; ++k) {
    double parts1 = 0.0, parts2 = 0.0, parts2_sq = 0.0;
    for (std::size_t j = 0; j < mass.size(); ++j) {
      parts1 += mass[j] * p.p2_parts[j].second[k];
      parts2 += mass[j] * mass[j] * p.p3_parts[j].second[k];
      parts2_sq += mass[j] * mass[j] * p.p2_parts[j].second[k];
    }
    id_mixture = std::max(id_mixture, std::abs(p.p1.second[k] - parts1));
    id_independent = std::max(id_independent, std::abs(p.p3.second[k] - parts2));
    expansion = std::max(
        expansion, std::abs(p.p2.second[k] - (parts2_sq + 2.0 * p.p2_cross[k])));
    mean_disc = std::max({mean_disc, (p.p1.mean[k] - p.p2.mean[k]).norm(),
                          (p.p1.mean[k] - p.p3.mean[k]).norm()});
  }
  json j;
  j["second_moment_identity_mixture"] = id_mixture;
  j["second_moment_identity_independent"] = id_independent;
  j["square_expansion_residual"] = expansion;
  j["max_mean_discrepancy"] = mean_disc;
  j["population_N"] = N;
  j["population_max_pairwise_disc"] = m.max_pairwise_disc;
  j["stacked_bitwise_equal"] = m.stacked_bitwise_equal;
  art.summary["equivalence"] = j;

  CsvTable t;
  const int n = cfg.model.n;
  t.header = {"t"};
  vector_columns(t.header, "p1_mean", n);
  vector_columns(t.header, "p2_mean", n);
  vector_columns(t.header, "p3_mean", n);
  t.header.insert(t.header.end(),
                  {"p1_second", "p2_second", "p3_second", "p2_cross", "p3_cross"});
  for (int k = 0; k <= K; ++k) {
    std::vector<double> row{cfg.grid.time(k)};
    append_vector(row, p.p1.mean[k]);
    append_vector(row, p.p2.mean[k]);
    append_vector(row, p.p3.mean[k]);
    row.insert(row.end(), {p.p1.second[k], p.p2.second[k], p.p3.second[k],
                           p.p2_cross[k], p.p3_cross[k]});
    t.rows.push_back(std::move(row));
  }
  art.curves = std::move(t);
  art.sweep.header = {"N"};
  return art;
}

Artifacts run_diagnostics(const ExperimentConfig& cfg) {
  Artifacts art;
  const auto ensemble = make_ensemble(cfg.grid, cfg.paths, cfg.model.diversity, cfg.seed);
  const auto sol = solve_cc(cfg.model, cfg.grid, ensemble, cfg.solver);
  if (!sol.converged) throw std::runtime_error("consistency solver did not converge");
  art.summary["solver"] = solver_summary(sol);

  const std::vector<Vector> perturbation(cfg.grid.steps, Vector::Ones(cfg.model.m));
  art.sweep.header = {"N", "gap_rescaled_minor", "gap_aggregate_esup",
                      "gap_aggregate_supe"};
  std::vector<double> ns, minor, esup;
  VariationalDiagnostics last;
  for (int N : sweep_or(cfg, {8, 32, 128})) {
    last = variational_diagnostics(cfg.model, sol, N, perturbation, cfg.seed,
                                   cfg.replications);
    art.sweep.rows.push_back({static_cast<double>(N), last.gap_rescaled_minor,
                              last.gap_aggregate_esup, last.gap_aggregate_supe});
    ns.push_back(N);
    minor.push_back(last.gap_rescaled_minor);
    esup.push_back(last.gap_aggregate_supe);
  }
  if (ns.size() >= 2) {
    art.summary["minor_loglog_slope"] = fit_loglog_slope(ns, minor);
    art.summary["aggregate_loglog_slope"] = fit_loglog_slope(ns, esup);
  }

  CsvTable t;
  const int n = cfg.model.n;
  t.header = {"t"};
  vector_columns(t.header, "delta_x_i", n);
  vector_columns(t.header, "delta_x_minus_i", n);
  vector_columns(t.header, "x_star_j", n);
  vector_columns(t.header, "x_star_star", n);
  for (int k = 0; k <= cfg.grid.steps; ++k) {
    std::vector<double> row{cfg.grid.time(k)};
    append_vector(row, last.delta_x_i[k]);
    append_vector(row, last.delta_x_minus_i[k]);
    append_vector(row, last.x_star_j[k]);
    append_vector(row, last.x_star_star[k]);
    t.rows.push_back(std::move(row));
  }
  art.curves = std::move(t);
  return art;
}

}  // namespace

std::string format_sig17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed JSON: ") + e.what());
  }
  if (!j.contains("model")) throw std::invalid_argument("config missing \"model\"");
  if (!j.contains("experiment"))
    throw std::invalid_argument("config missing \"experiment\"");

  ExperimentConfig cfg;
  cfg.model = model_from_json(j.at("model").dump());
  cfg.experiment = j.at("experiment").get<std::string>();
  if (!known_experiment(cfg.experiment))
    throw std::invalid_argument("unknown experiment \"" + cfg.experiment + "\"");

  cfg.grid.horizon = cfg.model.horizon;
  cfg.grid.steps = cfg.model.default_grid_steps;
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    if (g.contains("T")) cfg.grid.horizon = g.at("T").get<double>();
    if (g.contains("steps")) cfg.grid.steps = g.at("steps").get<int>();
  }
  if (!(cfg.grid.horizon > 0.0) || cfg.grid.steps < 1)
    throw std::invalid_argument("grid requires T > 0 and steps >= 1");

  if (j.contains("monte_carlo")) {
    const json& mc = j.at("monte_carlo");
    if (mc.contains("paths")) cfg.paths = mc.at("paths").get<int>();
    if (mc.contains("replications")) cfg.replications = mc.at("replications").get<int>();
    if (mc.contains("seed")) cfg.seed = mc.at("seed").get<std::uint64_t>();
  }
  if (cfg.paths < 1 || cfg.replications < 1)
    throw std::invalid_argument("monte_carlo requires paths >= 1 and replications >= 1");

  if (j.contains("solver")) {
    const json& s = j.at("solver");
    if (s.contains("tol")) cfg.solver.tol = s.at("tol").get<double>();
    if (s.contains("max_iter")) cfg.solver.max_iter = s.at("max_iter").get<int>();
    if (s.contains("damping")) cfg.solver.damping = s.at("damping").get<double>();
  }
  if (!(cfg.solver.tol > 0.0)) throw std::invalid_argument("solver.tol must be > 0");
  if (cfg.solver.max_iter < 1) throw std::invalid_argument("solver.max_iter must be >= 1");
  if (!(cfg.solver.damping > 0.0) || cfg.solver.damping > 1.0)
    throw std::invalid_argument("solver.damping must lie in (0, 1]");

  if (j.contains("sweep")) {
    for (const auto& v : j.at("sweep")) {
      const int N = v.get<int>();
      if (N < 1) throw std::invalid_argument("sweep entries must be >= 1");
      cfg.sweep.push_back(N);
    }
  }
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return config_from_json(text.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["model"] = json::parse(model_to_json(cfg.model));
  j["experiment"] = cfg.experiment;
  j["grid"] = {{"T", cfg.grid.horizon}, {"steps", cfg.grid.steps}};
  j["monte_carlo"] = {
      {"paths", cfg.paths}, {"replications", cfg.replications}, {"seed", cfg.seed}};
  j["solver"] = {{"tol", cfg.solver.tol},
                 {"max_iter", cfg.solver.max_iter},
                 {"damping", cfg.solver.damping}};
  if (!cfg.sweep.empty()) j["sweep"] = cfg.sweep;
  j["output_dir"] = cfg.output_dir;
  return j.dump(2);
}

int run_experiment(const ExperimentConfig& cfg, int threads) {
  (void)threads;  // all computation is deterministic and single-threaded
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);

  const std::string echo = config_to_json(cfg);
  json summary;
  summary["experiment"] = cfg.experiment;
  summary["run_id"] = run_id_of(echo);
  summary["config"] = json::parse(echo);

  int status = 0;
  Artifacts art;
  art.curves.header = {"t"};
  art.sweep.header = {"N"};
  const auto violations = validate(cfg.model);
  if (!violations.empty()) {
    summary["status"] = "error";
    summary["error"] = {{"kind", "model-validation"}, {"violations", violations}};
    status = 1;
  } else {
    try {
      if (cfg.experiment == "solve-cc") art = run_solve_cc(cfg);
      else if (cfg.experiment == "check-wellposedness") art = run_check_wellposedness(cfg);
      else if (cfg.experiment == "population-sweep") art = run_population_sweep(cfg);
      else if (cfg.experiment == "equivalence") art = run_equivalence(cfg);
      else if (cfg.experiment == "gap-vs-n") art = run_gap_vs_n(cfg);
      else if (cfg.experiment == "diagnostics") art = run_diagnostics(cfg);
      else throw std::runtime_error("unknown experiment " + cfg.experiment);
      summary["status"] = "ok";
      summary.update(art.summary);
    } catch (const std::exception& e) {
      summary["status"] = "error";
      summary["error"] = {{"kind", "solver"}, {"message", e.what()}};
      if (!art.summary.is_null()) summary.update(art.summary);
      status = 2;
    }
  }

  write_file(dir / "summary.json", summary.dump(2) + "\n");
  write_file(dir / "curves.csv", art.curves.render());
  write_file(dir / "sweep.csv", art.sweep.render());
  return status;
}

std::string describe_experiment(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "experiment: " << cfg.experiment << "\n";
  out << "grid: T=" << cfg.grid.horizon << " steps=" << cfg.grid.steps
      << " dt=" << cfg.grid.dt() << "\n";
  out << "monte carlo: paths=" << cfg.paths << " replications=" << cfg.replications
      << " seed=" << cfg.seed << "\n";
  out << "solver: tol=" << cfg.solver.tol << " max_iter=" << cfg.solver.max_iter
      << " damping=" << cfg.solver.damping << "\n";
  out << "model: n=" << cfg.model.n << " m=" << cfg.model.m
      << " nodes=" << cfg.model.diversity.node_count() << "\n";

  const auto violations = validate(cfg.model);
  if (violations.empty()) {
    const auto rep = optimize_modulus(compute_constants(cfg.model));
    out << "constants: rho1*=" << rep.rho1_star << " rho2*=" << rep.rho2_star
        << " a4=" << (rep.a4_satisfied ? "satisfied" : "violated")
        << " modulus=" << rep.modulus << (rep.certified ? " (certified)" : "")
        << "\n";
  } else {
    out << "constants: model invalid (" << violations.front() << ")\n";
  }

  // Dominant allocation: the per-step path fields of the consistency solver.
  const double field_bytes = 7.0 * (cfg.grid.steps + 1) * cfg.model.n *
                             static_cast<double>(cfg.paths) * sizeof(double);
  out << "estimated memory: " << field_bytes / (1024.0 * 1024.0) << " MiB\n";

  if (!cfg.sweep.empty() || cfg.experiment == "population-sweep" ||
      cfg.experiment == "gap-vs-n" || cfg.experiment == "diagnostics") {
    ExperimentConfig c = cfg;
    std::vector<int> ns =
        cfg.experiment == "gap-vs-n"      ? sweep_or(c, {2, 4, 8, 16})
        : cfg.experiment == "diagnostics" ? sweep_or(c, {8, 32, 128})
                                          : sweep_or(c, {8, 16, 32, 64});
    out << "sweep:\n";
    for (int N : ns)
      out << "  N=" << N << " agent paths=" << static_cast<long long>(N) * cfg.replications
          << "\n";
  }
  return out.str();
}

}  // namespace mft
