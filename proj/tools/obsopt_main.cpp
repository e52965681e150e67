#include "obsopt/checks.hpp"
#include "obsopt/report_io.hpp"
#include "obsopt/vi_solver.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

using namespace obsopt;

constexpr int kExitOk = 0;
constexpr int kExitUnconverged = 1;
constexpr int kExitUsage = 2;

struct CommonOpts {
  int n = 21; // the benchmark tables' headline grid: 20x20 interior nodes
  std::string theta = "frac";
  std::vector<double> alphas = {1e-3};
  std::string solver = "barrier";
  std::string weighting = "node-sum";
  double tol = 1e-3;
  int max_iter = 1000;
  unsigned seed = 0;
  std::string out;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_alpha_list = true) {
  cmd->add_option("--n", opts.n, "grid subdivisions per side (h = 1/n)")
      ->check(CLI::Range(2, 4096));
  cmd->add_option("--theta", opts.theta, "smoothing family")
      ->check(CLI::IsMember({"frac", "exp", "log"}));
  if (with_alpha_list) {
    cmd->add_option("--alpha", opts.alphas,
                    "smoothing parameter(s), comma separated")
        ->delimiter(',');
  }
  cmd->add_option("--solver", opts.solver, "solution path")
      ->check(CLI::IsMember({"barrier", "penalty"}));
  cmd->add_option("--weighting", opts.weighting, "inner-product weighting")
      ->check(CLI::IsMember({"node-sum", "cell"}));
  cmd->add_option("--tol", opts.tol, "KKT tolerance");
  cmd->add_option("--max-iter", opts.max_iter, "iteration limit");
  cmd->add_option("--seed", opts.seed, "random seed");
  cmd->add_option("--out", opts.out, "output path");
  cmd->add_flag("--deterministic", opts.deterministic,
                "bit-reproducible output (zeroes wall times)");
}

RunSpec to_runspec(const CommonOpts& opts) {
  RunSpec spec;
  spec.n = opts.n;
  spec.theta = smoothing_kind_from_string(opts.theta);
  spec.alphas = opts.alphas;
  spec.path = solver_path_from_string(opts.solver);
  spec.weighting = weighting_from_string(opts.weighting);
  spec.tol = opts.tol;
  spec.max_iter = opts.max_iter;
  spec.seed = opts.seed;
  spec.deterministic = opts.deterministic;
  spec.out = opts.out;
  return spec;
}

SolverConfig to_config(const RunSpec& spec) {
  SolverConfig cfg;
  cfg.tol = spec.tol;
  cfg.max_iter = spec.max_iter;
  return cfg;
}

SolveReport run_one(const RelaxedOcp& ocp, const RunSpec& spec,
                    const SolverConfig& cfg,
                    const std::optional<Eigen::VectorXd>& warm) {
  if (spec.path == SolverPath::Penalty) {
    return solve_penalty(ocp, cfg);
  }
  return solve_barrier(ocp, cfg, warm);
}

/// Runs the alpha schedule (warm-started in barrier mode) and collects
/// table rows plus the full report stages.
RunReport run_schedule(const RunSpec& spec) {
  const Grid grid = build_grid(spec.n);
  const ProblemData data = example71_data(grid);
  const SolverConfig cfg = to_config(spec);
  RunReport report;
  report.spec = spec;
  std::optional<Eigen::VectorXd> warm;
  for (double alpha : spec.alphas) {
    const RelaxedOcp ocp = make_relaxed_ocp(
        grid, data, SmoothingFn(spec.theta, alpha), spec.weighting);
    const auto t0 = std::chrono::steady_clock::now();
    SolveReport rep = run_one(ocp, spec, cfg, warm);
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    warm = rep.z;
    report.stages.push_back(
        make_report_stage(alpha, rep, spec.deterministic ? 0.0 : ms));
  }
  return report;
}

std::vector<TableRow> rows_of(const RunReport& report) {
  std::vector<TableRow> rows;
  rows.reserve(report.stages.size());
  for (const auto& st : report.stages) rows.push_back(st.row);
  return rows;
}

int exit_code_of(const RunReport& report) {
  for (const auto& st : report.stages) {
    if (st.row.status != "converged") return kExitUnconverged;
  }
  return kExitOk;
}

int cmd_table(const CommonOpts& opts) {
  const RunSpec spec = to_runspec(opts);
  const RunReport report = run_schedule(spec);
  const auto rows = rows_of(report);
  if (!spec.out.empty()) {
    write_table_csv_file(spec.out, rows);
    write_report_file(spec.out + ".json", report);
  }
  write_table_csv(std::cout, rows);
  return exit_code_of(report);
}

int cmd_solve(const CommonOpts& opts) {
  RunSpec spec = to_runspec(opts);
  spec.alphas.resize(1); // single solve: first alpha only
  const Grid grid = build_grid(spec.n);
  const ProblemData data = example71_data(grid);
  const RelaxedOcp ocp = make_relaxed_ocp(
      grid, data, SmoothingFn(spec.theta, spec.alphas[0]), spec.weighting);
  const auto t0 = std::chrono::steady_clock::now();
  const SolveReport rep = run_one(ocp, spec, to_config(spec), std::nullopt);
  const double ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  RunReport report;
  report.spec = spec;
  report.stages.push_back(
      make_report_stage(spec.alphas[0], rep, spec.deterministic ? 0.0 : ms));
  const auto& st = report.stages.front();
  std::printf("status          %s\n", st.row.status.c_str());
  std::printf("objective       %.10e\n", st.row.objective);
  std::printf("state_residual  %.6e\n", st.row.state_residual_2);
  std::printf("comp_error      %.6e\n", st.row.comp_error);
  std::printf("iterations      %d\n", st.row.iterations);
  std::printf("r               %.6e\n", st.r);
  std::printf("kkt             y=%.3e v=%.3e xi=%.3e r_comp=%.3e\n",
              st.stationarity_y, st.stationarity_v, st.stationarity_xi,
              st.r_complementarity);
  if (!spec.out.empty()) {
    // grid-value dumps of the optimal fields, one file per field
    write_field_dump_file(spec.out + ".y.dat", rep.y);
    write_field_dump_file(spec.out + ".v.dat", rep.v);
    write_field_dump_file(spec.out + ".xi.dat", rep.xi);
    write_field_dump_file(spec.out + ".psi.dat", data.psi);
    write_report_file(spec.out + ".json", report);
  }
  return exit_code_of(report);
}

int cmd_gradcheck(const CommonOpts& opts, bool n_given) {
  const int n = n_given ? opts.n : 8;
  if (n > 12) {
    std::cerr << "gradcheck: n must be <= 12 (finite differences)\n";
    return kExitUsage;
  }
  const auto res = run_gradient_checks(
      n, smoothing_kind_from_string(opts.theta), opts.alphas[0],
      opts.seed);
  std::printf("objective_gradient        %.3e\n", res.objective_gradient);
  std::printf("state_jacobian            %.3e\n", res.state_jacobian);
  std::printf("complementarity_jacobian  %.3e\n", res.complementarity_jacobian);
  std::printf("penalized_gradient        %.3e\n", res.penalized_gradient);
  std::printf("adjoint_reduced_gradient  %.3e\n", res.adjoint_reduced_gradient);
  std::printf("max                       %.3e\n", res.max_error());
  return res.max_error() <= 1e-5 ? kExitOk : kExitUnconverged;
}

int cmd_oracle(const CommonOpts& opts) {
  const RunSpec spec = to_runspec(opts);
  const Grid grid = build_grid(spec.n);
  const ProblemData data = example71_data(grid);
  const SolverConfig cfg = to_config(spec);
  const auto reports = alpha_continuation(grid, data, spec.theta, spec.alphas,
                                          cfg, spec.weighting);
  std::printf("alpha,dist_inf,comp_error,status\n");
  bool ok = true;
  double prev = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < reports.size(); ++k) {
    const auto& rep = reports[k];
    const ViSolution vi =
        solve_vi(grid, data, rep.v, std::min(1e-10, 0.01 * spec.tol));
    const double dist =
        (rep.y.values() - vi.y.values()).lpNorm<Eigen::Infinity>();
    std::printf("%.5e,%.5e,%.5e,%s\n", spec.alphas[k], dist, rep.comp_error,
                to_string(rep.status).c_str());
    ok = ok && rep.converged && dist <= prev * (1.0 + 1e-9);
    prev = dist;
  }
  return ok ? kExitOk : kExitUnconverged;
}

int cmd_calibrate(const CommonOpts& opts) {
  const RunSpec spec = to_runspec(opts);
  const auto res = calibrate_weighting(spec.n, spec.theta, spec.alphas[0],
                                       to_config(spec));
  std::printf("objective node-sum  %.6e\n", res.objective_node_sum);
  std::printf("objective cell      %.6e\n", res.objective_cell);
  std::printf("reference           %.6e\n", res.reference);
  std::printf("selected            %s\n", to_string(res.selected).c_str());
  if (!spec.out.empty()) {
    RunReport report;
    report.spec = spec;
    report.calibrated_weighting = to_string(res.selected);
    write_report_file(spec.out, report);
  }
  return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal control of semilinear elliptic obstacle problems via "
               "smoothed complementarity relaxation"};
  app.require_subcommand(1);

  CommonOpts opts;
  auto* table = app.add_subcommand(
      "table", "alpha sweep, one benchmark table row per alpha");
  add_common(table, opts);
  auto* solve = app.add_subcommand("solve", "single solve with field dumps");
  add_common(solve, opts);
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference checks of all analytic derivatives");
  add_common(gradcheck, opts);
  auto* oracle = app.add_subcommand(
      "oracle", "alpha continuation cross-checked against the VI solver");
  add_common(oracle, opts);
  auto* calibrate = app.add_subcommand(
      "calibrate", "pick the weighting mode that reproduces the reference "
                   "objective");
  add_common(calibrate, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (table->parsed()) return cmd_table(opts);
    if (solve->parsed()) return cmd_solve(opts);
    if (gradcheck->parsed()) {
      return cmd_gradcheck(opts, gradcheck->count("--n") > 0);
    }
    if (oracle->parsed()) return cmd_oracle(opts);
    if (calibrate->parsed()) return cmd_calibrate(opts);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUnconverged;
  }
  return kExitUsage;
}
