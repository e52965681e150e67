// Acceptance suite: runs the ten benchmark criteria end to end and prints
// one [PASS]/[FAIL] line per criterion. Exit status is nonzero if any
// criterion fails. Individual criteria can be selected by number:
//   obsopt_acceptance        -> all
//   obsopt_acceptance 4 7    -> only 4 and 7

#include "obsopt/checks.hpp"
#include "obsopt/report_io.hpp"
#include "obsopt/vi_solver.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace {

using namespace obsopt;
using Clock = std::chrono::steady_clock;

struct Criterion {
  int id;
  std::string summary;
  std::function<bool(std::string&)> run;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool within_pct(double value, double target, double pct) {
  return std::abs(value - target) <= pct / 100.0 * std::abs(target);
}

std::string fmt(const char* f, ...) {
  va_list args;
  va_start(args, f);
  char buf[1024];
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

// The reference Tables 1/2 use a lattice with 20x20 interior unknowns
// inside a 22x22 grid, which is subdivision count 21 here; Table 3 uses
// h = 1/15 with 14x14 interior unknowns, matching build_grid(15) directly.
constexpr int kTable12Grid = 21;
constexpr int kTable3Grid = 15;

struct BenchRun {
  RelaxedOcp ocp;
  SolveReport report;
  double alpha;
  bool penalty = false;
};

std::vector<BenchRun> run_benchmark(int n, SmoothingKind kind,
                                    const std::vector<double>& alphas,
                                    const SolverConfig& cfg) {
  const Grid grid = build_grid(n);
  const ProblemData data = example71_data(grid);
  auto reports = alpha_continuation(grid, data, kind, alphas, cfg);
  std::vector<BenchRun> runs;
  for (size_t k = 0; k < alphas.size(); ++k) {
    runs.push_back(BenchRun{
        make_relaxed_ocp(grid, data, SmoothingFn(kind, alphas[k])),
        std::move(reports[k]), alphas[k], false});
  }
  return runs;
}

bool criterion1(std::string& detail) {
  const auto t0 = Clock::now();
  SolverConfig cfg;
  const auto cal =
      calibrate_weighting(kTable12Grid, SmoothingKind::Fractional, 1e-3, cfg);
  if (cal.selected != WeightingMode::NodeSum) {
    detail = "calibration picked an unexpected weighting";
    return false;
  }
  const std::vector<double> alphas = {1e-1, 1e-2, 1e-3};
  const std::vector<double> targets = {2.8420e+02, 2.8564e+02, 2.8572e+02};
  const auto runs =
      run_benchmark(kTable12Grid, SmoothingKind::Fractional, alphas, cfg);
  bool ok = true;
  std::string objs, gates;
  for (size_t k = 0; k < runs.size(); ++k) {
    const auto& rep = runs[k].report;
    if (!rep.converged) gates += fmt(" [a=%g unconverged]", alphas[k]);
    if (!within_pct(rep.objective, targets[k], 2.0)) {
      gates += fmt(" [a=%g obj off]", alphas[k]);
    }
    if (rep.comp_error > alphas[k] * alphas[k] + 1e-12) {
      gates += fmt(" [a=%g comp %.3e > a^2]", alphas[k], rep.comp_error);
    }
    if (rep.state_residual_2 > 1e-6) {
      gates += fmt(" [a=%g state %.3e]", alphas[k], rep.state_residual_2);
    }
    ok = ok && rep.converged && within_pct(rep.objective, targets[k], 2.0) &&
         rep.comp_error <= alphas[k] * alphas[k] + 1e-12 &&
         rep.state_residual_2 <= 1e-6;
    objs += fmt(" %.4f/%.1f", rep.objective, targets[k]);
  }
  const double elapsed = seconds_since(t0);
  ok = ok && elapsed <= 120.0;
  detail = fmt("N=20 reference grid = 20x20 interior (h=1/21); obj/target:%s;%s "
               "calibrated=node-sum; non-selected cell obj=%.3g; %.1fs",
               objs.c_str(), gates.empty() ? " all gates ok;" : gates.c_str(),
               cal.objective_cell, elapsed);
  return ok;
}

bool criterion2(std::string& detail) {
  SolverConfig cfg;
  const std::vector<double> alphas = {1e-1, 1e-2, 1e-3};
  const std::vector<double> obj_targets = {2.8455e+02, 2.8564e+02, 2.8572e+02};
  const std::vector<double> comp_targets = {4.943e-3, 6.013e-5, 5.892e-7};
  const auto runs =
      run_benchmark(kTable12Grid, SmoothingKind::Logarithmic, alphas, cfg);
  bool ok = true;
  std::string objs, comps;
  for (size_t k = 0; k < runs.size(); ++k) {
    const auto& rep = runs[k].report;
    ok = ok && rep.converged;
    ok = ok && within_pct(rep.objective, obj_targets[k], 2.0);
    const double ratio = rep.comp_error / comp_targets[k];
    ok = ok && ratio >= 0.1 && ratio <= 10.0;
    objs += fmt(" %.4f/%.1f", rep.objective, obj_targets[k]);
    comps += fmt(" %.2e/%.2e", rep.comp_error, comp_targets[k]);
  }
  detail = fmt("obj/target:%s; comp/target:%s", objs.c_str(), comps.c_str());
  return ok;
}

bool criterion3(std::string& detail) {
  SolverConfig cfg;
  const auto runs =
      run_benchmark(kTable3Grid, SmoothingKind::Fractional, {1e-2}, cfg);
  const auto& rep = runs[0].report;
  const double target = 1.502476e+02;
  const bool ok = rep.converged && within_pct(rep.objective, target, 2.0);
  detail = fmt("obj %.6f vs %.4f (%.3f%% off), %d iterations",
               rep.objective, target,
               100.0 * std::abs(rep.objective - target) / target,
               rep.iterations);
  return ok;
}

bool criterion4(std::string& detail) {
  const auto t0 = Clock::now();
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> unif(-6.0, 2.0);
  int checked = 0, skipped = 0;
  for (int rep = 0; rep < 100000; ++rep) {
    const double alpha = std::pow(10.0, unif(rng));
    const double a = std::pow(10.0, unif(rng));
    const double b = std::pow(10.0, unif(rng));
    if (std::abs(a * b - alpha * alpha) <=
        1e-12 * std::max(1.0, alpha * alpha)) {
      ++skipped;
      continue;
    }
    const bool bound = fractional_product_bound(alpha, a, b);
    const bool feasible =
        relaxed_residual(SmoothingFn(SmoothingKind::Fractional, alpha), a,
                         b) >= 0.0;
    if (bound != feasible) {
      detail = fmt("mismatch at alpha=%g a=%g b=%g", alpha, a, b);
      return false;
    }
    ++checked;
  }
  const double elapsed = seconds_since(t0);
  detail = fmt("%d triples checked (%d at the float boundary), %.3fs", checked,
               skipped, elapsed);
  return elapsed < 1.0;
}

bool criterion5(std::string& detail) {
  const auto t0 = Clock::now();
  std::mt19937 rng(515);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const SmoothingKind kinds[] = {SmoothingKind::Fractional,
                                 SmoothingKind::Exponential,
                                 SmoothingKind::Logarithmic};
  for (auto kind : kinds) {
    for (double alpha : {1.0, 1e-1, 1e-3}) {
      const SmoothingFn fn(kind, alpha);
      if (theta(fn, 0.0) != 0.0) {
        detail = "theta(0) != 0";
        return false;
      }
      for (int rep = 0; rep < 2000; ++rep) {
        const double x1 = 20.0 * unif(rng);
        const double x2 = 20.0 * unif(rng);
        const double t1 = theta(fn, x1), t2 = theta(fn, x2);
        if (!(t1 >= 0.0 && t1 < 1.0)) {
          detail = fmt("range violation at x=%g", x1);
          return false;
        }
        if ((x1 - x2) * (t1 - t2) < -1e-15) {
          detail = "monotonicity violation";
          return false;
        }
        const double lam = unif(rng);
        if (theta(fn, lam * x1 + (1 - lam) * x2) <
            lam * t1 + (1 - lam) * t2 - 1e-12) {
          detail = "concavity violation";
          return false;
        }
      }
    }
    for (double x : {0.05, 1.0, 6.0}) {
      double prev = 0.0;
      for (double alpha : {1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
        const double t = theta(SmoothingFn(kind, alpha), x);
        if (t < prev - 1e-15) {
          detail = "limit not monotone in alpha";
          return false;
        }
        prev = t;
      }
      if (prev <= 0.999) {
        detail = fmt("theta does not approach 1 at x=%g (got %g)", x, prev);
        return false;
      }
    }
  }
  const double elapsed = seconds_since(t0);
  detail = fmt("monotone, concave, in [0,1), limit -> 1; %.3fs", elapsed);
  return elapsed < 1.0;
}

bool criterion6(std::string& detail) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (unsigned seed : {42u, 7u, 2025u}) {
    const auto res =
        run_gradient_checks(8, SmoothingKind::Fractional, 1e-2, seed);
    worst = std::max(worst, res.max_error());
    if (res.max_error() > 1e-5) {
      detail = fmt("seed %u: max relative error %.2e > 1e-5 "
                   "(obj %.1e, state %.1e, comp %.1e, pen %.1e, adj %.1e)",
                   seed, res.max_error(), res.objective_gradient,
                   res.state_jacobian, res.complementarity_jacobian,
                   res.penalized_gradient, res.adjoint_reduced_gradient);
      return false;
    }
  }
  const double elapsed = seconds_since(t0);
  detail = fmt("3 seeds, worst relative error %.2e, %.1fs", worst, elapsed);
  return elapsed < 30.0;
}

bool criterion7(std::string& detail) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  int count = 0;
  for (int n : {2, 3}) {
    const Grid grid = build_grid(n);
    for (unsigned seed = 0; seed < 20; ++seed) {
      const ProblemData data = testing::random_problem_data(
          grid, 1000u * static_cast<unsigned>(n) + seed);
      const FieldVector v(grid);
      const auto ref = brute_force_active_set(grid, data, v);
      const auto sol = solve_vi(grid, data, v, 1e-11);
      if (!sol.converged) {
        detail = fmt("solve_vi failed at n=%d seed=%u", n, seed);
        return false;
      }
      const double dist =
          (sol.y.values() - ref.y.values()).lpNorm<Eigen::Infinity>();
      worst = std::max(worst, dist);
      ++count;
      if (dist > 1e-8) {
        detail = fmt("disagreement %.2e at n=%d seed=%u", dist, n, seed);
        return false;
      }
    }
  }
  const double elapsed = seconds_since(t0);
  detail = fmt("%d data sets, worst max-norm gap %.2e, %.2fs", count, worst,
               elapsed);
  return elapsed < 10.0;
}

bool criterion8(std::string& detail) {
  const auto t0 = Clock::now();
  const Grid grid = build_grid(10);
  const ProblemData data = example71_data(grid);
  SolverConfig cfg;
  const std::vector<double> alphas = {1e-1, 1e-2, 1e-3, 1e-4};
  const auto reports =
      alpha_continuation(grid, data, SmoothingKind::Fractional, alphas, cfg);
  double prev_dist = std::numeric_limits<double>::infinity();
  double prev_comp = std::numeric_limits<double>::infinity();
  std::string dists;
  for (size_t k = 0; k < reports.size(); ++k) {
    const auto& rep = reports[k];
    if (!rep.converged) {
      detail = fmt("stage alpha=%g did not converge", alphas[k]);
      return false;
    }
    const auto vi = solve_vi(grid, data, rep.v, 1e-11);
    const double dist =
        (rep.y.values() - vi.y.values()).lpNorm<Eigen::Infinity>();
    dists += fmt(" %.2e", dist);
    if (dist > prev_dist * (1.0 + 1e-9)) {
      detail = fmt("oracle distance increased:%s", dists.c_str());
      return false;
    }
    if (k > 0 && rep.comp_error > 0.1 * prev_comp) {
      detail = fmt("comp_error fell only %.1fx at alpha=%g",
                   prev_comp / rep.comp_error, alphas[k]);
      return false;
    }
    prev_dist = dist;
    prev_comp = rep.comp_error;
  }
  const double elapsed = seconds_since(t0);
  detail = fmt("|y_a - y_VI|:%s; comp ratios >= 10x per decade; %.1fs",
               dists.c_str(), elapsed);
  return elapsed < 60.0;
}

bool criterion9(std::string& detail) {
  const auto t0 = Clock::now();
  const Grid grid = build_grid(8);
  const ProblemData data = example71_data(grid);
  const RelaxedOcp ocp = make_relaxed_ocp(
      grid, data, SmoothingFn(SmoothingKind::Fractional, 1e-2));
  SolverConfig cfg;
  const auto bar = solve_barrier(ocp, cfg);
  const auto pen = solve_penalty(ocp, cfg);
  const double gap = std::abs(bar.objective - pen.objective);
  const double elapsed = seconds_since(t0);
  detail = fmt("barrier %.6f vs penalty %.6f, |gap| = %.2e <= %.0e; %.1fs",
               bar.objective, pen.objective, gap, 10.0 * cfg.tol, elapsed);
  return bar.converged && pen.converged && gap <= 10.0 * cfg.tol &&
         elapsed < 30.0;
}

bool criterion10(std::string& detail) {
  SolverConfig cfg;
  std::vector<BenchRun> runs = run_benchmark(
      kTable12Grid, SmoothingKind::Fractional, {1e-1, 1e-2, 1e-3}, cfg);
  {
    auto t3 = run_benchmark(kTable3Grid, SmoothingKind::Fractional, {1e-2}, cfg);
    runs.insert(runs.end(), t3.begin(), t3.end());
  }
  {
    const Grid grid = build_grid(8);
    const ProblemData data = example71_data(grid);
    const RelaxedOcp ocp = make_relaxed_ocp(
        grid, data, SmoothingFn(SmoothingKind::Fractional, 1e-2));
    runs.push_back(BenchRun{ocp, solve_barrier(ocp, cfg), 1e-2, false});
    runs.push_back(BenchRun{ocp, solve_penalty(ocp, cfg), 1e-2, true});
  }

  bool ok = true;
  double worst_station = 0.0, worst_rc = 0.0;
  std::string diag;
  for (const auto& run : runs) {
    const auto& rep = run.report;
    if (!rep.converged) {
      detail = fmt("a solve at alpha=%g did not converge", run.alpha);
      return false;
    }
    ok = ok && rep.r >= 0.0;
    ok = ok && rep.kkt.r_complementarity <= cfg.tol;
    worst_rc = std::max(worst_rc, rep.kkt.r_complementarity);

    const auto pw = verify_kkt(run.ocp, rep);
    ok = ok && pw.state_feasibility <= cfg.tol;
    ok = ok && pw.bound_violation <= cfg.tol;
    ok = ok && pw.complementarity <= cfg.tol;
    if (!run.penalty) {
      // The penalty path certifies the penalized problem; its stationarity
      // for the plain NLP is limited by the proximal anchor (see ledger),
      // so the recomputed stationarity gate applies to barrier solves.
      ok = ok && pw.stationarity <= cfg.tol;
      worst_station = std::max(worst_station, pw.stationarity);
    } else {
      const double id_gap =
          std::abs((rep.penalty_eps * rep.q.values()).norm() -
                   state_residual(run.ocp, rep.z).values().norm());
      ok = ok && id_gap <= 1e-10;
    }
    diag += fmt(" %.1e", rep.kkt.stationarity_y / rep.kkt.scale);
  }
  detail = fmt("pointwise KKT <= %.0e at all barrier solves (worst %.1e); "
               "r >= 0; aggregate r_comp <= %.1e; aggregate stationarity_y "
               "diagnostics (scaled):%s",
               cfg.tol, worst_station, worst_rc, diag.c_str());
  return ok;
}

} // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  const std::vector<Criterion> criteria = {
      {1, "Table 1 reproduction (fractional), objectives within 2%", criterion1},
      {2, "Table 2 reproduction (logarithmic)", criterion2},
      {3, "Table 3 cross-config (n=15, fractional, alpha=1e-2)", criterion3},
      {4, "product-bound equivalence on 1e5 random triples", criterion4},
      {5, "smoothing family property suite", criterion5},
      {6, "analytic derivatives vs finite differences (8x8)", criterion6},
      {7, "VI solver vs exhaustive active-set enumeration", criterion7},
      {8, "alpha-continuation convergence toward the VI solution", criterion8},
      {9, "penalty and barrier paths agree on the objective", criterion9},
      {10, "multiplier certificates at every converged solve", criterion10},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = fmt("exception: %s", e.what());
    }
    std::printf("[%s] criterion %2d: %s — %s\n", ok ? "PASS" : "FAIL", c.id,
                c.summary.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
