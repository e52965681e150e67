#include "obsopt/checks.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace obsopt {

namespace {

double fd_step(double x) { return 6e-6 * (1.0 + std::abs(x)); }

double rel_err(double fd, double an) {
  return std::abs(fd - an) / std::max(1.0, std::abs(an));
}

/// Max relative error between a Jacobian and its central finite-difference
/// approximation, column by column.
template <class EvalFn>
double jacobian_fd_error(const Eigen::SparseMatrix<double>& jac,
                         const Eigen::VectorXd& z, EvalFn&& eval) {
  const Eigen::MatrixXd dense = Eigen::MatrixXd(jac);
  double worst = 0.0;
  Eigen::VectorXd zp = z;
  for (int k = 0; k < z.size(); ++k) {
    const double h = fd_step(z[k]);
    zp[k] = z[k] + h;
    const Eigen::VectorXd fp = eval(zp);
    zp[k] = z[k] - h;
    const Eigen::VectorXd fm = eval(zp);
    zp[k] = z[k];
    for (int i = 0; i < fp.size(); ++i) {
      worst = std::max(worst, rel_err((fp[i] - fm[i]) / (2.0 * h), dense(i, k)));
    }
  }
  return worst;
}

template <class EvalFn>
double gradient_fd_error(const Eigen::VectorXd& grad, const Eigen::VectorXd& z,
                         EvalFn&& eval) {
  double worst = 0.0;
  Eigen::VectorXd zp = z;
  for (int k = 0; k < z.size(); ++k) {
    const double h = fd_step(z[k]);
    zp[k] = z[k] + h;
    const double fp = eval(zp);
    zp[k] = z[k] - h;
    const double fm = eval(zp);
    zp[k] = z[k];
    worst = std::max(worst, rel_err((fp - fm) / (2.0 * h), grad[k]));
  }
  return worst;
}

} // namespace

double GradCheckResult::max_error() const {
  return std::max({objective_gradient, state_jacobian,
                   complementarity_jacobian, penalized_gradient,
                   adjoint_reduced_gradient});
}

GradCheckResult run_gradient_checks(int n, SmoothingKind kind, double alpha,
                                    unsigned seed) {
  if (n > 12) {
    throw std::invalid_argument(
        "run_gradient_checks: finite differences are only affordable for n <= 12");
  }
  const Grid grid = build_grid(n);
  const ProblemData data = example71_data(grid);
  const RelaxedOcp ocp =
      make_relaxed_ocp(grid, data, SmoothingFn(kind, alpha));
  const int m = grid.interior_count;

  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Keep y - psi and xi well away from the bounds so central differences
  // stay inside the constraint domain.
  Eigen::VectorXd z(3 * m), anchor(3 * m);
  for (int i = 0; i < m; ++i) {
    z[i] = data.psi[i] + 0.5 + unit(rng);
    z[m + i] = 2.0 * unit(rng) - 1.0;
    z[2 * m + i] = 0.5 + unit(rng);
    anchor[i] = data.psi[i] + 0.5 + unit(rng);
    anchor[m + i] = 2.0 * unit(rng) - 1.0;
    anchor[2 * m + i] = 0.5 + unit(rng);
  }

  GradCheckResult result;
  result.objective_gradient = gradient_fd_error(
      objective_gradient(ocp, z), z,
      [&](const Eigen::VectorXd& zz) { return objective(ocp, zz); });
  result.state_jacobian = jacobian_fd_error(
      state_jacobian(ocp, z), z, [&](const Eigen::VectorXd& zz) {
        return state_residual(ocp, zz).values();
      });
  result.complementarity_jacobian = jacobian_fd_error(
      complementarity_jacobian(ocp, z), z, [&](const Eigen::VectorXd& zz) {
        return complementarity_constraints(ocp, zz).values();
      });
  const double eps = 0.5;
  result.penalized_gradient = gradient_fd_error(
      penalized_gradient(ocp, z, eps, anchor), z, [&](const Eigen::VectorXd& zz) {
        return penalized_objective(ocp, zz, eps, anchor);
      });

  // Reduced tracking objective through the state solve.
  FieldVector v(grid), xi(grid);
  for (int i = 0; i < m; ++i) {
    v[i] = 2.0 * unit(rng) - 1.0;
    xi[i] = 0.1 * unit(rng);
  }
  const FieldVector reduced = reduced_tracking_gradient(ocp, v, xi);
  double worst = 0.0;
  Eigen::VectorXd vp = v.values();
  for (int k = 0; k < m; ++k) {
    const double h = fd_step(vp[k]);
    auto eval_reduced = [&](double vk) {
      Eigen::VectorXd vv = vp;
      vv[k] = vk;
      const FieldVector vf(grid, vv);
      const FieldVector y = solve_state(ocp, vf, xi);
      Eigen::VectorXd zz(3 * m);
      zz << y.values(), vv, xi.values();
      return objective(ocp, zz);
    };
    const double fd = (eval_reduced(vp[k] + h) - eval_reduced(vp[k] - h)) /
                      (2.0 * h);
    worst = std::max(worst, rel_err(fd, reduced[k]));
  }
  result.adjoint_reduced_gradient = worst;
  return result;
}

CalibrationResult calibrate_weighting(int n, SmoothingKind kind, double alpha,
                                      const SolverConfig& cfg) {
  CalibrationResult result;
  result.reference = kReferenceObjective;
  const Grid grid = build_grid(n);
  const ProblemData data = example71_data(grid);

  // Warm continuation down to the requested alpha, as in the benchmark
  // sweeps; cold solves at small alpha are much more expensive.
  std::vector<double> schedule;
  for (double a = 1e-1; a > alpha * 3.0; a *= 1e-1) schedule.push_back(a);
  schedule.push_back(alpha);

  auto objective_under = [&](WeightingMode mode) {
    const auto reports =
        alpha_continuation(grid, data, kind, schedule, cfg, mode);
    const auto& last = reports.back();
    if (!last.converged) {
      throw std::runtime_error("calibrate_weighting: solve under " +
                               to_string(mode) + " weighting failed");
    }
    return last.objective;
  };
  result.objective_node_sum = objective_under(WeightingMode::NodeSum);
  result.objective_cell = objective_under(WeightingMode::CellWeighted);
  result.selected = std::abs(result.objective_node_sum - result.reference) <=
                            std::abs(result.objective_cell - result.reference)
                        ? WeightingMode::NodeSum
                        : WeightingMode::CellWeighted;
  return result;
}

} // namespace obsopt
