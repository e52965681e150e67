#pragma once

#include "obsopt/grid.hpp"
#include "obsopt/smoothing.hpp"

#include <limits>

namespace obsopt {

/// The relaxed optimal-control NLP over z = (y, v, xi), all interior-node
/// fields:
///
///   min  1/2 |y - z_d|^2 + nu/2 |v - v_d|^2          (weighted inner product)
///   s.t. A y + g(y) - f - v - xi = 0                  (state equation)
///        scaled_residual(y_i - psi_i, xi_i) >= 0      (relaxed complementarity)
///        y >= psi,  xi >= 0                           (bounds)
///        |xi| <= R                                    (optional, R = inf off)
struct RelaxedOcp {
  Grid grid;
  ProblemData data;
  SmoothingFn smoothing;
  WeightingMode weighting = WeightingMode::NodeSum;
  double xi_bound_R = std::numeric_limits<double>::infinity();
  SparseOperator A;

  int num_vars() const { return 3 * grid.interior_count; }

  Eigen::Ref<const Eigen::VectorXd> y_part(const Eigen::VectorXd& z) const {
    return z.segment(0, grid.interior_count);
  }
  Eigen::Ref<const Eigen::VectorXd> v_part(const Eigen::VectorXd& z) const {
    return z.segment(grid.interior_count, grid.interior_count);
  }
  Eigen::Ref<const Eigen::VectorXd> xi_part(const Eigen::VectorXd& z) const {
    return z.segment(2 * grid.interior_count, grid.interior_count);
  }
  Eigen::VectorXd pack(const Eigen::VectorXd& y, const Eigen::VectorXd& v,
                       const Eigen::VectorXd& xi) const;

  double weight() const { return weight_factor(grid, weighting); }
};

RelaxedOcp make_relaxed_ocp(
    const Grid& grid, const ProblemData& data, const SmoothingFn& smoothing,
    WeightingMode weighting = WeightingMode::NodeSum,
    double xi_bound_R = std::numeric_limits<double>::infinity());

/// Tracking objective over the interior nodes in the configured weighting.
double objective(const RelaxedOcp& ocp, const Eigen::VectorXd& z);
Eigen::VectorXd objective_gradient(const RelaxedOcp& ocp,
                                   const Eigen::VectorXd& z);

/// Objective in the benchmark-table convention: the interior objective plus
/// the constant tracking mass of the Dirichlet boundary ring.
double reported_objective(const RelaxedOcp& ocp, const Eigen::VectorXd& z);

/// State-equation residual A y + g(y) - f - v - xi per node.
FieldVector state_residual(const RelaxedOcp& ocp, const Eigen::VectorXd& z);

/// Jacobian of the state residual, [A + diag(g'(y)), -I, -I].
Eigen::SparseMatrix<double> state_jacobian(const RelaxedOcp& ocp,
                                           const Eigen::VectorXd& z);

/// A + diag(g'(y)), the linearized state operator.
Eigen::SparseMatrix<double> linearized_state_operator(
    const RelaxedOcp& ocp, const Eigen::VectorXd& y);

/// Per-node scaled complementarity residuals at (y_i - psi_i, xi_i);
/// feasibility means every entry >= 0. Arguments slightly below the bounds
/// (within tolerance) are clamped; real violations raise std::domain_error.
FieldVector complementarity_constraints(const RelaxedOcp& ocp,
                                        const Eigen::VectorXd& z);

/// Jacobian of the complementarity residuals, one row per node with entries
/// in the y and xi columns of that node.
Eigen::SparseMatrix<double> complementarity_jacobian(const RelaxedOcp& ocp,
                                                     const Eigen::VectorXd& z);

/// Solves (A^T + diag(g'(y))) p = y - z_d. A is symmetric here, so this is
/// the plain linearized operator.
FieldVector adjoint_solve(const RelaxedOcp& ocp, const FieldVector& y);

/// Solves the semilinear state equation A y + g(y) = f + v + xi by Newton
/// (unique solution by monotonicity). Used by reduced-gradient checks and
/// oracle comparisons.
FieldVector solve_state(const RelaxedOcp& ocp, const FieldVector& v,
                        const FieldVector& xi, double tol = 1e-12);

/// Gradient with respect to v of the reduced tracking objective
/// j(v) = J(y(v, xi), v), computed through the adjoint state.
FieldVector reduced_tracking_gradient(const RelaxedOcp& ocp,
                                      const FieldVector& v,
                                      const FieldVector& xi);

/// The penalized functional
///   J(y, v) + 1/(2 eps) |A y + g(y) - f - v - xi|^2
///   + 1/2 |A(y - y_a)|^2 + 1/2 |v - v_a|^2 + 1/2 |xi - xi_a|^2
/// with anchor z_a = (y_a, v_a, xi_a), all norms in the configured
/// weighting.
double penalized_objective(const RelaxedOcp& ocp, const Eigen::VectorXd& z,
                           double eps, const Eigen::VectorXd& z_anchor);
Eigen::VectorXd penalized_gradient(const RelaxedOcp& ocp,
                                   const Eigen::VectorXd& z, double eps,
                                   const Eigen::VectorXd& z_anchor);

/// Residuals of the first-order optimality system of the relaxed problem
/// with state multiplier q and a scalar multiplier r >= 0 for the
/// aggregated complementarity constraint
///   sum_i [theta(y_i - psi_i) + theta(xi_i)] <= interior_count.
/// Stationarity residuals are max-norms of gradients projected onto the
/// tangent cones at z; nodes within `active_tol` of a bound only contribute
/// their infeasible (negative) gradient part.
struct KktReport {
  double stationarity_y = 0.0;
  double stationarity_v = 0.0;
  double stationarity_xi = 0.0;
  double r_complementarity = 0.0;
  FieldVector q;
  double r = 0.0;
  FieldVector p;
  FieldVector omega; // g'(y) y - g(y), reported for diagnostics

  double max_residual() const;
  /// Residuals relative to the magnitude of the multipliers involved.
  double scale = 1.0;
  double scaled_max() const { return max_residual() / scale; }
};

KktReport kkt_residuals(const RelaxedOcp& ocp, const Eigen::VectorXd& z,
                        const FieldVector& q, double r,
                        double active_tol = 1e-6);

} // namespace obsopt
