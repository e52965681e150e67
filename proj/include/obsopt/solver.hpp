#pragma once

#include "obsopt/ocp.hpp"

#include <optional>
#include <string>
#include <vector>

namespace obsopt {

enum class SolveStatus {
  Converged,
  IterationLimit,
  LineSearchFailure,
  LinearSolverBreakdown,
  EpsUnderflow,
};

std::string to_string(SolveStatus status);

struct SolverConfig {
  double tol = 1e-3;   // KKT tolerance
  double state_tol = 1e-8; // extra max-norm threshold on the state equation
  int max_iter = 1000; // Newton iterations (total across barrier stages)

  // Log-barrier schedule.
  double mu_init = 0.1;
  double mu_reduction = 0.2; // mu <- max(mu_min, min(k*mu, mu^1.5))

  // Penalty continuation schedule.
  double penalty_eps_init = 1.0;
  double penalty_eps_reduction = 0.1;
  double penalty_eps_min = 1e-12;

  // Line search.
  double backtrack_factor = 0.5;
  double sufficient_decrease = 1e-4;

  double fraction_to_boundary = 0.99; // minimum tau

  void validate() const;
};

/// Anchor handling for the penalization path. The exact anchor of the
/// penalized functional is the unknown solution of the relaxed problem;
/// self-anchoring re-anchors at the current iterate before every
/// epsilon stage, while Fixed keeps a supplied anchor throughout.
enum class AnchorMode { SelfAnchored, Fixed };

struct SolveReport {
  Eigen::VectorXd z; // stacked (y, v, xi)
  FieldVector y, v, xi;

  FieldVector q; // state-equation multiplier, L2 pairing convention
  double r = 0.0; // aggregated complementarity multiplier, >= 0
  FieldVector bound_mult_y, bound_mult_xi; // duals of y >= psi, xi >= 0
  FieldVector comp_mult; // per-node multipliers of the relaxed constraint

  double objective = 0.0;
  double state_residual_2 = 0.0; // euclidean norm of A y + g(y) - f - v - xi
  double comp_error = 0.0;       // <y - psi, xi> (node sum) / n^2
  int iterations = 0;
  bool converged = false;
  SolveStatus status = SolveStatus::IterationLimit;
  KktReport kkt;

  // Penalty path only: the final epsilon (so that eps * q reproduces the
  // state residual) and the state-residual norm after each epsilon stage.
  double penalty_eps = 0.0;
  std::vector<double> stage_state_residuals;
};

/// Residuals of the pointwise first-order system of the relaxed NLP at a
/// solve report, recomputed from the stored multipliers (state multiplier,
/// per-node complementarity multipliers, bound duals). This is the system
/// the solver drives below its tolerance; recomputing it here gives an
/// implementation-independent certificate of a report.
struct NlpResiduals {
  double stationarity = 0.0;     // scaled dual residual, max norm
  double state_feasibility = 0.0; // max norm of the state residual
  double bound_violation = 0.0;   // bounds and complementarity infeasibility
  double complementarity = 0.0;   // scaled products (slackness), max norm

  double max_residual() const;
};

NlpResiduals verify_kkt(const RelaxedOcp& ocp, const SolveReport& report);

/// Primal-dual log-barrier interior-point solve of the relaxed NLP. The
/// optional start must be strictly interior with respect to the bounds;
/// xi is shifted down where needed so the relaxed constraint starts
/// strictly feasible.
SolveReport solve_barrier(const RelaxedOcp& ocp, const SolverConfig& cfg,
                          const std::optional<Eigen::VectorXd>& start = {});

/// Penalization continuation: for a decreasing epsilon schedule, minimizes
/// the penalized functional over the bound- and complementarity-feasible
/// set (inner log-barrier), until the state residual drops below tol.
/// Reports q = (state residual) / epsilon.
SolveReport solve_penalty(
    const RelaxedOcp& ocp, const SolverConfig& cfg,
    AnchorMode anchor_mode = AnchorMode::SelfAnchored,
    const std::optional<Eigen::VectorXd>& fixed_anchor = {});

/// Solves the relaxed problem along a strictly decreasing alpha schedule,
/// warm-starting each stage from the previous solution (cold restart on
/// stage failure). One report per alpha.
std::vector<SolveReport> alpha_continuation(
    const Grid& grid, const ProblemData& data, SmoothingKind kind,
    const std::vector<double>& alphas, const SolverConfig& cfg,
    WeightingMode weighting = WeightingMode::NodeSum);

} // namespace obsopt
