#pragma once

#include "obsopt/grid.hpp"

#include <optional>

namespace obsopt {

/// Solution of the discrete obstacle problem at a fixed control v:
///   A y + g(y) = f + v + xi,  y >= psi,  xi >= 0,  (y - psi) . xi = 0.
struct ViSolution {
  FieldVector y;
  FieldVector xi;
  double residual_inf = 0.0;       // max-norm of min(y - psi, xi)
  double state_residual_inf = 0.0; // max-norm of A y + g(y) - f - v - xi
  int iterations = 0;
  bool converged = false;
};

/// Semismooth Newton on the reformulation min(y - psi, A y + g(y) - f - v)
/// = 0, with projected Gauss-Seidel sweeps as fallback when a Newton step
/// does not reduce the residual. Monotone g makes the solution unique.
/// On iteration exhaustion the best iterate is returned with
/// converged = false.
ViSolution solve_vi(const Grid& grid, const ProblemData& data,
                    const FieldVector& v, double tol, int max_iter = 200,
                    const std::optional<FieldVector>& start = {});

/// Independent oracle: enumerates all 2^m active sets (m <= 16), solves the
/// reduced semilinear system on each, and returns the unique candidate
/// satisfying y >= psi and xi >= 0. Throws if no consistent active set
/// exists or if two distinct consistent solutions are found.
ViSolution brute_force_active_set(const Grid& grid, const ProblemData& data,
                                  const FieldVector& v);

} // namespace obsopt
