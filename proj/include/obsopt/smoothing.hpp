#pragma once

#include <string>

namespace obsopt {

/// The three smoothing families used to relax pointwise complementarity.
/// Each theta_alpha maps [0, inf) into [0, 1), vanishes at 0, is
/// nondecreasing and concave, and tends to 1 pointwise as alpha -> 0.
enum class SmoothingKind {
  Fractional,  // x / (x + alpha)
  Exponential, // 1 - exp(-x / alpha)
  Logarithmic, // log(1 + x) / log(1 + x + alpha)
};

std::string to_string(SmoothingKind kind);
SmoothingKind smoothing_kind_from_string(const std::string& name);

struct SmoothingFn {
  SmoothingKind kind = SmoothingKind::Fractional;
  double alpha = 1e-3;

  SmoothingFn() = default;
  SmoothingFn(SmoothingKind k, double a);
};

/// theta_alpha(x) for x >= 0. Throws std::domain_error on negative input.
double theta(const SmoothingFn& fn, double x);

/// Analytic first derivative theta_alpha'(x), x >= 0.
double theta_deriv(const SmoothingFn& fn, double x);

/// Analytic second derivative theta_alpha''(x), x >= 0 (nonpositive by
/// concavity).
double theta_second(const SmoothingFn& fn, double x);

/// Raw relaxed-complementarity residual 1 - theta(a) - theta(b).
/// Nonnegative iff (a, b) is feasible for the relaxed constraint.
double relaxed_residual(const SmoothingFn& fn, double a, double b);

/// Logarithmically scaled residual with the same feasibility sign as
/// relaxed_residual but bounded gradients near the boundary:
///   fractional:   alpha^2 * ln(alpha/(a+alpha) + alpha/(b+alpha))
///   exponential:  alpha   * ln(2 - theta(a) - theta(b))
///   logarithmic:  alpha   * ln(2 - theta(a) - theta(b))
/// Throws std::domain_error when the log argument is not strictly positive
/// (only reachable through floating-point saturation at huge arguments).
double scaled_residual(const SmoothingFn& fn, double a, double b);

/// Scaled residual together with its first and second partial derivatives,
/// as consumed by constraint Jacobian/Hessian assembly.
struct ScaledResidualDerivs {
  double value = 0.0;
  double da = 0.0, db = 0.0;
  double daa = 0.0, dab = 0.0, dbb = 0.0;
};

ScaledResidualDerivs scaled_residual_derivs(const SmoothingFn& fn, double a,
                                            double b);

/// For the fractional family, feasibility of the relaxed constraint is
/// algebraically equivalent to the product bound a*b <= alpha^2. Valid for
/// any a, b >= 0.
bool fractional_product_bound(double alpha, double a, double b);

} // namespace obsopt
