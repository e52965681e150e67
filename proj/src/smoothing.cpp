#include "obsopt/smoothing.hpp"

#include <cmath>
#include <stdexcept>

namespace obsopt {

namespace {

void require_nonnegative(double x, const char* where) {
  if (!(x >= 0.0)) {
    throw std::domain_error(std::string(where) +
                            ": argument must be >= 0, got " +
                            std::to_string(x));
  }
}

/// Scale of the logarithmic rescaling per family.
double log_scale(const SmoothingFn& fn) {
  return fn.kind == SmoothingKind::Fractional ? fn.alpha * fn.alpha : fn.alpha;
}

const double kOneMinusUlp = std::nextafter(1.0, 0.0);

} // namespace

std::string to_string(SmoothingKind kind) {
  switch (kind) {
    case SmoothingKind::Fractional: return "frac";
    case SmoothingKind::Exponential: return "exp";
    case SmoothingKind::Logarithmic: return "log";
  }
  return "?";
}

SmoothingKind smoothing_kind_from_string(const std::string& name) {
  if (name == "frac" || name == "fractional") return SmoothingKind::Fractional;
  if (name == "exp" || name == "exponential") return SmoothingKind::Exponential;
  if (name == "log" || name == "logarithmic") return SmoothingKind::Logarithmic;
  throw std::invalid_argument("unknown smoothing kind: " + name);
}

SmoothingFn::SmoothingFn(SmoothingKind k, double a) : kind(k), alpha(a) {
  if (!(a > 0.0)) {
    throw std::invalid_argument("SmoothingFn: alpha must be > 0");
  }
}

double theta(const SmoothingFn& fn, double x) {
  require_nonnegative(x, "theta");
  const double a = fn.alpha;
  double value = 0.0;
  switch (fn.kind) {
    case SmoothingKind::Fractional:
      value = x / (x + a);
      break;
    case SmoothingKind::Exponential:
      value = -std::expm1(-x / a);
      break;
    case SmoothingKind::Logarithmic:
      value = x == 0.0 ? 0.0 : std::log1p(x) / std::log1p(x + a);
      break;
  }
  // The exact value is strictly below 1 but saturates in floating point
  // for x >> alpha; keep the range invariant by one ulp.
  return std::min(value, kOneMinusUlp);
}

double theta_deriv(const SmoothingFn& fn, double x) {
  require_nonnegative(x, "theta_deriv");
  const double a = fn.alpha;
  switch (fn.kind) {
    case SmoothingKind::Fractional: {
      const double t = x + a;
      return a / (t * t);
    }
    case SmoothingKind::Exponential:
      return std::exp(-x / a) / a;
    case SmoothingKind::Logarithmic: {
      const double u = std::log1p(x);
      const double w = std::log1p(x + a);
      return (w / (1.0 + x) - u / (1.0 + x + a)) / (w * w);
    }
  }
  return 0.0;
}

double theta_second(const SmoothingFn& fn, double x) {
  require_nonnegative(x, "theta_second");
  const double a = fn.alpha;
  switch (fn.kind) {
    case SmoothingKind::Fractional: {
      const double t = x + a;
      return -2.0 * a / (t * t * t);
    }
    case SmoothingKind::Exponential:
      return -std::exp(-x / a) / (a * a);
    case SmoothingKind::Logarithmic: {
      const double u = std::log1p(x);
      const double w = std::log1p(x + a);
      const double up = 1.0 / (1.0 + x);
      const double wp = 1.0 / (1.0 + x + a);
      const double upp = -up * up;
      const double wpp = -wp * wp;
      // (u/w)'' by the quotient rule.
      return upp / w - 2.0 * up * wp / (w * w) - u * wpp / (w * w) +
             2.0 * u * wp * wp / (w * w * w);
    }
  }
  return 0.0;
}

double relaxed_residual(const SmoothingFn& fn, double a, double b) {
  require_nonnegative(a, "relaxed_residual");
  require_nonnegative(b, "relaxed_residual");
  return 1.0 - theta(fn, a) - theta(fn, b);
}

double scaled_residual(const SmoothingFn& fn, double a, double b) {
  // log(2 - theta(a) - theta(b)) = log1p(relaxed_residual), which keeps the
  // sign of the raw residual exactly.
  const double raw = relaxed_residual(fn, a, b);
  if (raw <= -1.0) {
    throw std::domain_error("scaled_residual: log argument is not positive");
  }
  return log_scale(fn) * std::log1p(raw);
}

ScaledResidualDerivs scaled_residual_derivs(const SmoothingFn& fn, double a,
                                            double b) {
  ScaledResidualDerivs out;
  const double raw = relaxed_residual(fn, a, b);
  if (raw <= -1.0) {
    throw std::domain_error("scaled_residual_derivs: log argument is not positive");
  }
  const double s = log_scale(fn);
  const double arg = 1.0 + raw; // 2 - theta(a) - theta(b)
  const double ta = theta_deriv(fn, a);
  const double tb = theta_deriv(fn, b);
  out.value = s * std::log1p(raw);
  out.da = -s * ta / arg;
  out.db = -s * tb / arg;
  out.daa = -s * (theta_second(fn, a) / arg + ta * ta / (arg * arg));
  out.dbb = -s * (theta_second(fn, b) / arg + tb * tb / (arg * arg));
  out.dab = -s * ta * tb / (arg * arg);
  return out;
}

bool fractional_product_bound(double alpha, double a, double b) {
  require_nonnegative(a, "fractional_product_bound");
  require_nonnegative(b, "fractional_product_bound");
  if (!(alpha > 0.0)) {
    throw std::invalid_argument("fractional_product_bound: alpha must be > 0");
  }
  return a * b <= alpha * alpha;
}

} // namespace obsopt
