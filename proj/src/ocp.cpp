#include "obsopt/ocp.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <vector>

namespace obsopt {

namespace {

constexpr double kBoundTol = 1e-8;

/// Bound-clamped complementarity arguments (a_i, b_i) = (y_i - psi_i, xi_i).
/// Tiny negative excursions (solver tolerance) are clamped to zero; real
/// violations are rejected.
void comp_args(const RelaxedOcp& ocp, const Eigen::VectorXd& z, bool strict,
               Eigen::VectorXd& a, Eigen::VectorXd& b) {
  const int m = ocp.grid.interior_count;
  a = ocp.y_part(z) - ocp.data.psi.values();
  b = ocp.xi_part(z);
  for (int i = 0; i < m; ++i) {
    const double tol_a = kBoundTol * (1.0 + std::abs(ocp.data.psi[i]));
    if (strict && (a[i] < -tol_a || b[i] < -kBoundTol)) {
      throw std::domain_error(
          "complementarity_constraints: bounds violated beyond tolerance");
    }
    a[i] = std::max(a[i], 0.0);
    b[i] = std::max(b[i], 0.0);
  }
}

} // namespace

Eigen::VectorXd RelaxedOcp::pack(const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& v,
                                 const Eigen::VectorXd& xi) const {
  const int m = grid.interior_count;
  if (y.size() != m || v.size() != m || xi.size() != m) {
    throw std::invalid_argument("RelaxedOcp::pack: block size mismatch");
  }
  Eigen::VectorXd z(3 * m);
  z << y, v, xi;
  return z;
}

RelaxedOcp make_relaxed_ocp(const Grid& grid, const ProblemData& data,
                            const SmoothingFn& smoothing,
                            WeightingMode weighting, double xi_bound_R) {
  require_same_grid(data.f, data.psi);
  require_same_grid(data.f, data.z_d);
  require_same_grid(data.f, data.v_d);
  if (!(data.nu > 0.0)) {
    throw std::invalid_argument("make_relaxed_ocp: nu must be > 0");
  }
  if (!(xi_bound_R > 0.0)) {
    throw std::invalid_argument("make_relaxed_ocp: xi bound R must be > 0");
  }
  RelaxedOcp ocp;
  ocp.grid = grid;
  ocp.data = data;
  ocp.smoothing = smoothing;
  ocp.weighting = weighting;
  ocp.xi_bound_R = xi_bound_R;
  ocp.A = assemble_laplacian(grid);
  return ocp;
}

double objective(const RelaxedOcp& ocp, const Eigen::VectorXd& z) {
  const double w = ocp.weight();
  const Eigen::VectorXd dy = ocp.y_part(z) - ocp.data.z_d.values();
  const Eigen::VectorXd dv = ocp.v_part(z) - ocp.data.v_d.values();
  return 0.5 * w * dy.squaredNorm() + 0.5 * w * ocp.data.nu * dv.squaredNorm();
}

double reported_objective(const RelaxedOcp& ocp, const Eigen::VectorXd& z) {
  return objective(ocp, z) + ocp.weight() * ocp.data.boundary_tracking_cost;
}

Eigen::VectorXd objective_gradient(const RelaxedOcp& ocp,
                                   const Eigen::VectorXd& z) {
  const int m = ocp.grid.interior_count;
  const double w = ocp.weight();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(3 * m);
  grad.segment(0, m) = w * (ocp.y_part(z) - ocp.data.z_d.values());
  grad.segment(m, m) =
      w * ocp.data.nu * (ocp.v_part(z) - ocp.data.v_d.values());
  return grad;
}

FieldVector state_residual(const RelaxedOcp& ocp, const Eigen::VectorXd& z) {
  const Eigen::VectorXd y = ocp.y_part(z);
  Eigen::VectorXd r = ocp.A.matrix() * y + ocp.data.g.value(y) -
                      ocp.data.f.values() - ocp.v_part(z) - ocp.xi_part(z);
  return FieldVector(ocp.grid, std::move(r));
}

Eigen::SparseMatrix<double> linearized_state_operator(
    const RelaxedOcp& ocp, const Eigen::VectorXd& y) {
  Eigen::SparseMatrix<double> op = ocp.A.matrix();
  const Eigen::VectorXd gp = ocp.data.g.deriv(y);
  for (int i = 0; i < gp.size(); ++i) op.coeffRef(i, i) += gp[i];
  return op;
}

Eigen::SparseMatrix<double> state_jacobian(const RelaxedOcp& ocp,
                                           const Eigen::VectorXd& z) {
  const int m = ocp.grid.interior_count;
  std::vector<Eigen::Triplet<double>> trips;
  const auto op = linearized_state_operator(ocp, ocp.y_part(z));
  for (int k = 0; k < op.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(op, k); it; ++it) {
      trips.emplace_back(static_cast<int>(it.row()),
                         static_cast<int>(it.col()), it.value());
    }
  }
  for (int i = 0; i < m; ++i) {
    trips.emplace_back(i, m + i, -1.0);
    trips.emplace_back(i, 2 * m + i, -1.0);
  }
  Eigen::SparseMatrix<double> jac(m, 3 * m);
  jac.setFromTriplets(trips.begin(), trips.end());
  return jac;
}

FieldVector complementarity_constraints(const RelaxedOcp& ocp,
                                        const Eigen::VectorXd& z) {
  const int m = ocp.grid.interior_count;
  Eigen::VectorXd a, b;
  comp_args(ocp, z, /*strict=*/true, a, b);
  Eigen::VectorXd c(m);
  for (int i = 0; i < m; ++i) {
    c[i] = scaled_residual(ocp.smoothing, a[i], b[i]);
  }
  return FieldVector(ocp.grid, std::move(c));
}

Eigen::SparseMatrix<double> complementarity_jacobian(
    const RelaxedOcp& ocp, const Eigen::VectorXd& z) {
  const int m = ocp.grid.interior_count;
  Eigen::VectorXd a, b;
  comp_args(ocp, z, /*strict=*/true, a, b);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(2 * m));
  for (int i = 0; i < m; ++i) {
    const auto d = scaled_residual_derivs(ocp.smoothing, a[i], b[i]);
    trips.emplace_back(i, i, d.da);
    trips.emplace_back(i, 2 * m + i, d.db);
  }
  Eigen::SparseMatrix<double> jac(m, 3 * m);
  jac.setFromTriplets(trips.begin(), trips.end());
  return jac;
}

FieldVector adjoint_solve(const RelaxedOcp& ocp, const FieldVector& y) {
  y.require_finite("adjoint_solve state");
  const auto op = linearized_state_operator(ocp, y.values());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(op);
  if (ldlt.info() != Eigen::Success) {
    throw std::runtime_error("adjoint_solve: factorization failed");
  }
  Eigen::VectorXd p = ldlt.solve(y.values() - ocp.data.z_d.values());
  return FieldVector(ocp.grid, std::move(p));
}

FieldVector solve_state(const RelaxedOcp& ocp, const FieldVector& v,
                        const FieldVector& xi, double tol) {
  const int m = ocp.grid.interior_count;
  const Eigen::VectorXd rhs =
      ocp.data.f.values() + v.values() + xi.values();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  auto resid = [&](const Eigen::VectorXd& yy) {
    return (ocp.A.matrix() * yy + ocp.data.g.value(yy) - rhs).eval();
  };
  Eigen::VectorXd r = resid(y);
  for (int it = 0; it < 100 && r.lpNorm<Eigen::Infinity>() > tol; ++it) {
    const auto op = linearized_state_operator(ocp, y);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(op);
    if (ldlt.info() != Eigen::Success) {
      throw std::runtime_error("solve_state: factorization failed");
    }
    const Eigen::VectorXd dy = ldlt.solve(-r);
    double step = 1.0;
    // Damped Newton; monotone g guarantees descent for small enough steps.
    for (int ls = 0; ls < 50; ++ls) {
      Eigen::VectorXd y_try = y + step * dy;
      Eigen::VectorXd r_try = resid(y_try);
      if (r_try.lpNorm<Eigen::Infinity>() <
          (1.0 - 1e-4 * step) * r.lpNorm<Eigen::Infinity>()) {
        y = std::move(y_try);
        r = std::move(r_try);
        break;
      }
      step *= 0.5;
    }
  }
  return FieldVector(ocp.grid, y);
}

FieldVector reduced_tracking_gradient(const RelaxedOcp& ocp,
                                      const FieldVector& v,
                                      const FieldVector& xi) {
  const FieldVector y = solve_state(ocp, v, xi);
  const FieldVector p = adjoint_solve(ocp, y);
  Eigen::VectorXd grad =
      ocp.weight() *
      (ocp.data.nu * (v.values() - ocp.data.v_d.values()) + p.values());
  return FieldVector(ocp.grid, std::move(grad));
}

double penalized_objective(const RelaxedOcp& ocp, const Eigen::VectorXd& z,
                           double eps, const Eigen::VectorXd& z_anchor) {
  if (!(eps > 0.0)) {
    throw std::invalid_argument("penalized_objective: eps must be > 0");
  }
  const double w = ocp.weight();
  const Eigen::VectorXd e = state_residual(ocp, z).values();
  const Eigen::VectorXd dy = ocp.y_part(z) - ocp.y_part(z_anchor);
  const Eigen::VectorXd dv = ocp.v_part(z) - ocp.v_part(z_anchor);
  const Eigen::VectorXd dxi = ocp.xi_part(z) - ocp.xi_part(z_anchor);
  const Eigen::VectorXd Ady = ocp.A.matrix() * dy;
  return objective(ocp, z) + 0.5 * w / eps * e.squaredNorm() +
         0.5 * w * Ady.squaredNorm() + 0.5 * w * dv.squaredNorm() +
         0.5 * w * dxi.squaredNorm();
}

Eigen::VectorXd penalized_gradient(const RelaxedOcp& ocp,
                                   const Eigen::VectorXd& z, double eps,
                                   const Eigen::VectorXd& z_anchor) {
  if (!(eps > 0.0)) {
    throw std::invalid_argument("penalized_gradient: eps must be > 0");
  }
  const int m = ocp.grid.interior_count;
  const double w = ocp.weight();
  const Eigen::VectorXd y = ocp.y_part(z);
  // q_eps = state residual / eps carries the whole penalty gradient.
  const Eigen::VectorXd q_eps = state_residual(ocp, z).values() / eps;
  const Eigen::VectorXd dy = y - ocp.y_part(z_anchor);
  const Eigen::VectorXd dv = ocp.v_part(z) - ocp.v_part(z_anchor);
  const Eigen::VectorXd dxi = ocp.xi_part(z) - ocp.xi_part(z_anchor);
  const auto op = linearized_state_operator(ocp, y);

  Eigen::VectorXd grad = objective_gradient(ocp, z);
  grad.segment(0, m) +=
      w * (op.transpose() * q_eps +
           ocp.A.matrix().transpose() * (ocp.A.matrix() * dy));
  grad.segment(m, m) += w * (-q_eps + dv);
  grad.segment(2 * m, m) += w * (-q_eps + dxi);
  return grad;
}

double KktReport::max_residual() const {
  return std::max({stationarity_y, stationarity_v, stationarity_xi,
                   r_complementarity});
}

KktReport kkt_residuals(const RelaxedOcp& ocp, const Eigen::VectorXd& z,
                        const FieldVector& q, double r, double active_tol) {
  if (r < 0.0) {
    throw std::invalid_argument("kkt_residuals: r must be >= 0");
  }
  const int m = ocp.grid.interior_count;
  const double w = ocp.weight();
  const Eigen::VectorXd y = ocp.y_part(z);
  const Eigen::VectorXd v = ocp.v_part(z);
  Eigen::VectorXd a, b;
  comp_args(ocp, z, /*strict=*/false, a, b);

  KktReport report;
  report.q = q;
  report.r = r;
  report.p = adjoint_solve(ocp, FieldVector(ocp.grid, y));
  report.omega = FieldVector(
      ocp.grid,
      (ocp.data.g.deriv(y).array() * y.array()).matrix() - ocp.data.g.value(y));

  Eigen::VectorXd theta_a(m), theta_b(m), dtheta_a(m), dtheta_b(m);
  for (int i = 0; i < m; ++i) {
    theta_a[i] = theta(ocp.smoothing, a[i]);
    theta_b[i] = theta(ocp.smoothing, b[i]);
    dtheta_a[i] = theta_deriv(ocp.smoothing, a[i]);
    dtheta_b[i] = theta_deriv(ocp.smoothing, b[i]);
  }

  const auto op = linearized_state_operator(ocp, y);
  const Eigen::VectorXd pq = report.p.values() + q.values();
  const Eigen::VectorXd grad_y =
      w * (op.transpose() * pq) + r * dtheta_a;
  const Eigen::VectorXd grad_v =
      w * (ocp.data.nu * (v - ocp.data.v_d.values()) - q.values());
  Eigen::VectorXd grad_xi = r * dtheta_b - w * q.values();

  // Optional xi-ball: remove the outward radial component when the ball is
  // active (its own multiplier is fitted by least squares on the spot).
  if (std::isfinite(ocp.xi_bound_R)) {
    const Eigen::VectorXd xi = ocp.xi_part(z);
    const double norm_xi = std::sqrt(w) * xi.norm();
    if (norm_xi >= ocp.xi_bound_R * (1.0 - 1e-9) && xi.squaredNorm() > 0.0) {
      const double eta =
          std::max(0.0, -grad_xi.dot(xi) / (w * xi.squaredNorm()));
      grad_xi += eta * w * xi;
    }
  }

  double stat_y = 0.0, stat_xi = 0.0;
  for (int i = 0; i < m; ++i) {
    const double gy = (a[i] <= active_tol * (1.0 + std::abs(ocp.data.psi[i])))
                          ? std::min(grad_y[i], 0.0)
                          : grad_y[i];
    stat_y = std::max(stat_y, std::abs(gy));
    const double gxi =
        (b[i] <= active_tol) ? std::min(grad_xi[i], 0.0) : grad_xi[i];
    stat_xi = std::max(stat_xi, std::abs(gxi));
  }
  report.stationarity_y = stat_y;
  report.stationarity_v = grad_v.lpNorm<Eigen::Infinity>();
  report.stationarity_xi = stat_xi;
  report.r_complementarity =
      std::abs(r * (theta_a.sum() + theta_b.sum() - m));

  report.scale = std::max(
      {1.0, (w * (op.transpose() * pq)).lpNorm<Eigen::Infinity>(),
       (r * dtheta_a).lpNorm<Eigen::Infinity>(),
       (r * dtheta_b).lpNorm<Eigen::Infinity>(),
       (w * q.values()).lpNorm<Eigen::Infinity>()});
  return report;
}

} // namespace obsopt
