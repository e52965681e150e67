#include "obsopt/vi_solver.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>
#include <vector>

namespace obsopt {

namespace {

constexpr double kStateBox = 1e6; // safeguard box |y| <= kStateBox

Eigen::VectorXd state_lhs_residual(const SparseOperator& A,
                                   const Nonlinearity& g,
                                   const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& rhs) {
  return A.matrix() * y + g.value(y) - rhs;
}

/// Scalar Newton for a_ii*t + g(t) = rhs, monotone in t. Used by the
/// Gauss-Seidel sweeps and the 1x1 reduced systems.
double solve_scalar(double aii, const Nonlinearity& g, double rhs,
                    double t0) {
  double t = t0;
  for (int it = 0; it < 60; ++it) {
    const double r = aii * t + g.value(t) - rhs;
    const double dr = aii + g.deriv(t);
    const double dt = r / dr;
    t -= dt;
    t = std::clamp(t, -kStateBox, kStateBox);
    if (std::abs(dt) <= 1e-14 * (1.0 + std::abs(t))) break;
  }
  return t;
}

/// One projected Gauss-Seidel sweep over all nodes.
void pgs_sweep(const SparseOperator& A, const Nonlinearity& g,
               const Eigen::VectorXd& rhs, const Eigen::VectorXd& psi,
               Eigen::VectorXd& y) {
  const auto& mat = A.matrix();
  for (int k = 0; k < mat.outerSize(); ++k) {
    double off = 0.0;
    double diag = 0.0;
    for (Eigen::SparseMatrix<double>::InnerIterator it(mat, k); it; ++it) {
      if (it.row() == k) {
        diag = it.value();
      } else {
        off += it.value() * y[it.row()];
      }
    }
    const double t = solve_scalar(diag, g, rhs[k] - off, y[k]);
    y[k] = std::max(psi[k], t);
  }
}

ViSolution finalize(const Grid& grid, const SparseOperator& A,
                    const Nonlinearity& g, const Eigen::VectorXd& rhs,
                    const Eigen::VectorXd& psi, const Eigen::VectorXd& y,
                    const std::vector<bool>& active, int iterations,
                    bool converged) {
  const Eigen::VectorXd r = state_lhs_residual(A, g, y, rhs);
  ViSolution sol;
  sol.y = FieldVector(grid, y);
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(y.size());
  for (int k = 0; k < y.size(); ++k) {
    if (active[static_cast<size_t>(k)]) xi[k] = r[k];
  }
  sol.xi = FieldVector(grid, xi);
  double comp = 0.0;
  double state = 0.0;
  for (int k = 0; k < y.size(); ++k) {
    comp = std::max(comp, std::abs(std::min(y[k] - psi[k], xi[k])));
    state = std::max(state, std::abs(r[k] - xi[k]));
  }
  sol.residual_inf = comp;
  sol.state_residual_inf = state;
  sol.iterations = iterations;
  sol.converged = converged;
  return sol;
}

} // namespace

ViSolution solve_vi(const Grid& grid, const ProblemData& data,
                    const FieldVector& v, double tol, int max_iter,
                    const std::optional<FieldVector>& start) {
  if (!(tol > 0.0)) {
    throw std::invalid_argument("solve_vi: tol must be > 0");
  }
  require_same_grid(data.f, v);
  const int m = grid.interior_count;
  const SparseOperator A = assemble_laplacian(grid);
  const Eigen::VectorXd rhs = data.f.values() + v.values();
  const Eigen::VectorXd& psi = data.psi.values();
  const Nonlinearity& g = data.g;

  // Start at the obstacle unless told otherwise; the active set then
  // shrinks monotonically in most runs.
  Eigen::VectorXd y = psi.cwiseMax(Eigen::VectorXd::Zero(m));
  if (start) y = start->values().cwiseMax(psi);
  std::vector<bool> active(static_cast<size_t>(m), false);

  auto min_residual = [&](const Eigen::VectorXd& yy) {
    const Eigen::VectorXd r = state_lhs_residual(A, g, yy, rhs);
    double res = 0.0;
    for (int k = 0; k < m; ++k) {
      res = std::max(res, std::abs(std::min(yy[k] - psi[k], r[k])));
    }
    return res;
  };

  double res = min_residual(y);
  int it = 0;
  for (; it < max_iter && res > tol; ++it) {
    const Eigen::VectorXd r = state_lhs_residual(A, g, y, rhs);
    // Ties y - psi == r go to the constraint side.
    std::vector<int> inactive;
    inactive.reserve(static_cast<size_t>(m));
    for (int k = 0; k < m; ++k) {
      active[static_cast<size_t>(k)] = (y[k] - psi[k] <= r[k]);
      if (!active[static_cast<size_t>(k)]) inactive.push_back(k);
    }

    Eigen::VectorXd ynew = y;
    for (int k = 0; k < m; ++k) {
      if (active[static_cast<size_t>(k)]) ynew[k] = psi[k];
    }
    if (!inactive.empty()) {
      const int ni = static_cast<int>(inactive.size());
      std::vector<int> where(static_cast<size_t>(m), -1);
      for (int a = 0; a < ni; ++a) where[static_cast<size_t>(inactive[a])] = a;

      // Reduced Newton step on the inactive block, with the active block
      // pinned to the obstacle.
      const Eigen::VectorXd gp = g.deriv(y);
      std::vector<Eigen::Triplet<double>> trips;
      Eigen::VectorXd rr(ni);
      const auto& mat = A.matrix();
      for (int a = 0; a < ni; ++a) {
        const int k = inactive[a];
        double rhs_k = -r[k];
        for (Eigen::SparseMatrix<double>::InnerIterator itc(mat, k); itc;
             ++itc) {
          const int row = static_cast<int>(itc.row());
          const int wa = where[static_cast<size_t>(row)];
          if (wa >= 0) {
            double val = itc.value();
            if (row == k) val += gp[k];
            trips.emplace_back(wa, a, val);
          } else {
            rhs_k -= itc.value() * (psi[row] - y[row]);
          }
        }
        rr[a] = rhs_k;
      }
      Eigen::SparseMatrix<double> J(ni, ni);
      J.setFromTriplets(trips.begin(), trips.end());
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(J);
      if (ldlt.info() == Eigen::Success) {
        const Eigen::VectorXd dy = ldlt.solve(rr);
        for (int a = 0; a < ni; ++a) ynew[inactive[a]] += dy[a];
      }
    }
    ynew = ynew.cwiseMax(Eigen::VectorXd::Constant(m, -kStateBox))
               .cwiseMin(Eigen::VectorXd::Constant(m, kStateBox));

    double res_new = min_residual(ynew);
    if (!std::isfinite(res_new) || res_new > (1.0 - 1e-4) * res) {
      // Newton stalled; a few projected Gauss-Seidel sweeps make progress
      // monotonically.
      ynew = y;
      for (int sweep = 0; sweep < 5; ++sweep) pgs_sweep(A, g, rhs, psi, ynew);
      res_new = min_residual(ynew);
    }
    y = ynew;
    res = res_new;
  }

  const Eigen::VectorXd r = state_lhs_residual(A, g, y, rhs);
  for (int k = 0; k < m; ++k) {
    active[static_cast<size_t>(k)] = (y[k] - psi[k] <= r[k]);
  }
  return finalize(grid, A, g, rhs, psi, y, active, it, res <= tol);
}

ViSolution brute_force_active_set(const Grid& grid, const ProblemData& data,
                                  const FieldVector& v) {
  const int m = grid.interior_count;
  if (m > 16) {
    throw std::invalid_argument(
        "brute_force_active_set: interior_count must be <= 16");
  }
  require_same_grid(data.f, v);
  const SparseOperator A = assemble_laplacian(grid);
  const Eigen::MatrixXd Ad = Eigen::MatrixXd(A.matrix());
  const Eigen::VectorXd rhs = data.f.values() + v.values();
  const Eigen::VectorXd& psi = data.psi.values();
  const Nonlinearity& g = data.g;
  const double tol_eq = 1e-11;
  const double tol_ineq = 1e-9;

  std::vector<Eigen::VectorXd> solutions;
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    Eigen::VectorXd y(m);
    std::vector<int> inactive;
    for (int k = 0; k < m; ++k) {
      if (mask & (1u << k)) {
        y[k] = psi[k];
      } else {
        inactive.push_back(k);
        y[k] = std::max(psi[k], 0.0);
      }
    }
    const int ni = static_cast<int>(inactive.size());
    bool newton_ok = true;
    if (ni > 0) {
      // Newton on the inactive block of A y + g(y) = rhs.
      for (int it = 0; it < 100; ++it) {
        const Eigen::VectorXd r = Ad * y + g.value(y) - rhs;
        double rn = 0.0;
        for (int a = 0; a < ni; ++a) rn = std::max(rn, std::abs(r[inactive[a]]));
        if (rn <= tol_eq) break;
        Eigen::MatrixXd J(ni, ni);
        Eigen::VectorXd rr(ni);
        for (int a = 0; a < ni; ++a) {
          for (int b = 0; b < ni; ++b) {
            J(a, b) = Ad(inactive[a], inactive[b]);
          }
          J(a, a) += g.deriv(y[inactive[a]]);
          rr[a] = -r[inactive[a]];
        }
        const Eigen::VectorXd dy = J.fullPivLu().solve(rr);
        if (!dy.allFinite()) {
          newton_ok = false;
          break;
        }
        for (int a = 0; a < ni; ++a) {
          y[inactive[a]] =
              std::clamp(y[inactive[a]] + dy[a], -kStateBox, kStateBox);
        }
        if (it == 99) newton_ok = false;
      }
    }
    if (!newton_ok) continue;

    const Eigen::VectorXd r = Ad * y + g.value(y) - rhs;
    bool consistent = true;
    for (int k = 0; k < m && consistent; ++k) {
      if (mask & (1u << k)) {
        if (r[k] < -tol_ineq) consistent = false; // xi must be >= 0
      } else {
        if (y[k] < psi[k] - tol_ineq) consistent = false;
        if (std::abs(r[k]) > 1e-8) consistent = false;
      }
    }
    if (!consistent) continue;

    bool duplicate = false;
    for (const auto& prev : solutions) {
      if ((prev - y).lpNorm<Eigen::Infinity>() <=
          1e-8 * (1.0 + y.lpNorm<Eigen::Infinity>())) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) solutions.push_back(y);
  }

  if (solutions.empty()) {
    throw std::runtime_error(
        "brute_force_active_set: no consistent active set found");
  }
  if (solutions.size() > 1) {
    throw std::runtime_error(
        "brute_force_active_set: multiple distinct consistent solutions");
  }

  const Eigen::VectorXd& y = solutions.front();
  std::vector<bool> active(static_cast<size_t>(m), false);
  const Eigen::VectorXd r = Ad * y + g.value(y) - rhs;
  for (int k = 0; k < m; ++k) {
    active[static_cast<size_t>(k)] = (y[k] - psi[k] <= r[k]);
  }
  return finalize(grid, A, g, rhs, psi, y, active, 1 << m, true);
}

} // namespace obsopt
