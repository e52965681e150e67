#include "obsopt/solver.hpp"
#include "obsopt/vi_solver.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <vector>

namespace obsopt {

namespace {

constexpr double kKappaEps = 10.0;   // barrier subproblem tolerance factor
constexpr double kKappaSigma = 1e10; // bound-dual sandwich width
constexpr double kKappaLam = 10.0;   // complementarity-dual sandwich width
constexpr double kDeltaC = 1e-8;     // dual regularization of the KKT system
constexpr double kDeltaXMax = 1e40;

double log_scale_of(const SmoothingFn& fn) {
  return fn.kind == SmoothingKind::Fractional ? fn.alpha * fn.alpha : fn.alpha;
}

/// Largest alpha in (0, 1] keeping x + alpha*dx >= (1 - tau)*x.
double fraction_to_boundary(const Eigen::VectorXd& x, const Eigen::VectorXd& dx,
                            double tau) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (dx[i] < 0.0) {
      alpha = std::min(alpha, -tau * x[i] / dx[i]);
    }
  }
  return alpha;
}

struct IpmResult {
  Eigen::VectorXd z;
  Eigen::VectorXd lam; // multipliers of the inequality rows
  Eigen::VectorXd q;   // equality multipliers (empty in penalty mode)
  Eigen::VectorXd zy, zxi;
  int iterations = 0;
  SolveStatus status = SolveStatus::IterationLimit;
};

/// Interior-point core shared by the full NLP (state equation kept as an
/// equality) and the penalty subproblems (state equation moved into the
/// objective). Inequalities are the per-node relaxed complementarity rows,
/// internally rescaled to unit size, plus the optional xi-ball.
class IpmCore {
public:
  IpmCore(const RelaxedOcp& ocp, const SolverConfig& cfg, bool with_equality)
      : ocp_(ocp),
        cfg_(cfg),
        with_equality_(with_equality),
        m_(ocp.grid.interior_count),
        cscale_(log_scale_of(ocp.smoothing)),
        has_ball_(std::isfinite(ocp.xi_bound_R)),
        ball_scale_(has_ball_ ? std::max(1.0, ocp.xi_bound_R * ocp.xi_bound_R)
                              : 1.0) {}

  void set_penalty(double eps, Eigen::VectorXd anchor) {
    eps_ = eps;
    anchor_ = std::move(anchor);
  }

  IpmResult run(Eigen::VectorXd z0, int iter_budget);

private:
  int mc() const { return m_ + (has_ball_ ? 1 : 0); }
  int neq() const { return with_equality_ ? m_ : 0; }

  Eigen::VectorXd bound_gap_y(const Eigen::VectorXd& z) const {
    return ocp_.y_part(z) - ocp_.data.psi.values();
  }

  double eval_objective(const Eigen::VectorXd& z) const {
    return with_equality_ ? objective(ocp_, z)
                          : penalized_objective(ocp_, z, eps_, anchor_);
  }
  Eigen::VectorXd eval_objective_gradient(const Eigen::VectorXd& z) const {
    return with_equality_ ? objective_gradient(ocp_, z)
                          : penalized_gradient(ocp_, z, eps_, anchor_);
  }

  /// Internal-scale inequality values; assumes bounds strictly satisfied.
  Eigen::VectorXd eval_C(const Eigen::VectorXd& z) const {
    Eigen::VectorXd c(mc());
    const Eigen::VectorXd a = bound_gap_y(z);
    const Eigen::VectorXd b = ocp_.xi_part(z);
    for (int i = 0; i < m_; ++i) {
      c[i] = scaled_residual(ocp_.smoothing, a[i], b[i]) / cscale_;
    }
    if (has_ball_) {
      const double R = ocp_.xi_bound_R;
      c[m_] = 0.5 * (R * R - ocp_.weight() * b.squaredNorm()) / ball_scale_;
    }
    return c;
  }

  std::vector<ScaledResidualDerivs> eval_C_derivs(
      const Eigen::VectorXd& z) const {
    const Eigen::VectorXd a = bound_gap_y(z);
    const Eigen::VectorXd b = ocp_.xi_part(z);
    std::vector<ScaledResidualDerivs> cd(static_cast<size_t>(m_));
    for (int i = 0; i < m_; ++i) {
      auto d = scaled_residual_derivs(ocp_.smoothing, a[i], b[i]);
      d.value /= cscale_;
      d.da /= cscale_;
      d.db /= cscale_;
      d.daa /= cscale_;
      d.dab /= cscale_;
      d.dbb /= cscale_;
      cd[static_cast<size_t>(i)] = d;
    }
    return cd;
  }

  /// J_C^T t for a row vector t over the inequality rows (ball included).
  Eigen::VectorXd jc_apply_transpose(const Eigen::VectorXd& z,
                                     const std::vector<ScaledResidualDerivs>& cd,
                                     const Eigen::VectorXd& t) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(3 * m_);
    for (int i = 0; i < m_; ++i) {
      out[i] += cd[static_cast<size_t>(i)].da * t[i];
      out[2 * m_ + i] += cd[static_cast<size_t>(i)].db * t[i];
    }
    if (has_ball_) {
      out.segment(2 * m_, m_) -=
          (ocp_.weight() / ball_scale_) * t[m_] * ocp_.xi_part(z);
    }
    return out;
  }

  Eigen::VectorXd jc_apply(const Eigen::VectorXd& z,
                           const std::vector<ScaledResidualDerivs>& cd,
                           const Eigen::VectorXd& dz) const {
    Eigen::VectorXd out(mc());
    for (int i = 0; i < m_; ++i) {
      out[i] = cd[static_cast<size_t>(i)].da * dz[i] +
               cd[static_cast<size_t>(i)].db * dz[2 * m_ + i];
    }
    if (has_ball_) {
      out[m_] = -(ocp_.weight() / ball_scale_) *
                ocp_.xi_part(z).dot(dz.segment(2 * m_, m_));
    }
    return out;
  }

  void shift_to_strict_feasibility(Eigen::VectorXd& z) const;

  const RelaxedOcp& ocp_;
  const SolverConfig& cfg_;
  bool with_equality_;
  int m_;
  double cscale_;
  bool has_ball_;
  double ball_scale_;
  double eps_ = 1.0;
  Eigen::VectorXd anchor_;
};

void IpmCore::shift_to_strict_feasibility(Eigen::VectorXd& z) const {
  Eigen::Ref<Eigen::VectorXd> y = z.segment(0, m_);
  Eigen::Ref<Eigen::VectorXd> xi = z.segment(2 * m_, m_);
  const Eigen::VectorXd& psi = ocp_.data.psi.values();
  for (int i = 0; i < m_; ++i) {
    y[i] = std::max(y[i], psi[i] + 1e-10 * (1.0 + std::abs(psi[i])));
    xi[i] = std::max(xi[i], 1e-12);
    // Shrink toward strict feasibility with a margin, halving whichever
    // side currently dominates: at contact nodes (large xi) the gap is the
    // relaxation artifact and the multiplier carries the physics, and
    // conversely at free nodes. This keeps warm starts across an
    // alpha-decade close to the incoming solution structure.
    double a = y[i] - psi[i];
    const double floor_a = 1e-14 * (1.0 + std::abs(psi[i]));
    const bool shrink_xi = a >= xi[i];
    // Target half the residual attainable by sending the shrinking side to
    // zero, which the halving loop approaches by continuity.
    const double target =
        0.5 *
        (shrink_xi ? scaled_residual(ocp_.smoothing, a, 0.0)
                   : scaled_residual(ocp_.smoothing, 0.0, xi[i])) /
        cscale_;
    int guard = 0;
    while (scaled_residual(ocp_.smoothing, a, xi[i]) / cscale_ <= target &&
           guard++ < 4000) {
      if (shrink_xi || a <= floor_a) {
        xi[i] *= 0.5;
      } else {
        a *= 0.5;
      }
    }
    y[i] = psi[i] + std::max(a, floor_a);
  }
  if (has_ball_) {
    const double norm_xi = std::sqrt(ocp_.weight()) * xi.norm();
    if (norm_xi >= 0.99 * ocp_.xi_bound_R) {
      xi *= 0.9 * ocp_.xi_bound_R / norm_xi;
    }
  }
}

IpmResult IpmCore::run(Eigen::VectorXd z0, int iter_budget) {
  const int nv = 3 * m_;
  const int nk = nv + neq();
  const double w = ocp_.weight();

  IpmResult res;
  shift_to_strict_feasibility(z0);
  Eigen::VectorXd z = std::move(z0);

  double mu = cfg_.mu_init;
  const double mu_min = cfg_.tol / 10.0;
  double tau = std::max(cfg_.fraction_to_boundary, 1.0 - mu);

  auto clamp_dual = [](double v) { return std::clamp(v, 1e-8, 1e4); };
  Eigen::VectorXd C = eval_C(z);
  Eigen::VectorXd lam(mc()), zy(m_), zxi(m_);
  for (int i = 0; i < mc(); ++i) lam[i] = clamp_dual(mu / C[i]);
  {
    const Eigen::VectorXd a = bound_gap_y(z);
    const Eigen::VectorXd b = ocp_.xi_part(z);
    for (int i = 0; i < m_; ++i) {
      zy[i] = clamp_dual(mu / a[i]);
      zxi[i] = clamp_dual(mu / b[i]);
    }
  }
  Eigen::VectorXd q = Eigen::VectorXd::Zero(neq());

  double delta_last = 0.0;
  res.status = SolveStatus::IterationLimit;

  int iter = 0;
  for (; iter < iter_budget; ++iter) {
    const Eigen::VectorXd a = bound_gap_y(z);
    const Eigen::VectorXd b = ocp_.xi_part(z);
    const Eigen::VectorXd grad_f = eval_objective_gradient(z);
    const auto cd = eval_C_derivs(z);
    C = eval_C(z);
    Eigen::VectorXd E;
    Eigen::SparseMatrix<double> op; // A + diag(g'(y))
    if (with_equality_) {
      E = state_residual(ocp_, z).values();
      op = linearized_state_operator(ocp_, ocp_.y_part(z));
    }

    // Dual residual of the barrier Lagrangian.
    Eigen::VectorXd ra = grad_f - jc_apply_transpose(z, cd, lam);
    ra.segment(0, m_) -= zy;
    ra.segment(2 * m_, m_) -= zxi;
    if (with_equality_) {
      ra.segment(0, m_) += op.transpose() * q;
      ra.segment(m_, m_) -= q;
      ra.segment(2 * m_, m_) -= q;
    }
    if (!ra.allFinite() || !C.allFinite() ||
        (with_equality_ && !E.allFinite())) {
      res.status = SolveStatus::LinearSolverBreakdown;
      break;
    }

    // Scaled optimality error, IPOPT style.
    const double dual_sum =
        lam.lpNorm<1>() + zy.lpNorm<1>() + zxi.lpNorm<1>() + q.lpNorm<1>();
    const double sd =
        std::max(100.0, dual_sum / static_cast<double>(mc() + 2 * m_ + neq())) /
        100.0;
    const double sc =
        std::max(100.0, (dual_sum - q.lpNorm<1>()) /
                            static_cast<double>(mc() + 2 * m_)) /
        100.0;
    auto error_at = [&](double mu_ref) {
      double comp = (C.array() * lam.array() - mu_ref).abs().maxCoeff();
      comp = std::max(comp,
                      (a.array() * zy.array() - mu_ref).abs().maxCoeff());
      comp = std::max(comp,
                      (b.array() * zxi.array() - mu_ref).abs().maxCoeff());
      double err = std::max(ra.lpNorm<Eigen::Infinity>() / sd, comp / sc);
      if (with_equality_) err = std::max(err, E.lpNorm<Eigen::Infinity>());
      return err;
    };

    const double state_gate =
        with_equality_ ? std::min(cfg_.tol, cfg_.state_tol) : cfg_.tol;
    if (error_at(0.0) <= cfg_.tol &&
        (!with_equality_ || E.lpNorm<Eigen::Infinity>() <= state_gate)) {
      res.status = SolveStatus::Converged;
      break;
    }
    while (mu > mu_min && error_at(mu) <= kKappaEps * mu) {
      mu = std::max(mu_min,
                    std::min(cfg_.mu_reduction * mu, std::pow(mu, 1.5)));
      tau = std::max(cfg_.fraction_to_boundary, 1.0 - mu);
    }

    // Hessian of the Lagrangian plus the primal-dual bound and inequality
    // condensation terms.
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(40 * m_));
    const Eigen::VectorXd y = ocp_.y_part(z);
    const Eigen::VectorXd gpp = ocp_.data.g.second(y);
    if (with_equality_) {
      for (int i = 0; i < m_; ++i) {
        trips.emplace_back(i, i, w + gpp[i] * q[i]);
        trips.emplace_back(m_ + i, m_ + i, w * ocp_.data.nu);
      }
    } else {
      // Exact Hessian of the penalized functional.
      const Eigen::VectorXd q_eps =
          state_residual(ocp_, z).values() / eps_;
      const auto opp = linearized_state_operator(ocp_, y);
      const Eigen::SparseMatrix<double> opsq =
          Eigen::SparseMatrix<double>(opp.transpose() * opp);
      const Eigen::SparseMatrix<double> asq = Eigen::SparseMatrix<double>(
          ocp_.A.matrix().transpose() * ocp_.A.matrix());
      for (int k = 0; k < opsq.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(opsq, k); it; ++it) {
          trips.emplace_back(static_cast<int>(it.row()),
                             static_cast<int>(it.col()), w / eps_ * it.value());
        }
      }
      for (int k = 0; k < asq.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(asq, k); it; ++it) {
          trips.emplace_back(static_cast<int>(it.row()),
                             static_cast<int>(it.col()), w * it.value());
        }
      }
      for (int k = 0; k < opp.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(opp, k); it; ++it) {
          // coupling of y with v and xi through the state-residual term
          trips.emplace_back(static_cast<int>(it.row()),
                             m_ + static_cast<int>(it.col()),
                             -w / eps_ * it.value());
          trips.emplace_back(m_ + static_cast<int>(it.col()),
                             static_cast<int>(it.row()),
                             -w / eps_ * it.value());
          trips.emplace_back(static_cast<int>(it.row()),
                             2 * m_ + static_cast<int>(it.col()),
                             -w / eps_ * it.value());
          trips.emplace_back(2 * m_ + static_cast<int>(it.col()),
                             static_cast<int>(it.row()),
                             -w / eps_ * it.value());
        }
      }
      for (int i = 0; i < m_; ++i) {
        trips.emplace_back(i, i, w * (1.0 + gpp[i] * q_eps[i]));
        trips.emplace_back(m_ + i, m_ + i,
                           w * (ocp_.data.nu + 1.0 / eps_ + 1.0));
        trips.emplace_back(2 * m_ + i, 2 * m_ + i, w * (1.0 / eps_ + 1.0));
        trips.emplace_back(m_ + i, 2 * m_ + i, w / eps_);
        trips.emplace_back(2 * m_ + i, m_ + i, w / eps_);
      }
    }
    // Complementarity curvature, bound barrier terms, inequality condensation.
    for (int i = 0; i < m_; ++i) {
      const auto& d = cd[static_cast<size_t>(i)];
      const double dci = lam[i] / C[i];
      trips.emplace_back(i, i, -lam[i] * d.daa + dci * d.da * d.da +
                                    zy[i] / a[i]);
      trips.emplace_back(2 * m_ + i, 2 * m_ + i,
                         -lam[i] * d.dbb + dci * d.db * d.db + zxi[i] / b[i]);
      const double off = -lam[i] * d.dab + dci * d.da * d.db;
      trips.emplace_back(i, 2 * m_ + i, off);
      trips.emplace_back(2 * m_ + i, i, off);
    }
    if (has_ball_) {
      const double hb = lam[m_] * w / ball_scale_;
      for (int i = 0; i < m_; ++i) {
        trips.emplace_back(2 * m_ + i, 2 * m_ + i, hb);
      }
    }
    if (with_equality_) {
      for (int k = 0; k < op.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(op, k); it; ++it) {
          trips.emplace_back(static_cast<int>(it.row()),
                             nv + static_cast<int>(it.col()), it.value());
          trips.emplace_back(nv + static_cast<int>(it.col()),
                             static_cast<int>(it.row()), it.value());
        }
      }
      for (int i = 0; i < m_; ++i) {
        trips.emplace_back(m_ + i, nv + i, -1.0);
        trips.emplace_back(nv + i, m_ + i, -1.0);
        trips.emplace_back(2 * m_ + i, nv + i, -1.0);
        trips.emplace_back(nv + i, 2 * m_ + i, -1.0);
        trips.emplace_back(nv + i, nv + i, -kDeltaC);
      }
    }

    // Right-hand side of the condensed primal-dual system.
    const Eigen::VectorXd re = (a.array() * zy.array() - mu).matrix();
    const Eigen::VectorXd rf = (b.array() * zxi.array() - mu).matrix();
    const Eigen::VectorXd t_row =
        (lam.array() - mu / C.array()).matrix();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nk);
    rhs.segment(0, nv) = -(ra + jc_apply_transpose(z, cd, t_row));
    rhs.segment(0, m_) -= (re.array() / a.array()).matrix();
    rhs.segment(2 * m_, m_) -= (rf.array() / b.array()).matrix();
    if (with_equality_) rhs.segment(nv, m_) = -E;

    // Factor with inertia correction: 3m positive and neq negative pivots.
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    Eigen::VectorXd u; // rank-one ball term, handled by Sherman-Morrison
    if (has_ball_) {
      u = Eigen::VectorXd::Zero(nk);
      u.segment(2 * m_, m_) = -std::sqrt(lam[m_] / C[m_]) *
                              (w / ball_scale_) * ocp_.xi_part(z);
    }
    double delta = 0.0;
    bool factored = false;
    while (!factored) {
      std::vector<Eigen::Triplet<double>> kt = trips;
      if (delta > 0.0) {
        for (int i = 0; i < nv; ++i) kt.emplace_back(i, i, delta);
      }
      Eigen::SparseMatrix<double> K(nk, nk);
      K.setFromTriplets(kt.begin(), kt.end());
      ldlt.compute(K);
      bool ok = (ldlt.info() == Eigen::Success);
      if (ok) {
        const auto& D = ldlt.vectorD();
        int npos = 0, nneg = 0;
        for (int i = 0; i < nk; ++i) {
          if (D[i] > 0.0) {
            ++npos;
          } else if (D[i] < 0.0) {
            ++nneg;
          }
        }
        ok = (npos == nv && nneg == neq());
      }
      if (ok) {
        factored = true;
        delta_last = delta;
      } else {
        static const bool trace_f = std::getenv("OBSOPT_TRACE") != nullptr;
        if (trace_f) {
          std::fprintf(stderr, "  factor retry: delta=%.2e info=%d\n", delta,
                       static_cast<int>(ldlt.info()));
        }
        delta = (delta == 0.0)
                    ? std::max(1e-20, delta_last > 0.0 ? delta_last / 3.0 : 1e-4)
                    : delta * 8.0;
        if (delta > kDeltaXMax) {
          res.status = SolveStatus::LinearSolverBreakdown;
          res.z = z;
          res.lam = lam;
          res.q = q;
          res.zy = zy;
          res.zxi = zxi;
          res.iterations = iter;
          return res;
        }
      }
    }

    auto kkt_solve = [&](const Eigen::VectorXd& bvec) {
      Eigen::VectorXd x = ldlt.solve(bvec);
      if (has_ball_) {
        const Eigen::VectorXd Ku = ldlt.solve(u);
        const double denom = 1.0 + u.dot(Ku);
        x -= Ku * (u.dot(x) / denom);
      }
      return x;
    };
    const Eigen::VectorXd step = kkt_solve(rhs);
    if (!step.allFinite()) {
      res.status = SolveStatus::LinearSolverBreakdown;
      break;
    }
    const Eigen::VectorXd dz = step.segment(0, nv);
    const Eigen::VectorXd dq =
        with_equality_ ? step.segment(nv, m_).eval() : Eigen::VectorXd();

    const Eigen::VectorXd dC = jc_apply(z, cd, dz);
    const Eigen::VectorXd dlam =
        (-(C.array() * lam.array() - mu + lam.array() * dC.array()) /
         C.array())
            .matrix();
    const Eigen::VectorXd dzy =
        (-(re.array() + zy.array() * dz.segment(0, m_).array()) / a.array())
            .matrix();
    const Eigen::VectorXd dzxi =
        (-(rf.array() + zxi.array() * dz.segment(2 * m_, m_).array()) /
         b.array())
            .matrix();

    double alpha_max = 1.0;
    alpha_max = std::min(alpha_max,
                         fraction_to_boundary(a, dz.segment(0, m_), tau));
    alpha_max = std::min(
        alpha_max, fraction_to_boundary(b, dz.segment(2 * m_, m_), tau));
    // The complementarity rows are nonlinear in z; guard their linearized
    // step like a bound so the dual update stays consistent.
    alpha_max = std::min(alpha_max, fraction_to_boundary(C, dC, tau));
    double alpha_dual = 1.0;
    alpha_dual = std::min(alpha_dual, fraction_to_boundary(lam, dlam, tau));
    alpha_dual = std::min(alpha_dual, fraction_to_boundary(zy, dzy, tau));
    alpha_dual = std::min(alpha_dual, fraction_to_boundary(zxi, dzxi, tau));

    // Merit line search; the complementarity rows sit in the barrier term,
    // so only the state equation needs a penalty weight.
    auto barrier_phi = [&](const Eigen::VectorXd& zz, bool& interior) {
      const Eigen::VectorXd aa = bound_gap_y(zz);
      const Eigen::VectorXd bb = ocp_.xi_part(zz);
      const Eigen::VectorXd cc = eval_C(zz);
      if (aa.minCoeff() <= 0.0 || bb.minCoeff() <= 0.0 ||
          cc.minCoeff() <= 0.0) {
        interior = false;
        return std::numeric_limits<double>::infinity();
      }
      interior = true;
      double val = eval_objective(zz);
      val -= mu * (aa.array().log().sum() + bb.array().log().sum() +
                   cc.array().log().sum());
      return val;
    };
    auto eq_norm = [&](const Eigen::VectorXd& zz) {
      return with_equality_
                 ? state_residual(ocp_, zz).values().norm()
                 : 0.0;
    };

    Eigen::VectorXd grad_phi = grad_f - jc_apply_transpose(z, cd, (mu / C.array()).matrix());
    grad_phi.segment(0, m_) -= (mu / a.array()).matrix();
    grad_phi.segment(2 * m_, m_) -= (mu / b.array()).matrix();
    const double dphi = grad_phi.dot(dz);
    const double cnorm0 = eq_norm(z);
    double rho = 1.0;
    if (cnorm0 > 1e-12) {
      rho = std::clamp(1.5 * dphi / (0.7 * cnorm0), 1.0, 1e10);
    }
    bool interior = true;
    const double merit0 = barrier_phi(z, interior) + rho * cnorm0;
    const double dmerit = dphi - rho * cnorm0;

    double alpha = alpha_max;
    bool accepted = false;
    double best_alpha = 0.0;
    double best_merit = std::numeric_limits<double>::infinity();
    for (int ls = 0; ls < 60 && alpha > 1e-16; ++ls) {
      const Eigen::VectorXd z_try = z + alpha * dz;
      const double merit_try =
          barrier_phi(z_try, interior) + rho * eq_norm(z_try);
      if (std::isfinite(merit_try) && merit_try < best_merit) {
        best_merit = merit_try;
        best_alpha = alpha;
      }
      if (interior && std::isfinite(merit_try) &&
          merit_try <= merit0 + cfg_.sufficient_decrease * alpha *
                                    std::min(dmerit, 0.0) -
                       1e-14 * std::abs(merit0)) {
        accepted = true;
        break;
      }
      alpha *= cfg_.backtrack_factor;
    }
    if (!accepted) {
      if (best_alpha > 0.0 &&
          best_merit <= merit0 + 1e-9 * (1.0 + std::abs(merit0))) {
        alpha = best_alpha;
      } else {
        res.status = SolveStatus::LineSearchFailure;
        break;
      }
    }

    static const bool trace = std::getenv("OBSOPT_TRACE") != nullptr;
    if (trace) {
      std::fprintf(
          stderr,
          "it=%4d mu=%8.2e f=%12.5e E=%8.2e ra=%8.2e a=%8.2e ad=%8.2e "
          "rho=%8.2e dmrt=%9.2e dlt=%7.1e E0=%8.2e lam=%8.2e Cmin=%8.2e\n",
          iter, mu, eval_objective(z),
          with_equality_ ? E.lpNorm<Eigen::Infinity>() : 0.0,
          ra.lpNorm<Eigen::Infinity>(), alpha, alpha_dual, rho, dmerit,
          delta_last, error_at(0.0), lam.lpNorm<Eigen::Infinity>(),
          C.minCoeff());
    }

    z += alpha * dz;
    if (with_equality_) q += alpha * dq;
    lam += alpha_dual * dlam;
    zy += alpha_dual * dzy;
    zxi += alpha_dual * dzxi;

    // Keep the duals compatible with the primal gaps (the usual sandwich).
    const Eigen::VectorXd a_new = bound_gap_y(z);
    const Eigen::VectorXd b_new = ocp_.xi_part(z);
    const Eigen::VectorXd c_new = eval_C(z);
    for (int i = 0; i < m_; ++i) {
      zy[i] = std::clamp(zy[i], mu / (kKappaSigma * a_new[i]),
                         kKappaSigma * mu / a_new[i]);
      zxi[i] = std::clamp(zxi[i], mu / (kKappaSigma * b_new[i]),
                          kKappaSigma * mu / b_new[i]);
    }
    // The complementarity rows are nonlinear, so their duals get a much
    // narrower sandwich than the plain bound duals.
    for (int i = 0; i < mc(); ++i) {
      lam[i] = std::clamp(lam[i], mu / (kKappaLam * c_new[i]),
                          kKappaLam * mu / c_new[i]);
    }
  }

  res.z = z;
  res.lam = lam;
  res.q = q;
  res.zy = zy;
  res.zxi = zxi;
  res.iterations = iter;
  return res;
}

/// Scalar multiplier for the aggregated complementarity constraint. When
/// the aggregate sum_i theta + theta sits strictly below the node count,
/// complementary slackness forces r = 0; on the boundary it is recovered
/// by minimizing the projected stationarity residuals (a convex
/// piecewise-quadratic 1-D problem).
double recover_r(const RelaxedOcp& ocp, const Eigen::VectorXd& z,
                 const FieldVector& q, const FieldVector& p,
                 double active_tol) {
  const int m = ocp.grid.interior_count;
  const double w = ocp.weight();
  const Eigen::VectorXd y = ocp.y_part(z);
  const Eigen::VectorXd a =
      (y - ocp.data.psi.values()).cwiseMax(0.0);
  const Eigen::VectorXd b = ocp.xi_part(z).cwiseMax(0.0);

  const auto op = linearized_state_operator(ocp, y);
  const Eigen::VectorXd gy0 = w * (op.transpose() * (p.values() + q.values()));
  const Eigen::VectorXd gx0 = -w * q.values();
  Eigen::VectorXd ty(m), tx(m);
  double theta_gap = -static_cast<double>(m);
  for (int i = 0; i < m; ++i) {
    ty[i] = theta_deriv(ocp.smoothing, a[i]);
    tx[i] = theta_deriv(ocp.smoothing, b[i]);
    theta_gap += theta(ocp.smoothing, a[i]) + theta(ocp.smoothing, b[i]);
  }
  std::vector<bool> act_y(static_cast<size_t>(m)), act_x(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    act_y[static_cast<size_t>(i)] =
        a[i] <= active_tol * (1.0 + std::abs(ocp.data.psi[i]));
    act_x[static_cast<size_t>(i)] = b[i] <= active_tol;
  }

  // Aggregate constraint strictly inactive: its multiplier vanishes.
  if (theta_gap < -active_tol * m) return 0.0;

  auto residual_sq = [&](double r) {
    double sum = (r * theta_gap) * (r * theta_gap);
    for (int i = 0; i < m; ++i) {
      double gy = gy0[i] + r * ty[i];
      if (act_y[static_cast<size_t>(i)]) gy = std::min(gy, 0.0);
      double gx = gx0[i] + r * tx[i];
      if (act_x[static_cast<size_t>(i)]) gx = std::min(gx, 0.0);
      sum += gy * gy + gx * gx;
    }
    return sum;
  };

  double r_hi = 1.0;
  for (int i = 0; i < m; ++i) {
    if (gy0[i] < 0.0 && ty[i] > 0.0) r_hi = std::max(r_hi, -gy0[i] / ty[i]);
    if (gx0[i] < 0.0 && tx[i] > 0.0) r_hi = std::max(r_hi, -gx0[i] / tx[i]);
  }
  r_hi *= 2.0;
  double lo = 0.0, hi = r_hi;
  for (int it = 0; it < 200; ++it) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    if (residual_sq(m1) <= residual_sq(m2)) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  const double r_star = 0.5 * (lo + hi);
  return residual_sq(r_star) < residual_sq(0.0) ? r_star : 0.0;
}

SolveReport build_report(const RelaxedOcp& ocp, const SolverConfig& cfg,
                         const IpmResult& res, const FieldVector& q_l2) {
  const int m = ocp.grid.interior_count;
  SolveReport rep;
  rep.z = res.z;
  rep.y = FieldVector(ocp.grid, res.z.segment(0, m));
  rep.v = FieldVector(ocp.grid, res.z.segment(m, m));
  rep.xi = FieldVector(ocp.grid, res.z.segment(2 * m, m));
  rep.q = q_l2;
  rep.bound_mult_y = FieldVector(ocp.grid, res.zy);
  rep.bound_mult_xi = FieldVector(ocp.grid, res.zxi);
  rep.comp_mult =
      FieldVector(ocp.grid, res.lam.segment(0, m) / log_scale_of(ocp.smoothing));
  rep.objective = reported_objective(ocp, res.z);
  rep.state_residual_2 = state_residual(ocp, res.z).values().norm();
  const Eigen::VectorXd gap = res.z.segment(0, m) - ocp.data.psi.values();
  rep.comp_error = gap.dot(res.z.segment(2 * m, m)) /
                   (static_cast<double>(ocp.grid.n) * ocp.grid.n);
  rep.iterations = res.iterations;
  rep.status = res.status;
  rep.converged = (res.status == SolveStatus::Converged);

  const double active_tol = std::max(1e-6, cfg.tol);
  const FieldVector p = adjoint_solve(ocp, rep.y);
  rep.r = recover_r(ocp, res.z, q_l2, p, active_tol);
  rep.kkt = kkt_residuals(ocp, res.z, q_l2, rep.r, active_tol);
  return rep;
}

Eigen::VectorXd default_start(const RelaxedOcp& ocp) {
  const int m = ocp.grid.interior_count;
  Eigen::VectorXd z(3 * m);
  z.segment(0, m) =
      ocp.data.psi.values().cwiseMax(Eigen::VectorXd::Zero(m)).array() + 1.0;
  z.segment(m, m).setZero();
  z.segment(2 * m, m).setOnes();
  return z;
}

} // namespace

double NlpResiduals::max_residual() const {
  return std::max(
      {stationarity, state_feasibility, bound_violation, complementarity});
}

NlpResiduals verify_kkt(const RelaxedOcp& ocp, const SolveReport& report) {
  const int m = ocp.grid.interior_count;
  const double w = ocp.weight();
  const double cscale = log_scale_of(ocp.smoothing);
  const Eigen::VectorXd& z = report.z;
  const Eigen::VectorXd a =
      (ocp.y_part(z) - ocp.data.psi.values()).eval();
  const Eigen::VectorXd b = ocp.xi_part(z);

  const Eigen::VectorXd q_hat = w * report.q.values();
  const Eigen::VectorXd& lam = report.comp_mult.values(); // rows in the public scaled_residual scale
  const Eigen::VectorXd& zy = report.bound_mult_y.values();
  const Eigen::VectorXd& zxi = report.bound_mult_xi.values();

  Eigen::VectorXd grad = objective_gradient(ocp, z);
  grad += state_jacobian(ocp, z).transpose() * q_hat;
  grad -= complementarity_jacobian(ocp, z).transpose() * lam;
  grad.segment(0, m) -= zy;
  grad.segment(2 * m, m) -= zxi;

  const double dual_sum = (lam * cscale).lpNorm<1>() + zy.lpNorm<1>() +
                          zxi.lpNorm<1>() + q_hat.lpNorm<1>();
  const double sd =
      std::max(100.0, dual_sum / static_cast<double>(4 * m)) / 100.0;

  NlpResiduals out;
  out.stationarity = grad.lpNorm<Eigen::Infinity>() / sd;
  out.state_feasibility =
      state_residual(ocp, z).values().lpNorm<Eigen::Infinity>();

  const Eigen::VectorXd c = complementarity_constraints(ocp, z).values();
  double viol = std::max(-a.minCoeff(), -b.minCoeff());
  viol = std::max(viol, -c.minCoeff() / cscale);
  if (std::isfinite(ocp.xi_bound_R)) {
    viol = std::max(viol, std::sqrt(w) * b.norm() - ocp.xi_bound_R);
  }
  out.bound_violation = std::max(0.0, viol);

  const double sc =
      std::max(100.0, (dual_sum - q_hat.lpNorm<1>()) /
                          static_cast<double>(3 * m)) /
      100.0;
  double comp = 0.0;
  for (int i = 0; i < m; ++i) {
    comp = std::max(comp, std::abs(c[i] * lam[i]));
    comp = std::max(comp, std::abs(a[i] * zy[i]));
    comp = std::max(comp, std::abs(b[i] * zxi[i]));
  }
  out.complementarity = comp / sc;
  return out;
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::IterationLimit: return "iteration-limit";
    case SolveStatus::LineSearchFailure: return "line-search-failure";
    case SolveStatus::LinearSolverBreakdown: return "linear-solver-breakdown";
    case SolveStatus::EpsUnderflow: return "eps-underflow";
  }
  return "?";
}

void SolverConfig::validate() const {
  if (!(tol > 0.0)) throw std::invalid_argument("SolverConfig: tol must be > 0");
  if (!(state_tol > 0.0))
    throw std::invalid_argument("SolverConfig: state_tol must be > 0");
  if (max_iter <= 0) throw std::invalid_argument("SolverConfig: max_iter must be > 0");
  if (!(mu_init > 0.0)) throw std::invalid_argument("SolverConfig: mu_init must be > 0");
  auto in_unit = [](double x) { return x > 0.0 && x < 1.0; };
  if (!in_unit(mu_reduction))
    throw std::invalid_argument("SolverConfig: mu_reduction must be in (0,1)");
  if (!(penalty_eps_init > 0.0) || !(penalty_eps_min > 0.0))
    throw std::invalid_argument("SolverConfig: penalty eps values must be > 0");
  if (!in_unit(penalty_eps_reduction))
    throw std::invalid_argument("SolverConfig: penalty_eps_reduction must be in (0,1)");
  if (!in_unit(backtrack_factor))
    throw std::invalid_argument("SolverConfig: backtrack_factor must be in (0,1)");
  if (!in_unit(sufficient_decrease))
    throw std::invalid_argument("SolverConfig: sufficient_decrease must be in (0,1)");
  if (!in_unit(fraction_to_boundary))
    throw std::invalid_argument("SolverConfig: fraction_to_boundary must be in (0,1)");
}

SolveReport solve_barrier(const RelaxedOcp& ocp, const SolverConfig& cfg,
                          const std::optional<Eigen::VectorXd>& start) {
  cfg.validate();
  IpmCore core(ocp, cfg, /*with_equality=*/true);
  Eigen::VectorXd z0 = start ? *start : default_start(ocp);
  if (z0.size() != ocp.num_vars()) {
    throw std::invalid_argument("solve_barrier: start has wrong size");
  }
  IpmResult res = core.run(std::move(z0), cfg.max_iter);
  const FieldVector q_l2(ocp.grid, res.q / ocp.weight());
  return build_report(ocp, cfg, res, q_l2);
}

namespace {

/// Pointwise stationarity of the plain eps-penalized problem (no proximal
/// terms) at an inner-solve result, with q = E/eps. This is the quantity
/// the proximal re-anchoring drives to zero.
double penalty_nlp_stationarity(const RelaxedOcp& ocp, double eps,
                                const IpmResult& res) {
  const int m = ocp.grid.interior_count;
  const double w = ocp.weight();
  const double cscale = log_scale_of(ocp.smoothing);
  const Eigen::VectorXd q_eps = state_residual(ocp, res.z).values() / eps;

  Eigen::VectorXd grad = objective_gradient(ocp, res.z);
  grad += w * (state_jacobian(ocp, res.z).transpose() * q_eps);
  const Eigen::VectorXd lam_ext = res.lam.segment(0, m) / cscale;
  grad -= complementarity_jacobian(ocp, res.z).transpose() * lam_ext;
  if (std::isfinite(ocp.xi_bound_R)) {
    const double ball_scale = std::max(1.0, ocp.xi_bound_R * ocp.xi_bound_R);
    grad.segment(2 * m, m) +=
        res.lam[m] * (w / ball_scale) * ocp.xi_part(res.z);
  }
  grad.segment(0, m) -= res.zy;
  grad.segment(2 * m, m) -= res.zxi;

  const double dual_sum = res.lam.lpNorm<1>() + res.zy.lpNorm<1>() +
                          res.zxi.lpNorm<1>() + (w * q_eps).lpNorm<1>();
  const double sd =
      std::max(100.0, dual_sum / static_cast<double>(4 * m + res.lam.size())) /
      100.0;
  return grad.lpNorm<Eigen::Infinity>() / sd;
}

} // namespace

SolveReport solve_penalty(const RelaxedOcp& ocp, const SolverConfig& cfg,
                          AnchorMode anchor_mode,
                          const std::optional<Eigen::VectorXd>& fixed_anchor) {
  cfg.validate();
  if (anchor_mode == AnchorMode::Fixed && !fixed_anchor) {
    throw std::invalid_argument("solve_penalty: fixed anchor mode needs an anchor");
  }
  if (fixed_anchor && fixed_anchor->size() != ocp.num_vars()) {
    throw std::invalid_argument("solve_penalty: anchor has wrong size");
  }
  // The proximal anchor terms make the continuation basin-sensitive, so the
  // self-anchored path starts from the variational-inequality solution at
  // v = 0 (state equation already satisfied there) instead of the generic
  // barrier start.
  Eigen::VectorXd z;
  if (anchor_mode == AnchorMode::Fixed) {
    z = *fixed_anchor;
  } else {
    const ViSolution vi =
        solve_vi(ocp.grid, ocp.data, FieldVector(ocp.grid),
                 std::min(1e-8, cfg.tol));
    z = ocp.pack(vi.y.values(),
                 Eigen::VectorXd::Zero(ocp.grid.interior_count),
                 vi.xi.values());
  }
  Eigen::VectorXd anchor = z;

  double eps = cfg.penalty_eps_init;
  int total_iters = 0;
  IpmResult last;
  last.status = SolveStatus::IterationLimit;
  double eps_used = eps;
  std::vector<double> stage_residuals;
  // Outer loop: at each eps, iterate the re-anchoring to a fixed point (a
  // proximal iteration whose limit is a stationary point of the plain
  // eps-penalized problem, since the anchor terms have zero gradient
  // there), then shrink eps until the state equation holds. max_iter
  // bounds each inner barrier solve; iterations are reported in total.
  const int max_outer = 120;
  const int max_passes_per_eps = 8;
  int passes_at_eps = 0;
  double prev_stat = std::numeric_limits<double>::infinity();
  for (int outer = 0; outer < max_outer; ++outer) {
    IpmCore core(ocp, cfg, /*with_equality=*/false);
    core.set_penalty(eps, anchor);
    IpmResult res = core.run(z, cfg.max_iter);
    total_iters += res.iterations;
    z = res.z;
    eps_used = eps;
    const double stat = penalty_nlp_stationarity(ocp, eps, res);
    static const bool trace = std::getenv("OBSOPT_TRACE") != nullptr;
    if (trace) {
      std::fprintf(stderr, "penalty outer=%d eps=%.1e stat=%.3e inner_it=%d\n",
                   outer, eps, stat, res.iterations);
    }
    last = std::move(res);
    if (outer + 1 == max_outer &&
        last.status == SolveStatus::Converged) {
      last.status = SolveStatus::IterationLimit;
    }
    if (last.status != SolveStatus::Converged) break;

    ++passes_at_eps;
    // The proximal terms vanish only at their fixed point; iterate the
    // re-anchoring while it still makes decent progress toward the
    // prox-free stationarity of the penalized problem. The A^2 metric of
    // the y-anchor makes the tail of this fixed-point iteration slow along
    // state-feasible directions, so a plateau ends the passes.
    const bool keep_passing = anchor_mode == AnchorMode::SelfAnchored &&
                              stat > cfg.tol &&
                              stat < 0.95 * prev_stat &&
                              passes_at_eps < max_passes_per_eps;
    prev_stat = stat;
    if (anchor_mode == AnchorMode::SelfAnchored) {
      anchor = z;
      if (keep_passing) continue;
    }
    const double state_inf =
        state_residual(ocp, z).values().lpNorm<Eigen::Infinity>();
    stage_residuals.push_back(state_inf);
    if (state_inf <= cfg.tol) break;
    eps *= cfg.penalty_eps_reduction;
    passes_at_eps = 0;
    prev_stat = std::numeric_limits<double>::infinity();
    if (eps < cfg.penalty_eps_min) {
      last.status = SolveStatus::EpsUnderflow;
      break;
    }
  }

  last.iterations = total_iters;
  const FieldVector q_eps(
      ocp.grid, state_residual(ocp, z).values() / eps_used);
  SolveReport report = build_report(ocp, cfg, last, q_eps);
  report.penalty_eps = eps_used;
  report.stage_state_residuals = std::move(stage_residuals);
  return report;
}

std::vector<SolveReport> alpha_continuation(const Grid& grid,
                                            const ProblemData& data,
                                            SmoothingKind kind,
                                            const std::vector<double>& alphas,
                                            const SolverConfig& cfg,
                                            WeightingMode weighting) {
  cfg.validate();
  for (size_t k = 0; k < alphas.size(); ++k) {
    if (!(alphas[k] > 0.0) || (k > 0 && alphas[k] >= alphas[k - 1])) {
      throw std::invalid_argument(
          "alpha_continuation: schedule must be strictly decreasing and > 0");
    }
  }
  std::vector<SolveReport> reports;
  reports.reserve(alphas.size());
  std::optional<Eigen::VectorXd> warm;
  for (double alpha : alphas) {
    const RelaxedOcp ocp =
        make_relaxed_ocp(grid, data, SmoothingFn(kind, alpha), weighting);
    SolveReport rep = solve_barrier(ocp, cfg, warm);
    if (!rep.converged && warm) {
      rep = solve_barrier(ocp, cfg); // cold restart
    }
    warm = rep.z;
    reports.push_back(std::move(rep));
  }
  return reports;
}

} // namespace obsopt
