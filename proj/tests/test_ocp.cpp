#include "obsopt/ocp.hpp"

#include "obsopt/vi_solver.hpp"
#include "oracles.hpp"

#include <Eigen/Dense>
#include <doctest.h>

#include <random>

using namespace obsopt;

namespace {

/// Random evaluation point with y - psi and xi kept away from the bounds so
/// finite differences stay inside the constraint domain.
Eigen::VectorXd random_point(const RelaxedOcp& ocp, unsigned seed) {
  const int m = ocp.grid.interior_count;
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd z(3 * m);
  for (int i = 0; i < m; ++i) {
    z[i] = ocp.data.psi[i] + 0.5 + unif(rng);
    z[m + i] = 2.0 * unif(rng) - 1.0;
    z[2 * m + i] = 0.5 + unif(rng);
  }
  return z;
}

RelaxedOcp example_ocp(int n, double alpha,
                       WeightingMode mode = WeightingMode::NodeSum) {
  const Grid grid = build_grid(n);
  return make_relaxed_ocp(grid, example71_data(grid),
                          SmoothingFn(SmoothingKind::Fractional, alpha), mode);
}

} // namespace

TEST_CASE("objective values and gradient") {
  const RelaxedOcp ocp = example_ocp(20, 1e-3);
  const int m = ocp.grid.interior_count;

  Eigen::VectorXd z = Eigen::VectorXd::Zero(3 * m);
  z.segment(0, m) = ocp.data.z_d.values();
  z.segment(m, m) = ocp.data.v_d.values();
  CHECK(objective(ocp, z) == 0.0);

  z.setZero();
  CHECK(objective(ocp, z) == doctest::Approx(180.5).epsilon(1e-14));
  CHECK(reported_objective(ocp, z) ==
        doctest::Approx(180.5 + 40.0).epsilon(1e-14));

  const RelaxedOcp small = example_ocp(8, 1e-2);
  const Eigen::VectorXd zr = random_point(small, 42);
  const double err = testing::gradient_error(
      [&](const Eigen::VectorXd& zz) { return objective(small, zz); },
      objective_gradient(small, zr), zr);
  CHECK(err < 1e-7);
}

TEST_CASE("state residual and jacobian") {
  const RelaxedOcp ocp = example_ocp(6, 1e-2);
  const int m = ocp.grid.interior_count;

  // at a VI solution the state equation holds to the solver tolerance
  const auto vi = solve_vi(ocp.grid, ocp.data, FieldVector(ocp.grid), 1e-11);
  REQUIRE(vi.converged);
  const Eigen::VectorXd z_vi =
      ocp.pack(vi.y.values(), Eigen::VectorXd::Zero(m), vi.xi.values());
  CHECK(state_residual(ocp, z_vi).values().lpNorm<Eigen::Infinity>() <= 1e-10);

  // constructed feasible point: y = 0, xi = -f - v with f <= 0
  ProblemData neg = ocp.data;
  neg.f = FieldVector::constant(ocp.grid, -3.0);
  const RelaxedOcp ocp_neg = make_relaxed_ocp(ocp.grid, neg, ocp.smoothing);
  Eigen::VectorXd z0 = Eigen::VectorXd::Zero(3 * m);
  z0.segment(2 * m, m).setConstant(3.0);
  CHECK(state_residual(ocp_neg, z0).values().lpNorm<Eigen::Infinity>() == 0.0);

  const Eigen::VectorXd zr = random_point(ocp, 7);
  const double err = testing::jacobian_error(
      [&](const Eigen::VectorXd& zz) { return state_residual(ocp, zz).values(); },
      Eigen::MatrixXd(state_jacobian(ocp, zr)), zr);
  CHECK(err < 1e-6);
}

TEST_CASE("complementarity constraints") {
  const double alpha = 1e-2;
  const RelaxedOcp ocp = example_ocp(5, alpha);
  const int m = ocp.grid.interior_count;

  // y = psi, xi = 0: every entry equals alpha^2 log 2
  Eigen::VectorXd z = Eigen::VectorXd::Zero(3 * m);
  z.segment(0, m) = ocp.data.psi.values();
  const auto c0 = complementarity_constraints(ocp, z);
  for (int i = 0; i < m; ++i) {
    CHECK(c0[i] == doctest::Approx(alpha * alpha * std::log(2.0)).epsilon(1e-14));
  }

  // entry vanishes exactly on the product boundary (y-psi) xi = alpha^2
  z.segment(0, m) = ocp.data.psi.values().array() + alpha;
  z.segment(2 * m, m).setConstant(alpha);
  const auto cb = complementarity_constraints(ocp, z);
  // psi + alpha - psi rounds, so the boundary is exact only up to one ulp
  // of psi per node
  for (int i = 0; i < m; ++i) CHECK(std::abs(cb[i]) <= 1e-14);

  // feasibility of random points matches the product bound
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> unif(-5.0, 0.5);
  for (int rep = 0; rep < 200; ++rep) {
    Eigen::VectorXd gaps(m), xis(m);
    for (int i = 0; i < m; ++i) {
      gaps[i] = std::pow(10.0, unif(rng));
      xis[i] = std::pow(10.0, unif(rng));
    }
    Eigen::VectorXd zz(3 * m);
    zz << ocp.data.psi.values() + gaps, Eigen::VectorXd::Zero(m), xis;
    const auto c = complementarity_constraints(ocp, zz);
    const bool feasible = c.values().minCoeff() >= 0.0;
    const double maxprod = (gaps.array() * xis.array()).maxCoeff();
    if (std::abs(maxprod - alpha * alpha) > 1e-12) {
      CHECK(feasible == (maxprod <= alpha * alpha));
    }
  }

  // bound violations beyond tolerance are rejected
  Eigen::VectorXd zbad = random_point(ocp, 3);
  zbad[2 * m] = -1e-3;
  CHECK_THROWS_AS(complementarity_constraints(ocp, zbad), std::domain_error);
  zbad = random_point(ocp, 3);
  zbad[0] = ocp.data.psi[0] - 1e-4;
  CHECK_THROWS_AS(complementarity_constraints(ocp, zbad), std::domain_error);

  const Eigen::VectorXd zr = random_point(ocp, 19);
  const double err = testing::jacobian_error(
      [&](const Eigen::VectorXd& zz) {
        return complementarity_constraints(ocp, zz).values();
      },
      Eigen::MatrixXd(complementarity_jacobian(ocp, zr)), zr);
  CHECK(err < 1e-6);
}

TEST_CASE("adjoint solve") {
  const RelaxedOcp ocp = example_ocp(4, 1e-2);

  // zero right-hand side
  const FieldVector p0 = adjoint_solve(ocp, ocp.data.z_d);
  CHECK(p0.values().lpNorm<Eigen::Infinity>() == 0.0);

  // linear reaction term: compare against a dense solve
  ProblemData lin = ocp.data;
  lin.g = Nonlinearity::linear(2.5);
  const RelaxedOcp ocp_lin = make_relaxed_ocp(ocp.grid, lin, ocp.smoothing);
  const FieldVector y = FieldVector::sample(
      ocp.grid, [](double x1, double x2) { return std::sin(3 * x1) + x2; });
  const FieldVector p = adjoint_solve(ocp_lin, y);
  Eigen::MatrixXd dense = Eigen::MatrixXd(ocp.A.matrix());
  dense.diagonal().array() += 2.5;
  const Eigen::VectorXd p_ref =
      dense.fullPivLu().solve((y.values() - lin.z_d.values()).eval());
  CHECK((p.values() - p_ref).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("adjoint-based reduced gradient matches finite differences") {
  const RelaxedOcp ocp = example_ocp(8, 1e-2);
  const int m = ocp.grid.interior_count;
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  FieldVector v(ocp.grid), xi(ocp.grid);
  for (int k = 0; k < m; ++k) {
    v[k] = 2.0 * unif(rng) - 1.0;
    xi[k] = 0.1 * unif(rng);
  }
  const FieldVector grad = reduced_tracking_gradient(ocp, v, xi);

  auto reduced = [&](const Eigen::VectorXd& vv) {
    const FieldVector y = solve_state(ocp, FieldVector(ocp.grid, vv), xi);
    Eigen::VectorXd z(3 * m);
    z << y.values(), vv, xi.values();
    return objective(ocp, z);
  };
  const double err = testing::gradient_error(reduced, grad.values(), v.values());
  CHECK(err < 1e-5);
}

TEST_CASE("penalized functional") {
  const RelaxedOcp ocp = example_ocp(6, 1e-2);
  const int m = ocp.grid.interior_count;

  // state-feasible anchor: all penalty terms vanish at the anchor
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  FieldVector v(ocp.grid), xi(ocp.grid);
  for (int k = 0; k < m; ++k) {
    v[k] = unif(rng) - 0.5;
    xi[k] = unif(rng);
  }
  const FieldVector y = solve_state(ocp, v, xi);
  const Eigen::VectorXd anchor = ocp.pack(y.values(), v.values(), xi.values());
  CHECK(penalized_objective(ocp, anchor, 0.25, anchor) ==
        doctest::Approx(objective(ocp, anchor)).epsilon(1e-11));

  // halving eps exactly doubles the state-penalty term
  const Eigen::VectorXd z = random_point(ocp, 21);
  const double j = objective(ocp, z);
  const double p1 = penalized_objective(ocp, z, 0.5, z) - j;
  const double p2 = penalized_objective(ocp, z, 0.25, z) - j;
  CHECK(p2 == doctest::Approx(2.0 * p1).epsilon(1e-13));
  CHECK(p1 > 0.0);

  CHECK_THROWS_AS(penalized_objective(ocp, z, 0.0, z), std::invalid_argument);

  const Eigen::VectorXd za = random_point(ocp, 22);
  const double err = testing::gradient_error(
      [&](const Eigen::VectorXd& zz) {
        return penalized_objective(ocp, zz, 0.5, za);
      },
      penalized_gradient(ocp, z, 0.5, za), z);
  CHECK(err < 1e-6);
}

TEST_CASE("penalty gradient routes through q_eps exactly") {
  // The gradient of the state-penalty term written with q_eps = E/eps must
  // coincide with the assembled penalized gradient: an algebraic identity.
  const RelaxedOcp ocp = example_ocp(5, 1e-2);
  const int m = ocp.grid.interior_count;
  const Eigen::VectorXd z = random_point(ocp, 33);
  const Eigen::VectorXd anchor = random_point(ocp, 34);
  const double eps = 0.125;
  const double w = ocp.weight();

  const Eigen::VectorXd q_eps = state_residual(ocp, z).values() / eps;
  Eigen::VectorXd grad = objective_gradient(ocp, z);
  grad += w * (state_jacobian(ocp, z).transpose() * q_eps);
  const Eigen::VectorXd dy = ocp.y_part(z) - ocp.y_part(anchor);
  grad.segment(0, m) +=
      w * (ocp.A.matrix().transpose() * (ocp.A.matrix() * dy).eval());
  grad.segment(m, m) += w * (ocp.v_part(z) - ocp.v_part(anchor));
  grad.segment(2 * m, m) += w * (ocp.xi_part(z) - ocp.xi_part(anchor));

  const Eigen::VectorXd direct = penalized_gradient(ocp, z, eps, anchor);
  CHECK((grad - direct).lpNorm<Eigen::Infinity>() <=
        1e-12 * (1.0 + direct.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("kkt residuals at a constructed stationary point") {
  // linear g, v = v_d, q = 0, y = z_d (so p = 0), r = 0: everything interior
  // and stationary.
  const Grid grid = build_grid(5);
  ProblemData data;
  data.f = FieldVector::constant(grid, 0.3);
  data.psi = FieldVector::constant(grid, -2.0);
  data.z_d = FieldVector::constant(grid, 0.7);
  data.v_d = FieldVector::constant(grid, -0.4);
  data.nu = 0.25;
  data.g = Nonlinearity::linear(1.5);
  const RelaxedOcp ocp = make_relaxed_ocp(
      grid, data, SmoothingFn(SmoothingKind::Fractional, 1e-1));
  const int m = grid.interior_count;
  Eigen::VectorXd z(3 * m);
  z << data.z_d.values(), data.v_d.values(),
      Eigen::VectorXd::Constant(m, 1e-3);
  const auto rep = kkt_residuals(ocp, z, FieldVector(grid), 0.0);
  CHECK(rep.stationarity_y <= 1e-12);
  CHECK(rep.stationarity_v <= 1e-12);
  CHECK(rep.stationarity_xi <= 1e-12);
  CHECK(rep.r_complementarity == 0.0);
  CHECK(rep.p.values().lpNorm<Eigen::Infinity>() <= 1e-13);

  // r = 0 forces a vanishing aggregate complementarity residual everywhere
  const RelaxedOcp bench = example_ocp(5, 1e-2);
  const Eigen::VectorXd zr = random_point(bench, 55);
  CHECK(kkt_residuals(bench, zr, FieldVector(bench.grid), 0.0)
            .r_complementarity == 0.0);
  CHECK_THROWS_AS(kkt_residuals(bench, zr, FieldVector(bench.grid), -1.0),
                  std::invalid_argument);

  // omega = g'(y) y - g(y); for the cubic this is 2 y^3
  const auto diag = kkt_residuals(bench, zr, FieldVector(bench.grid), 0.0);
  for (int i = 0; i < bench.grid.interior_count; ++i) {
    const double y = zr[i];
    CHECK(diag.omega[i] == doctest::Approx(2.0 * y * y * y).epsilon(1e-12));
  }
}

TEST_CASE("kkt residuals vanish at the one-node brute-force minimum") {
  const Grid grid = build_grid(2);
  const ProblemData data = example71_data(grid);
  const RelaxedOcp ocp = make_relaxed_ocp(
      grid, data, SmoothingFn(SmoothingKind::Fractional, 1e-2));
  const auto mini = testing::one_node_brute_minimum(ocp);

  Eigen::VectorXd z(3);
  z << mini.y, mini.v, mini.xi;
  // least-squares multipliers: v-stationarity fixes q; r comes from the
  // 1-D least squares over the y- and xi-stationarity rows.
  const double q = data.nu * (mini.v - data.v_d[0]);
  const FieldVector y_field(grid, Eigen::VectorXd::Constant(1, mini.y));
  const double p = adjoint_solve(ocp, y_field)[0];
  const double gy0 =
      (ocp.A.matrix().coeff(0, 0) + data.g.deriv(mini.y)) * (p + q);
  const double ty = theta_deriv(ocp.smoothing, mini.y - data.psi[0]);
  const double gx0 = -q;
  const double tx = theta_deriv(ocp.smoothing, mini.xi);
  const double r =
      std::max(0.0, -(gy0 * ty + gx0 * tx) / (ty * ty + tx * tx));
  const auto rep =
      kkt_residuals(ocp, z, FieldVector(grid, Eigen::VectorXd::Constant(1, q)),
                    r, 1e-9);
  CHECK(rep.stationarity_v <= 1e-8);
  CHECK(rep.stationarity_xi <= 1e-8 * rep.scale);
  CHECK(rep.stationarity_y <= 1e-8 * rep.scale);
  CHECK(rep.r_complementarity <= 1e-8 * rep.scale);
}
