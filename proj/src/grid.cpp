#include "obsopt/grid.hpp"

#include <cmath>
#include <vector>

namespace obsopt {

Grid build_grid(int n) {
  if (n < 2) {
    throw std::invalid_argument("build_grid: need n >= 2, got " +
                                std::to_string(n));
  }
  Grid g;
  g.n = n;
  g.h = 1.0 / n;
  g.interior_count = (n - 1) * (n - 1);
  return g;
}

FieldVector::FieldVector(const Grid& grid, Eigen::VectorXd values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.interior_count) {
    throw std::invalid_argument(
        "FieldVector: value count " + std::to_string(values_.size()) +
        " does not match interior node count " +
        std::to_string(grid_.interior_count));
  }
}

FieldVector FieldVector::constant(const Grid& grid, double value) {
  return FieldVector(
      grid, Eigen::VectorXd::Constant(grid.interior_count, value));
}

FieldVector FieldVector::sample(
    const Grid& grid, const std::function<double(double, double)>& fn) {
  FieldVector out(grid);
  for (int j = 1; j < grid.n; ++j) {
    for (int i = 1; i < grid.n; ++i) {
      out[grid.index(i, j)] = fn(grid.x1(i), grid.x2(j));
    }
  }
  return out;
}

void FieldVector::require_finite(const std::string& what) const {
  if (!values_.allFinite()) {
    throw std::runtime_error("non-finite values in " + what);
  }
}

void require_same_grid(const FieldVector& a, const FieldVector& b) {
  if (!(a.grid() == b.grid())) {
    throw std::invalid_argument("grid mismatch between fields");
  }
}

FieldVector SparseOperator::apply(const FieldVector& u) const {
  if (u.size() != dim()) {
    throw std::invalid_argument("SparseOperator::apply: dimension mismatch");
  }
  return FieldVector(u.grid(), mat_ * u.values());
}

SparseOperator assemble_laplacian(const Grid& grid) {
  const int m = grid.interior_count;
  const double inv_h2 = 1.0 / (grid.h * grid.h);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(5 * m));
  for (int j = 1; j < grid.n; ++j) {
    for (int i = 1; i < grid.n; ++i) {
      const int k = grid.index(i, j);
      trips.emplace_back(k, k, 4.0 * inv_h2);
      if (i > 1) trips.emplace_back(k, grid.index(i - 1, j), -inv_h2);
      if (i < grid.n - 1) trips.emplace_back(k, grid.index(i + 1, j), -inv_h2);
      if (j > 1) trips.emplace_back(k, grid.index(i, j - 1), -inv_h2);
      if (j < grid.n - 1) trips.emplace_back(k, grid.index(i, j + 1), -inv_h2);
    }
  }
  Eigen::SparseMatrix<double> mat(m, m);
  mat.setFromTriplets(trips.begin(), trips.end());
  mat.makeCompressed();
  return SparseOperator(std::move(mat));
}

Nonlinearity Nonlinearity::cubic() {
  return Nonlinearity([](double y) { return y * y * y; },
                      [](double y) { return 3.0 * y * y; },
                      [](double y) { return 6.0 * y; });
}

Nonlinearity Nonlinearity::linear(double c0) {
  if (c0 < 0.0) {
    throw std::invalid_argument("Nonlinearity::linear: slope must be >= 0");
  }
  return Nonlinearity([c0](double y) { return c0 * y; },
                      [c0](double) { return c0; }, [](double) { return 0.0; });
}

Nonlinearity Nonlinearity::custom(Fn value, Fn deriv, Fn second) {
  if (!value || !deriv) {
    throw std::invalid_argument("Nonlinearity::custom: value and deriv required");
  }
  if (!second) {
    Fn d = deriv;
    second = [d](double y) {
      const double step = 1e-5 * (1.0 + std::abs(y));
      return (d(y + step) - d(y - step)) / (2.0 * step);
    };
  }
  return Nonlinearity(std::move(value), std::move(deriv), std::move(second));
}

Eigen::VectorXd Nonlinearity::value(const Eigen::VectorXd& y) const {
  Eigen::VectorXd out(y.size());
  for (Eigen::Index k = 0; k < y.size(); ++k) out[k] = value_(y[k]);
  return out;
}

Eigen::VectorXd Nonlinearity::deriv(const Eigen::VectorXd& y) const {
  Eigen::VectorXd out(y.size());
  for (Eigen::Index k = 0; k < y.size(); ++k) out[k] = deriv_(y[k]);
  return out;
}

Eigen::VectorXd Nonlinearity::second(const Eigen::VectorXd& y) const {
  Eigen::VectorXd out(y.size());
  for (Eigen::Index k = 0; k < y.size(); ++k) out[k] = second_(y[k]);
  return out;
}

ProblemData example71_data(const Grid& grid) {
  ProblemData data;
  data.f = FieldVector::sample(grid, [](double x1, double x2) {
    if (x1 <= 0.5) {
      const double d = x1 - 0.5;
      return 200.0 * (2.0 * x1 * d * d - x2 * (1.0 - x2) * (6.0 * x1 - 2.0));
    }
    return 200.0 * (0.5 - x1);
  });
  data.psi = FieldVector::sample(grid, [](double x1, double x2) {
    const double d = x1 - 0.5;
    if (x1 <= 0.5) {
      return 200.0 * x1 * x2 * d * d * (1.0 - x2);
    }
    return 200.0 * (x1 - 1.0) * x2 * d * d * (1.0 - x2);
  });
  data.z_d = FieldVector::constant(grid, 1.0);
  data.v_d = FieldVector::constant(grid, 0.0);
  data.nu = 0.1;
  data.g = Nonlinearity::cubic();
  // z_d = 1 and v_d = 0 on the 4n boundary nodes of the lattice.
  data.boundary_tracking_cost = 0.5 * 4.0 * grid.n;
  return data;
}

double weight_factor(const Grid& grid, WeightingMode mode) {
  return mode == WeightingMode::CellWeighted ? grid.h * grid.h : 1.0;
}

double inner(const FieldVector& u, const FieldVector& w, WeightingMode mode) {
  require_same_grid(u, w);
  return weight_factor(u.grid(), mode) * u.values().dot(w.values());
}

double norm_sq(const FieldVector& u, WeightingMode mode) {
  return weight_factor(u.grid(), mode) * u.values().squaredNorm();
}

} // namespace obsopt
