#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <functional>
#include <stdexcept>
#include <string>

namespace obsopt {

/// Uniform finite-difference mesh on the unit square ]0,1[^2 with
/// homogeneous Dirichlet boundary. Unknowns live at the (n-1)^2 interior
/// nodes; boundary values are eliminated (identically zero).
struct Grid {
  int n = 0;              // subdivisions per side
  double h = 0.0;         // mesh width, h = 1/n
  int interior_count = 0; // (n-1)^2

  int per_side() const { return n - 1; }

  /// Flat index of interior node (i, j), i.e. x = (i*h, j*h) with
  /// 1 <= i, j <= n-1. Row-major in j.
  int index(int i, int j) const { return (j - 1) * (n - 1) + (i - 1); }

  double x1(int i) const { return i * h; }
  double x2(int j) const { return j * h; }

  bool operator==(const Grid& other) const { return n == other.n; }
};

/// Builds the mesh for a given subdivision count. Rejects n < 2 (no
/// interior node otherwise).
Grid build_grid(int n);

/// A real-valued grid function over the interior nodes of a Grid.
/// Boundary values are implicitly zero.
class FieldVector {
public:
  FieldVector() = default;
  explicit FieldVector(const Grid& grid)
      : grid_(grid), values_(Eigen::VectorXd::Zero(grid.interior_count)) {}
  FieldVector(const Grid& grid, Eigen::VectorXd values);

  static FieldVector constant(const Grid& grid, double value);
  /// Samples a function of the coordinates at every interior node.
  static FieldVector sample(const Grid& grid,
                            const std::function<double(double, double)>& fn);

  const Grid& grid() const { return grid_; }
  int size() const { return static_cast<int>(values_.size()); }

  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }

  double& operator[](int k) { return values_[k]; }
  double operator[](int k) const { return values_[k]; }

  /// Throws if any entry is NaN or infinite.
  void require_finite(const std::string& what) const;

private:
  Grid grid_;
  Eigen::VectorXd values_;
};

/// Throws std::invalid_argument unless both fields live on the same grid.
void require_same_grid(const FieldVector& a, const FieldVector& b);

/// Sparse symmetric operator acting on interior-node fields.
class SparseOperator {
public:
  SparseOperator() = default;
  explicit SparseOperator(Eigen::SparseMatrix<double> m) : mat_(std::move(m)) {}

  int dim() const { return static_cast<int>(mat_.rows()); }
  const Eigen::SparseMatrix<double>& matrix() const { return mat_; }

  FieldVector apply(const FieldVector& u) const;

private:
  Eigen::SparseMatrix<double> mat_;
};

/// Assembles the 5-point stencil of -Laplace with Dirichlet boundary
/// eliminated: diagonal 4/h^2, off-diagonal -1/h^2 toward interior
/// neighbors. Symmetric positive definite.
SparseOperator assemble_laplacian(const Grid& grid);

/// Semilinear reaction term g(y) with derivatives. g must be nondecreasing
/// so the state problems stay monotone.
class Nonlinearity {
public:
  using Fn = std::function<double(double)>;

  static Nonlinearity cubic();           // g(y) = y^3
  static Nonlinearity linear(double c0); // g(y) = c0*y, c0 >= 0
  /// Custom monotone C^1 nonlinearity. If no second derivative is given it
  /// is approximated by central differences of `deriv`.
  static Nonlinearity custom(Fn value, Fn deriv, Fn second = nullptr);

  double value(double y) const { return value_(y); }
  double deriv(double y) const { return deriv_(y); }
  double second(double y) const { return second_(y); }

  Eigen::VectorXd value(const Eigen::VectorXd& y) const;
  Eigen::VectorXd deriv(const Eigen::VectorXd& y) const;
  Eigen::VectorXd second(const Eigen::VectorXd& y) const;

private:
  Nonlinearity(Fn v, Fn d, Fn s)
      : value_(std::move(v)), deriv_(std::move(d)), second_(std::move(s)) {}
  Fn value_, deriv_, second_;
};

/// Problem data for the control problem: source f, obstacle psi, tracking
/// target z_d, control shift v_d, control weight nu and the nonlinearity.
///
/// `boundary_tracking_cost` is the tracking-term mass sitting on the
/// Dirichlet boundary ring, sum over boundary nodes of
/// 1/2*z_d^2 + nu/2*v_d^2 (y and v vanish there). It is a constant, so it
/// never affects optimization; benchmark reports add it because the
/// reference tables count the full lattice.
struct ProblemData {
  FieldVector f;
  FieldVector psi;
  FieldVector z_d;
  FieldVector v_d;
  double nu = 0.1;
  Nonlinearity g = Nonlinearity::cubic();
  double boundary_tracking_cost = 0.0;
};

/// The benchmark data set: nu = 0.1, z_d = 1, v_d = 0, g(y) = y^3, with the
/// piecewise-polynomial source and obstacle
///   f(x)   = 200*(2*x1*(x1-0.5)^2 - x2*(1-x2)*(6*x1-2))   for x1 <= 0.5,
///            200*(0.5-x1)                                  otherwise,
///   psi(x) = 200*x1*x2*(x1-0.5)^2*(1-x2)                   for x1 <= 0.5,
///            200*(x1-1)*x2*(x1-0.5)^2*(1-x2)               otherwise.
/// On the left half f = -Laplace(psi), so the obstacle is active there at
/// zero control.
ProblemData example71_data(const Grid& grid);

enum class WeightingMode {
  NodeSum,      // sum_i u_i w_i
  CellWeighted, // h^2 * sum_i u_i w_i
};

/// Discrete inner product in the selected weighting. Throws on grid
/// mismatch.
double inner(const FieldVector& u, const FieldVector& w, WeightingMode mode);

/// Squared norm / norm induced by `inner`.
double norm_sq(const FieldVector& u, WeightingMode mode);

/// Quadrature weight of the mode: 1 for node sums, h^2 for cell weighting.
double weight_factor(const Grid& grid, WeightingMode mode);

} // namespace obsopt
