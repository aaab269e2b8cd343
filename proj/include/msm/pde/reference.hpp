#pragma once

#include <string>
#include <vector>

namespace msm::pde {

/// Values of u on a tensor lattice over one space axis and time, u(x_i, t_k) at
/// values[k * xs.size() + i].
struct LatticeField1D {
  std::vector<double> xs;
  std::vector<double> ts;
  std::vector<double> values;

  double at(std::size_t i, std::size_t k) const { return values[k * xs.size() + i]; }
  /// Bilinear interpolation; (x, t) must lie inside the lattice.
  double interpolate(double x, double t) const;
  /// Columns x, t, u with a header row.
  std::string to_csv() const;
};

struct AllenCahnSolverOptions {
  double alpha = 0.001;
  double beta = 5.0;
  int intervals = 1024;    // spatial intervals on [-1, 1]
  double dt = 1e-4;
  double horizon = 1.0;
  int out_x = 257;         // lattice nodes in x
  int out_t = 101;         // lattice nodes in t
  double newton_tol = 1e-13;
};

/// Reference Allen-Cahn solution with u0 = x^2 cos(pi x) and u(+-1, t) = -1:
/// Crank-Nicolson in time, second-order differences in space, Newton on the cubic
/// term with a tridiagonal solve per iteration. Lattice nodes must coincide with
/// solver nodes and steps.
LatticeField1D solve_allen_cahn_reference(const AllenCahnSolverOptions& options = {});

}  // namespace msm::pde
