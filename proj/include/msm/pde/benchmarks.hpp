#pragma once

#include <cmath>
#include <span>

#include "msm/autodiff/hyperdual.hpp"
#include "msm/pde/problem.hpp"

namespace msm::pde {

// Residual operators. Each reads only the FieldJet entries named in its formula;
// coordinates are templated so exact-mode snapshots can differentiate through them.

/// u_t - alpha u_xx + beta (u^3 - u)
template <class T>
T residual_allen_cahn(const FieldJet<T>& u, double alpha, double beta) {
  return u.dt - alpha * u.dxx[0] + beta * (u.value * u.value * u.value - u.value);
}

/// u_t - u_x sin t + u_y cos t
template <class T>
T residual_rotation(const FieldJet<T>& u, const T& t) {
  using std::cos;
  using std::sin;
  return u.dt - u.dx[0] * sin(t) + u.dx[1] * cos(t);
}

/// u_t - alpha (u_xx + u_yy) + u (u_x + u_y)
template <class T>
T residual_burgers(const FieldJet<T>& u, double alpha) {
  return u.dt - alpha * (u.dxx[0] + u.dxx[1]) + u.value * (u.dx[0] + u.dx[1]);
}

/// u_t + sum_i u_{x_i}
template <class T>
T residual_advection(const FieldJet<T>& u) {
  T r = u.dt;
  for (int i = 0; i < u.dim; ++i) r = r + u.dx[i];
  return r;
}

/// Drift, its divergence and the diffusion constant of the ring-potential SDE.
struct FokkerPlanckAux {
  double sigma = 0.1;
  double ring_radius = 0.5;
  double normalizer = 1.0;  // K

  double diffusion() const { return 0.5 * sigma * sigma; }

  /// f_i = -4 (x_i - e^{-t}) (|x - c|^2 - r^2) - e^{-t}, c = (e^{-t}, e^{-t})
  template <class T>
  void drift(std::span<const T> x, const T& t, T& fx, T& fy) const {
    using std::exp;
    const T c = exp(-t);
    const T dx = x[0] - c;
    const T dy = x[1] - c;
    const T g = dx * dx + dy * dy - ring_radius * ring_radius;
    fx = -4.0 * dx * g - c;
    fy = -4.0 * dy * g - c;
  }

  /// div f = 8 r^2 - 16 |x - c|^2
  template <class T>
  T drift_divergence(std::span<const T> x, const T& t) const {
    using std::exp;
    const T c = exp(-t);
    const T dx = x[0] - c;
    const T dy = x[1] - c;
    return 8.0 * ring_radius * ring_radius - 16.0 * (dx * dx + dy * dy);
  }
};

/// u_t + (div f) u + f . grad u - D lap u
template <class T>
T residual_fokker_planck(const FieldJet<T>& u, std::span<const T> x, const T& t,
                         const FokkerPlanckAux& aux) {
  T fx, fy;
  aux.drift(x, t, fx, fy);
  return u.dt + aux.drift_divergence(x, t) * u.value + fx * u.dx[0] + fy * u.dx[1] -
         aux.diffusion() * (u.dxx[0] + u.dxx[1]);
}

/// K = integral of exp(-(2/sigma^2)((x-1)^2 + (y-1)^2 - r^2)^2) over `box`,
/// composite trapezoid rule with `n_grid` nodes per axis.
double fokker_planck_normalizer(double sigma, double ring_radius, const Box& box, int n_grid);

/// u = t (x^2 - 1) y + u0 with full value/gradient/Hessian via the product rule.
/// `raw` is the jet of the network output y over (x, t); `u0_jet` the jet of u0 over (x, t).
ad::InputJet hard_constraint_allen_cahn(const ad::InputJet& raw, double x, double t,
                                        const ad::InputJet& u0_jet);

}  // namespace msm::pde
