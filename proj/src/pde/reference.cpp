#include "msm/pde/reference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "msm/errors.hpp"
#include "msm/io.hpp"

namespace msm::pde {

double LatticeField1D::interpolate(double x, double t) const {
  auto locate = [](const std::vector<double>& g, double v) {
    if (v < g.front() - 1e-12 || v > g.back() + 1e-12) {
      throw ContractError("interpolation point outside the lattice");
    }
    const auto it = std::upper_bound(g.begin(), g.end(), v);
    std::size_t i = it == g.begin() ? 0 : static_cast<std::size_t>(it - g.begin()) - 1;
    i = std::min(i, g.size() - 2);
    const double w = std::clamp((v - g[i]) / (g[i + 1] - g[i]), 0.0, 1.0);
    return std::pair{i, w};
  };
  const auto [i, wx] = locate(xs, x);
  const auto [k, wt] = locate(ts, t);
  const double a = (1 - wx) * at(i, k) + wx * at(i + 1, k);
  const double b = (1 - wx) * at(i, k + 1) + wx * at(i + 1, k + 1);
  return (1 - wt) * a + wt * b;
}

std::string LatticeField1D::to_csv() const {
  std::ostringstream out;
  out << "x,t,u\n";
  for (std::size_t k = 0; k < ts.size(); ++k) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      out << io::format_double(xs[i]) << ',' << io::format_double(ts[k]) << ','
          << io::format_double(at(i, k)) << '\n';
    }
  }
  return out.str();
}

namespace {

/// Solves the tridiagonal system (sub, diag, sup) y = rhs in place into rhs.
void thomas(const std::vector<double>& sub, std::vector<double> diag, const std::vector<double>& sup,
            std::vector<double>& rhs) {
  const std::size_t n = diag.size();
  for (std::size_t i = 1; i < n; ++i) {
    const double m = sub[i] / diag[i - 1];
    diag[i] -= m * sup[i - 1];
    rhs[i] -= m * rhs[i - 1];
  }
  rhs[n - 1] /= diag[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / diag[i];
}

}  // namespace

LatticeField1D solve_allen_cahn_reference(const AllenCahnSolverOptions& o) {
  if (o.intervals < 2 || !(o.dt > 0.0) || o.out_x < 2 || o.out_t < 2) {
    throw ConfigError("invalid reference solver options");
  }
  if (o.intervals % (o.out_x - 1) != 0) {
    throw ConfigError("lattice x nodes must coincide with solver nodes");
  }
  const long steps = std::lround(o.horizon / o.dt);
  if (std::abs(steps * o.dt - o.horizon) > 1e-9 || steps % (o.out_t - 1) != 0) {
    throw ConfigError("lattice t nodes must coincide with solver steps");
  }
  const int n = o.intervals;
  const double h = 2.0 / n;
  const double lam = o.alpha * o.dt / (h * h);
  const int m = n - 1;  // interior unknowns

  std::vector<double> u(n + 1);
  for (int i = 0; i <= n; ++i) {
    const double x = -1.0 + i * h;
    u[i] = x * x * std::cos(std::numbers::pi * x);
  }
  u.front() = u.back() = -1.0;

  LatticeField1D out;
  const int xstride = n / (o.out_x - 1);
  const long tstride = steps / (o.out_t - 1);
  for (int i = 0; i < o.out_x; ++i) out.xs.push_back(-1.0 + i * xstride * h);
  for (int k = 0; k < o.out_t; ++k) out.ts.push_back(o.horizon * k / (o.out_t - 1));
  out.values.reserve(static_cast<std::size_t>(o.out_x) * o.out_t);
  auto record = [&] {
    for (int i = 0; i < o.out_x; ++i) out.values.push_back(u[i * xstride]);
  };
  record();

  auto reaction = [&](double v) { return o.beta * (v * v * v - v); };
  std::vector<double> explicit_part(m), resid(m), sub(m), diag(m), sup(m);
  for (long s = 1; s <= steps; ++s) {
    // u^{n+1} - (lam/2) D2 u^{n+1} + (dt/2) g(u^{n+1}) = u^n + (lam/2) D2 u^n - (dt/2) g(u^n)
    for (int i = 1; i < n; ++i) {
      explicit_part[i - 1] = u[i] + 0.5 * lam * (u[i - 1] - 2 * u[i] + u[i + 1]) -
                             0.5 * o.dt * reaction(u[i]);
    }
    std::vector<double> v = u;
    for (int it = 0; it < 50; ++it) {
      double norm = 0.0;
      for (int i = 1; i < n; ++i) {
        const double r = v[i] - 0.5 * lam * (v[i - 1] - 2 * v[i] + v[i + 1]) +
                         0.5 * o.dt * reaction(v[i]) - explicit_part[i - 1];
        resid[i - 1] = -r;
        diag[i - 1] = 1.0 + lam + 0.5 * o.dt * o.beta * (3 * v[i] * v[i] - 1.0);
        sub[i - 1] = -0.5 * lam;
        sup[i - 1] = -0.5 * lam;
        norm = std::max(norm, std::abs(r));
      }
      if (norm < o.newton_tol) break;
      thomas(sub, diag, sup, resid);
      double step = 0.0;
      for (int i = 1; i < n; ++i) {
        v[i] += resid[i - 1];
        step = std::max(step, std::abs(resid[i - 1]));
      }
      if (step < 1e-15) break;
      if (it == 49) throw NumericError("reference Newton iteration did not converge");
    }
    u.swap(v);
    if (s % tstride == 0) record();
  }
  return out;
}

}  // namespace msm::pde
