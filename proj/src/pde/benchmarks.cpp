#include "msm/pde/benchmarks.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "msm/errors.hpp"

namespace msm::pde {
namespace {

using ad::HyperDual;

/// Evaluates f over z = (x_1..x_d, t) with e1 seeded on coordinate p and e2 on q.
template <class F>
HyperDual seeded(const F& f, std::span<const double> z, int p, int q) {
  std::array<HyperDual, kMaxSpatialDim + 1> h;
  for (std::size_t i = 0; i < z.size(); ++i) h[i] = HyperDual(z[i]);
  h[p].e1 = 1.0;
  h[q].e2 = 1.0;
  return f(std::span<const HyperDual>(h.data(), z.size()));
}

/// Shared plumbing: routes every virtual through the derived class's templates.
///
/// Derived provides `residual_t<T>(u, x, t)`, `u0_t<T>(x)` and, when kHasExact,
/// `exact_t<T>(x, t)`.
template <class D>
class Benchmark : public PdeProblem {
 public:
  using PdeProblem::PdeProblem;

  double residual(const FieldJet<double>& u, std::span<const double> x, double t) const override {
    return self().template residual_t<double>(u, x, t);
  }
  ad::Var residual(const FieldJet<ad::Var>& u, std::span<const ad::Var> x,
                   const ad::Var& t) const override {
    return self().template residual_t<ad::Var>(u, x, t);
  }

  double initial_value(std::span<const double> x) const override {
    return self().template u0_t<double>(x);
  }

  double initial_gradient_sq(std::span<const double> x) const override {
    const auto f = [this](std::span<const HyperDual> z) { return self().template u0_t<HyperDual>(z); };
    double sum = 0.0;
    for (int i = 0; i < spatial_dim(); ++i) {
      const double g = seeded(f, x, i, i).e1;
      sum += g * g;
    }
    return sum;
  }

  double boundary_value(std::span<const double> x, double t) const override {
    if constexpr (D::kHasExact) {
      return exact(x, t);
    } else {
      return self().boundary_t(x, t);
    }
  }

  bool has_exact() const override { return D::kHasExact; }

  double exact(std::span<const double> x, double t) const override {
    if constexpr (D::kHasExact) {
      return self().template exact_t<double>(x, t);
    } else {
      return PdeProblem::exact(x, t);
    }
  }

  FieldJet<double> exact_jet(std::span<const double> x, double t) const override {
    if constexpr (D::kHasExact) {
      const int d = spatial_dim();
      std::array<double, kMaxSpatialDim + 1> z{};
      for (int i = 0; i < d; ++i) z[i] = x[i];
      z[d] = t;
      const std::span<const double> zs(z.data(), d + 1);
      const auto f = [this, d](std::span<const HyperDual> h) {
        return self().template exact_t<HyperDual>(h.first(d), h[d]);
      };
      FieldJet<double> j;
      j.dim = d;
      j.value = exact(x, t);
      for (int i = 0; i < d; ++i) {
        const HyperDual r = seeded(f, zs, i, i);
        j.dx[i] = r.e1;
        j.dxx[i] = r.e12;
      }
      j.dt = seeded(f, zs, d, d).e1;
      return j;
    } else {
      return PdeProblem::exact_jet(x, t);
    }
  }

  ad::InputJet exact_input_jet(std::span<const double> x, double t) const override {
    if constexpr (D::kHasExact) {
      const int d = spatial_dim();
      const int n = d + 1;
      std::array<double, kMaxSpatialDim + 1> z{};
      for (int i = 0; i < d; ++i) z[i] = x[i];
      z[d] = t;
      const std::span<const double> zs(z.data(), n);
      const auto f = [this, d](std::span<const HyperDual> h) {
        return self().template exact_t<HyperDual>(h.first(d), h[d]);
      };
      ad::InputJet j;
      j.value = exact(x, t);
      j.grad.resize(n);
      j.hess.resize(n, n);
      for (int p = 0; p < n; ++p) {
        for (int q = p; q < n; ++q) {
          const HyperDual r = seeded(f, zs, p, q);
          if (p == q) j.grad[p] = r.e1;
          j.hess(p, q) = r.e12;
          j.hess(q, p) = r.e12;
        }
      }
      return j;
    } else {
      return PdeProblem::exact_input_jet(x, t);
    }
  }

 private:
  const D& self() const { return static_cast<const D&>(*this); }
};

class AllenCahnProblem final : public Benchmark<AllenCahnProblem> {
 public:
  static constexpr bool kHasExact = false;

  AllenCahnProblem()
      : Benchmark("allen_cahn", Box::cube(1, -1.0, 1.0), 1.0, {{"alpha", 0.001}, {"beta", 5.0}},
                  2),
        alpha_(0.001),
        beta_(5.0) {}

  template <class T>
  T residual_t(const FieldJet<T>& u, std::span<const T>, const T&) const {
    return residual_allen_cahn(u, alpha_, beta_);
  }

  template <class T>
  T u0_t(std::span<const T> x) const {
    using std::cos;
    return x[0] * x[0] * cos(std::numbers::pi * x[0]);
  }

  double boundary_t(std::span<const double>, double) const { return -1.0; }

  bool has_hard_constraint() const override { return true; }

  FieldJet<double> constrain(const FieldJet<double>& raw, std::span<const double> x,
                             double t) const override {
    return constrain_t<double>(raw, x[0], t);
  }
  FieldJet<ad::Var> constrain(const FieldJet<ad::Var>& raw, std::span<const ad::Var> x,
                              const ad::Var& t) const override {
    return constrain_t<ad::Var>(raw, x[0], t);
  }

  InitialStrategy default_initial_strategy() const override { return InitialStrategy::uniform; }
  SetMode default_set_mode() const override { return SetMode::joint_spacetime; }

 private:
  template <class T>
  FieldJet<T> constrain_t(const FieldJet<T>& y, const T& x, const T& t) const {
    using std::cos;
    using std::sin;
    constexpr double pi = std::numbers::pi;
    const T c = cos(pi * x);
    const T s = sin(pi * x);
    const T u0 = x * x * c;
    const T u0_x = 2.0 * x * c - pi * x * x * s;
    const T u0_xx = 2.0 * c - 4.0 * pi * x * s - pi * pi * x * x * c;
    const T g = t * (x * x - 1.0);
    const T g_x = 2.0 * t * x;
    const T g_t = x * x - 1.0;
    const T g_xx = 2.0 * t;
    FieldJet<T> u;
    u.dim = 1;
    u.value = g * y.value + u0;
    u.dt = g_t * y.value + g * y.dt;
    u.dx[0] = g_x * y.value + g * y.dx[0] + u0_x;
    u.dxx[0] = g_xx * y.value + 2.0 * g_x * y.dx[0] + g * y.dxx[0] + u0_xx;
    return u;
  }

  double alpha_;
  double beta_;
};

class RotationProblem final : public Benchmark<RotationProblem> {
 public:
  static constexpr bool kHasExact = true;

  RotationProblem()
      : Benchmark("rotation", Box::cube(2, -0.2, 1.2), 1.0, {{"alpha", 0.01}}, 1), alpha_(0.01) {}

  template <class T>
  T residual_t(const FieldJet<T>& u, std::span<const T>, const T& t) const {
    return residual_rotation(u, t);
  }

  template <class T>
  T exact_t(std::span<const T> x, const T& t) const {
    using std::cos;
    using std::exp;
    using std::sin;
    const T dx = x[0] - cos(t);
    const T dy = x[1] - sin(t);
    return exp(-(dx * dx + dy * dy) / alpha_);
  }

  template <class T>
  T u0_t(std::span<const T> x) const {
    return exact_t<T>(x, T(0.0));
  }

  InitialStrategy default_initial_strategy() const override { return InitialStrategy::prop_u0; }

  std::optional<double> feature_distance(std::span<const double> x, double t) const override {
    return std::hypot(x[0] - std::cos(t), x[1] - std::sin(t));
  }

 private:
  double alpha_;
};

class BurgersProblem final : public Benchmark<BurgersProblem> {
 public:
  static constexpr bool kHasExact = true;

  BurgersProblem()
      : Benchmark("burgers", Box::cube(2, -1.0, 1.0), 1.0, {{"alpha", 0.001}}, 2), alpha_(0.001) {}

  template <class T>
  T residual_t(const FieldJet<T>& u, std::span<const T>, const T&) const {
    return residual_burgers(u, alpha_);
  }

  /// 1 / (1 + e^s) written as (1 - tanh(s/2)) / 2 so it stays finite for large |s|.
  template <class T>
  T exact_t(std::span<const T> x, const T& t) const {
    using std::tanh;
    const T s = (x[0] + x[1] - t) / (2.0 * alpha_);
    return 0.5 * (1.0 - tanh(0.5 * s));
  }

  template <class T>
  T u0_t(std::span<const T> x) const {
    return exact_t<T>(x, T(0.0));
  }

  InitialStrategy default_initial_strategy() const override {
    return InitialStrategy::prop_grad_u0_sq;
  }

  std::optional<double> feature_distance(std::span<const double> x, double t) const override {
    return std::abs(x[0] + x[1] - t) / std::numbers::sqrt2;
  }

 private:
  double alpha_;
};

class FokkerPlanckProblem final : public Benchmark<FokkerPlanckProblem> {
 public:
  static constexpr bool kHasExact = true;

  explicit FokkerPlanckProblem(const FokkerPlanckAux& aux)
      : Benchmark("fokker_planck", Box::cube(2, 0.2, 1.8), 1.0,
                  {{"sigma", aux.sigma},
                   {"ring_radius", aux.ring_radius},
                   {"D", aux.diffusion()},
                   {"K", aux.normalizer}},
                  2),
        aux_(aux) {}

  template <class T>
  T residual_t(const FieldJet<T>& u, std::span<const T> x, const T& t) const {
    return residual_fokker_planck(u, x, t, aux_);
  }

  template <class T>
  T exact_t(std::span<const T> x, const T& t) const {
    using std::exp;
    const T c = exp(-t);
    const T dx = x[0] - c;
    const T dy = x[1] - c;
    const double r2 = aux_.ring_radius * aux_.ring_radius;
    const T g = dx * dx + dy * dy - r2;
    return exp(-(2.0 / (aux_.sigma * aux_.sigma)) * g * g) / aux_.normalizer;
  }

  template <class T>
  T u0_t(std::span<const T> x) const {
    return exact_t<T>(x, T(0.0));
  }

  InitialStrategy default_initial_strategy() const override { return InitialStrategy::prop_u0; }

  std::optional<double> feature_distance(std::span<const double> x, double t) const override {
    const double c = std::exp(-t);
    return std::abs(std::hypot(x[0] - c, x[1] - c) - aux_.ring_radius);
  }

 private:
  FokkerPlanckAux aux_;
};

class AdvectionProblem final : public Benchmark<AdvectionProblem> {
 public:
  static constexpr bool kHasExact = true;

  explicit AdvectionProblem(int dim)
      : Benchmark("advection6d", Box::cube(dim, -0.2, 1.2), 1.0, {{"alpha", 0.01}}, 1),
        alpha_(0.01) {}

  template <class T>
  T residual_t(const FieldJet<T>& u, std::span<const T>, const T&) const {
    return residual_advection(u);
  }

  template <class T>
  T exact_t(std::span<const T> x, const T& t) const {
    using std::exp;
    T sum = (x[0] - t) * (x[0] - t);
    for (std::size_t i = 1; i < x.size(); ++i) sum = sum + (x[i] - t) * (x[i] - t);
    return exp(-sum / alpha_);
  }

  template <class T>
  T u0_t(std::span<const T> x) const {
    return exact_t<T>(x, T(0.0));
  }

  std::optional<std::vector<std::function<double(double)>>> initial_factors() const override {
    const double a = alpha_;
    return std::vector<std::function<double(double)>>(
        spatial_dim(), [a](double v) { return std::exp(-v * v / a); });
  }

  InitialStrategy default_initial_strategy() const override { return InitialStrategy::prop_u0; }
  bool stratified_boundary() const override { return true; }

  std::optional<double> feature_distance(std::span<const double> x, double t) const override {
    double s = 0.0;
    for (double v : x) s += (v - t) * (v - t);
    return std::sqrt(s);
  }

 private:
  double alpha_;
};

}  // namespace

double fokker_planck_normalizer(double sigma, double ring_radius, const Box& box, int n_grid) {
  if (box.dim() != 2) throw ConfigError("normalizer box must be two-dimensional");
  if (n_grid < 2) throw ConfigError("normalizer grid needs at least two nodes per axis");
  const double hx = box.extent(0) / (n_grid - 1);
  const double hy = box.extent(1) / (n_grid - 1);
  const double a = 2.0 / (sigma * sigma);
  const double r2 = ring_radius * ring_radius;
  std::vector<double> wx(n_grid, 1.0);
  wx.front() = wx.back() = 0.5;
  double total = 0.0;
  for (int i = 0; i < n_grid; ++i) {
    const double x = box.lo[0] + i * hx;
    const double dx2 = (x - 1.0) * (x - 1.0);
    double row = 0.0;
    for (int j = 0; j < n_grid; ++j) {
      const double y = box.lo[1] + j * hy;
      const double g = dx2 + (y - 1.0) * (y - 1.0) - r2;
      row += wx[j] * std::exp(-a * g * g);
    }
    total += wx[i] * row;
  }
  return total * hx * hy;
}

ad::InputJet hard_constraint_allen_cahn(const ad::InputJet& raw, double x, double t,
                                        const ad::InputJet& u0_jet) {
  if (raw.grad.size() != 2 || u0_jet.grad.size() != 2) {
    throw ContractError("Allen-Cahn constraint expects jets over (x, t)");
  }
  // g = t (x^2 - 1)
  const double g = t * (x * x - 1.0);
  Eigen::Vector2d gg(2.0 * t * x, x * x - 1.0);
  Eigen::Matrix2d gh;
  gh << 2.0 * t, 2.0 * x, 2.0 * x, 0.0;

  ad::InputJet u;
  u.value = g * raw.value + u0_jet.value;
  u.grad = gg * raw.value + g * raw.grad + u0_jet.grad;
  u.hess = gh * raw.value + gg * raw.grad.transpose() + raw.grad * gg.transpose() + g * raw.hess +
           u0_jet.hess;
  return u;
}

std::vector<std::string> problem_names() {
  return {"allen_cahn", "rotation", "burgers", "fokker_planck", "advection6d"};
}

std::unique_ptr<PdeProblem> make_problem(const std::string& name) {
  if (name == "allen_cahn") return std::make_unique<AllenCahnProblem>();
  if (name == "rotation") return std::make_unique<RotationProblem>();
  if (name == "burgers") return std::make_unique<BurgersProblem>();
  if (name == "fokker_planck") {
    static const double k = fokker_planck_normalizer(0.1, 0.5, Box::cube(2, -1.0, 3.0), 2001);
    FokkerPlanckAux aux;
    aux.normalizer = k;
    return std::make_unique<FokkerPlanckProblem>(aux);
  }
  if (name == "advection6d") return std::make_unique<AdvectionProblem>(6);
  throw ConfigError("unknown problem '" + name + "'");
}

}  // namespace msm::pde
