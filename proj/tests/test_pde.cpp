#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "msm/errors.hpp"
#include "msm/pde/benchmarks.hpp"
#include "msm/pde/problem.hpp"
#include "msm/pde/reference.hpp"
#include "msm/sampling/rng.hpp"
#include "support.hpp"

using namespace msm;
using pde::FieldJet;

namespace {

FieldJet<double> jet(int dim) {
  FieldJet<double> j;
  j.dim = dim;
  return j;
}

std::vector<double> random_point(sampling::Rng& rng, const pde::Box& box, double margin = 0.0) {
  std::vector<double> x(box.dim());
  for (int i = 0; i < box.dim(); ++i) {
    x[i] = rng.uniform(box.lo[i] + margin * box.extent(i), box.hi[i] - margin * box.extent(i));
  }
  return x;
}

/// Value, first and diagonal second derivatives of the closed-form solution by
/// central differences with step h.
FieldJet<double> fd_exact_jet(const pde::PdeProblem& p, std::vector<double> x, double t, double h) {
  FieldJet<double> j = jet(p.spatial_dim());
  j.value = p.exact(x, t);
  j.dt = (p.exact(x, t + h) - p.exact(x, t - h)) / (2 * h);
  for (int i = 0; i < p.spatial_dim(); ++i) {
    std::vector<double> xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double up = p.exact(xp, t), um = p.exact(xm, t);
    j.dx[i] = (up - um) / (2 * h);
    j.dxx[i] = (up - 2 * j.value + um) / (h * h);
  }
  return j;
}

}  // namespace

TEST_CASE("registry") {
  const auto names = pde::problem_names();
  CHECK(names.size() == 5);
  for (const auto& n : names) {
    const auto p = pde::make_problem(n);
    CHECK(p->name() == n);
    CHECK(p->horizon() > 0.0);
    for (int i = 0; i < p->spatial_dim(); ++i) CHECK(p->domain().lo[i] < p->domain().hi[i]);
  }
  CHECK_THROWS_AS(pde::make_problem("heat"), ConfigError);
  CHECK(pde::make_problem("advection6d")->spatial_dim() == 6);
  CHECK(pde::make_problem("allen_cahn")->has_hard_constraint());
  CHECK_FALSE(pde::make_problem("allen_cahn")->has_exact());
}

TEST_CASE("allen-cahn residual hand values") {
  auto u = jet(1);
  // u = x^2: u_t = 0, u_xx = 2.
  u.value = 1.0;
  u.dxx[0] = 2.0;
  CHECK(pde::residual_allen_cahn(u, 0.001, 5.0) == doctest::Approx(-0.002).epsilon(1e-14));
  u.value = 0.25;
  CHECK(pde::residual_allen_cahn(u, 0.001, 5.0) == doctest::Approx(-1.173875).epsilon(1e-14));
  const auto p = pde::make_problem("allen_cahn");
  const std::vector<double> x = {0.5};
  CHECK(p->residual(u, x, 0.3) == doctest::Approx(-1.173875).epsilon(1e-14));
  CHECK(p->residual(jet(1), x, 0.3) == 0.0);
}

TEST_CASE("rotation residual hand values") {
  const auto p = pde::make_problem("rotation");
  auto u = jet(2);
  u.dx[0] = 1.0;  // u = x
  const std::vector<double> x = {0.3, 0.4};
  CHECK(p->residual(u, x, 0.5) == doctest::Approx(-std::sin(0.5)).epsilon(1e-14));
  CHECK(p->residual(u, x, 0.5) == doctest::Approx(-0.47943).epsilon(1e-5));
  auto c = jet(2);
  c.value = 3.7;
  CHECK(p->residual(c, x, 0.9) == 0.0);
}

TEST_CASE("burgers residual hand values") {
  const auto p = pde::make_problem("burgers");
  auto u = jet(2);
  u.value = 0.75;  // u = x + y at (0.5, 0.25)
  u.dx[0] = 1.0;
  u.dx[1] = 1.0;
  const std::vector<double> x = {0.5, 0.25};
  CHECK(p->residual(u, x, 0.1) == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(p->residual(jet(2), x, 0.1) == 0.0);
}

TEST_CASE("advection residual hand values") {
  const auto p = pde::make_problem("advection6d");
  auto u = jet(6);
  for (int i = 0; i < 6; ++i) u.dx[i] = 1.0;  // u = sum x_i
  u.value = 2.1;
  const std::vector<double> x = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  CHECK(p->residual(u, x, 0.2) == doctest::Approx(6.0).epsilon(1e-14));
  auto c = jet(6);
  c.value = -1.0;
  CHECK(p->residual(c, x, 0.2) == 0.0);
}

TEST_CASE("fokker-planck drift and divergence") {
  pde::FokkerPlanckAux aux;
  const std::vector<double> centre = {1.0, 1.0};
  double fx, fy;
  aux.drift<double>(centre, 0.0, fx, fy);
  CHECK(fx == doctest::Approx(-1.0));
  CHECK(fy == doctest::Approx(-1.0));
  CHECK(aux.drift_divergence<double>(centre, 0.0) == doctest::Approx(8 * 0.25));
  CHECK(pde::residual_fokker_planck<double>(jet(2), centre, 0.0, aux) == 0.0);

  sampling::Rng rng(5);
  const double h = 1e-5;
  for (int k = 0; k < 50; ++k) {
    const std::vector<double> x = {rng.uniform(0.2, 1.8), rng.uniform(0.2, 1.8)};
    const double t = rng.uniform(0.0, 1.0);
    double a, b, c, d;
    aux.drift<double>(std::vector<double>{x[0] + h, x[1]}, t, a, b);
    aux.drift<double>(std::vector<double>{x[0] - h, x[1]}, t, c, d);
    const double dfx = (a - c) / (2 * h);
    aux.drift<double>(std::vector<double>{x[0], x[1] + h}, t, a, b);
    aux.drift<double>(std::vector<double>{x[0], x[1] - h}, t, c, d);
    const double dfy = (b - d) / (2 * h);
    CHECK(test::near(aux.drift_divergence<double>(x, t), dfx + dfy, 1e-6, 1e-8));
  }
}

TEST_CASE("fokker-planck normalizer") {
  const pde::Box wide = pde::Box::cube(2, -1.0, 3.0);
  const double k = pde::fokker_planck_normalizer(0.1, 0.5, wide, 2001);
  // Polar integral about the ring centre: pi/2 sqrt(pi/a) (1 + erf(r^2 sqrt a)), a = 2/sigma^2.
  const double a = 2.0 / (0.1 * 0.1);
  const double closed = 0.5 * std::numbers::pi * std::sqrt(std::numbers::pi / a) *
                        (1.0 + std::erf(0.25 * std::sqrt(a)));
  CHECK(k > 0.0);
  CHECK(k == doctest::Approx(closed).epsilon(1e-10));
  CHECK(k == doctest::Approx(0.393740).epsilon(1e-5));
  const double k2 = pde::fokker_planck_normalizer(0.1, 0.5, wide, 4001);
  CHECK(std::abs(k2 - k) / k < 1e-8);
  const double tight = pde::fokker_planck_normalizer(0.1, 0.5, pde::Box::cube(2, 0.0, 2.0), 1001);
  CHECK(std::abs(tight - k) / k < 1e-10);
  CHECK(pde::fokker_planck_normalizer(1e6, 0.5, wide, 101) == doctest::Approx(16.0).epsilon(1e-9));
  const auto p = pde::make_problem("fokker_planck");
  CHECK(p->coefficient("K") == doctest::Approx(k).epsilon(1e-14));
  CHECK(p->coefficient("D") == doctest::Approx(0.005));
}

TEST_CASE("exact solutions annihilate their residuals") {
  sampling::Rng rng(17);
  for (const std::string name : {"rotation", "burgers", "fokker_planck", "advection6d"}) {
    CAPTURE(name);
    const auto p = pde::make_problem(name);
    REQUIRE(p->has_exact());
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const auto x = random_point(rng, p->domain(), 0.01);
      const double t = rng.uniform(0.0, p->horizon());
      worst = std::max(worst, std::abs(p->residual(p->exact_jet(x, t), x, t)));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("closed-form jets agree with a finite-difference oracle") {
  sampling::Rng rng(23);
  for (const std::string name : {"rotation", "burgers", "fokker_planck", "advection6d"}) {
    CAPTURE(name);
    const auto p = pde::make_problem(name);
    const double h = name == "burgers" ? 1e-5 : 1e-4;
    for (int k = 0; k < 20; ++k) {
      auto x = random_point(rng, p->domain(), 0.05);
      const double t = rng.uniform(0.1, 0.9);
      if (name == "burgers") {
        // Place the point near the front, where the derivatives are not negligible.
        const double s = rng.uniform(-0.004, 0.004);
        x[1] = t + s - x[0];
      }
      const auto a = p->exact_jet(x, t);
      const auto b = fd_exact_jet(*p, x, t, h);
      double scale = std::abs(a.dt);
      for (int i = 0; i < p->spatial_dim(); ++i) scale = std::max({scale, std::abs(a.dx[i])});
      double scale2 = 0.0;
      for (int i = 0; i < p->spatial_dim(); ++i) scale2 = std::max(scale2, std::abs(a.dxx[i]));
      CHECK(std::abs(a.dt - b.dt) <= 1e-4 * scale + 1e-9);
      for (int i = 0; i < p->spatial_dim(); ++i) {
        CHECK(std::abs(a.dx[i] - b.dx[i]) <= 1e-4 * scale + 1e-9);
        CHECK(std::abs(a.dxx[i] - b.dxx[i]) <= 1e-3 * scale2 + 1e-6);
      }
      if (name == "fokker_planck" || name == "rotation") {
        CHECK(std::abs(p->residual(b, x, t)) < 1e-3 * (1.0 + scale2));
      }
    }
  }
}

TEST_CASE("input jets of the closed forms are symmetric and consistent") {
  const auto p = pde::make_problem("rotation");
  const std::vector<double> x = {0.4, 0.7};
  const ad::InputJet j = p->exact_input_jet(x, 0.6);
  const auto f = p->exact_jet(x, 0.6);
  CHECK(j.value == f.value);
  CHECK(j.grad[0] == doctest::Approx(f.dx[0]));
  CHECK(j.grad[2] == doctest::Approx(f.dt));
  CHECK(j.hess(1, 1) == doctest::Approx(f.dxx[1]));
  CHECK((j.hess - j.hess.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("exact solutions meet their initial and boundary data") {
  sampling::Rng rng(31);
  for (const std::string name : {"rotation", "burgers", "fokker_planck", "advection6d"}) {
    CAPTURE(name);
    const auto p = pde::make_problem(name);
    const pde::Box& box = p->domain();
    for (int k = 0; k < 50; ++k) {
      auto x = random_point(rng, box);
      CHECK(std::abs(p->exact(x, 0.0) - p->initial_value(x)) <= 1e-12);
      const int axis = static_cast<int>(rng.below(box.dim()));
      x[axis] = rng.uniform() < 0.5 ? box.lo[axis] : box.hi[axis];
      const double t = rng.uniform(0.0, 1.0);
      CHECK(std::abs(p->exact(x, t) - p->boundary_value(x, t)) <= 1e-12);
    }
  }
}

TEST_CASE("closed-form landmarks") {
  const auto rot = pde::make_problem("rotation");
  const double t = 0.7;
  CHECK(rot->exact(std::vector<double>{std::cos(t), std::sin(t)}, t) == doctest::Approx(1.0));
  const auto bur = pde::make_problem("burgers");
  CHECK(bur->exact(std::vector<double>{0.3, 0.2}, 0.5) == doctest::Approx(0.5));
  const auto adv = pde::make_problem("advection6d");
  CHECK(adv->exact(std::vector<double>(6, 0.4), 0.4) == doctest::Approx(1.0));
}

TEST_CASE("initial densities") {
  const auto bur = pde::make_problem("burgers");
  const std::vector<double> x = {0.1, 0.2};
  const double h = 1e-6;
  const double gx = (bur->initial_value(std::vector<double>{x[0] + h, x[1]}) -
                     bur->initial_value(std::vector<double>{x[0] - h, x[1]})) / (2 * h);
  CHECK(bur->initial_gradient_sq(x) == doctest::Approx(2 * gx * gx).epsilon(1e-6));
  const auto adv = pde::make_problem("advection6d");
  const auto factors = adv->initial_factors();
  REQUIRE(factors.has_value());
  const std::vector<double> y = {0.1, 0.3, -0.1, 0.5, 0.0, 0.2};
  double prod = 1.0;
  for (int i = 0; i < 6; ++i) prod *= (*factors)[i](y[i]);
  CHECK(prod == doctest::Approx(adv->initial_value(y)).epsilon(1e-14));
}

TEST_CASE("residuals ignore jet entries they do not read") {
  const auto rot = pde::make_problem("rotation");
  const std::vector<double> x = {0.2, 0.1};
  auto u = jet(2);
  u.value = 0.3;
  u.dt = 0.2;
  u.dx = {0.5, -0.4};
  const double r = rot->residual(u, x, 0.4);
  auto v = u;
  v.value = 9.0;
  v.dxx = {3.0, 4.0};
  CHECK(rot->residual(v, x, 0.4) == r);

  const auto adv = pde::make_problem("advection6d");
  auto a = jet(6);
  a.dt = 0.1;
  a.dx = {1, 2, 3, 4, 5, 6};
  const std::vector<double> y(6, 0.3);
  const double ra = adv->residual(a, y, 0.2);
  a.value = 5.0;
  a.dxx = {1, 1, 1, 1, 1, 1};
  CHECK(adv->residual(a, y, 0.2) == ra);

  const auto ac = pde::make_problem("allen_cahn");
  auto c = jet(1);
  c.value = 0.4;
  c.dt = 0.1;
  c.dxx[0] = 2.0;
  const std::vector<double> z = {0.3};
  const double rc = ac->residual(c, z, 0.5);
  c.dx[0] = 7.0;
  CHECK(ac->residual(c, z, 0.5) == rc);
}

TEST_CASE("allen-cahn hard constraint") {
  const auto p = pde::make_problem("allen_cahn");
  sampling::Rng rng(41);
  for (int k = 0; k < 20; ++k) {
    auto raw = jet(1);
    raw.value = rng.uniform(-2, 2);
    raw.dt = rng.uniform(-2, 2);
    raw.dx[0] = rng.uniform(-2, 2);
    raw.dxx[0] = rng.uniform(-2, 2);
    const double x = rng.uniform(-1, 1);
    const std::vector<double> xv = {x};
    CHECK(p->constrain(raw, xv, 0.0).value == doctest::Approx(p->initial_value(xv)).epsilon(1e-15));
    const double t = rng.uniform(0, 1);
    CHECK(p->constrain(raw, std::vector<double>{1.0}, t).value == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(p->constrain(raw, std::vector<double>{-1.0}, t).value == doctest::Approx(-1.0).epsilon(1e-15));
  }
  auto one = jet(1);
  one.value = 1.0;
  CHECK(p->constrain(one, std::vector<double>{0.5}, 1.0).value == doctest::Approx(-0.75).epsilon(1e-14));

  // Product-rule jet vs central differences of u = t (x^2 - 1) y + x^2 cos(pi x) for y = sin(x + 2t).
  const auto y = [](double x, double t) { return std::sin(x + 2 * t); };
  const auto u = [&](double x, double t) {
    return t * (x * x - 1) * y(x, t) + x * x * std::cos(std::numbers::pi * x);
  };
  const double x = 0.3, t = 0.6;
  ad::InputJet rj;
  rj.value = y(x, t);
  rj.grad = Eigen::Vector2d(std::cos(x + 2 * t), 2 * std::cos(x + 2 * t));
  rj.hess.resize(2, 2);
  rj.hess << -std::sin(x + 2 * t), -2 * std::sin(x + 2 * t), -2 * std::sin(x + 2 * t),
      -4 * std::sin(x + 2 * t);
  ad::InputJet u0;
  const double pi = std::numbers::pi;
  u0.value = x * x * std::cos(pi * x);
  u0.grad = Eigen::Vector2d(2 * x * std::cos(pi * x) - pi * x * x * std::sin(pi * x), 0.0);
  u0.hess = Eigen::Matrix2d::Zero();
  u0.hess(0, 0) = 2 * std::cos(pi * x) - 4 * pi * x * std::sin(pi * x) -
                  pi * pi * x * x * std::cos(pi * x);
  const ad::InputJet out = pde::hard_constraint_allen_cahn(rj, x, t, u0);
  const double h = 1e-4;
  CHECK(out.value == doctest::Approx(u(x, t)).epsilon(1e-14));
  CHECK(out.grad[0] == doctest::Approx((u(x + h, t) - u(x - h, t)) / (2 * h)).epsilon(1e-7));
  CHECK(out.grad[1] == doctest::Approx((u(x, t + h) - u(x, t - h)) / (2 * h)).epsilon(1e-7));
  CHECK(out.hess(0, 0) ==
        doctest::Approx((u(x + h, t) - 2 * u(x, t) + u(x - h, t)) / (h * h)).epsilon(1e-5));
  CHECK(out.hess(0, 1) == doctest::Approx((u(x + h, t + h) - u(x + h, t - h) - u(x - h, t + h) +
                                           u(x - h, t - h)) / (4 * h * h)).epsilon(1e-5));
  CHECK(out.hess(0, 1) == out.hess(1, 0));
  CHECK(out.hess(1, 1) ==
        doctest::Approx((u(x, t + h) - 2 * u(x, t) + u(x, t - h)) / (h * h)).epsilon(1e-5));

  // The FieldJet path used in training agrees with the InputJet path.
  auto raw = jet(1);
  raw.value = rj.value;
  raw.dx[0] = rj.grad[0];
  raw.dt = rj.grad[1];
  raw.dxx[0] = rj.hess(0, 0);
  const auto f = p->constrain(raw, std::vector<double>{x}, t);
  CHECK(f.value == doctest::Approx(out.value).epsilon(1e-14));
  CHECK(f.dx[0] == doctest::Approx(out.grad[0]).epsilon(1e-13));
  CHECK(f.dt == doctest::Approx(out.grad[1]).epsilon(1e-13));
  CHECK(f.dxx[0] == doctest::Approx(out.hess(0, 0)).epsilon(1e-13));
}

TEST_CASE("allen-cahn reference solver") {
  pde::AllenCahnSolverOptions fine;
  const auto ref = pde::solve_allen_cahn_reference(fine);
  REQUIRE(ref.xs.size() == 257);
  REQUIRE(ref.ts.size() == 101);
  const auto p = pde::make_problem("allen_cahn");
  double u0_err = 0.0, bc_err = 0.0, peak = 0.0;
  for (std::size_t i = 0; i < ref.xs.size(); ++i) {
    u0_err = std::max(u0_err, std::abs(ref.at(i, 0) - p->initial_value(std::vector<double>{ref.xs[i]})));
  }
  for (std::size_t k = 0; k < ref.ts.size(); ++k) {
    bc_err = std::max({bc_err, std::abs(ref.at(0, k) + 1.0), std::abs(ref.at(256, k) + 1.0)});
    for (std::size_t i = 0; i < ref.xs.size(); ++i) peak = std::max(peak, std::abs(ref.at(i, k)));
  }
  CHECK(u0_err < 1e-14);
  CHECK(bc_err == 0.0);
  CHECK(peak <= 1.0 + 1e-9);
  // Symmetric data stays symmetric.
  CHECK(std::abs(ref.at(40, 100) - ref.at(216, 100)) < 1e-10);
  // Plateaus near -1 at the ends and near +1 inside have formed by t = 1.
  CHECK(ref.at(32, 100) < -0.99);
  CHECK(ref.at(80, 100) > 0.98);
  CHECK(ref.interpolate(0.375, 1.0) > 0.98);
  CHECK(std::abs(ref.interpolate(ref.xs[64], ref.ts[50]) - ref.at(64, 50)) < 1e-15);

  // Second-order convergence: halving dx and dt cuts the change about fourfold.
  pde::AllenCahnSolverOptions mid = fine;
  mid.intervals = 512;
  mid.dt = 2e-4;
  pde::AllenCahnSolverOptions coarse = fine;
  coarse.intervals = 256;
  coarse.dt = 4e-4;
  const auto m = pde::solve_allen_cahn_reference(mid);
  const auto c = pde::solve_allen_cahn_reference(coarse);
  double d_fine = 0.0, d_coarse = 0.0;
  for (std::size_t j = 0; j < ref.values.size(); ++j) {
    d_fine = std::max(d_fine, std::abs(ref.values[j] - m.values[j]));
    d_coarse = std::max(d_coarse, std::abs(m.values[j] - c.values[j]));
  }
  CHECK(d_coarse / d_fine > 3.0);
  CHECK(d_fine < 5e-3);

  const std::string csv = ref.to_csv();
  CHECK(csv.rfind("x,t,u\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 257 * 101 + 1);

  pde::AllenCahnSolverOptions bad = fine;
  bad.out_x = 300;
  CHECK_THROWS_AS(pde::solve_allen_cahn_reference(bad), ConfigError);
}
