#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "msm/errors.hpp"
#include "msm/pde/problem.hpp"
#include "msm/sampling/rng.hpp"
#include "msm/sampling/sampling.hpp"

using namespace msm;
using sampling::Origin;
using sampling::Points;

namespace {

double mean_row(const Points& p, int r) { return p.row(r).mean(); }

double std_row(const Points& p, int r) {
  const double m = mean_row(p, r);
  return std::sqrt((p.row(r).array() - m).square().sum() / (p.cols() - 1));
}

}  // namespace

TEST_CASE("time grid") {
  const sampling::TimeGrid g(11, 1.0);
  CHECK(g.size() == 11);
  CHECK(g[0] == 0.0);
  CHECK(g[10] == 1.0);
  CHECK(g[3] == doctest::Approx(0.3));
  for (int k = 0; k + 1 < g.size(); ++k) CHECK(g[k] < g[k + 1]);
  CHECK_THROWS_AS(sampling::TimeGrid(1, 1.0), ConfigError);
  CHECK_THROWS_AS(sampling::TimeGrid(5, 0.0), ConfigError);
}

TEST_CASE("rng streams") {
  sampling::Rng a(1), b(1), c(2);
  CHECK(a.next() == b.next());
  CHECK(a.next() != c.next());
  CHECK(sampling::derive_seed(5, {1}) != sampling::derive_seed(5, {2}));
  CHECK(sampling::derive_seed(5, {1, 2}) != sampling::derive_seed(5, {2, 1}));
  sampling::Rng r(9);
  double m = 0.0, v = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    m += z;
    v += z * z;
  }
  m /= n;
  v = v / n - m * m;
  CHECK(std::abs(m) < 4.0 / std::sqrt(n));
  CHECK(std::abs(v - 1.0) < 0.02);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(r.below(7) < 7);
  }
}

TEST_CASE("uniform box sampling") {
  const pde::Box unit = pde::Box::cube(2, 0.0, 1.0);
  const Points p = sampling::sample_uniform_box(unit, 100000, 3);
  CHECK(std::abs(mean_row(p, 0) - 0.5) < 0.01);
  CHECK(std::abs(mean_row(p, 1) - 0.5) < 0.01);
  CHECK(p.minCoeff() >= 0.0);
  CHECK(p.maxCoeff() < 1.0);
  const Points one = sampling::sample_uniform_box(unit, 1, 4);
  REQUIRE(one.cols() == 1);
  CHECK(unit.contains(std::vector<double>{one(0, 0), one(1, 0)}));
  CHECK(sampling::sample_uniform_box(unit, 50, 8) == sampling::sample_uniform_box(unit, 50, 8));
  CHECK(sampling::sample_uniform_box(unit, 50, 8) != sampling::sample_uniform_box(unit, 50, 9));
  CHECK_THROWS_AS(sampling::sample_uniform_box(pde::Box({0.0, 1.0}, {1.0, 1.0}), 5, 1), ConfigError);
}

TEST_CASE("rejection sampling with a constant density") {
  const pde::Box box = pde::Box::cube(2, -1.0, 3.0);
  const Points p = sampling::sample_proportional([](std::span<const double>) { return 1.0; }, box, 20000, 5);
  CHECK(p.cols() == 20000);
  // CLT: standard deviation of the mean is 4 / sqrt(12 n).
  const double se = 4.0 / std::sqrt(12.0 * 20000);
  CHECK(std::abs(mean_row(p, 0) - 1.0) < 4 * se);
  CHECK(std::abs(mean_row(p, 1) - 1.0) < 4 * se);
}

TEST_CASE("rejection sampling is exact on an indicator") {
  const pde::Box box = pde::Box::cube(2, 0.0, 1.0);
  const auto inside = [](std::span<const double> x) { return x[0] < 0.3 && x[1] > 0.5; };
  const Points p = sampling::sample_proportional(
      [&](std::span<const double> x) { return inside(x) ? 1.0 : 0.0; }, box, 5000, 6);
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    CHECK(inside(std::vector<double>{p(0, j), p(1, j)}));
  }
}

TEST_CASE("rejection sampling of the rotation initial condition") {
  const auto rot = pde::make_problem("rotation");
  const Points p = sampling::sample_initial(*rot, pde::InitialStrategy::prop_u0, 10000, 7);
  CHECK(std::abs(mean_row(p, 0) - 1.0) < 0.01);
  CHECK(std::abs(mean_row(p, 1) - 0.0) < 0.01);
  const double s = std::sqrt(0.005);
  CHECK(std::abs(std_row(p, 0) - s) < 0.1 * s);
  CHECK(std::abs(std_row(p, 1) - s) < 0.1 * s);
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    CHECK(rot->domain().contains(std::vector<double>{p(0, j), p(1, j)}));
  }
}

TEST_CASE("rejection sampling of the burgers gradient density") {
  const auto bur = pde::make_problem("burgers");
  const Points p = sampling::sample_initial(*bur, pde::InitialStrategy::prop_grad_u0_sq, 5000, 8);
  int near = 0;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    if (std::abs(p(0, j) + p(1, j)) / std::sqrt(2.0) < 0.05) ++near;
  }
  CHECK(near >= 0.95 * p.cols());
}

TEST_CASE("separable rejection matches the joint density") {
  const auto adv = pde::make_problem("advection6d");
  const Points p = sampling::sample_initial(*adv, pde::InitialStrategy::prop_u0, 20000, 9);
  CHECK(p.rows() == 6);
  const double s = std::sqrt(0.01 / 2);
  for (int i = 0; i < 6; ++i) {
    CHECK(std::abs(mean_row(p, i)) < 0.01);
    // Truncation at -0.2 = -2.83 s shifts the standard deviation by under 3%.
    CHECK(std::abs(std_row(p, i) - s) < 0.06 * s);
  }
}

TEST_CASE("starved rejection sampler reports the problem") {
  sampling::RejectionLimits tight;
  tight.max_proposals = 1000;
  tight.min_acceptance = 0.9;
  const pde::Box box = pde::Box::cube(1, 0.0, 1.0);
  CHECK_THROWS_AS(sampling::sample_proportional([](std::span<const double> x) { return x[0] < 0.5 ? 1.0 : 0.0; },
                                                box, 100000, 1, tight),
                  ConfigError);
  CHECK_THROWS_AS(sampling::sample_proportional([](std::span<const double>) { return 0.0; }, box, 10, 1),
                  ConfigError);
  CHECK_THROWS_AS(sampling::sample_proportional([](std::span<const double>) { return -1.0; }, box, 10, 1),
                  NumericError);
}

TEST_CASE("initial set composition") {
  const auto rot = pde::make_problem("rotation");
  const auto s0 = sampling::assemble_initial_set(*rot, pde::InitialStrategy::prop_u0, 500, 0.2, 11);
  CHECK(s0.size() == 500);
  CHECK(s0.count(Origin::uniform) == 100);
  CHECK(s0.count(Origin::initial) == 400);
  for (std::size_t i = 0; i < s0.size(); ++i) {
    CHECK(s0.t(i) == 0.0);
    CHECK(s0.slice(i) == 0);
  }
  const auto u = sampling::assemble_initial_set(*rot, pde::InitialStrategy::uniform, 300, 0.2, 11);
  CHECK(u.count(Origin::uniform) == 300);
  CHECK_THROWS_AS(sampling::assemble_initial_set(*rot, pde::InitialStrategy::uniform, 10, 1.5, 1), ConfigError);
}

TEST_CASE("boundary set") {
  const auto rot = pde::make_problem("rotation");
  const sampling::TimeGrid grid(11, 1.0);
  const auto b = sampling::assemble_boundary_set(*rot, 400, grid, 12);
  CHECK(b.size() == 4400);
  const pde::Box& box = rot->domain();
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto x = b.x(i);
    const bool on = x[0] == box.lo[0] || x[0] == box.hi[0] || x[1] == box.lo[1] || x[1] == box.hi[1];
    CHECK(on);
    CHECK(b.t(i) == grid[b.slice(i)]);
  }
  const auto big = sampling::assemble_boundary_set(*rot, 40000, sampling::TimeGrid(2, 1.0), 13);
  std::vector<int> faces(4, 0);
  for (std::size_t i = 0; i < 40000; ++i) {
    const auto x = big.x(i);
    faces[x[0] == box.lo[0] ? 0 : x[0] == box.hi[0] ? 1 : x[1] == box.lo[1] ? 2 : 3]++;
  }
  const double se = std::sqrt(0.25 * 0.75 / 40000);
  for (int f : faces) CHECK(std::abs(f / 40000.0 - 0.25) < 4 * se);
  // Slices replicate the same spatial points.
  CHECK(b.x(0)[0] == b.x(400)[0]);
  CHECK(b.x(399)[1] == b.x(4399)[1]);

  const auto adv = pde::make_problem("advection6d");
  const auto b6 = sampling::assemble_boundary_set(*adv, 360, grid, 14);
  CHECK(b6.size() == 360 * 11);
  std::vector<int> per_face(12, 0);
  const pde::Box& cube = adv->domain();
  for (std::size_t i = 0; i < 360; ++i) {
    const auto x = b6.x(i);
    int hits = 0;
    for (int a = 0; a < 6; ++a) {
      if (x[a] == cube.lo[a]) { per_face[2 * a]++; ++hits; }
      if (x[a] == cube.hi[a]) { per_face[2 * a + 1]++; ++hits; }
    }
    CHECK(hits == 1);
  }
  for (int f : per_face) CHECK(f == 30);
}

TEST_CASE("pde set modes") {
  const auto rot = pde::make_problem("rotation");
  const sampling::TimeGrid grid(11, 1.0);
  const auto s = sampling::assemble_pde_set(*rot, 1000, grid, pde::SetMode::per_slice, 15);
  CHECK(s.size() == 11000);
  CHECK(s.count(Origin::uniform) == 11000);
  for (std::size_t i = 0; i < 1000; ++i) {
    for (int k = 1; k < 11; ++k) {
      CHECK(s.x(k * 1000 + i)[0] == s.x(i)[0]);
      CHECK(s.x(k * 1000 + i)[1] == s.x(i)[1]);
    }
  }
  const auto ac = pde::make_problem("allen_cahn");
  const auto j = sampling::assemble_pde_set(*ac, 200, grid, pde::SetMode::joint_spacetime, 16);
  CHECK(j.size() == 200);
  for (std::size_t i = 0; i < j.size(); ++i) {
    CHECK(j.slice(i) == -1);
    CHECK((j.t(i) >= 0.0 && j.t(i) <= 1.0));
    CHECK(j.origin(i) == Origin::uniform_spacetime);
  }
  // Kolmogorov-Smirnov statistic of the time marginal against U[0, 1].
  const auto big = sampling::assemble_pde_set(*ac, 100000, grid, pde::SetMode::joint_spacetime, 17);
  std::vector<double> ts(big.size());
  for (std::size_t i = 0; i < big.size(); ++i) ts[i] = big.t(i);
  std::sort(ts.begin(), ts.end());
  double ks = 0.0;
  const double n = static_cast<double>(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    ks = std::max({ks, std::abs((i + 1) / n - ts[i]), std::abs(ts[i] - i / n)});
  }
  CHECK(ks < 0.01);
}

TEST_CASE("collocation set bookkeeping") {
  sampling::CollocationSet a(2), b(2);
  a.add(std::vector<double>{0.1, 0.2}, 0.0, 0, Origin::uniform);
  b.add(std::vector<double>{0.3, 0.4}, 0.5, 5, Origin::adaptive, 2);
  a.append(b);
  CHECK(a.size() == 2);
  CHECK(a.iteration(1) == 2);
  CHECK(a.count(Origin::adaptive) == 1);
  const auto st = a.spacetime();
  CHECK(st.rows() == 3);
  CHECK(st(2, 1) == 0.5);
  CHECK(a.to_csv() == "x1,x2,t,origin,iteration\n0.1,0.2,0,uniform,0\n0.3,0.4,0.5,adaptive,2\n");
  CHECK_THROWS_AS(a.add(std::vector<double>{1.0}, 0.0, 0, Origin::uniform), ContractError);
  sampling::CollocationSet c(3);
  c.add(std::vector<double>{0.0, 0.0, 0.0}, 0.0, 0, Origin::uniform);
  CHECK_THROWS_AS(a.append(c), ContractError);
  a.append(sampling::CollocationSet(3));
  CHECK(a.size() == 2);
}

TEST_CASE("every sampler is deterministic in its seed") {
  const auto bur = pde::make_problem("burgers");
  const sampling::TimeGrid grid(11, 1.0);
  const auto a = sampling::assemble_initial_set(*bur, pde::InitialStrategy::prop_grad_u0_sq, 200, 0.2, 3);
  const auto b = sampling::assemble_initial_set(*bur, pde::InitialStrategy::prop_grad_u0_sq, 200, 0.2, 3);
  CHECK(a.to_csv() == b.to_csv());
  CHECK(sampling::assemble_boundary_set(*bur, 50, grid, 4).to_csv() ==
        sampling::assemble_boundary_set(*bur, 50, grid, 4).to_csv());
}
