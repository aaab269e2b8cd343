#include "msm/verify/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "msm/autodiff/jet_batch.hpp"
#include "msm/autodiff/network.hpp"
#include "msm/autodiff/param_gradient.hpp"
#include "msm/errors.hpp"
#include "msm/flow/flow.hpp"
#include "msm/pde/benchmarks.hpp"
#include "msm/sampling/rng.hpp"
#include "msm/sampling/sampling.hpp"
#include "msm/training/training.hpp"

namespace msm::verify {

using ad::DenseNetwork;
using ad::Matrix;
using ad::ParamVector;
using ad::Vector;

namespace {

constexpr double kOracleTol = 1e-6;

Check make_check(std::string name, double value, double tol, std::string detail = {}) {
  return {std::move(name), value < tol, value, tol, std::move(detail)};
}

/// Glorot weights with uniform biases in [-0.5, 0.5].
DenseNetwork random_network(const std::vector<int>& sizes, std::uint64_t seed) {
  DenseNetwork net = DenseNetwork::init(sizes, seed);
  sampling::Rng rng(sampling::derive_seed(seed, {99}));
  ParamVector p = net.parameters();
  for (Eigen::Index i = net.weight_count(); i < p.size(); ++i) p[i] = rng.uniform(-0.5, 0.5);
  net.set_parameters(p);
  return net;
}

DenseNetwork zero_network(const std::vector<int>& sizes) {
  DenseNetwork net = DenseNetwork::init(sizes, 1);
  net.set_parameters(ParamVector::Zero(net.parameter_count()));
  return net;
}

/// max |a - b| / max(max |b|, floor).
double normwise(const Vector& a, const Vector& b, double floor = 1e-12) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), floor);
}

/// Central differences of f at `count` random coordinates; normwise error against `grad`.
double param_fd_error(const std::function<double(const ParamVector&)>& f, const ParamVector& p,
                      const ParamVector& grad, sampling::Rng& rng, int count) {
  const double h = 1e-6;
  Vector a(count), b(count);
  for (int k = 0; k < count; ++k) {
    const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(p.size())));
    ParamVector up = p, down = p;
    up[i] += h;
    down[i] -= h;
    a[k] = grad[i];
    b[k] = (f(up) - f(down)) / (2.0 * h);
  }
  return (a - b).cwiseAbs().maxCoeff() / std::max(grad.cwiseAbs().maxCoeff(), 1e-12);
}

std::vector<int> random_sizes(sampling::Rng& rng, int inputs) {
  std::vector<int> sizes = {inputs};
  const int hidden = 1 + static_cast<int>(rng.below(3));
  for (int l = 0; l < hidden; ++l) sizes.push_back(1 + static_cast<int>(rng.below(8)));
  sizes.push_back(1);
  return sizes;
}

flow::AnalyticVelocity linear_1d() {
  return flow::AnalyticVelocity(
      1, [](std::span<const double> x, double, std::span<double> v) { v[0] = x[0]; },
      [](std::span<const double>, double) { return 1.0; });
}

Matrix normal_sample(int dim, std::size_t n, std::uint64_t seed, double shift) {
  sampling::Rng rng(seed);
  Matrix x(dim, static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (int i = 0; i < dim; ++i) x(i, j) = rng.normal() + (i == 0 ? shift : 0.0);
  }
  return x;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

}  // namespace

bool SuiteResult::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

// ---- autodiff -------------------------------------------------------------

Check input_jet_oracle(int networks, std::uint64_t seed) {
  sampling::Rng rng(seed);
  const double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < networks; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(3));
    const DenseNetwork net = random_network(random_sizes(rng, n), seed + 100 + trial);
    std::vector<double> x(n);
    for (double& v : x) v = rng.uniform(-1.5, 1.5);
    const ad::InputJet jet = ad::input_jet(net, x);
    Vector fd_grad(n);
    Matrix fd_hess(n, n);
    for (int i = 0; i < n; ++i) {
      std::vector<double> xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      fd_grad[i] = (ad::forward(net, xp) - ad::forward(net, xm)) / (2 * h);
      fd_hess.col(i) = (ad::input_jet(net, xp).grad - ad::input_jet(net, xm).grad) / (2 * h);
    }
    worst = std::max(worst, normwise(jet.grad, fd_grad));
    worst = std::max(worst, normwise(jet.hess.reshaped(), fd_hess.reshaped()));
  }
  return make_check("input_jet_vs_central_differences", worst, kOracleTol,
                    std::to_string(networks) + " networks");
}

Check through_jet_param_oracle(int trials, std::uint64_t seed) {
  sampling::Rng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<DenseNetwork> nets = {random_network({2, 6, 5, 1}, seed + 300 + trial),
                                      random_network({2, 4, 1}, seed + 400 + trial)};
    std::vector<std::vector<double>> pts(4, std::vector<double>(2));
    for (auto& p : pts) {
      for (double& v : p) v = rng.uniform(-1, 1);
    }
    const ad::LossClosure closure = [&pts](ad::GradientRecorder& rec) {
      ad::Var total = 0.0;
      for (const auto& x : pts) {
        const ad::VarJet u = rec.jet(0, x);
        const ad::VarJet phi = rec.jet(1, x);
        const ad::Var r = u.grad[1] - 0.3 * u.hess_at(0, 0) + u.value * u.value * u.value - u.value +
                          u.hess_at(0, 1) * phi.grad[0] + phi.hess_at(0, 0) * u.value;
        total = total + r * r;
      }
      return total / static_cast<double>(pts.size());
    };
    const ad::ParamGradient g = ad::param_gradient(closure, nets);
    const Eigen::Index n0 = nets[0].parameter_count();
    ParamVector p(g.gradient.size());
    p << nets[0].parameters(), nets[1].parameters();
    auto f = [&](const ParamVector& q) {
      std::vector<DenseNetwork> shifted = nets;
      shifted[0].set_parameters(q.head(n0));
      shifted[1].set_parameters(q.tail(q.size() - n0));
      return ad::param_gradient(closure, shifted).loss;
    };
    worst = std::max(worst, param_fd_error(f, p, g.gradient, rng, 20));
  }
  return make_check("param_gradient_through_jets_vs_central_differences", worst, kOracleTol,
                    std::to_string(trials) + " network pairs");
}

Check loss_u_gradient_oracle(std::uint64_t seed) {
  sampling::Rng rng(seed);
  double worst = 0.0;
  for (const auto& name : pde::problem_names()) {
    const auto problem = pde::make_problem(name);
    const int d = problem->spatial_dim();
    const sampling::TimeGrid grid(3, problem->horizon());
    training::USets sets;
    sets.pde = sampling::assemble_pde_set(*problem, 16, grid, pde::SetMode::per_slice, seed + 1);
    sets.initial =
        sampling::assemble_initial_set(*problem, pde::InitialStrategy::uniform, 16, 1.0, seed + 2);
    sets.boundary = problem->has_hard_constraint()
                        ? sampling::CollocationSet(d)
                        : sampling::assemble_boundary_set(*problem, 8, grid, seed + 3);
    const training::LossUData data(*problem, sets, 0.7, 1.3);
    const DenseNetwork net = random_network({d + 1, 4, 4, 1}, seed + 4);
    ParamVector grad;
    data.evaluate(net, &grad);
    auto f = [&](const ParamVector& q) {
      DenseNetwork n = net;
      n.set_parameters(q);
      return data.evaluate(n, nullptr).total;
    };
    worst = std::max(worst, param_fd_error(f, net.parameters(), grad, rng, 20));
  }
  return make_check("loss_u_gradient_vs_central_differences", worst, kOracleTol, "every benchmark");
}

Check loss_v_gradient_oracle(std::uint64_t seed) {
  sampling::Rng rng(seed);
  double worst = 0.0;
  for (const char* name : {"rotation", "fokker_planck", "allen_cahn"}) {
    const auto problem = pde::make_problem(name);
    const int d = problem->spatial_dim();
    const sampling::TimeGrid grid(3, problem->horizon());
    const DenseNetwork u = random_network({d + 1, 6, 1}, seed + 1);
    const auto pts = sampling::assemble_pde_set(*problem, 30, grid, pde::SetMode::per_slice, seed + 2);
    const training::ResidualSnapshot snap = training::residual_snapshot(
        u, *problem, pts, sampling::CollocationSet(d), grid, training::GradMode::finite_difference, 1e-3);
    const DenseNetwork phi = random_network({d + 1, 4, 4, 1}, seed + 3);
    ParamVector grad;
    training::loss_v_estimate(phi, snap, &grad);
    auto f = [&](const ParamVector& q) {
      DenseNetwork n = phi;
      n.set_parameters(q);
      return training::loss_v_estimate(n, snap).value;
    };
    worst = std::max(worst, param_fd_error(f, phi.parameters(), grad, rng, 20));
  }
  return make_check("loss_v_gradient_vs_central_differences", worst, kOracleTol);
}

Check batched_jet_consistency(std::uint64_t seed) {
  sampling::Rng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(3));
    const DenseNetwork net = random_network(random_sizes(rng, n), seed + trial);
    Matrix pts(n, 7);
    for (Eigen::Index j = 0; j < pts.size(); ++j) pts.data()[j] = rng.uniform(-1, 1);
    const ad::JetLayout layout = ad::JetLayout::full(n);
    const Matrix jets = ad::forward_jets(net, pts, layout);
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
      const std::vector<double> x(pts.col(j).data(), pts.col(j).data() + n);
      const ad::InputJet single = ad::input_jet(net, x);
      worst = std::max(worst, std::abs(jets(0, j) - single.value));
      for (int i = 0; i < n; ++i) {
        worst = std::max(worst, std::abs(jets(layout.grad_channel(i), j) - single.grad[i]));
      }
      for (std::size_t k = 0; k < layout.hess_pairs.size(); ++k) {
        const auto [p, q] = layout.hess_pairs[k];
        worst = std::max(worst, std::abs(jets(layout.hess_channel(static_cast<int>(k)), j) -
                                         single.hess(p, q)));
      }
    }
  }
  return make_check("batched_jets_match_single_point", worst, 1e-12);
}

// ---- flow -----------------------------------------------------------------

Check velocity_oracle(std::uint64_t seed) {
  sampling::Rng rng(seed);
  const double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + static_cast<int>(rng.below(3));
    const flow::VelocityPotential pot{random_network({d + 1, 6, 5, 1}, seed + trial)};
    std::vector<double> x(d);
    for (double& v : x) v = rng.uniform(-1, 1);
    const double t = rng.uniform();
    const Vector v = flow::velocity_at(pot, x, t);
    Vector fd(d);
    for (int i = 0; i < d; ++i) {
      std::vector<double> zp(x), zm(x);
      zp.push_back(t);
      zm.push_back(t);
      zp[i] += h;
      zm[i] -= h;
      fd[i] = (ad::forward(pot.net, zp) - ad::forward(pot.net, zm)) / (2 * h);
    }
    worst = std::max(worst, normwise(v, fd));
  }
  return make_check("velocity_is_potential_gradient", worst, kOracleTol);
}

Check divergence_oracle(std::uint64_t seed) {
  sampling::Rng rng(seed);
  const double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + static_cast<int>(rng.below(3));
    const flow::VelocityPotential pot{random_network({d + 1, 6, 5, 1}, seed + trial)};
    std::vector<double> x(d);
    for (double& v : x) v = rng.uniform(-1, 1);
    const double t = rng.uniform();
    double fd = 0.0;
    double scale = 0.0;
    for (int i = 0; i < d; ++i) {
      std::vector<double> xp(x), xm(x);
      xp[i] += h;
      xm[i] -= h;
      const double di = (flow::velocity_at(pot, xp, t)[i] - flow::velocity_at(pot, xm, t)[i]) / (2 * h);
      fd += di;
      scale = std::max(scale, std::abs(di));
    }
    const double div = flow::divergence_at(pot, x, t);
    worst = std::max(worst, std::abs(div - fd) / std::max(scale, 1e-12));
  }
  return make_check("divergence_is_velocity_trace", worst, kOracleTol);
}

Check linear_flow_position() {
  Matrix x0(1, 1);
  x0(0, 0) = 0.5;
  const Matrix x1 = flow::integrate_flow(linear_1d(), x0, 1.0, 100, nullptr);
  return make_check("linear_flow_position", std::abs(x1(0, 0) - 0.5 * std::exp(1.0)), 1e-9,
                    "x' = x from 0.5, 100 steps");
}

Check linear_flow_logdet() {
  Matrix x0(1, 1);
  x0(0, 0) = 0.5;
  Vector logdet;
  flow::integrate_flow(linear_1d(), x0, 1.0, 100, &logdet);
  return make_check("linear_flow_logdet", std::abs(logdet[0] - 1.0), 1e-9);
}

Check rk4_order() {
  Matrix x0(1, 1);
  x0(0, 0) = 0.5;
  double prev = 0.0;
  double worst = 1e300;
  for (int steps : {5, 10, 20, 40}) {
    const double err =
        std::abs(flow::integrate_flow(linear_1d(), x0, 1.0, steps, nullptr)(0, 0) - 0.5 * std::exp(1.0));
    if (prev > 0.0) worst = std::min(worst, prev / err);
    prev = err;
  }
  // Passing means the smallest ratio is at least 8.
  Check c{"rk4_halving_ratio", worst >= 8.0, worst, 8.0, "smallest ratio over 5, 10, 20, 40 steps"};
  return c;
}

Check change_of_variables() {
  const double a = 0.5;
  const double b = -0.25;
  const flow::AnalyticVelocity field(
      2,
      [a, b](std::span<const double> x, double, std::span<double> v) {
        v[0] = a * x[0];
        v[1] = b * x[1];
      },
      [a, b](std::span<const double>, double) { return a + b; });
  const Matrix x0 = normal_sample(2, 50, 5, 0.0);
  Vector logdet;
  const double t = 1.0;
  const Matrix xt = flow::integrate_flow(field, x0, t, 200, &logdet);
  auto p0 = [](double u, double v) { return std::exp(-0.5 * (u * u + v * v)) / (2 * std::numbers::pi); };
  double worst = 0.0;
  for (Eigen::Index j = 0; j < x0.cols(); ++j) {
    const double tracked = p0(x0(0, j), x0(1, j)) * std::exp(-logdet[j]);
    const double closed =
        p0(xt(0, j) * std::exp(-a * t), xt(1, j) * std::exp(-b * t)) * std::exp(-(a + b) * t);
    worst = std::max(worst, std::abs(tracked - closed) / closed);
  }
  return make_check("tracked_density_matches_closed_form", worst, 1e-6, "diagonal linear flow");
}

// ---- transport ------------------------------------------------------------

Check pushforward_linear(std::size_t particles, std::uint64_t seed) {
  const Matrix x0 = normal_sample(1, particles, seed, 0.0);
  const auto r = flow::pushforward_check(
      linear_1d(), x0, [](std::span<const double> x) { return x[0] * x[0]; }, 1.0, 100, std::exp(2.0));
  const double z = std::abs(r.mc_estimate - r.analytic) / r.std_error;
  return {"pushforward_linear_second_moment", z < 3.0, z, 3.0,
          "estimate " + fmt(r.mc_estimate) + " vs " + fmt(r.analytic) + ", in standard errors"};
}

Check pushforward_rotation(std::size_t particles, std::uint64_t seed) {
  const flow::AnalyticVelocity rot(
      2,
      [](std::span<const double> x, double, std::span<double> v) {
        v[0] = -x[1];
        v[1] = x[0];
      },
      [](std::span<const double>, double) { return 0.0; });
  const Matrix x0 = normal_sample(2, particles, seed, 1.0);
  const auto r = flow::pushforward_check(
      rot, x0, [](std::span<const double> x) { return x[0]; }, 1.0, 50, std::cos(1.0));
  const double z = std::abs(r.mc_estimate - r.analytic) / r.std_error;
  return {"pushforward_rotation_mean", z < 3.0, z, 3.0,
          "estimate " + fmt(r.mc_estimate) + " vs " + fmt(r.analytic) + ", in standard errors"};
}

// ---- losses ---------------------------------------------------------------

Check residual_annihilation(std::uint64_t seed) {
  sampling::Rng rng(seed);
  double worst = 0.0;
  std::string where;
  for (const char* name : {"rotation", "burgers", "fokker_planck", "advection6d"}) {
    const auto p = pde::make_problem(name);
    const pde::Box& box = p->domain();
    std::vector<double> x(box.dim());
    for (int k = 0; k < 100; ++k) {
      for (int i = 0; i < box.dim(); ++i) x[i] = rng.uniform(box.lo[i], box.hi[i]);
      const double t = rng.uniform(0.0, p->horizon());
      const double r = std::abs(p->residual(p->exact_jet(x, t), x, t));
      if (r > worst) {
        worst = r;
        where = name;
      }
    }
  }
  return make_check("exact_solutions_annihilate_residual", worst, 1e-5,
                    where.empty() ? "100 points per benchmark" : "worst on " + where);
}

namespace {

training::ResidualSnapshot one_dim_snapshot(
    std::size_t n, std::uint64_t seed,
    const std::function<void(double, double&, double&, double&, double&, double&)>& fill) {
  sampling::Rng rng(seed);
  training::ResidualSnapshot s;
  s.dim = 1;
  const auto p = static_cast<Eigen::Index>(n);
  s.points.resize(2, p);
  s.r.resize(p);
  s.grad_r.resize(1, p);
  s.dt_r.resize(p);
  s.integral_at.resize(p);
  s.rate_at.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    s.points(0, j) = rng.uniform();
    s.points(1, j) = rng.uniform();
    fill(s.points(1, j), s.r[j], s.grad_r(0, j), s.dt_r[j], s.integral_at[j], s.rate_at[j]);
  }
  return s;
}

}  // namespace

Check loss_v_algebraic_zero() {
  const auto s = one_dim_snapshot(200, 1, [](double t, double& r, double& rx, double& rt, double& i,
                                             double& rate) {
    r = std::exp(t);
    rx = 0.0;
    rt = std::exp(t);
    i = std::exp(2.0 * t);
    rate = 2.0 * std::exp(2.0 * t);
  });
  const double v = training::loss_v_estimate(zero_network({2, 4, 1}), s).value;
  return make_check("loss_v_vanishes_for_balanced_residual", v, 1e-20, "r = e^t, phi = 0");
}

Check loss_v_unit_rate() {
  const auto s = one_dim_snapshot(50, 2, [](double, double& r, double& rx, double& rt, double& i,
                                            double& rate) {
    r = rx = rate = 0.0;
    rt = 1.0;
    i = 1.0;
  });
  const double v = training::loss_v_estimate(random_network({2, 6, 1}, 3), s).value;
  return make_check("loss_v_unit_time_derivative", std::abs(v - 4.0), 1e-12, "expected 4");
}

Check snapshot_modes_agree(std::uint64_t seed) {
  const auto rot = pde::make_problem("rotation");
  const sampling::TimeGrid grid(5, 1.0);
  const auto pts = sampling::assemble_pde_set(*rot, 40, grid, pde::SetMode::per_slice, seed);
  const DenseNetwork u = random_network({3, 8, 8, 1}, seed + 1);
  const sampling::CollocationSet none(2);
  const auto e = training::residual_snapshot(u, *rot, pts, none, grid, training::GradMode::exact, 1e-3);
  const auto f =
      training::residual_snapshot(u, *rot, pts, none, grid, training::GradMode::finite_difference, 1e-3);
  const double g = normwise(e.grad_r.reshaped(), f.grad_r.reshaped(), 1.0);
  const double t = normwise(e.dt_r, f.dt_r, 1.0);
  return make_check("snapshot_exact_matches_finite_difference", std::max(g, t), 1e-4, "rotation");
}

// ---- suites ---------------------------------------------------------------

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"autodiff", "flow", "transport", "losses"};
  return names;
}

SuiteResult run_suite(const std::string& name) {
  const auto start = std::chrono::steady_clock::now();
  SuiteResult r;
  r.suite = name;
  if (name == "autodiff") {
    r.checks = {input_jet_oracle(100, 2024), batched_jet_consistency(31),
                through_jet_param_oracle(100, 77), loss_u_gradient_oracle(41)};
  } else if (name == "flow") {
    r.checks = {velocity_oracle(51),     divergence_oracle(52), linear_flow_position(),
                linear_flow_logdet(),    rk4_order(),           change_of_variables()};
  } else if (name == "transport") {
    r.checks = {pushforward_linear(100000, 6), pushforward_rotation(20000, 7)};
  } else if (name == "losses") {
    r.checks = {residual_annihilation(17), loss_v_algebraic_zero(), loss_v_unit_rate(),
                loss_v_gradient_oracle(61), snapshot_modes_agree(62)};
  } else {
    throw ConfigError("unknown verify suite '" + name + "' (expected autodiff, flow, transport or losses)");
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

nlohmann::json to_json(const std::vector<SuiteResult>& results) {
  nlohmann::json out;
  bool all = true;
  nlohmann::json suites = nlohmann::json::array();
  for (const auto& s : results) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : s.checks) {
      checks.push_back({{"name", c.name},
                        {"passed", c.passed},
                        {"value", c.value},
                        {"tolerance", c.tolerance},
                        {"detail", c.detail}});
    }
    suites.push_back({{"suite", s.suite}, {"passed", s.passed()}, {"seconds", s.seconds}, {"checks", checks}});
    all = all && s.passed();
  }
  out["passed"] = all;
  out["suites"] = std::move(suites);
  return out;
}

}  // namespace msm::verify
