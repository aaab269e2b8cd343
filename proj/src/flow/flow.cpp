#include "msm/flow/flow.hpp"

#include <cmath>
#include <sstream>

#include "msm/autodiff/jet_batch.hpp"
#include "msm/errors.hpp"
#include "msm/io.hpp"

namespace msm::flow {

namespace {

ad::InputJet potential_jet(const VelocityPotential& pot, std::span<const double> x, double t) {
  std::vector<double> z(x.begin(), x.end());
  z.push_back(t);
  return ad::input_jet(pot.net, z);
}

}  // namespace

Vector velocity_at(const VelocityPotential& pot, std::span<const double> x, double t) {
  const ad::InputJet j = potential_jet(pot, x, t);
  return j.grad.head(static_cast<Eigen::Index>(x.size()));
}

double divergence_at(const VelocityPotential& pot, std::span<const double> x, double t) {
  const ad::InputJet j = potential_jet(pot, x, t);
  const auto d = static_cast<Eigen::Index>(x.size());
  return j.hess.topLeftCorner(d, d).trace();
}

PotentialVelocity::PotentialVelocity(const VelocityPotential& pot)
    : pot_(pot), dim_(pot.net.input_dim() - 1) {}

void PotentialVelocity::evaluate(const Matrix& x, double t, Matrix& v, Vector* div) const {
  const Eigen::Index p = x.cols();
  Matrix z(dim_ + 1, p);
  z.topRows(dim_) = x;
  z.row(dim_).setConstant(t);
  const ad::JetLayout layout =
      div ? ad::JetLayout::diagonal(dim_ + 1, dim_) : ad::JetLayout::first_order(dim_ + 1);
  const Matrix jets = ad::forward_jets(pot_.net, z, layout);
  v.resize(dim_, p);
  for (int i = 0; i < dim_; ++i) v.row(i) = jets.row(layout.grad_channel(i));
  if (div) {
    div->setZero(p);
    for (int i = 0; i < dim_; ++i) *div += jets.row(layout.hess_channel(i)).transpose();
  }
}

AnalyticVelocity::AnalyticVelocity(int dim, Fn velocity, DivFn divergence)
    : dim_(dim), velocity_(std::move(velocity)), divergence_(std::move(divergence)) {}

void AnalyticVelocity::evaluate(const Matrix& x, double t, Matrix& v, Vector* div) const {
  v.resize(dim_, x.cols());
  if (div) div->resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    velocity_({x.col(j).data(), static_cast<std::size_t>(dim_)}, t,
              {v.col(j).data(), static_cast<std::size_t>(dim_)});
    if (div) (*div)[j] = divergence_({x.col(j).data(), static_cast<std::size_t>(dim_)}, t);
  }
}

namespace {

/// One RK4 step of the augmented system (x, logdet) from t to t + h.
void rk4_step(const VelocityField& field, Matrix& x, Vector* logdet, double t, double h) {
  Matrix k1, k2, k3, k4;
  Vector d1, d2, d3, d4;
  Vector* p1 = logdet ? &d1 : nullptr;
  Vector* p2 = logdet ? &d2 : nullptr;
  Vector* p3 = logdet ? &d3 : nullptr;
  Vector* p4 = logdet ? &d4 : nullptr;
  field.evaluate(x, t, k1, p1);
  field.evaluate(x + 0.5 * h * k1, t + 0.5 * h, k2, p2);
  field.evaluate(x + 0.5 * h * k2, t + 0.5 * h, k3, p3);
  field.evaluate(x + h * k3, t + h, k4, p4);
  x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (logdet) *logdet += (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
}

}  // namespace

std::size_t FlowTrajectory::discarded() const {
  if (alive.empty()) return 0;
  std::size_t n = 0;
  for (char a : alive.back()) n += a ? 0 : 1;
  return n;
}

std::string FlowTrajectory::to_csv(const sampling::TimeGrid& grid) const {
  std::ostringstream out;
  const int d = static_cast<int>(initial.rows());
  out << "point_id,slice,t";
  for (int i = 0; i < d; ++i) out << ",x" << (i + 1);
  out << ",alive,logdet\n";
  for (int p = 0; p < points(); ++p) {
    for (int k = 0; k < slices(); ++k) {
      out << p << ',' << k << ',' << io::format_double(grid[k]);
      for (int i = 0; i < d; ++i) out << ',' << io::format_double(positions[k](i, p));
      out << ',' << (alive[k][p] ? 1 : 0) << ','
          << (logdet.size() ? io::format_double(logdet(p, k)) : std::string());
      out << '\n';
    }
  }
  return out.str();
}

FlowTrajectory evolve_samples(const VelocityField& field, const Matrix& x0,
                              const sampling::TimeGrid& grid, int substeps, const pde::Box& domain,
                              bool track_logdet) {
  if (substeps < 1) throw ConfigError("substeps must be at least 1");
  if (x0.rows() != field.dim() || domain.dim() != field.dim()) {
    throw ContractError("flow dimension mismatch");
  }
  const int d = field.dim();
  const Eigen::Index n = x0.cols();
  FlowTrajectory traj;
  traj.initial = x0;
  traj.positions.reserve(grid.size());
  traj.alive.reserve(grid.size());
  if (track_logdet) traj.logdet = Matrix::Zero(n, grid.size());

  Matrix x = x0;
  std::vector<char> alive(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    alive[j] = domain.contains({x.col(j).data(), static_cast<std::size_t>(d)}) ? 1 : 0;
  }
  Vector logdet = Vector::Zero(n);
  traj.positions.push_back(x);
  traj.alive.push_back(alive);

  for (int k = 0; k + 1 < grid.size(); ++k) {
    // Only live points move; gather them into a compact batch.
    std::vector<Eigen::Index> live;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (alive[j]) live.push_back(j);
    }
    Matrix xs(d, static_cast<Eigen::Index>(live.size()));
    Vector ls(static_cast<Eigen::Index>(live.size()));
    for (std::size_t q = 0; q < live.size(); ++q) {
      xs.col(q) = x.col(live[q]);
      ls[q] = logdet[live[q]];
    }
    const double h = (grid[k + 1] - grid[k]) / substeps;
    for (int s = 0; s < substeps; ++s) {
      rk4_step(field, xs, track_logdet ? &ls : nullptr, grid[k] + s * h, h);
    }
    for (std::size_t q = 0; q < live.size(); ++q) {
      const Eigen::Index j = live[q];
      if (!xs.col(q).allFinite()) {
        throw NumericError("non-finite position for point " + std::to_string(j) + " at slice " +
                           std::to_string(k + 1));
      }
      x.col(j) = xs.col(q);
      logdet[j] = ls[q];
      if (!domain.contains({x.col(j).data(), static_cast<std::size_t>(d)})) alive[j] = 0;
    }
    traj.positions.push_back(x);
    traj.alive.push_back(alive);
    if (track_logdet) traj.logdet.col(k + 1) = logdet;
  }
  return traj;
}

Matrix integrate_flow(const VelocityField& field, const Matrix& x0, double t_end, int steps,
                      Vector* logdet) {
  if (steps < 1) throw ConfigError("steps must be at least 1");
  Matrix x = x0;
  if (logdet) logdet->setZero(x0.cols());
  const double h = t_end / steps;
  for (int s = 0; s < steps; ++s) rk4_step(field, x, logdet, s * h, h);
  return x;
}

PushforwardResult pushforward_check(const VelocityField& field, const Matrix& x0,
                                    const std::function<double(std::span<const double>)>& test,
                                    double t, int steps, double analytic) {
  const Matrix xt = integrate_flow(field, x0, t, steps, nullptr);
  const Eigen::Index n = xt.cols();
  if (n < 2) throw ConfigError("pushforward check needs at least two particles");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double v = test({xt.col(j).data(), static_cast<std::size_t>(xt.rows())});
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / n;
  const double var = (sum_sq - n * mean * mean) / (n - 1);
  return {mean, analytic, std::sqrt(std::max(var, 0.0) / n)};
}

double integrate_on_box(const std::function<double(std::span<const double>)>& integrand,
                        const pde::Box& box, int nodes_per_axis) {
  if (nodes_per_axis < 2) throw ConfigError("quadrature needs at least two nodes per axis");
  const int d = box.dim();
  if (d < 1 || d > 2) throw ConfigError("box quadrature supports one or two dimensions");
  const int m = nodes_per_axis;
  auto weight = [m](int i) { return (i == 0 || i == m - 1) ? 0.5 : 1.0; };
  std::vector<double> h(d);
  for (int i = 0; i < d; ++i) h[i] = box.extent(i) / (m - 1);
  double total = 0.0;
  double z[2];
  if (d == 1) {
    for (int i = 0; i < m; ++i) {
      z[0] = box.lo[0] + i * h[0];
      total += weight(i) * integrand({z, 1});
    }
    return total * h[0];
  }
  for (int i = 0; i < m; ++i) {
    z[0] = box.lo[0] + i * h[0];
    double row = 0.0;
    for (int j = 0; j < m; ++j) {
      z[1] = box.lo[1] + j * h[1];
      row += weight(j) * integrand({z, 2});
    }
    total += weight(i) * row;
  }
  return total * h[0] * h[1];
}

}  // namespace msm::flow
