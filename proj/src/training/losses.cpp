#include <algorithm>
#include <array>
#include <cmath>

#include "msm/autodiff/jet_batch.hpp"
#include "msm/autodiff/tape.hpp"
#include "msm/errors.hpp"
#include "msm/parallel.hpp"
#include "msm/training/training.hpp"

namespace msm::training {

namespace {

constexpr Eigen::Index kChunk = 128;

using ad::JetLayout;
using ad::Var;
using pde::FieldJet;

/// Value, first derivatives and, for second-order residuals, the spatial Hessian diagonal.
JetLayout residual_layout(const pde::PdeProblem& problem) {
  const int d = problem.spatial_dim();
  return JetLayout::diagonal(d + 1, problem.residual_order() >= 2 ? d : 0);
}

template <class T>
FieldJet<T> field_from(const Matrix& jets, Eigen::Index col, const JetLayout& layout, int d) {
  FieldJet<T> f;
  f.dim = d;
  f.value = jets(0, col);
  for (int i = 0; i < d; ++i) f.dx[i] = jets(layout.grad_channel(i), col);
  f.dt = jets(layout.grad_channel(d), col);
  for (int k = 0; k < static_cast<int>(layout.hess_pairs.size()); ++k) {
    const auto [p, q] = layout.hess_pairs[k];
    if (p == q && p < d) f.dxx[p] = jets(layout.hess_channel(k), col);
  }
  return f;
}

double residual_at(const pde::PdeProblem& problem, const Matrix& z, const Matrix& jets,
                   Eigen::Index col, const JetLayout& layout) {
  const int d = problem.spatial_dim();
  FieldJet<double> f = field_from<double>(jets, col, layout, d);
  const std::span<const double> x(z.col(col).data(), static_cast<std::size_t>(d));
  const double t = z(d, col);
  if (problem.has_hard_constraint()) f = problem.constrain(f, x, t);
  return problem.residual(f, x, t);
}

/// Splits [0, n) into fixed chunks, runs them in parallel and returns per-chunk results
/// in chunk order so any later reduction is independent of the thread count.
template <class R, class F>
std::vector<R> chunked(Eigen::Index n, F&& fn) {
  const Eigen::Index chunks = (n + kChunk - 1) / kChunk;
  std::vector<R> out(static_cast<std::size_t>(chunks));
  parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t c) {
    const Eigen::Index begin = static_cast<Eigen::Index>(c) * kChunk;
    out[c] = fn(begin, std::min(n, begin + kChunk));
  });
  return out;
}

Matrix gather(const Matrix& m, const std::vector<Eigen::Index>* subset, Eigen::Index begin,
              Eigen::Index end) {
  if (!subset) return m.middleCols(begin, end - begin);
  Matrix out(m.rows(), end - begin);
  for (Eigen::Index j = begin; j < end; ++j) out.col(j - begin) = m.col((*subset)[j]);
  return out;
}

struct ChunkResult {
  double sum = 0.0;
  std::optional<ad::NetworkGradient> grad;
};

}  // namespace

Vector solution_values(const pde::PdeProblem& problem, const DenseNetwork& net, const Matrix& spacetime) {
  const int d = problem.spatial_dim();
  Vector y = ad::forward_values(net, spacetime);
  if (!problem.has_hard_constraint()) return y;
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    FieldJet<double> f;
    f.dim = d;
    f.value = y[j];
    y[j] = problem.constrain(f, {spacetime.col(j).data(), static_cast<std::size_t>(d)}, spacetime(d, j)).value;
  }
  return y;
}

Vector residual_values(const pde::PdeProblem& problem, const DenseNetwork& net, const Matrix& spacetime) {
  const JetLayout layout = residual_layout(problem);
  const auto parts = chunked<Vector>(spacetime.cols(), [&](Eigen::Index b, Eigen::Index e) {
    const Matrix z = spacetime.middleCols(b, e - b);
    const Matrix jets = ad::forward_jets(net, z, layout);
    Vector r(z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j) r[j] = residual_at(problem, z, jets, j, layout);
    return r;
  });
  Vector out(spacetime.cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.segment(at, p.size()) = p;
    at += p.size();
  }
  return out;
}

// ---- loss_u ---------------------------------------------------------------

LossUData::LossUData(const pde::PdeProblem& problem, const USets& sets, double ic_weight,
                     double bc_weight)
    : problem_(problem), ic_weight_(ic_weight), bc_weight_(bc_weight) {
  if (sets.pde.empty()) throw NumericError("collocation set exhausted: no live PDE points");
  pde_ = sets.pde.spacetime();
  if (!problem.has_hard_constraint()) {
    ic_ = sets.initial.spacetime();
    ic_target_.resize(ic_.cols());
    for (Eigen::Index j = 0; j < ic_.cols(); ++j) ic_target_[j] = problem.initial_value(sets.initial.x(j));
    bc_ = sets.boundary.spacetime();
    bc_target_.resize(bc_.cols());
    for (Eigen::Index j = 0; j < bc_.cols(); ++j) {
      bc_target_[j] = problem.boundary_value(sets.boundary.x(j), sets.boundary.t(j));
    }
  }
}

LossU LossUData::evaluate(const DenseNetwork& net, ParamVector* grad,
                          const std::vector<Eigen::Index>* subset) const {
  const pde::PdeProblem& problem = problem_;
  const int d = problem.spatial_dim();
  const JetLayout layout = residual_layout(problem);
  const Eigen::Index n = subset ? static_cast<Eigen::Index>(subset->size()) : pde_.cols();
  if (n == 0) throw NumericError("collocation set exhausted: no live PDE points");
  const double inv_n = 1.0 / static_cast<double>(n);
  const bool want = grad != nullptr;

  const auto parts = chunked<ChunkResult>(n, [&](Eigen::Index b, Eigen::Index e) {
    const Matrix z = gather(pde_, subset, b, e);
    ad::JetCache cache;
    const Matrix jets = ad::forward_jets(net, z, layout, want ? &cache : nullptr);
    ChunkResult out;
    if (!want) {
      for (Eigen::Index j = 0; j < z.cols(); ++j) {
        const double r = residual_at(problem, z, jets, j, layout);
        out.sum += r * r;
      }
      return out;
    }
    Matrix adj = Matrix::Zero(jets.rows(), jets.cols());
    ad::Tape tape;
    std::array<Var, pde::kMaxSpatialDim> xs;
    std::vector<int> hess_row(d, -1);
    for (int k = 0; k < static_cast<int>(layout.hess_pairs.size()); ++k) {
      hess_row[layout.hess_pairs[k].first] = layout.hess_channel(k);
    }
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      tape.clear();
      FieldJet<Var> f;
      f.dim = d;
      f.value = tape.variable(jets(0, j));
      for (int i = 0; i < d; ++i) f.dx[i] = tape.variable(jets(layout.grad_channel(i), j));
      f.dt = tape.variable(jets(layout.grad_channel(d), j));
      for (int i = 0; i < d; ++i) {
        if (hess_row[i] >= 0) f.dxx[i] = tape.variable(jets(hess_row[i], j));
      }
      for (int i = 0; i < d; ++i) xs[i] = Var(z(i, j));
      const Var t(z(d, j));
      const std::span<const Var> xv(xs.data(), static_cast<std::size_t>(d));
      const FieldJet<Var> u = problem.has_hard_constraint() ? problem.constrain(f, xv, t) : f;
      const Var r = problem.residual(u, xv, t);
      out.sum += r.value() * r.value();
      tape.backward(r);
      const double s = 2.0 * r.value() * inv_n;
      adj(0, j) = s * tape.adjoint(f.value);
      for (int i = 0; i < d; ++i) adj(layout.grad_channel(i), j) = s * tape.adjoint(f.dx[i]);
      adj(layout.grad_channel(d), j) = s * tape.adjoint(f.dt);
      for (int i = 0; i < d; ++i) {
        if (hess_row[i] >= 0) adj(hess_row[i], j) = s * tape.adjoint(f.dxx[i]);
      }
    }
    out.grad = ad::NetworkGradient::zeros_like(net);
    ad::backward_jets(net, cache, adj, *out.grad);
    return out;
  });

  LossU loss;
  ad::NetworkGradient total;
  if (want) total = ad::NetworkGradient::zeros_like(net);
  for (const auto& p : parts) {
    loss.pde += p.sum;
    if (want) total += *p.grad;
  }
  loss.pde *= inv_n;

  // Data misfit terms: value channel only.
  auto data_term = [&](const Matrix& z, const Vector& target, double weight) {
    if (z.cols() == 0 || weight == 0.0) return 0.0;
    const JetLayout values = JetLayout::values(d + 1);
    ad::JetCache cache;
    const Matrix y = ad::forward_jets(net, z, values, want ? &cache : nullptr);
    const Vector m = y.row(0).transpose() - target;
    const double inv = 1.0 / static_cast<double>(z.cols());
    if (want) {
      const Matrix adj = (2.0 * weight * inv) * m.transpose();
      ad::backward_jets(net, cache, adj, total);
    }
    return m.squaredNorm() * inv;
  };
  if (!problem.has_hard_constraint()) {
    loss.ic = data_term(ic_, ic_target_, ic_weight_);
    loss.bc = data_term(bc_, bc_target_, bc_weight_);
  }
  loss.total = loss.pde + ic_weight_ * loss.ic + bc_weight_ * loss.bc;
  if (want) *grad = total.flatten();
  return loss;
}

LossU loss_u_estimate(const DenseNetwork& net, const pde::PdeProblem& problem, const USets& sets,
                      double ic_weight, double bc_weight) {
  return LossUData(problem, sets, ic_weight, bc_weight).evaluate(net, nullptr);
}

// ---- Residual snapshot ----------------------------------------------------

std::vector<double> slice_rates(const std::vector<double>& integral, const TimeGrid& grid) {
  const int n = grid.size();
  if (static_cast<int>(integral.size()) != n) throw ContractError("one integral per slice required");
  std::vector<double> rate(n);
  for (int k = 0; k < n; ++k) {
    const int a = std::max(0, k - 1);
    const int b = std::min(n - 1, k + 1);
    rate[k] = (integral[b] - integral[a]) / (grid[b] - grid[a]);
  }
  return rate;
}

double interpolate_slices(const std::vector<double>& values, const TimeGrid& grid, double t) {
  const int n = grid.size();
  if (t <= grid[0]) return values[0];
  if (t >= grid[n - 1]) return values[n - 1];
  const auto it = std::upper_bound(grid.times.begin(), grid.times.end(), t);
  const int k = static_cast<int>(it - grid.times.begin()) - 1;
  const double w = (t - grid[k]) / (grid[k + 1] - grid[k]);
  return (1.0 - w) * values[k] + w * values[k + 1];
}

void attach_slice_values(ResidualSnapshot& snap, const TimeGrid& grid) {
  const Eigen::Index p = snap.points.cols();
  snap.integral_at.resize(p);
  snap.rate_at.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double t = snap.points(snap.dim, j);
    snap.integral_at[j] = interpolate_slices(snap.slice_integral, grid, t);
    snap.rate_at[j] = interpolate_slices(snap.slice_rate, grid, t);
  }
}

namespace {

/// rho = sign(r) |r|^gamma and its derivative factor gamma |r|^(gamma - 1).
std::pair<double, double> density_transform(double r, double gamma) {
  if (gamma == 1.0) return {r, 1.0};
  const double a = std::abs(r);
  if (a == 0.0) return {0.0, 0.0};
  const double p = std::pow(a, gamma - 1.0);
  return {std::copysign(a * p, r), gamma * p};
}

/// r, grad_x r, d_t r by nesting one more derivative order: full input Hessians of the
/// network plus tape partials of r with respect to each jet channel and coordinate.
void exact_residual_derivatives(const DenseNetwork& net, const pde::PdeProblem& problem,
                                const Matrix& z, Vector& r, Matrix& grad, Vector& dt) {
  const int d = problem.spatial_dim();
  const int n = d + 1;
  const JetLayout layout = JetLayout::full(n);
  const auto parts = chunked<std::tuple<Vector, Matrix, Vector>>(z.cols(), [&](Eigen::Index b, Eigen::Index e) {
    const Matrix zc = z.middleCols(b, e - b);
    const Matrix jets = ad::forward_jets(net, zc, layout);
    Vector rc(zc.cols());
    Matrix gc(d, zc.cols());
    Vector tc(zc.cols());
    ad::Tape tape;
    std::array<Var, pde::kMaxSpatialDim> xs;
    for (Eigen::Index j = 0; j < zc.cols(); ++j) {
      tape.clear();
      for (int i = 0; i < d; ++i) xs[i] = tape.variable(zc(i, j));
      const Var t = tape.variable(zc(d, j));
      FieldJet<Var> f;
      f.dim = d;
      f.value = tape.variable(jets(0, j));
      std::array<Var, pde::kMaxSpatialDim + 1> g;
      for (int i = 0; i < n; ++i) g[i] = tape.variable(jets(layout.grad_channel(i), j));
      for (int i = 0; i < d; ++i) f.dx[i] = g[i];
      f.dt = g[d];
      const std::span<const Var> xv(xs.data(), static_cast<std::size_t>(d));
      const FieldJet<Var> u = problem.has_hard_constraint() ? problem.constrain(f, xv, t) : f;
      const Var res = problem.residual(u, xv, t);
      tape.backward(res);
      rc[j] = res.value();
      auto hess = [&](int p, int q) {
        return jets(layout.hess_channel(layout.find_pair(std::min(p, q), std::max(p, q))), j);
      };
      for (int a = 0; a < n; ++a) {
        double total = (a < d ? tape.adjoint(xs[a]) : tape.adjoint(t)) +
                       tape.adjoint(f.value) * jets(layout.grad_channel(a), j);
        for (int c = 0; c < n; ++c) total += tape.adjoint(g[c]) * hess(c, a);
        if (a < d) {
          gc(a, j) = total;
        } else {
          tc[j] = total;
        }
      }
    }
    return std::tuple{rc, gc, tc};
  });
  r.resize(z.cols());
  grad.resize(d, z.cols());
  dt.resize(z.cols());
  Eigen::Index at = 0;
  for (const auto& [rc, gc, tc] : parts) {
    r.segment(at, rc.size()) = rc;
    grad.middleCols(at, gc.cols()) = gc;
    dt.segment(at, tc.size()) = tc;
    at += rc.size();
  }
}

/// Central differences of r with steps fd_step * (axis length) and fd_step * T.
void fd_residual_derivatives(const DenseNetwork& net, const pde::PdeProblem& problem, const Matrix& z,
                             double fd_step, Vector& r, Matrix& grad, Vector& dt) {
  const int d = problem.spatial_dim();
  const int n = d + 1;
  const Eigen::Index p = z.cols();
  Matrix shifted(n, p * (2 * n + 1));
  std::vector<double> h(n);
  for (int a = 0; a < d; ++a) h[a] = fd_step * problem.domain().extent(a);
  h[d] = fd_step * problem.horizon();
  for (Eigen::Index j = 0; j < p; ++j) {
    const Eigen::Index base = j * (2 * n + 1);
    shifted.col(base) = z.col(j);
    for (int a = 0; a < n; ++a) {
      shifted.col(base + 1 + 2 * a) = z.col(j);
      shifted(a, base + 1 + 2 * a) += h[a];
      shifted.col(base + 2 + 2 * a) = z.col(j);
      shifted(a, base + 2 + 2 * a) -= h[a];
    }
  }
  const Vector all = residual_values(problem, net, shifted);
  r.resize(p);
  grad.resize(d, p);
  dt.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const Eigen::Index base = j * (2 * n + 1);
    r[j] = all[base];
    for (int a = 0; a < n; ++a) {
      const double g = (all[base + 1 + 2 * a] - all[base + 2 + 2 * a]) / (2.0 * h[a]);
      if (a < d) {
        grad(a, j) = g;
      } else {
        dt[j] = g;
      }
    }
  }
}

}  // namespace

ResidualSnapshot residual_snapshot(const DenseNetwork& net, const pde::PdeProblem& problem,
                                   const CollocationSet& points, const CollocationSet& probes,
                                   const TimeGrid& grid, GradMode mode, double fd_step, double gamma) {
  const int d = problem.spatial_dim();
  ResidualSnapshot snap;
  snap.dim = d;
  snap.points = points.spacetime();
  if (mode == GradMode::exact) {
    if (problem.residual_order() > 1) {
      throw ConfigError("exact residual gradients need a first-order residual; use finite_difference");
    }
    exact_residual_derivatives(net, problem, snap.points, snap.r, snap.grad_r, snap.dt_r);
  } else {
    if (!(fd_step > 0.0)) throw ConfigError("fd_step must be positive");
    fd_residual_derivatives(net, problem, snap.points, fd_step, snap.r, snap.grad_r, snap.dt_r);
  }
  for (Eigen::Index j = 0; j < snap.r.size(); ++j) {
    const auto [rho, factor] = density_transform(snap.r[j], gamma);
    snap.r[j] = rho;
    snap.grad_r.col(j) *= factor;
    snap.dt_r[j] *= factor;
  }

  // Slice integrals from equal-measure uniform points only.
  std::vector<double> sum(grid.size(), 0.0);
  std::vector<std::size_t> count(grid.size(), 0);
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (points.origin(j) == sampling::Origin::uniform && points.slice(j) >= 0) {
      sum[points.slice(j)] += snap.r[j] * snap.r[j];
      ++count[points.slice(j)];
    }
  }
  if (!probes.empty()) {
    const Vector pr = residual_values(problem, net, probes.spacetime());
    for (std::size_t j = 0; j < probes.size(); ++j) {
      if (probes.slice(j) < 0) throw ContractError("probe points must sit on slices");
      const double rho = density_transform(pr[j], gamma).first;
      sum[probes.slice(j)] += rho * rho;
      ++count[probes.slice(j)];
    }
  }
  const double volume = problem.domain().volume();
  snap.slice_integral.resize(grid.size());
  for (int k = 0; k < grid.size(); ++k) {
    if (count[k] == 0) {
      throw ConfigError("slice " + std::to_string(k) + " has no uniform points for its integral");
    }
    snap.slice_integral[k] = volume * sum[k] / static_cast<double>(count[k]);
  }
  snap.slice_rate = slice_rates(snap.slice_integral, grid);
  attach_slice_values(snap, grid);
  return snap;
}

// ---- loss_v ---------------------------------------------------------------

LossV loss_v_estimate(const DenseNetwork& pot, const ResidualSnapshot& snap, ParamVector* grad) {
  const int d = snap.dim;
  const JetLayout layout = JetLayout::diagonal(d + 1, d);
  std::vector<Eigen::Index> used;
  for (Eigen::Index j = 0; j < snap.points.cols(); ++j) {
    if (snap.integral_at[j] > 0.0) used.push_back(j);
  }
  LossV loss;
  loss.used = used.size();
  loss.skipped = static_cast<std::size_t>(snap.points.cols()) - used.size();
  if (used.empty()) throw NumericError("velocity loss has no usable points");
  const double inv_n = 1.0 / static_cast<double>(used.size());
  const bool want = grad != nullptr;

  const auto parts = chunked<ChunkResult>(static_cast<Eigen::Index>(used.size()), [&](Eigen::Index b, Eigen::Index e) {
    Matrix z(d + 1, e - b);
    for (Eigen::Index j = b; j < e; ++j) z.col(j - b) = snap.points.col(used[j]);
    ad::JetCache cache;
    const Matrix jets = ad::forward_jets(pot, z, layout, want ? &cache : nullptr);
    ChunkResult out;
    Matrix adj;
    if (want) adj = Matrix::Zero(jets.rows(), jets.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      const Eigen::Index s = used[b + j];
      const double r = snap.r[s];
      double q = 2.0 * snap.dt_r[s] - r * snap.rate_at[s] / snap.integral_at[s];
      for (int i = 0; i < d; ++i) {
        q += 2.0 * snap.grad_r(i, s) * jets(layout.grad_channel(i), j) +
             r * jets(layout.hess_channel(i), j);
      }
      out.sum += q * q;
      if (want) {
        const double c = 2.0 * q * inv_n;
        for (int i = 0; i < d; ++i) {
          adj(layout.grad_channel(i), j) = c * 2.0 * snap.grad_r(i, s);
          adj(layout.hess_channel(i), j) = c * r;
        }
      }
    }
    if (want) {
      out.grad = ad::NetworkGradient::zeros_like(pot);
      ad::backward_jets(pot, cache, adj, *out.grad);
    }
    return out;
  });
  ad::NetworkGradient total;
  if (want) total = ad::NetworkGradient::zeros_like(pot);
  for (const auto& p : parts) {
    loss.value += p.sum;
    if (want) total += *p.grad;
  }
  loss.value *= inv_n;
  if (want) *grad = total.flatten();
  return loss;
}

}  // namespace msm::training
