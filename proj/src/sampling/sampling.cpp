#include "msm/sampling/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "msm/errors.hpp"
#include "msm/io.hpp"
#include "msm/sampling/rng.hpp"

namespace msm::sampling {

TimeGrid::TimeGrid(int n_slices, double horizon) {
  if (n_slices < 2) throw ConfigError("time grid needs at least two slices");
  if (!(horizon > 0.0)) throw ConfigError("time horizon must be positive");
  times.resize(n_slices);
  for (int k = 0; k < n_slices; ++k) times[k] = horizon * k / (n_slices - 1);
  times.back() = horizon;
}

const char* origin_name(Origin o) {
  switch (o) {
    case Origin::uniform: return "uniform";
    case Origin::uniform_spacetime: return "uniform_spacetime";
    case Origin::adaptive: return "adaptive";
    case Origin::initial: return "initial";
    case Origin::boundary: return "boundary";
  }
  return "unknown";
}

void CollocationSet::add(std::span<const double> x, double t, int slice, Origin origin,
                         int iteration) {
  if (static_cast<int>(x.size()) != dim_) throw ContractError("point dimension mismatch");
  coords_.insert(coords_.end(), x.begin(), x.end());
  t_.push_back(t);
  slice_.push_back(slice);
  origin_.push_back(origin);
  iteration_.push_back(iteration);
}

void CollocationSet::append(const CollocationSet& other) {
  if (other.empty()) return;
  if (other.dim_ != dim_) throw ContractError("cannot append sets of different dimension");
  coords_.insert(coords_.end(), other.coords_.begin(), other.coords_.end());
  t_.insert(t_.end(), other.t_.begin(), other.t_.end());
  slice_.insert(slice_.end(), other.slice_.begin(), other.slice_.end());
  origin_.insert(origin_.end(), other.origin_.begin(), other.origin_.end());
  iteration_.insert(iteration_.end(), other.iteration_.begin(), other.iteration_.end());
}

std::size_t CollocationSet::count(Origin origin) const {
  return static_cast<std::size_t>(std::count(origin_.begin(), origin_.end(), origin));
}

Eigen::MatrixXd CollocationSet::spacetime() const {
  Eigen::MatrixXd m(dim_ + 1, static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) {
    for (int k = 0; k < dim_; ++k) m(k, i) = coords_[i * dim_ + k];
    m(dim_, i) = t_[i];
  }
  return m;
}

std::string CollocationSet::to_csv() const {
  std::ostringstream out;
  for (int k = 0; k < dim_; ++k) out << 'x' << (k + 1) << ',';
  out << "t,origin,iteration\n";
  for (std::size_t i = 0; i < size(); ++i) {
    for (int k = 0; k < dim_; ++k) out << io::format_double(coords_[i * dim_ + k]) << ',';
    out << io::format_double(t_[i]) << ',' << origin_name(origin_[i]) << ',' << iteration_[i]
        << '\n';
  }
  return out.str();
}

Points sample_uniform_box(const pde::Box& box, std::size_t n, std::uint64_t seed) {
  const int d = box.dim();
  if (d == 0) throw ConfigError("empty box");
  for (int i = 0; i < d; ++i) {
    if (!(box.lo[i] < box.hi[i])) throw ConfigError("degenerate box");
  }
  Rng rng(seed);
  Points p(d, static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    for (int i = 0; i < d; ++i) p(i, j) = rng.uniform(box.lo[i], box.hi[i]);
  }
  return p;
}

namespace {

void reject_if_starved(std::size_t proposals, std::size_t accepted, const RejectionLimits& limits) {
  if (proposals >= limits.max_proposals &&
      static_cast<double>(accepted) < limits.min_acceptance * static_cast<double>(proposals)) {
    throw ConfigError("rejection sampler acceptance rate " +
                      std::to_string(static_cast<double>(accepted) / proposals) +
                      " is too low; this density needs an MCMC sampler, which is not provided");
  }
}

}  // namespace

Points sample_proportional(const Density& density, const pde::Box& box, std::size_t n,
                           std::uint64_t seed, const RejectionLimits& limits) {
  const int d = box.dim();
  Rng probe_rng(derive_seed(seed, {1}));
  std::vector<double> x(d);
  double peak = 0.0;
  for (std::size_t k = 0; k < limits.probes; ++k) {
    for (int i = 0; i < d; ++i) x[i] = probe_rng.uniform(box.lo[i], box.hi[i]);
    const double v = density(x);
    if (!(v >= 0.0) || !std::isfinite(v)) throw NumericError("density is negative or non-finite");
    peak = std::max(peak, v);
  }
  if (!(peak > 0.0)) throw ConfigError("density vanishes on every probe");
  const double envelope = limits.bound_factor * peak;

  Rng rng(derive_seed(seed, {2}));
  Points out(d, static_cast<Eigen::Index>(n));
  std::size_t accepted = 0;
  std::size_t proposals = 0;
  while (accepted < n) {
    for (int i = 0; i < d; ++i) x[i] = rng.uniform(box.lo[i], box.hi[i]);
    const double u = rng.uniform() * envelope;
    ++proposals;
    if (u < density(x)) {
      for (int i = 0; i < d; ++i) out(i, accepted) = x[i];
      ++accepted;
    }
    reject_if_starved(proposals, accepted, limits);
  }
  return out;
}

Points sample_separable(std::span<const std::function<double(double)>> factors, const pde::Box& box,
                        std::size_t n, std::uint64_t seed, const RejectionLimits& limits) {
  const int d = box.dim();
  if (static_cast<int>(factors.size()) != d) throw ContractError("one factor per axis required");
  Points out(d, static_cast<Eigen::Index>(n));
  for (int i = 0; i < d; ++i) {
    const pde::Box axis({box.lo[i]}, {box.hi[i]});
    const auto& f = factors[i];
    const Points col = sample_proportional([&f](std::span<const double> x) { return f(x[0]); },
                                           axis, n, derive_seed(seed, {static_cast<std::uint64_t>(i)}),
                                           limits);
    out.row(i) = col.row(0);
  }
  return out;
}

Points sample_initial(const pde::PdeProblem& problem, pde::InitialStrategy strategy, std::size_t n,
                      std::uint64_t seed) {
  const pde::Box& box = problem.domain();
  switch (strategy) {
    case pde::InitialStrategy::uniform:
      return sample_uniform_box(box, n, seed);
    case pde::InitialStrategy::prop_u0:
      if (auto factors = problem.initial_factors()) {
        return sample_separable(*factors, box, n, seed);
      }
      return sample_proportional(
          [&problem](std::span<const double> x) { return std::max(0.0, problem.initial_value(x)); },
          box, n, seed);
    case pde::InitialStrategy::prop_grad_u0_sq:
      return sample_proportional(
          [&problem](std::span<const double> x) { return problem.initial_gradient_sq(x); }, box, n,
          seed);
  }
  throw ContractError("unknown initial strategy");
}

CollocationSet assemble_initial_set(const pde::PdeProblem& problem, pde::InitialStrategy strategy,
                                    std::size_t n0, double uniform_fraction, std::uint64_t seed) {
  if (!(uniform_fraction >= 0.0 && uniform_fraction <= 1.0)) {
    throw ConfigError("uniform_fraction must lie in [0, 1]");
  }
  const int d = problem.spatial_dim();
  CollocationSet set(d);
  std::size_t n_uniform = static_cast<std::size_t>(std::floor(uniform_fraction * n0));
  if (strategy == pde::InitialStrategy::uniform) n_uniform = n0;
  const Points u = sample_uniform_box(problem.domain(), n_uniform, derive_seed(seed, {10}));
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    set.add({u.col(j).data(), static_cast<std::size_t>(d)}, 0.0, 0, Origin::uniform);
  }
  if (n0 > n_uniform) {
    const Points a = sample_initial(problem, strategy, n0 - n_uniform, derive_seed(seed, {11}));
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      set.add({a.col(j).data(), static_cast<std::size_t>(d)}, 0.0, 0, Origin::initial);
    }
  }
  return set;
}

CollocationSet assemble_boundary_set(const pde::PdeProblem& problem, std::size_t n_b,
                                     const TimeGrid& grid, std::uint64_t seed) {
  const pde::Box& box = problem.domain();
  const int d = box.dim();
  const int faces = 2 * d;
  // Face f fixes axis f / 2 at lo (even) or hi (odd).
  std::vector<double> measure(faces);
  for (int f = 0; f < faces; ++f) {
    double m = 1.0;
    for (int i = 0; i < d; ++i) {
      if (i != f / 2) m *= box.extent(i);
    }
    measure[f] = m;
  }
  std::vector<int> face_of(n_b);
  Rng rng(seed);
  if (problem.stratified_boundary()) {
    for (std::size_t j = 0; j < n_b; ++j) face_of[j] = static_cast<int>(j % faces);
  } else {
    double total = 0.0;
    for (double m : measure) total += m;
    for (std::size_t j = 0; j < n_b; ++j) {
      double u = rng.uniform() * total;
      int f = 0;
      while (f + 1 < faces && u >= measure[f]) u -= measure[f++];
      face_of[j] = f;
    }
  }
  std::vector<double> spatial(n_b * d);
  for (std::size_t j = 0; j < n_b; ++j) {
    const int f = face_of[j];
    for (int i = 0; i < d; ++i) {
      double v;
      if (i == f / 2) {
        v = (f % 2 == 0) ? box.lo[i] : box.hi[i];
      } else {
        v = rng.uniform(box.lo[i], box.hi[i]);
      }
      spatial[j * d + i] = v;
    }
  }
  CollocationSet set(d);
  for (int k = 0; k < grid.size(); ++k) {
    for (std::size_t j = 0; j < n_b; ++j) {
      set.add({spatial.data() + j * d, static_cast<std::size_t>(d)}, grid[k], k, Origin::boundary);
    }
  }
  return set;
}

CollocationSet assemble_pde_set(const pde::PdeProblem& problem, std::size_t n, const TimeGrid& grid,
                                pde::SetMode mode, std::uint64_t seed) {
  const int d = problem.spatial_dim();
  CollocationSet set(d);
  if (mode == pde::SetMode::per_slice) {
    const Points p = sample_uniform_box(problem.domain(), n, seed);
    for (int k = 0; k < grid.size(); ++k) {
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        set.add({p.col(j).data(), static_cast<std::size_t>(d)}, grid[k], k, Origin::uniform);
      }
    }
    return set;
  }
  std::vector<double> lo = problem.domain().lo;
  std::vector<double> hi = problem.domain().hi;
  lo.push_back(0.0);
  hi.push_back(grid.horizon());
  const Points p = sample_uniform_box(pde::Box(lo, hi), n, seed);
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    set.add({p.col(j).data(), static_cast<std::size_t>(d)}, p(d, j), -1, Origin::uniform_spacetime);
  }
  return set;
}

}  // namespace msm::sampling
