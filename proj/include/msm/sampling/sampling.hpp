#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msm/pde/problem.hpp"

namespace msm::sampling {

using Points = Eigen::MatrixXd;  // dim x n, one point per column

/// N_t equally spaced slices t_k = k T / (N_t - 1).
struct TimeGrid {
  std::vector<double> times;

  TimeGrid() = default;
  TimeGrid(int n_slices, double horizon);

  int size() const { return static_cast<int>(times.size()); }
  double operator[](int k) const { return times[k]; }
  double horizon() const { return times.back(); }
};

enum class Origin : std::uint8_t { uniform, uniform_spacetime, adaptive, initial, boundary };
const char* origin_name(Origin o);

/// Tagged space-time points. Points with continuous time carry slice = -1.
class CollocationSet {
 public:
  CollocationSet() = default;
  explicit CollocationSet(int dim) : dim_(dim) {}

  int dim() const { return dim_; }
  std::size_t size() const { return t_.size(); }
  bool empty() const { return t_.empty(); }

  std::span<const double> x(std::size_t i) const { return {coords_.data() + i * dim_, static_cast<std::size_t>(dim_)}; }
  double t(std::size_t i) const { return t_[i]; }
  int slice(std::size_t i) const { return slice_[i]; }
  Origin origin(std::size_t i) const { return origin_[i]; }
  int iteration(std::size_t i) const { return iteration_[i]; }

  void add(std::span<const double> x, double t, int slice, Origin origin, int iteration = 0);
  void append(const CollocationSet& other);

  std::size_t count(Origin origin) const;
  /// (x, t) stacked as a (dim + 1) x size matrix.
  Eigen::MatrixXd spacetime() const;

  /// Columns x1..xd, t, origin, iteration.
  std::string to_csv() const;

 private:
  int dim_ = 0;
  std::vector<double> coords_;
  std::vector<double> t_;
  std::vector<int> slice_;
  std::vector<Origin> origin_;
  std::vector<int> iteration_;
};

/// i.i.d. uniform on `box`. Deterministic in `seed`.
Points sample_uniform_box(const pde::Box& box, std::size_t n, std::uint64_t seed);

using Density = std::function<double(std::span<const double>)>;

struct RejectionLimits {
  std::size_t probes = 100000;
  double bound_factor = 1.2;
  std::size_t max_proposals = 10000000;
  double min_acceptance = 1e-4;
};

/// Rejection sampling against a uniform proposal on `box`. The envelope is
/// `bound_factor` times the largest density seen over `probes` uniform probes.
/// Throws ConfigError when the acceptance rate is below `min_acceptance` after
/// `max_proposals` proposals.
Points sample_proportional(const Density& density, const pde::Box& box, std::size_t n,
                           std::uint64_t seed, const RejectionLimits& limits = {});

/// Density that factors as prod_i f_i(x_i): exact per-axis rejection, so the
/// acceptance rate is the per-axis rate rather than its d-th power.
Points sample_separable(std::span<const std::function<double(double)>> factors,
                        const pde::Box& box, std::size_t n, std::uint64_t seed,
                        const RejectionLimits& limits = {});

/// Initial-condition density draws for `strategy`: u0, |grad u0|^2, or uniform.
Points sample_initial(const pde::PdeProblem& problem, pde::InitialStrategy strategy,
                      std::size_t n, std::uint64_t seed);

/// S0: floor(uniform_fraction * n0) uniform points plus the rest drawn per `strategy`, all at t = 0.
CollocationSet assemble_initial_set(const pde::PdeProblem& problem, pde::InitialStrategy strategy,
                                    std::size_t n0, double uniform_fraction, std::uint64_t seed);

/// S_bdry: n_b points on the boundary of the domain replicated across every slice.
/// Faces are chosen by measure, or split evenly when the problem asks for stratification.
CollocationSet assemble_boundary_set(const pde::PdeProblem& problem, std::size_t n_b,
                                     const TimeGrid& grid, std::uint64_t seed);

/// S: per_slice replicates n spatial points on every slice; joint_spacetime draws n
/// points uniformly on the domain x [0, T].
CollocationSet assemble_pde_set(const pde::PdeProblem& problem, std::size_t n, const TimeGrid& grid,
                                pde::SetMode mode, std::uint64_t seed);

}  // namespace msm::sampling
