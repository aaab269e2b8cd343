#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "msm/autodiff/network.hpp"
#include "msm/flow/flow.hpp"
#include "msm/metrics/metrics.hpp"
#include "msm/pde/problem.hpp"
#include "msm/sampling/sampling.hpp"

namespace msm::training {

using ad::DenseNetwork;
using ad::Matrix;
using ad::ParamVector;
using ad::Vector;
using sampling::CollocationSet;
using sampling::TimeGrid;

enum class GradMode { exact, finite_difference };
const char* grad_mode_name(GradMode m);

struct TrainConfig {
  std::vector<int> hidden = {64, 64, 64};
  int M = 5;
  int M1 = 1500;
  int M2 = 1000;
  int M_final = 1500;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double ic_weight = 1.0;  // beta_1
  double bc_weight = 1.0;  // beta_2
  std::size_t batch_size = 0;  // 0: full batch

  std::size_t N = 1000;
  std::size_t N0 = 500;
  std::size_t Nb = 400;
  std::size_t N1_first = 1000;
  std::size_t N1 = 300;
  int Nt = 11;
  std::size_t joint_extra = 0;      // extra space-time uniform points added to per-slice S
  std::size_t probe_per_slice = 0;  // uniform points per slice used only for the slice integrals
  std::size_t pinn_budget = 0;      // PINN points per slice (joint mode: times Nt); 0 = N + sum N1

  pde::InitialStrategy initial_strategy = pde::InitialStrategy::uniform;
  double uniform_fraction = 0.2;
  pde::SetMode set_mode = pde::SetMode::per_slice;
  std::string uniform_mix = "retain_uniform";
  double gamma = 1.0;  // sampling density proportional to r^(2 gamma)

  GradMode grad_mode = GradMode::finite_difference;
  double fd_step = 1e-3;
  int substeps = 5;

  std::uint64_t seed = 0;

  /// Throws ConfigError on invalid combinations.
  void validate() const;
  std::size_t n1_at(int iteration) const { return iteration == 1 ? N1_first : N1; }
  std::size_t effective_pinn_budget() const;

  bool operator==(const TrainConfig&) const = default;
};

/// Evaluation lattice sizes.
struct EvalSpec {
  int nodes_per_axis = 101;
  int n_times = 11;
  std::size_t n_mc = 20000;
  int ac_out_x = 257;
  int ac_out_t = 101;
  std::uint64_t mc_seed = 12345;

  bool operator==(const EvalSpec&) const = default;
};

// ---- Solution field -------------------------------------------------------

/// u_theta at every column of `spacetime` ((d + 1) x P), with the hard constraint applied.
Vector solution_values(const pde::PdeProblem& problem, const DenseNetwork& net, const Matrix& spacetime);
/// PDE residual of u_theta at every column of `spacetime`.
Vector residual_values(const pde::PdeProblem& problem, const DenseNetwork& net, const Matrix& spacetime);

// ---- Losses ---------------------------------------------------------------

struct LossU {
  double total = 0.0;
  double pde = 0.0;
  double ic = 0.0;
  double bc = 0.0;
};

/// Training sets for the solution network.
struct USets {
  CollocationSet pde;
  CollocationSet initial;
  CollocationSet boundary;
};

/// Precomputed inputs of loss_u for a fixed set of points.
class LossUData {
 public:
  LossUData(const pde::PdeProblem& problem, const USets& sets, double ic_weight, double bc_weight);

  const pde::PdeProblem& problem() const { return problem_; }
  std::size_t pde_points() const { return static_cast<std::size_t>(pde_.cols()); }

  /// Loss value, and the gradient with respect to the network parameters when
  /// `grad` is non-null. `subset` restricts the PDE term to those columns.
  LossU evaluate(const DenseNetwork& net, ParamVector* grad,
                 const std::vector<Eigen::Index>* subset = nullptr) const;

 private:
  const pde::PdeProblem& problem_;
  Matrix pde_;
  Matrix ic_;
  Vector ic_target_;
  Matrix bc_;
  Vector bc_target_;
  double ic_weight_;
  double bc_weight_;
};

/// mean r^2 over S + beta_1 mean IC misfit^2 + beta_2 mean BC misfit^2. The IC and BC
/// terms are dropped when the problem carries a hard constraint.
LossU loss_u_estimate(const DenseNetwork& net, const pde::PdeProblem& problem, const USets& sets,
                      double ic_weight, double bc_weight);

/// Frozen residual information that drives the velocity loss.
struct ResidualSnapshot {
  int dim = 0;
  Matrix points;      // (d + 1) x P space-time coordinates
  Vector r;           // rho = sign(r) |r|^gamma
  Matrix grad_r;      // d x P
  Vector dt_r;
  std::vector<double> slice_integral;  // I_k
  std::vector<double> slice_rate;      // R_k
  Vector integral_at;  // I interpolated to each point's time
  Vector rate_at;      // R interpolated to each point's time
};

/// Difference quotients of `integral` on `grid`: central inside, one-sided at the ends.
std::vector<double> slice_rates(const std::vector<double>& integral, const TimeGrid& grid);

/// Linear interpolation of per-slice values at time t.
double interpolate_slices(const std::vector<double>& values, const TimeGrid& grid, double t);

/// Fills integral_at / rate_at from the per-slice arrays and the point times.
void attach_slice_values(ResidualSnapshot& snap, const TimeGrid& grid);

/// r, grad r, dr/dt at every point of `points`; I_k from the uniform per-slice points
/// of `points` plus every point of `probes`; R_k by difference quotients.
/// Exact mode requires a first-order residual.
ResidualSnapshot residual_snapshot(const DenseNetwork& net, const pde::PdeProblem& problem,
                                   const CollocationSet& points, const CollocationSet& probes,
                                   const TimeGrid& grid, GradMode mode, double fd_step,
                                   double gamma = 1.0);

struct LossV {
  double value = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;  // points on slices with I <= 0
};

/// mean of (2 r_t + 2 grad r . grad phi + r lap phi - r R / I)^2 over the snapshot points.
/// Reads only the snapshot and the potential network.
LossV loss_v_estimate(const DenseNetwork& pot, const ResidualSnapshot& snap, ParamVector* grad = nullptr);

// ---- Optimizer ------------------------------------------------------------

struct AdamState {
  Vector m;
  Vector v;
  long step = 0;

  static AdamState zeros(Eigen::Index n);
};

void adam_step(ParamVector& params, const ParamVector& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps);

// ---- Phases ---------------------------------------------------------------

struct PhaseHistory {
  std::vector<double> loss;
};

/// Full-batch (or mini-batch when batch_size > 0) Adam on loss_u. Throws NumericError
/// with the epoch, loss and gradient norm if the loss or gradient becomes non-finite.
PhaseHistory train_u(DenseNetwork& net, const pde::PdeProblem& problem, const USets& sets,
                     const TrainConfig& config, int epochs, std::uint64_t seed);

PhaseHistory train_v(DenseNetwork& pot, const ResidualSnapshot& snap, const TrainConfig& config,
                     int epochs);

// ---- Runs -----------------------------------------------------------------

struct IterationRecord {
  int iteration = 0;
  double loss_u = 0.0;
  double loss_v = 0.0;
  std::size_t pde_points = 0;
  std::size_t added = 0;
  std::size_t discarded = 0;  // (point, slice) pairs outside the domain
  std::size_t skipped_v = 0;
  metrics::ErrorPair errors;
  std::optional<double> adaptive_band_fraction;
  std::optional<double> uniform_band_fraction;
};

struct RunResult {
  std::string problem;
  std::string method;
  std::uint64_t seed = 0;
  DenseNetwork u_net;
  std::optional<DenseNetwork> potential;
  USets sets;
  std::vector<IterationRecord> iterations;
  std::vector<flow::FlowTrajectory> trajectories;
  std::vector<double> u_history;
  std::vector<double> v_history;
  metrics::ErrorPair final_errors;
  double final_loss_u = 0.0;
  std::optional<double> front_error;
};

/// Errors of u_theta against the problem's reference (exact solution, the Allen-Cahn
/// reference lattice, or weighted Monte Carlo in high dimension).
metrics::ErrorPair evaluate_errors(const pde::PdeProblem& problem, const DenseNetwork& net,
                                   const EvalSpec& eval);

/// Fraction of points of `set` with the given origin lying within `band` of the
/// problem's moving feature, averaged over slices. Empty when the problem has none.
std::optional<double> band_fraction(const pde::PdeProblem& problem, const CollocationSet& set,
                                    sampling::Origin origin, double band, const TimeGrid& grid);

/// The alternating loop: train u, snapshot, train phi, move new samples, grow S; then a
/// final u phase. If a phase throws NumericError and `abort_dir` is non-empty, the
/// networks, sets and failure context are written there before the error propagates.
RunResult msm_run(const pde::PdeProblem& problem, const TrainConfig& config, const EvalSpec& eval,
                  const std::filesystem::path& abort_dir = {});

/// Vanilla baseline on uniform sets matching the MSM point budget and total u epochs.
RunResult pinn_run(const pde::PdeProblem& problem, const TrainConfig& config, const EvalSpec& eval,
                   const std::filesystem::path& abort_dir = {});

struct ExportOptions {
  bool checkpoints = true;
  bool sets = false;
  bool trajectories = false;

  bool operator==(const ExportOptions&) const = default;
};

/// metrics.json (no timings), checkpoints/, sets/, trajectories/ under `dir`.
nlohmann::json run_metrics_json(const RunResult& result);
void write_run(const RunResult& result, const std::filesystem::path& dir, const TimeGrid& grid,
               const ExportOptions& options);

}  // namespace msm::training
