#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace msm::verify {

/// One measured quantity compared against its tolerance.
struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct SuiteResult {
  std::string suite;
  std::vector<Check> checks;
  double seconds = 0.0;

  bool passed() const;
};

/// autodiff, flow, transport, losses.
const std::vector<std::string>& suite_names();

/// Runs one suite. Throws ConfigError for an unknown name.
SuiteResult run_suite(const std::string& name);

nlohmann::json to_json(const std::vector<SuiteResult>& results);

// ---- Individual checks, shared with the acceptance harness ----------------

/// Input gradients and Hessians of `networks` random small networks against central
/// differences; normwise relative error per network, worst case reported.
Check input_jet_oracle(int networks, std::uint64_t seed);
/// Parameter gradients of a closure reading values, gradients and Hessians of two
/// networks, against central differences of the closure value.
Check through_jet_param_oracle(int trials, std::uint64_t seed);
/// Parameter gradient of the batched PDE loss of every benchmark against central differences.
Check loss_u_gradient_oracle(std::uint64_t seed);
/// Parameter gradient of the velocity loss against central differences.
Check loss_v_gradient_oracle(std::uint64_t seed);
/// Batched jets against single-point jets.
Check batched_jet_consistency(std::uint64_t seed);

/// Velocity and divergence of a potential network against differences of the network.
Check velocity_oracle(std::uint64_t seed);
Check divergence_oracle(std::uint64_t seed);
/// x' = x from 0.5 over [0, 1] with 100 RK4 steps: position error against 0.5 e.
Check linear_flow_position();
/// Same flow: log-determinant error against 1.
Check linear_flow_logdet();
/// Smallest error ratio per step halving of RK4 on x' = x.
Check rk4_order();
/// Tracked density p0(x0) exp(-logdet) against the closed form for a diagonal linear flow.
Check change_of_variables();

/// E[X_1^2] under x' = x from a standard normal, against e^2.
Check pushforward_linear(std::size_t particles, std::uint64_t seed);
/// E[first coordinate] under a rigid rotation of a shifted normal, against cos 1.
Check pushforward_rotation(std::size_t particles, std::uint64_t seed);

/// Worst |r| of the closed-form solutions at 100 random points per benchmark.
Check residual_annihilation(std::uint64_t seed);
/// Velocity loss of r = e^t, grad r = 0 with a zero potential.
Check loss_v_algebraic_zero();
/// Velocity loss with only a unit time derivative: 4.
Check loss_v_unit_rate();
/// Exact and finite-difference residual derivatives on rotation.
Check snapshot_modes_agree(std::uint64_t seed);

}  // namespace msm::verify
