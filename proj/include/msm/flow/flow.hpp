#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msm/autodiff/network.hpp"
#include "msm/pde/problem.hpp"
#include "msm/sampling/sampling.hpp"

namespace msm::flow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// phi_eta over (x, t); the sample velocity is its spatial gradient.
struct VelocityPotential {
  ad::DenseNetwork net;
};

Vector velocity_at(const VelocityPotential& pot, std::span<const double> x, double t);
double divergence_at(const VelocityPotential& pot, std::span<const double> x, double t);

/// A velocity field evaluated on a batch of points at one time.
class VelocityField {
 public:
  virtual ~VelocityField() = default;
  virtual int dim() const = 0;
  /// `x` is dim x P. Fills `v` (dim x P) and, when non-null, `div` (P).
  virtual void evaluate(const Matrix& x, double t, Matrix& v, Vector* div) const = 0;
};

/// v = grad phi from a potential network.
class PotentialVelocity final : public VelocityField {
 public:
  explicit PotentialVelocity(const VelocityPotential& pot);
  int dim() const override { return dim_; }
  void evaluate(const Matrix& x, double t, Matrix& v, Vector* div) const override;

 private:
  const VelocityPotential& pot_;
  int dim_;
};

/// Closed-form field for tests and verification.
class AnalyticVelocity final : public VelocityField {
 public:
  using Fn = std::function<void(std::span<const double> x, double t, std::span<double> v)>;
  using DivFn = std::function<double(std::span<const double> x, double t)>;

  AnalyticVelocity(int dim, Fn velocity, DivFn divergence);
  int dim() const override { return dim_; }
  void evaluate(const Matrix& x, double t, Matrix& v, Vector* div) const override;

 private:
  int dim_;
  Fn velocity_;
  DivFn divergence_;
};

struct FlowTrajectory {
  Matrix initial;                  // dim x P
  std::vector<Matrix> positions;   // per slice, dim x P
  Matrix logdet;                   // P x slices; empty unless tracked
  std::vector<std::vector<char>> alive;  // per slice, P flags

  int points() const { return static_cast<int>(initial.cols()); }
  int slices() const { return static_cast<int>(positions.size()); }
  std::size_t discarded() const;

  /// Columns point_id, slice, t, x1..xd, alive, logdet.
  std::string to_csv(const sampling::TimeGrid& grid) const;
};

/// Classical RK4 with `substeps` steps per grid interval. The log-det channel
/// integrates div v along each path on the same stages. Points outside the closed
/// `domain` at a slice are marked dead from that slice on and are no longer moved.
/// Throws NumericError naming the point and slice if a position becomes non-finite.
FlowTrajectory evolve_samples(const VelocityField& field, const Matrix& x0,
                              const sampling::TimeGrid& grid, int substeps,
                              const pde::Box& domain, bool track_logdet);

/// Same integrator from t = 0 to t = t_end with `steps` steps and no domain test.
/// Returns positions; `logdet` receives log det of the flow Jacobian when non-null.
Matrix integrate_flow(const VelocityField& field, const Matrix& x0, double t_end, int steps,
                      Vector* logdet);

struct PushforwardResult {
  double mc_estimate = 0.0;
  double analytic = 0.0;
  double std_error = 0.0;
};

/// E[test(X_t)] over particles `x0` drawn from p0, compared with the given analytic value.
PushforwardResult pushforward_check(const VelocityField& field, const Matrix& x0,
                                    const std::function<double(std::span<const double>)>& test,
                                    double t, int steps, double analytic);

/// Trapezoid integral of test * density over a box of dimension 1 or 2.
double integrate_on_box(const std::function<double(std::span<const double>)>& integrand,
                        const pde::Box& box, int nodes_per_axis);

}  // namespace msm::flow
