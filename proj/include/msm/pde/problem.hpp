#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msm/autodiff/network.hpp"
#include "msm/autodiff/tape.hpp"

namespace msm::pde {

inline constexpr int kMaxSpatialDim = 6;

/// The derivatives of u(x, t) that residual operators read: value, time derivative,
/// spatial gradient and the spatial Hessian diagonal.
template <class T>
struct FieldJet {
  int dim = 0;
  T value{};
  T dt{};
  std::array<T, kMaxSpatialDim> dx{};
  std::array<T, kMaxSpatialDim> dxx{};

  T laplacian() const {
    T sum = dxx[0];
    for (int i = 1; i < dim; ++i) sum = sum + dxx[i];
    return sum;
  }
};

/// Reads the FieldJet entries out of a full input jet over (x_1..x_d, t).
FieldJet<double> field_jet(const ad::InputJet& jet, int spatial_dim);

/// Axis-aligned box [lo_i, hi_i].
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  Box() = default;
  Box(std::vector<double> lo_, std::vector<double> hi_);
  static Box cube(int dim, double lo, double hi) {
    return Box(std::vector<double>(dim, lo), std::vector<double>(dim, hi));
  }

  int dim() const { return static_cast<int>(lo.size()); }
  double extent(int i) const { return hi[i] - lo[i]; }
  double volume() const;
  bool contains(std::span<const double> x) const;
};

enum class InitialStrategy { uniform, prop_u0, prop_grad_u0_sq };
enum class SetMode { per_slice, joint_spacetime };

/// A time-dependent benchmark: domain, horizon, residual operator, initial and
/// boundary data, and optionally a closed-form solution and an output constraint.
class PdeProblem {
 public:
  virtual ~PdeProblem() = default;

  const std::string& name() const { return name_; }
  int spatial_dim() const { return domain_.dim(); }
  int input_dim() const { return spatial_dim() + 1; }
  const Box& domain() const { return domain_; }
  double horizon() const { return horizon_; }
  const std::map<std::string, double>& coefficients() const { return coefficients_; }
  double coefficient(const std::string& key) const;
  /// Highest derivative order of u read by the residual.
  int residual_order() const { return residual_order_; }

  virtual double residual(const FieldJet<double>& u, std::span<const double> x, double t) const = 0;
  virtual ad::Var residual(const FieldJet<ad::Var>& u, std::span<const ad::Var> x,
                           const ad::Var& t) const = 0;

  virtual double initial_value(std::span<const double> x) const = 0;
  virtual double initial_gradient_sq(std::span<const double> x) const = 0;
  virtual double boundary_value(std::span<const double> x, double t) const = 0;

  virtual bool has_exact() const { return false; }
  virtual double exact(std::span<const double> x, double t) const;
  virtual FieldJet<double> exact_jet(std::span<const double> x, double t) const;
  virtual ad::InputJet exact_input_jet(std::span<const double> x, double t) const;

  /// When present, u = constrain(network jet) satisfies initial and boundary data exactly.
  virtual bool has_hard_constraint() const { return false; }
  virtual FieldJet<double> constrain(const FieldJet<double>& raw, std::span<const double> x,
                                     double t) const;
  virtual FieldJet<ad::Var> constrain(const FieldJet<ad::Var>& raw, std::span<const ad::Var> x,
                                      const ad::Var& t) const;

  /// Per-axis factors when u0 is a product of one-dimensional functions.
  virtual std::optional<std::vector<std::function<double(double)>>> initial_factors() const {
    return std::nullopt;
  }

  /// Distance from (x, t) to the moving singular feature, for concentration diagnostics.
  virtual std::optional<double> feature_distance(std::span<const double> x, double t) const {
    (void)x;
    (void)t;
    return std::nullopt;
  }

  virtual InitialStrategy default_initial_strategy() const { return InitialStrategy::uniform; }
  virtual SetMode default_set_mode() const { return SetMode::per_slice; }
  /// Boundary samples split evenly across the 2d faces instead of by face measure.
  virtual bool stratified_boundary() const { return false; }

 protected:
  PdeProblem(std::string name, Box domain, double horizon,
             std::map<std::string, double> coefficients, int residual_order);

 private:
  std::string name_;
  Box domain_;
  double horizon_;
  std::map<std::string, double> coefficients_;
  int residual_order_;
};

/// allen_cahn | rotation | burgers | fokker_planck | advection6d.
std::unique_ptr<PdeProblem> make_problem(const std::string& name);
std::vector<std::string> problem_names();

}  // namespace msm::pde
