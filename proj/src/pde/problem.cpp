#include "msm/pde/problem.hpp"

#include <string>

#include "msm/errors.hpp"

namespace msm::pde {

FieldJet<double> field_jet(const ad::InputJet& jet, int spatial_dim) {
  if (jet.grad.size() != spatial_dim + 1 || jet.hess.rows() != spatial_dim + 1) {
    throw ContractError("input jet does not cover (x, t) for the requested dimension");
  }
  FieldJet<double> f;
  f.dim = spatial_dim;
  f.value = jet.value;
  f.dt = jet.grad[spatial_dim];
  for (int i = 0; i < spatial_dim; ++i) {
    f.dx[i] = jet.grad[i];
    f.dxx[i] = jet.hess(i, i);
  }
  return f;
}

Box::Box(std::vector<double> lo_, std::vector<double> hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != hi.size() || lo.empty()) throw ConfigError("box bounds have mismatched length");
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!(lo[i] < hi[i])) throw ConfigError("degenerate box along axis " + std::to_string(i));
  }
}

double Box::volume() const {
  double v = 1.0;
  for (int i = 0; i < dim(); ++i) v *= extent(i);
  return v;
}

bool Box::contains(std::span<const double> x) const {
  for (int i = 0; i < dim(); ++i) {
    if (!(x[i] >= lo[i] && x[i] <= hi[i])) return false;
  }
  return true;
}

PdeProblem::PdeProblem(std::string name, Box domain, double horizon,
                       std::map<std::string, double> coefficients, int residual_order)
    : name_(std::move(name)),
      domain_(std::move(domain)),
      horizon_(horizon),
      coefficients_(std::move(coefficients)),
      residual_order_(residual_order) {
  if (!(horizon_ > 0.0)) throw ConfigError("horizon must be positive");
  if (domain_.dim() > kMaxSpatialDim) throw ConfigError("spatial dimension too large");
}

double PdeProblem::coefficient(const std::string& key) const {
  const auto it = coefficients_.find(key);
  if (it == coefficients_.end()) throw ContractError(name_ + " has no coefficient " + key);
  return it->second;
}

double PdeProblem::exact(std::span<const double>, double) const {
  throw ContractError(name_ + " has no closed-form solution");
}

FieldJet<double> PdeProblem::exact_jet(std::span<const double>, double) const {
  throw ContractError(name_ + " has no closed-form solution");
}

ad::InputJet PdeProblem::exact_input_jet(std::span<const double>, double) const {
  throw ContractError(name_ + " has no closed-form solution");
}

FieldJet<double> PdeProblem::constrain(const FieldJet<double>& raw, std::span<const double>,
                                       double) const {
  return raw;
}

FieldJet<ad::Var> PdeProblem::constrain(const FieldJet<ad::Var>& raw, std::span<const ad::Var>,
                                        const ad::Var&) const {
  return raw;
}

}  // namespace msm::pde
