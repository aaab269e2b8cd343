#include "msm/autodiff/param_gradient.hpp"

#include <cmath>
#include <sstream>

#include "msm/errors.hpp"

namespace msm::ad {
namespace {

std::string describe(std::span<const double> input) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < input.size(); ++i) os << (i ? ", " : "") << input[i];
  os << ")";
  return os.str();
}

}  // namespace

GradientRecorder::GradientRecorder(std::span<const DenseNetwork> nets) : nets_(nets) {}

GradientRecorder::Record& GradientRecorder::evaluate(int net, std::span<const double> input,
                                                     const JetLayout& layout) {
  if (net < 0 || net >= static_cast<int>(nets_.size())) {
    throw ContractError("network index out of range");
  }
  const DenseNetwork& n = nets_[net];
  if (static_cast<int>(input.size()) != n.input_dim()) {
    throw ContractError("input length does not match network input dimension");
  }
  Matrix x(n.input_dim(), 1);
  for (int i = 0; i < n.input_dim(); ++i) x(i, 0) = input[i];

  Record rec;
  rec.net = net;
  rec.cache = std::make_unique<JetCache>();
  rec.input.assign(input.begin(), input.end());
  const Matrix out = forward_jets(n, x, layout, rec.cache.get());
  if (!out.allFinite()) {
    throw NumericError("non-finite network jet at " + describe(input));
  }
  for (Eigen::Index c = 0; c < out.rows(); ++c) rec.leaves.push_back(tape_.variable(out(c, 0)));
  records_.push_back(std::move(rec));
  return records_.back();
}

Var GradientRecorder::value(int net, std::span<const double> input) {
  return evaluate(net, input, JetLayout::values(static_cast<int>(input.size()))).leaves[0];
}

VarJet GradientRecorder::jet(int net, std::span<const double> input) {
  const int n = static_cast<int>(input.size());
  const JetLayout layout = JetLayout::full(n);
  const Record& rec = evaluate(net, input, layout);
  VarJet j;
  j.inputs = n;
  j.value = rec.leaves[0];
  for (int i = 0; i < n; ++i) j.grad.push_back(rec.leaves[layout.grad_channel(i)]);
  j.hess.resize(static_cast<std::size_t>(n) * n);
  for (std::size_t k = 0; k < layout.hess_pairs.size(); ++k) {
    const auto [p, q] = layout.hess_pairs[k];
    const Var& leaf = rec.leaves[layout.hess_channel(static_cast<int>(k))];
    j.hess[p * n + q] = leaf;
    j.hess[q * n + p] = leaf;
  }
  return j;
}

std::vector<NetworkGradient> GradientRecorder::gradients(const Var& loss) {
  if (!std::isfinite(loss.value())) throw NumericError("non-finite loss value");
  tape_.backward(loss);
  std::vector<NetworkGradient> out;
  out.reserve(nets_.size());
  for (const auto& n : nets_) out.push_back(NetworkGradient::zeros_like(n));
  for (const Record& rec : records_) {
    Matrix adj(static_cast<Eigen::Index>(rec.leaves.size()), 1);
    for (std::size_t c = 0; c < rec.leaves.size(); ++c) adj(c, 0) = tape_.adjoint(rec.leaves[c]);
    if (!adj.allFinite()) throw NumericError("non-finite adjoint at " + describe(rec.input));
    backward_jets(nets_[rec.net], *rec.cache, adj, out[rec.net]);
  }
  return out;
}

ParamGradient param_gradient(const LossClosure& closure, std::span<const DenseNetwork> nets) {
  GradientRecorder rec(nets);
  const Var loss = closure(rec);
  const auto grads = rec.gradients(loss);
  Eigen::Index total = 0;
  for (const auto& n : nets) total += n.parameter_count();
  ParamGradient result;
  result.loss = loss.value();
  result.gradient.resize(total);
  Eigen::Index offset = 0;
  for (const auto& g : grads) {
    const ParamVector flat = g.flatten();
    result.gradient.segment(offset, flat.size()) = flat;
    offset += flat.size();
  }
  return result;
}

}  // namespace msm::ad
