#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "msm/autodiff/jet_batch.hpp"
#include "msm/autodiff/network.hpp"
#include "msm/autodiff/tape.hpp"

namespace msm::ad {

/// Jet whose components are tape leaves, so a closure can differentiate through
/// input derivatives of a network. `hess(p, q)` and `hess(q, p)` share one leaf.
struct VarJet {
  Var value;
  std::vector<Var> grad;
  std::vector<Var> hess;  // row-major n x n
  int inputs = 0;

  const Var& hess_at(int p, int q) const { return hess[p * inputs + q]; }
};

/// Records network evaluations made by a loss closure so the scalar result can be
/// differentiated with respect to every network parameter.
class GradientRecorder {
 public:
  explicit GradientRecorder(std::span<const DenseNetwork> nets);

  Tape& tape() { return tape_; }

  /// Network output at `input` as a differentiable leaf.
  Var value(int net, std::span<const double> input);
  /// Full input jet at `input`; every component is differentiable.
  VarJet jet(int net, std::span<const double> input);

  /// Runs the reverse sweep from `loss` and returns one gradient per network.
  std::vector<NetworkGradient> gradients(const Var& loss);

 private:
  struct Record {
    int net;
    std::unique_ptr<JetCache> cache;
    std::vector<Var> leaves;  // one per output channel
    std::vector<double> input;
  };

  Record& evaluate(int net, std::span<const double> input, const JetLayout& layout);

  std::span<const DenseNetwork> nets_;
  Tape tape_;
  std::vector<Record> records_;
};

using LossClosure = std::function<Var(GradientRecorder&)>;

struct ParamGradient {
  double loss = 0.0;
  /// Concatenated per-network `ParamVector` layouts, in the order of `nets`.
  ParamVector gradient;
};

/// Exact reverse-mode gradient of a scalar built from network values and input jets.
/// Throws `NumericError` naming the offending input if any recorded quantity is non-finite.
ParamGradient param_gradient(const LossClosure& closure, std::span<const DenseNetwork> nets);

}  // namespace msm::ad
