#pragma once

#include <utility>
#include <vector>

#include "msm/autodiff/network.hpp"

namespace msm::ad {

/// Which derivative channels a batched jet evaluation carries.
///
/// Channel 0 is the value, channels 1..inputs are first derivatives, and the
/// remaining channels are the requested second derivatives (p, q) with p <= q.
struct JetLayout {
  int inputs = 0;
  bool with_gradient = true;
  std::vector<std::pair<int, int>> hess_pairs;

  int channels() const {
    return 1 + (with_gradient ? inputs : 0) + static_cast<int>(hess_pairs.size());
  }
  int grad_channel(int i) const { return 1 + i; }
  int hess_channel(int k) const { return 1 + inputs + k; }
  /// Index into hess_pairs for (p, q), or -1.
  int find_pair(int p, int q) const;

  static JetLayout values(int inputs);
  static JetLayout first_order(int inputs);
  /// First derivatives plus d²/dx_i² for i < count.
  static JetLayout diagonal(int inputs, int count);
  static JetLayout full(int inputs);
};

/// Intermediates recorded by a forward pass, consumed by `backward_jets`.
struct JetCache {
  JetLayout layout;
  Eigen::Index points = 0;
  std::vector<Matrix> inputs;  // per layer: width_in x (channels * points)
  std::vector<Matrix> pre;     // hidden layers: width_out x (channels * points)
  std::vector<Matrix> act;     // hidden layers: tanh of the value block
};

/// Exact value/gradient/Hessian propagation through every affine + tanh layer.
///
/// `points` is inputs x P. Returns channels x P. If `cache` is non-null it receives
/// what the reverse sweep needs.
Matrix forward_jets(const DenseNetwork& net, const Matrix& points, const JetLayout& layout,
                    JetCache* cache = nullptr);

/// Reverse sweep through the jet propagation: accumulates d(loss)/d(params) into `grad`
/// given d(loss)/d(channel) for every output channel (channels x P).
void backward_jets(const DenseNetwork& net, const JetCache& cache, const Matrix& adjoint,
                   NetworkGradient& grad);

/// Network values at every column of `points`.
Vector forward_values(const DenseNetwork& net, const Matrix& points);

}  // namespace msm::ad
