#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace msm::ad {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Flat parameter carrier: every weight matrix (row-major, layer order), then every bias.
using ParamVector = Eigen::VectorXd;

/// Fully connected network with tanh on hidden layers and an identity output layer.
///
/// Layer `l` maps `layer_sizes[l]` inputs to `layer_sizes[l+1]` outputs through
/// `weight(l) * a + bias(l)`. The last layer size must be 1: every network in this
/// project represents a scalar field over (x, t).
class DenseNetwork {
 public:
  DenseNetwork() = default;

  /// Takes ownership of explicit parameters. Shapes and finiteness are validated.
  DenseNetwork(std::vector<int> layer_sizes, std::vector<Matrix> weights,
               std::vector<Vector> biases, std::uint64_t seed = 0);

  /// Glorot-uniform weights, zero biases. Deterministic in `seed`.
  static DenseNetwork init(std::span<const int> layer_sizes, std::uint64_t seed);

  const std::vector<int>& layer_sizes() const { return layer_sizes_; }
  int input_dim() const { return layer_sizes_.front(); }
  int num_layers() const { return static_cast<int>(weights_.size()); }
  std::uint64_t seed() const { return seed_; }

  const Matrix& weight(int layer) const { return weights_[layer]; }
  const Vector& bias(int layer) const { return biases_[layer]; }

  Eigen::Index weight_count() const;
  Eigen::Index bias_count() const;
  Eigen::Index parameter_count() const { return weight_count() + bias_count(); }

  ParamVector parameters() const;
  void set_parameters(const ParamVector& params);

  friend bool operator==(const DenseNetwork& a, const DenseNetwork& b);

 private:
  std::vector<int> layer_sizes_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  std::uint64_t seed_ = 0;
};

/// Same-shaped accumulator for parameter gradients.
struct NetworkGradient {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static NetworkGradient zeros_like(const DenseNetwork& net);
  NetworkGradient& operator+=(const NetworkGradient& other);
  ParamVector flatten() const;
};

/// Value, input gradient and input Hessian of a network at one point.
/// Time is the last input coordinate.
struct InputJet {
  double value = 0.0;
  Vector grad;
  Matrix hess;
};

double forward(const DenseNetwork& net, std::span<const double> input);
InputJet input_jet(const DenseNetwork& net, std::span<const double> input);

}  // namespace msm::ad
