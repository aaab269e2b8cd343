#include "msm/autodiff/network.hpp"

#include <cmath>
#include <random>
#include <string>

#include "msm/autodiff/jet_batch.hpp"
#include "msm/errors.hpp"

namespace msm::ad {
namespace {

void validate_sizes(std::span<const int> sizes) {
  if (sizes.size() < 2) {
    throw ConfigError("network needs at least an input and an output layer");
  }
  for (int s : sizes) {
    if (s <= 0) throw ConfigError("layer sizes must be positive");
  }
  if (sizes.back() != 1) throw ConfigError("network output dimension must be 1");
}

}  // namespace

DenseNetwork::DenseNetwork(std::vector<int> layer_sizes, std::vector<Matrix> weights,
                           std::vector<Vector> biases, std::uint64_t seed)
    : layer_sizes_(std::move(layer_sizes)),
      weights_(std::move(weights)),
      biases_(std::move(biases)),
      seed_(seed) {
  validate_sizes(layer_sizes_);
  const std::size_t layers = layer_sizes_.size() - 1;
  if (weights_.size() != layers || biases_.size() != layers) {
    throw ConfigError("parameter list does not match layer sizes");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (weights_[l].rows() != layer_sizes_[l + 1] || weights_[l].cols() != layer_sizes_[l] ||
        biases_[l].size() != layer_sizes_[l + 1]) {
      throw ConfigError("parameter shape mismatch in layer " + std::to_string(l));
    }
    if (!weights_[l].allFinite() || !biases_[l].allFinite()) {
      throw ConfigError("non-finite parameter in layer " + std::to_string(l));
    }
  }
}

DenseNetwork DenseNetwork::init(std::span<const int> layer_sizes, std::uint64_t seed) {
  validate_sizes(layer_sizes);
  std::mt19937_64 rng(seed);
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i) {
      for (int j = 0; j < fan_in; ++j) w(i, j) = dist(rng);
    }
    weights.push_back(std::move(w));
    biases.push_back(Vector::Zero(fan_out));
  }
  return DenseNetwork({layer_sizes.begin(), layer_sizes.end()}, std::move(weights),
                      std::move(biases), seed);
}

Eigen::Index DenseNetwork::weight_count() const {
  Eigen::Index n = 0;
  for (const auto& w : weights_) n += w.size();
  return n;
}

Eigen::Index DenseNetwork::bias_count() const {
  Eigen::Index n = 0;
  for (const auto& b : biases_) n += b.size();
  return n;
}

ParamVector DenseNetwork::parameters() const {
  ParamVector p(parameter_count());
  Eigen::Index k = 0;
  for (const auto& w : weights_) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) p[k++] = w(i, j);
    }
  }
  for (const auto& b : biases_) {
    p.segment(k, b.size()) = b;
    k += b.size();
  }
  return p;
}

void DenseNetwork::set_parameters(const ParamVector& p) {
  if (p.size() != parameter_count()) {
    throw ContractError("parameter vector length " + std::to_string(p.size()) +
                        " does not match network (" + std::to_string(parameter_count()) + ")");
  }
  if (!p.allFinite()) throw NumericError("non-finite parameter vector");
  Eigen::Index k = 0;
  for (auto& w : weights_) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = p[k++];
    }
  }
  for (auto& b : biases_) {
    b = p.segment(k, b.size());
    k += b.size();
  }
}

bool operator==(const DenseNetwork& a, const DenseNetwork& b) {
  if (a.layer_sizes_ != b.layer_sizes_ || a.seed_ != b.seed_) return false;
  for (std::size_t l = 0; l < a.weights_.size(); ++l) {
    if (a.weights_[l] != b.weights_[l] || a.biases_[l] != b.biases_[l]) return false;
  }
  return true;
}

NetworkGradient NetworkGradient::zeros_like(const DenseNetwork& net) {
  NetworkGradient g;
  for (int l = 0; l < net.num_layers(); ++l) {
    g.weights.push_back(Matrix::Zero(net.weight(l).rows(), net.weight(l).cols()));
    g.biases.push_back(Vector::Zero(net.bias(l).size()));
  }
  return g;
}

NetworkGradient& NetworkGradient::operator+=(const NetworkGradient& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    biases[l] += other.biases[l];
  }
  return *this;
}

ParamVector NetworkGradient::flatten() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  ParamVector p(n);
  Eigen::Index k = 0;
  for (const auto& w : weights) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) p[k++] = w(i, j);
    }
  }
  for (const auto& b : biases) {
    p.segment(k, b.size()) = b;
    k += b.size();
  }
  return p;
}

namespace {

Matrix column(std::span<const double> input, int expected) {
  if (static_cast<int>(input.size()) != expected) {
    throw ContractError("input length " + std::to_string(input.size()) +
                        " does not match network input dimension " + std::to_string(expected));
  }
  Matrix x(expected, 1);
  for (int i = 0; i < expected; ++i) x(i, 0) = input[i];
  return x;
}

}  // namespace

double forward(const DenseNetwork& net, std::span<const double> input) {
  Matrix x = column(input, net.input_dim());
  return forward_values(net, x)[0];
}

InputJet input_jet(const DenseNetwork& net, std::span<const double> input) {
  const int n = net.input_dim();
  Matrix x = column(input, n);
  const JetLayout layout = JetLayout::full(n);
  Matrix out = forward_jets(net, x, layout);
  InputJet jet;
  jet.value = out(0, 0);
  jet.grad.resize(n);
  jet.hess.resize(n, n);
  for (int i = 0; i < n; ++i) jet.grad[i] = out(layout.grad_channel(i), 0);
  for (std::size_t k = 0; k < layout.hess_pairs.size(); ++k) {
    const auto [p, q] = layout.hess_pairs[k];
    const double h = out(layout.hess_channel(static_cast<int>(k)), 0);
    jet.hess(p, q) = h;
    jet.hess(q, p) = h;
  }
  return jet;
}

}  // namespace msm::ad
