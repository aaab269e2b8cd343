#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "msm/autodiff/network.hpp"
#include "msm/sampling/rng.hpp"

namespace msm::test {

/// Glorot weights with random biases, so the network is not odd-symmetric about 0.
inline ad::DenseNetwork random_network(const std::vector<int>& sizes, std::uint64_t seed,
                                       double bias_scale = 0.5) {
  ad::DenseNetwork net = ad::DenseNetwork::init(sizes, seed);
  sampling::Rng rng(sampling::derive_seed(seed, {99}));
  ad::ParamVector p = net.parameters();
  for (Eigen::Index i = net.weight_count(); i < p.size(); ++i) {
    p[i] = rng.uniform(-bias_scale, bias_scale);
  }
  net.set_parameters(p);
  return net;
}

inline bool near(double a, double b, double rel, double abs_floor) {
  return std::abs(a - b) <= std::max(rel * std::max(std::abs(a), std::abs(b)), abs_floor);
}

inline double rel_error(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace msm::test
