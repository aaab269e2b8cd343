#pragma once

#include <filesystem>

#include <json.hpp>

#include "msm/autodiff/network.hpp"

namespace msm::ad {

/// {layer_sizes, weights (row-major per layer), biases, activation, seed}.
/// Doubles are written in shortest round-trip form, so reading back is bit-exact.
nlohmann::json to_json(const DenseNetwork& net);
DenseNetwork network_from_json(const nlohmann::json& j);

void write_checkpoint(const std::filesystem::path& path, const DenseNetwork& net);
DenseNetwork read_checkpoint(const std::filesystem::path& path);

}  // namespace msm::ad
