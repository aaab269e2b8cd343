#include "msm/autodiff/checkpoint.hpp"

#include "msm/errors.hpp"
#include "msm/io.hpp"

namespace msm::ad {

nlohmann::json to_json(const DenseNetwork& net) {
  nlohmann::json j;
  j["layer_sizes"] = net.layer_sizes();
  j["activation"] = "tanh";
  j["seed"] = net.seed();
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (int l = 0; l < net.num_layers(); ++l) {
    const Matrix& w = net.weight(l);
    std::vector<double> flat;
    flat.reserve(w.size());
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
    }
    weights.push_back(flat);
    const Vector& b = net.bias(l);
    biases.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  }
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
  return j;
}

DenseNetwork network_from_json(const nlohmann::json& j) {
  try {
    if (j.at("activation").get<std::string>() != "tanh") {
      throw ConfigError("unsupported activation in checkpoint");
    }
    auto sizes = j.at("layer_sizes").get<std::vector<int>>();
    const auto& jw = j.at("weights");
    const auto& jb = j.at("biases");
    if (sizes.size() < 2 || jw.size() != sizes.size() - 1 || jb.size() != sizes.size() - 1) {
      throw ConfigError("checkpoint layer count mismatch");
    }
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const auto flat = jw[l].get<std::vector<double>>();
      const auto b = jb[l].get<std::vector<double>>();
      const int rows = sizes[l + 1];
      const int cols = sizes[l];
      if (rows <= 0 || cols <= 0 || flat.size() != static_cast<std::size_t>(rows) * cols ||
          b.size() != static_cast<std::size_t>(rows)) {
        throw ConfigError("checkpoint parameter shape mismatch");
      }
      Matrix w(rows, cols);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) w(r, c) = flat[static_cast<std::size_t>(r) * cols + c];
      }
      weights.push_back(std::move(w));
      biases.push_back(Eigen::Map<const Vector>(b.data(), rows));
    }
    return DenseNetwork(std::move(sizes), std::move(weights), std::move(biases),
                        j.at("seed").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

void write_checkpoint(const std::filesystem::path& path, const DenseNetwork& net) {
  io::write_file_atomic(path, to_json(net).dump() + "\n");
}

DenseNetwork read_checkpoint(const std::filesystem::path& path) {
  try {
    return network_from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("cannot parse checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace msm::ad
