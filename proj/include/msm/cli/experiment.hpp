#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "msm/metrics/metrics.hpp"
#include "msm/training/training.hpp"

namespace msm::cli {

struct ExperimentConfig {
  std::string problem;
  std::string method = "msm";   // msm | pinn
  std::string preset = "full";  // full | desk
  training::TrainConfig train;
  training::EvalSpec eval;
  std::filesystem::path out_dir = "runs";
  std::vector<std::uint64_t> seeds = {0};
  training::ExportOptions exports;
  bool export_grid = false;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Budgets for `problem` at full scale, or the desk scale (epochs divided by three,
/// evaluation lattices halved). Throws ConfigError for unknown names.
ExperimentConfig preset_config(const std::string& problem, const std::string& preset);

/// Parses TOML: top-level `problem`, `method`, `preset`, then [train], [sampling] and
/// [output] overriding the preset. Unknown keys and wrong types are ConfigErrors.
/// A non-empty `preset` replaces the file's preset as the base.
ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>",
                              const std::string& preset = {});
ExperimentConfig load_config(const std::filesystem::path& path, const std::string& preset = {});

/// Every field, in the layout parse_config reads back to an equal configuration.
std::string to_toml(const ExperimentConfig& config);
/// 64-bit FNV-1a of the effective TOML, as 16 hex digits.
std::string config_digest(const ExperimentConfig& config);

/// Throws ConfigError unless the configuration can run.
void validate(const ExperimentConfig& config);

/// <out>/<problem>/<method>/seed_<seed>
std::filesystem::path run_directory(const ExperimentConfig& config, const std::string& method,
                                    std::uint64_t seed);

struct RunOutcome {
  std::string method;
  std::uint64_t seed = 0;
  training::RunResult result;
  double wall_s = 0.0;
  std::filesystem::path dir;
};

/// One training run with artifacts under run_directory: metrics.json, history.csv,
/// effective_config.toml, checkpoints and optional sets, trajectories and grid.
/// A NumericError leaves an abort/ checkpoint there and propagates.
RunOutcome execute_run(const ExperimentConfig& config, const std::string& method, std::uint64_t seed);

/// CSV of u on a uniform lattice: coordinates, t, u. `nodes` per spatial axis and
/// `times` slices; one or two spatial dimensions only.
std::string grid_csv(const pde::PdeProblem& problem, const training::DenseNetwork& net, int nodes,
                     int times);

/// Lattice used by export-grid when none is given: 257 x 101 for Allen-Cahn, else the
/// evaluation lattice.
std::pair<int, int> default_grid(const ExperimentConfig& config);

metrics::ReportRow report_row(const RunOutcome& outcome, const std::string& problem);

}  // namespace msm::cli
