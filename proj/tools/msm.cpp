#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "msm/autodiff/checkpoint.hpp"
#include "msm/cli/experiment.hpp"
#include "msm/errors.hpp"
#include "msm/io.hpp"
#include "msm/pde/benchmarks.hpp"
#include "msm/verify/verify.hpp"

namespace {

using namespace msm;
using cli::ExperimentConfig;

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct Selection {
  std::string config;
  std::string problem;
  std::string preset;
  std::string method;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  int parallel = 1;
};

void add_selection(CLI::App* cmd, Selection& s, bool with_method) {
  cmd->add_option("--config", s.config, "TOML experiment file");
  cmd->add_option("--problem", s.problem, "Benchmark when no config file is given")
      ->check(CLI::IsMember(pde::problem_names()));
  cmd->add_option("--preset", s.preset, "full or desk")->check(CLI::IsMember({"full", "desk"}));
  if (with_method) cmd->add_option("--method", s.method, "msm or pinn")->check(CLI::IsMember({"msm", "pinn"}));
  cmd->add_option("--out", s.out, "Output directory");
  cmd->add_option("--seed", s.seed, "Single seed");
  cmd->add_option("--seeds", s.seeds, "Seed list")->delimiter(',');
  cmd->add_option("--parallel", s.parallel, "Concurrent runs")->check(CLI::PositiveNumber);
}

/// File values first, then flags.
ExperimentConfig resolve(const Selection& s) {
  ExperimentConfig c;
  if (!s.config.empty()) {
    c = cli::load_config(s.config, s.preset);
    if (!s.problem.empty() && s.problem != c.problem) {
      throw ConfigError("--problem " + s.problem + " disagrees with the config file (" + c.problem + ")");
    }
  } else {
    if (s.problem.empty()) throw ConfigError("either --config or --problem is required");
    c = cli::preset_config(s.problem, s.preset.empty() ? "full" : s.preset);
  }
  if (!s.method.empty()) c.method = s.method;
  if (!s.out.empty()) c.out_dir = s.out;
  if (!s.seeds.empty()) c.seeds = s.seeds;
  if (s.seed) c.seeds = {*s.seed};
  c.train.seed = c.seeds.front();
  cli::validate(c);
  return c;
}

struct Job {
  std::string method;
  std::uint64_t seed;
};

struct JobResult {
  std::optional<cli::RunOutcome> outcome;
  std::string error;
  int code = kOk;
};

/// Runs jobs on `workers` threads; results keep the job order.
std::vector<JobResult> run_jobs(const ExperimentConfig& c, const std::vector<Job>& jobs, int workers) {
  std::vector<JobResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex print;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      JobResult& r = results[i];
      try {
        r.outcome = cli::execute_run(c, jobs[i].method, jobs[i].seed);
        const auto& e = r.outcome->result.final_errors;
        std::lock_guard<std::mutex> lock(print);
        std::cout << c.problem << ' ' << jobs[i].method << " seed " << jobs[i].seed << ": rel_l2 "
                  << e.rel_l2 << ", l_inf " << e.l_inf << ", " << r.outcome->wall_s << " s -> "
                  << r.outcome->dir.string() << std::endl;
      } catch (const ConfigError& e) {
        r.error = e.what();
        r.code = kUsage;
      } catch (const std::exception& e) {
        r.error = e.what();
        r.code = kFailure;
      }
      if (!r.error.empty()) {
        std::lock_guard<std::mutex> lock(print);
        std::cerr << c.problem << ' ' << jobs[i].method << " seed " << jobs[i].seed << " failed: " << r.error
                  << std::endl;
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  std::vector<std::thread> threads;
  for (int t = 1; t < n; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  return results;
}

/// A training failure outranks a configuration error.
int exit_code(const std::vector<JobResult>& results) {
  int code = kOk;
  for (const auto& r : results) {
    if (r.code == kFailure) return kFailure;
    if (r.code == kUsage) code = kUsage;
  }
  return code;
}

int cmd_run(const Selection& s) {
  const ExperimentConfig c = resolve(s);
  std::vector<Job> jobs;
  for (std::uint64_t seed : c.seeds) jobs.push_back({c.method, seed});
  return exit_code(run_jobs(c, jobs, s.parallel));
}

int cmd_compare(const Selection& s) {
  ExperimentConfig c = resolve(s);
  if (s.seeds.empty() && !s.seed && (s.config.empty() || c.seeds.size() < 2)) c.seeds = {0, 1, 2};
  std::vector<Job> jobs;
  for (std::uint64_t seed : c.seeds) {
    jobs.push_back({"msm", seed});
    jobs.push_back({"pinn", seed});
  }
  const std::vector<JobResult> results = run_jobs(c, jobs, s.parallel);
  std::vector<metrics::ReportRow> rows;
  for (const auto& r : results) {
    if (r.outcome) rows.push_back(cli::report_row(*r.outcome, c.problem));
  }
  const auto report = metrics::build_report(rows);
  const auto dir = c.out_dir / c.problem;
  io::write_file_atomic(dir / "report.csv", metrics::report_csv(report));
  nlohmann::json j = metrics::report_json(report);
  nlohmann::json failures = nlohmann::json::array();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!results[i].error.empty()) {
      failures.push_back({{"method", jobs[i].method}, {"seed", jobs[i].seed}, {"error", results[i].error}});
    }
  }
  nlohmann::json doc{{"problem", c.problem}, {"rows", j}, {"failures", failures}};
  io::write_file_atomic(dir / "report.json", doc.dump(2) + "\n");
  std::cout << metrics::report_csv(report);
  std::cout << "report: " << (dir / "report.csv").string() << std::endl;
  return exit_code(results);
}

int cmd_verify(const std::vector<std::string>& requested, const std::string& out) {
  std::vector<std::string> suites = requested;
  if (suites.empty() || (suites.size() == 1 && suites[0] == "all")) suites = verify::suite_names();
  std::vector<verify::SuiteResult> results;
  double total = 0.0;
  for (const auto& name : suites) {
    results.push_back(verify::run_suite(name));
    const auto& r = results.back();
    total += r.seconds;
    for (const auto& c : r.checks) {
      std::cerr << (c.passed ? "PASS " : "FAIL ") << r.suite << '/' << c.name << ": " << c.value
                << " (tolerance " << c.tolerance << ")" << (c.detail.empty() ? "" : " " + c.detail) << '\n';
    }
  }
  if (total > 300.0) std::cerr << "warning: verification took " << total << " s (budget 300 s)\n";
  const nlohmann::json j = verify::to_json(results);
  if (!out.empty()) io::write_file_atomic(out, j.dump(2) + "\n");
  std::cout << j.dump(2) << std::endl;
  return j["passed"].get<bool>() ? kOk : kFailure;
}

int cmd_export_grid(const std::string& checkpoint, const std::string& problem_name, int nodes, int times,
                    const std::string& out) {
  if (!std::filesystem::exists(checkpoint)) throw ConfigError("checkpoint not found: " + checkpoint);
  const auto problem = pde::make_problem(problem_name);
  const ad::DenseNetwork net = ad::read_checkpoint(checkpoint);
  if (net.input_dim() != problem->spatial_dim() + 1) {
    throw ConfigError("checkpoint input dimension does not match " + problem_name);
  }
  const auto [dn, dt] = cli::default_grid(cli::preset_config(problem_name, "full"));
  const std::string csv = cli::grid_csv(*problem, net, nodes > 0 ? nodes : dn, times > 0 ? times : dt);
  if (out.empty() || out == "-") {
    std::cout << csv;
  } else {
    io::write_file_atomic(out, csv);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Moving-sample PINN experiments"};
  app.require_subcommand(1);

  Selection run_sel;
  CLI::App* run = app.add_subcommand("run", "Train one method for each seed and write its artifacts");
  add_selection(run, run_sel, true);

  Selection cmp_sel;
  CLI::App* compare = app.add_subcommand("compare", "Train both methods per seed and write a report");
  add_selection(compare, cmp_sel, false);

  std::vector<std::string> suites;
  std::string verify_out;
  CLI::App* ver = app.add_subcommand("verify", "Run invariant suites and print JSON");
  ver->add_option("suites", suites, "autodiff, flow, transport, losses or all");
  ver->add_option("--out", verify_out, "Also write the JSON here");

  std::string checkpoint, grid_problem, grid_out;
  int nodes = 0;
  int times = 0;
  CLI::App* grid = app.add_subcommand("export-grid", "Evaluate a checkpoint on a lattice as CSV");
  grid->add_option("--checkpoint", checkpoint, "u checkpoint (JSON)")->required();
  grid->add_option("--problem", grid_problem, "Benchmark")->required();
  grid->add_option("--nodes", nodes, "Nodes per spatial axis");
  grid->add_option("--times", times, "Time slices");
  grid->add_option("--out", grid_out, "CSV path; stdout when omitted");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run) return cmd_run(run_sel);
    if (*compare) return cmd_compare(cmp_sel);
    if (*ver) return cmd_verify(suites, verify_out);
    if (*grid) return cmd_export_grid(checkpoint, grid_problem, nodes, times, grid_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << std::endl;
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kFailure;
  }
  return kUsage;
}
