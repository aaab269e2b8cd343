#include "msm/cli/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include <toml++/toml.hpp>

#include "msm/errors.hpp"
#include "msm/io.hpp"
#include "msm/pde/benchmarks.hpp"

namespace msm::cli {

using training::GradMode;
using training::TrainConfig;

namespace {

const char* strategy_name(pde::InitialStrategy s) {
  switch (s) {
    case pde::InitialStrategy::uniform: return "uniform";
    case pde::InitialStrategy::prop_u0: return "prop_u0";
    case pde::InitialStrategy::prop_grad_u0_sq: return "prop_grad_u0_sq";
  }
  return "uniform";
}

pde::InitialStrategy parse_strategy(const std::string& s) {
  if (s == "uniform") return pde::InitialStrategy::uniform;
  if (s == "prop_u0") return pde::InitialStrategy::prop_u0;
  if (s == "prop_grad_u0_sq") return pde::InitialStrategy::prop_grad_u0_sq;
  throw ConfigError("initial_strategy must be uniform, prop_u0 or prop_grad_u0_sq, not '" + s + "'");
}

const char* set_mode_name(pde::SetMode m) {
  return m == pde::SetMode::per_slice ? "per_slice" : "joint_spacetime";
}

pde::SetMode parse_set_mode(const std::string& s) {
  if (s == "per_slice") return pde::SetMode::per_slice;
  if (s == "joint_spacetime") return pde::SetMode::joint_spacetime;
  throw ConfigError("set_mode must be per_slice or joint_spacetime, not '" + s + "'");
}

GradMode parse_grad_mode(const std::string& s) {
  if (s == "exact") return GradMode::exact;
  if (s == "finite_difference") return GradMode::finite_difference;
  throw ConfigError("grad_mode must be exact or finite_difference, not '" + s + "'");
}

// ---- TOML readers ----------------------------------------------------------

[[noreturn]] void type_error(const std::string& key, const char* expected) {
  throw ConfigError("'" + key + "' must be " + expected);
}

std::int64_t read_int(const toml::node& n, const std::string& key) {
  if (const auto v = n.value_exact<std::int64_t>()) return *v;
  type_error(key, "an integer");
}

int read_small(const toml::node& n, const std::string& key) {
  const std::int64_t v = read_int(n, key);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    type_error(key, "a 32-bit integer");
  }
  return static_cast<int>(v);
}

std::size_t read_count(const toml::node& n, const std::string& key) {
  const std::int64_t v = read_int(n, key);
  if (v < 0) type_error(key, "a non-negative integer");
  return static_cast<std::size_t>(v);
}

std::uint64_t read_seed(const toml::node& n, const std::string& key) {
  const std::int64_t v = read_int(n, key);
  if (v < 0) type_error(key, "a non-negative integer");
  return static_cast<std::uint64_t>(v);
}

double read_double(const toml::node& n, const std::string& key) {
  if (n.is_floating_point()) return *n.value_exact<double>();
  if (n.is_integer()) return static_cast<double>(*n.value_exact<std::int64_t>());
  type_error(key, "a number");
}

bool read_bool(const toml::node& n, const std::string& key) {
  if (const auto v = n.value_exact<bool>()) return *v;
  type_error(key, "true or false");
}

std::string read_string(const toml::node& n, const std::string& key) {
  if (const auto v = n.value_exact<std::string>()) return *v;
  type_error(key, "a string");
}

template <class T, class F>
std::vector<T> read_list(const toml::node& n, const std::string& key, F&& item) {
  const toml::array* a = n.as_array();
  if (a == nullptr) type_error(key, "an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < a->size(); ++i) out.push_back(item((*a)[i], key + "[" + std::to_string(i) + "]"));
  return out;
}

using Setter = std::function<void(const toml::node&, const std::string&)>;

void apply_table(const toml::table& table, const std::string& section,
                 const std::map<std::string, Setter>& setters) {
  for (auto&& [k, v] : table) {
    const std::string key(k.str());
    const std::string full = section.empty() ? key : section + "." + key;
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown key '" + full + "'");
    it->second(v, full);
  }
}

std::string quoted(const std::string& s) { return nlohmann::json(s).dump(); }

template <class T>
std::string list_text(const std::vector<T>& v) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? ", " : "") << v[i];
  out << ']';
  return out.str();
}

std::string num(double v) { return io::format_double(v); }

}  // namespace

// ---- presets --------------------------------------------------------------

ExperimentConfig preset_config(const std::string& problem, const std::string& preset) {
  if (preset != "full" && preset != "desk") throw ConfigError("preset must be full or desk, not '" + preset + "'");
  const auto p = pde::make_problem(problem);  // rejects unknown names
  ExperimentConfig c;
  c.problem = problem;
  c.preset = preset;
  TrainConfig& t = c.train;
  t.hidden = {64, 64, 64};
  t.M = 5;
  t.M2 = 1000;
  t.learning_rate = 1e-3;
  t.Nt = 11;
  t.initial_strategy = p->default_initial_strategy();
  t.set_mode = p->default_set_mode();
  t.grad_mode = p->residual_order() > 1 ? GradMode::finite_difference : GradMode::exact;
  if (problem == "allen_cahn") {
    t.M1 = t.M_final = 6000;
    t.N = 200;
    t.N0 = 0;
    t.Nb = 0;
    t.N1_first = t.N1 = 600;
    t.uniform_fraction = 0.0;
    t.probe_per_slice = 256;
    t.pinn_budget = 3200;
  } else if (problem == "rotation") {
    t.M1 = t.M_final = 1500;
    t.N = 1000;
    t.N0 = 500;
    t.Nb = 400;
    t.N1_first = 1000;
    t.N1 = 300;
    t.pinn_budget = 2200;
  } else if (problem == "burgers") {
    t.M1 = t.M_final = 1500;
    t.N = 1200;
    t.N0 = 500;
    t.Nb = 200;
    t.N1_first = 1200;
    t.N1 = 300;
    t.pinn_budget = 2400;
  } else if (problem == "fokker_planck") {
    t.M1 = t.M_final = 6000;
    t.N = 1500;
    t.N0 = 400;
    t.Nb = 1200;
    t.N1_first = t.N1 = 800;
    t.joint_extra = 500;
  } else {
    t.M1 = t.M_final = 1500;
    t.N = 5000;
    t.N0 = 2800;
    t.Nb = 360;
    t.N1_first = t.N1 = 2000;
  }
  if (preset == "desk") {
    t.M1 /= 3;
    t.M2 /= 3;
    t.M_final /= 3;
    c.eval.nodes_per_axis = 51;
    c.eval.n_times = 6;
    c.eval.n_mc /= 2;
    c.eval.ac_out_x = 129;
    c.eval.ac_out_t = 51;
  }
  t.seed = c.seeds.front();
  return c;
}

// ---- parsing --------------------------------------------------------------

ExperimentConfig parse_config(std::string_view text, const std::string& source,
                              const std::string& preset_override) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ": " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(msg.str());
  }
  const toml::node* problem = root.get("problem");
  if (problem == nullptr) throw ConfigError(source + ": missing top-level 'problem'");
  std::string preset = "full";
  if (const toml::node* p = root.get("preset")) preset = read_string(*p, "preset");
  if (!preset_override.empty()) preset = preset_override;
  ExperimentConfig c = preset_config(read_string(*problem, "problem"), preset);
  TrainConfig& t = c.train;
  training::EvalSpec& e = c.eval;

  const std::map<std::string, Setter> train = {
      {"hidden", [&](auto& n, auto& k) { t.hidden = read_list<int>(n, k, read_small); }},
      {"M", [&](auto& n, auto& k) { t.M = read_small(n, k); }},
      {"M1", [&](auto& n, auto& k) { t.M1 = read_small(n, k); }},
      {"M2", [&](auto& n, auto& k) { t.M2 = read_small(n, k); }},
      {"M_final", [&](auto& n, auto& k) { t.M_final = read_small(n, k); }},
      {"learning_rate", [&](auto& n, auto& k) { t.learning_rate = read_double(n, k); }},
      {"adam_beta1", [&](auto& n, auto& k) { t.adam_beta1 = read_double(n, k); }},
      {"adam_beta2", [&](auto& n, auto& k) { t.adam_beta2 = read_double(n, k); }},
      {"adam_eps", [&](auto& n, auto& k) { t.adam_eps = read_double(n, k); }},
      {"ic_weight", [&](auto& n, auto& k) { t.ic_weight = read_double(n, k); }},
      {"bc_weight", [&](auto& n, auto& k) { t.bc_weight = read_double(n, k); }},
      {"batch_size", [&](auto& n, auto& k) { t.batch_size = read_count(n, k); }},
      {"grad_mode", [&](auto& n, auto& k) { t.grad_mode = parse_grad_mode(read_string(n, k)); }},
      {"fd_step", [&](auto& n, auto& k) { t.fd_step = read_double(n, k); }},
      {"substeps", [&](auto& n, auto& k) { t.substeps = read_small(n, k); }},
      {"gamma", [&](auto& n, auto& k) { t.gamma = read_double(n, k); }},
  };
  const std::map<std::string, Setter> sampling = {
      {"N", [&](auto& n, auto& k) { t.N = read_count(n, k); }},
      {"N0", [&](auto& n, auto& k) { t.N0 = read_count(n, k); }},
      {"Nb", [&](auto& n, auto& k) { t.Nb = read_count(n, k); }},
      {"N1_first", [&](auto& n, auto& k) { t.N1_first = read_count(n, k); }},
      {"N1", [&](auto& n, auto& k) { t.N1 = read_count(n, k); }},
      {"Nt", [&](auto& n, auto& k) { t.Nt = read_small(n, k); }},
      {"joint_extra", [&](auto& n, auto& k) { t.joint_extra = read_count(n, k); }},
      {"probe_per_slice", [&](auto& n, auto& k) { t.probe_per_slice = read_count(n, k); }},
      {"pinn_budget", [&](auto& n, auto& k) { t.pinn_budget = read_count(n, k); }},
      {"initial_strategy", [&](auto& n, auto& k) { t.initial_strategy = parse_strategy(read_string(n, k)); }},
      {"uniform_fraction", [&](auto& n, auto& k) { t.uniform_fraction = read_double(n, k); }},
      {"set_mode", [&](auto& n, auto& k) { t.set_mode = parse_set_mode(read_string(n, k)); }},
      {"uniform_mix", [&](auto& n, auto& k) { t.uniform_mix = read_string(n, k); }},
  };
  const std::map<std::string, Setter> output = {
      {"dir", [&](auto& n, auto& k) { c.out_dir = read_string(n, k); }},
      {"seeds", [&](auto& n, auto& k) { c.seeds = read_list<std::uint64_t>(n, k, read_seed); }},
      {"checkpoints", [&](auto& n, auto& k) { c.exports.checkpoints = read_bool(n, k); }},
      {"sets", [&](auto& n, auto& k) { c.exports.sets = read_bool(n, k); }},
      {"trajectories", [&](auto& n, auto& k) { c.exports.trajectories = read_bool(n, k); }},
      {"grids", [&](auto& n, auto& k) { c.export_grid = read_bool(n, k); }},
      {"eval_nodes", [&](auto& n, auto& k) { e.nodes_per_axis = read_small(n, k); }},
      {"eval_times", [&](auto& n, auto& k) { e.n_times = read_small(n, k); }},
      {"eval_mc", [&](auto& n, auto& k) { e.n_mc = read_count(n, k); }},
      {"eval_mc_seed", [&](auto& n, auto& k) { e.mc_seed = read_seed(n, k); }},
      {"ac_out_x", [&](auto& n, auto& k) { e.ac_out_x = read_small(n, k); }},
      {"ac_out_t", [&](auto& n, auto& k) { e.ac_out_t = read_small(n, k); }},
  };
  auto section = [&](const std::string& name, const std::map<std::string, Setter>& setters) {
    return [&, name](const toml::node& n, const std::string&) {
      const toml::table* tbl = n.as_table();
      if (tbl == nullptr) throw ConfigError("'" + name + "' must be a table");
      apply_table(*tbl, name, setters);
    };
  };
  const std::map<std::string, Setter> top = {
      {"problem", [](auto&, auto&) {}},
      {"preset", [](auto&, auto&) {}},
      {"method", [&](auto& n, auto& k) { c.method = read_string(n, k); }},
      {"train", section("train", train)},
      {"sampling", section("sampling", sampling)},
      {"output", section("output", output)},
  };
  apply_table(root, "", top);
  if (!c.seeds.empty()) t.seed = c.seeds.front();
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::string& preset) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::exception&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  return parse_config(text, path.string(), preset);
}

void validate(const ExperimentConfig& c) {
  const auto p = pde::make_problem(c.problem);
  if (c.method != "msm" && c.method != "pinn") throw ConfigError("method must be msm or pinn, not '" + c.method + "'");
  if (c.preset != "full" && c.preset != "desk") throw ConfigError("preset must be full or desk");
  if (c.seeds.empty()) throw ConfigError("at least one seed is required");
  for (std::uint64_t s : c.seeds) {
    if (s > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      throw ConfigError("seeds must fit in a signed 64-bit integer");
    }
  }
  if (c.out_dir.empty()) throw ConfigError("output dir must not be empty");
  if (c.eval.nodes_per_axis < 2 || c.eval.n_times < 2 || c.eval.ac_out_x < 3 || c.eval.ac_out_t < 2) {
    throw ConfigError("evaluation lattices need at least two nodes per axis");
  }
  if (c.eval.n_mc < 2) throw ConfigError("eval_mc must be at least 2");
  if (c.export_grid && p->spatial_dim() > 2) {
    throw ConfigError("grid export supports one or two spatial dimensions");
  }
  if (c.train.grad_mode == GradMode::exact && p->residual_order() > 1) {
    throw ConfigError("grad_mode exact needs a first-order residual; " + c.problem + " is second order");
  }
  c.train.validate();
}

// ---- emission -------------------------------------------------------------

std::string to_toml(const ExperimentConfig& c) {
  const TrainConfig& t = c.train;
  const training::EvalSpec& e = c.eval;
  std::ostringstream o;
  o << "problem = " << quoted(c.problem) << '\n'
    << "method = " << quoted(c.method) << '\n'
    << "preset = " << quoted(c.preset) << '\n'
    << "\n[train]\n"
    << "hidden = " << list_text(t.hidden) << '\n'
    << "M = " << t.M << '\n'
    << "M1 = " << t.M1 << '\n'
    << "M2 = " << t.M2 << '\n'
    << "M_final = " << t.M_final << '\n'
    << "learning_rate = " << num(t.learning_rate) << '\n'
    << "adam_beta1 = " << num(t.adam_beta1) << '\n'
    << "adam_beta2 = " << num(t.adam_beta2) << '\n'
    << "adam_eps = " << num(t.adam_eps) << '\n'
    << "ic_weight = " << num(t.ic_weight) << '\n'
    << "bc_weight = " << num(t.bc_weight) << '\n'
    << "batch_size = " << t.batch_size << '\n'
    << "grad_mode = " << quoted(training::grad_mode_name(t.grad_mode)) << '\n'
    << "fd_step = " << num(t.fd_step) << '\n'
    << "substeps = " << t.substeps << '\n'
    << "gamma = " << num(t.gamma) << '\n'
    << "\n[sampling]\n"
    << "N = " << t.N << '\n'
    << "N0 = " << t.N0 << '\n'
    << "Nb = " << t.Nb << '\n'
    << "N1_first = " << t.N1_first << '\n'
    << "N1 = " << t.N1 << '\n'
    << "Nt = " << t.Nt << '\n'
    << "joint_extra = " << t.joint_extra << '\n'
    << "probe_per_slice = " << t.probe_per_slice << '\n'
    << "pinn_budget = " << t.pinn_budget << '\n'
    << "initial_strategy = " << quoted(strategy_name(t.initial_strategy)) << '\n'
    << "uniform_fraction = " << num(t.uniform_fraction) << '\n'
    << "set_mode = " << quoted(set_mode_name(t.set_mode)) << '\n'
    << "uniform_mix = " << quoted(t.uniform_mix) << '\n'
    << "\n[output]\n"
    << "dir = " << quoted(c.out_dir.generic_string()) << '\n'
    << "seeds = " << list_text(c.seeds) << '\n'
    << "checkpoints = " << (c.exports.checkpoints ? "true" : "false") << '\n'
    << "sets = " << (c.exports.sets ? "true" : "false") << '\n'
    << "trajectories = " << (c.exports.trajectories ? "true" : "false") << '\n'
    << "grids = " << (c.export_grid ? "true" : "false") << '\n'
    << "eval_nodes = " << e.nodes_per_axis << '\n'
    << "eval_times = " << e.n_times << '\n'
    << "eval_mc = " << e.n_mc << '\n'
    << "eval_mc_seed = " << e.mc_seed << '\n'
    << "ac_out_x = " << e.ac_out_x << '\n'
    << "ac_out_t = " << e.ac_out_t << '\n';
  return o.str();
}

std::string config_digest(const ExperimentConfig& config) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : to_toml(config)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- runs -----------------------------------------------------------------

std::filesystem::path run_directory(const ExperimentConfig& config, const std::string& method,
                                    std::uint64_t seed) {
  return config.out_dir / config.problem / method / ("seed_" + std::to_string(seed));
}

std::pair<int, int> default_grid(const ExperimentConfig& config) {
  if (config.problem == "allen_cahn") return {257, 101};
  return {config.eval.nodes_per_axis, config.eval.n_times};
}

std::string grid_csv(const pde::PdeProblem& problem, const training::DenseNetwork& net, int nodes,
                     int times) {
  const int d = problem.spatial_dim();
  if (d > 2) throw ConfigError("grid export supports one or two spatial dimensions");
  if (nodes < 2 || times < 2) throw ConfigError("grid export needs at least two nodes per axis");
  const metrics::Lattice lattice = metrics::Lattice::uniform(problem.domain(), nodes, times, problem.horizon());
  const training::Matrix z = lattice.spacetime();
  const training::Vector u = training::solution_values(problem, net, z);
  std::ostringstream out;
  for (int i = 0; i < d; ++i) out << 'x' << (i + 1) << ',';
  out << "t,u\n";
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    for (int i = 0; i <= d; ++i) out << io::format_double(z(i, j)) << ',';
    out << io::format_double(u[j]) << '\n';
  }
  return out.str();
}

RunOutcome execute_run(const ExperimentConfig& config, const std::string& method, std::uint64_t seed) {
  ExperimentConfig eff = config;
  eff.method = method;
  eff.seeds = {seed};
  eff.train.seed = seed;
  validate(eff);
  const auto problem = pde::make_problem(eff.problem);
  RunOutcome out;
  out.method = method;
  out.seed = seed;
  out.dir = run_directory(eff, method, seed);
  std::filesystem::create_directories(out.dir);
  io::write_file_atomic(out.dir / "effective_config.toml", to_toml(eff));

  const auto start = std::chrono::steady_clock::now();
  out.result = method == "msm" ? training::msm_run(*problem, eff.train, eff.eval, out.dir / "abort")
                               : training::pinn_run(*problem, eff.train, eff.eval, out.dir / "abort");
  out.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const sampling::TimeGrid grid(eff.train.Nt, problem->horizon());
  training::write_run(out.result, out.dir, grid, eff.exports);
  const nlohmann::json run{{"problem", eff.problem},
                           {"method", method},
                           {"seed", seed},
                           {"preset", eff.preset},
                           {"config_digest", config_digest(eff)}};
  io::write_file_atomic(out.dir / "run.json", run.dump(2) + "\n");
  if (eff.export_grid) {
    const auto [nodes, times] = default_grid(eff);
    io::write_file_atomic(out.dir / "grid.csv", grid_csv(*problem, out.result.u_net, nodes, times));
  }
  return out;
}

metrics::ReportRow report_row(const RunOutcome& o, const std::string& problem) {
  return {problem, o.method, std::to_string(o.seed), o.result.final_errors.rel_l2,
          o.result.final_errors.l_inf, o.wall_s};
}

}  // namespace msm::cli
