#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

#include "msm/autodiff/checkpoint.hpp"
#include "msm/errors.hpp"
#include "msm/io.hpp"
#include "msm/pde/reference.hpp"
#include "msm/sampling/rng.hpp"
#include "msm/training/training.hpp"

namespace msm::training {

const char* grad_mode_name(GradMode m) {
  return m == GradMode::exact ? "exact" : "finite_difference";
}

void TrainConfig::validate() const {
  if (hidden.empty()) throw ConfigError("at least one hidden layer is required");
  for (int w : hidden) {
    if (w <= 0) throw ConfigError("hidden layer widths must be positive");
  }
  if (M < 0 || M1 < 0 || M2 < 0 || M_final < 0) throw ConfigError("epoch counts must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (ic_weight < 0.0 || bc_weight < 0.0) throw ConfigError("loss weights must be non-negative");
  if (N == 0) throw ConfigError("N must be positive");
  if (M > 0 && (N1_first == 0 || (M > 1 && N1 == 0))) throw ConfigError("N1 must be positive");
  if (Nt < 2) throw ConfigError("Nt must be at least 2");
  if (!(uniform_fraction >= 0.0 && uniform_fraction <= 1.0)) {
    throw ConfigError("uniform_fraction must lie in [0, 1]");
  }
  if (uniform_mix != "retain_uniform") throw ConfigError("uniform_mix must be retain_uniform");
  if (!(gamma >= 0.5)) throw ConfigError("gamma must be at least 0.5");
  if (grad_mode == GradMode::finite_difference && !(fd_step > 0.0)) {
    throw ConfigError("fd_step must be positive");
  }
  if (substeps < 1) throw ConfigError("substeps must be at least 1");
}

std::size_t TrainConfig::effective_pinn_budget() const {
  if (pinn_budget > 0) return pinn_budget;
  std::size_t total = N;
  for (int i = 1; i <= M; ++i) total += n1_at(i);
  return total;
}

// ---- Adam -----------------------------------------------------------------

AdamState AdamState::zeros(Eigen::Index n) { return {Vector::Zero(n), Vector::Zero(n), 0}; }

void adam_step(ParamVector& params, const ParamVector& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ContractError("Adam state does not match the parameter vector");
  }
  ++state.step;
  state.m = beta1 * state.m + (1.0 - beta1) * grads;
  state.v = beta2 * state.v + (1.0 - beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

// ---- Phases ---------------------------------------------------------------

namespace {

void check_finite(const char* phase, int epoch, double loss, const ParamVector& grad) {
  const double gn = grad.norm();
  if (!std::isfinite(loss) || !std::isfinite(gn)) {
    std::ostringstream msg;
    msg << phase << " diverged at epoch " << epoch << ": loss " << loss << ", gradient norm " << gn;
    throw NumericError(msg.str());
  }
}

std::vector<Eigen::Index> minibatch(std::size_t n, std::size_t size, sampling::Rng& rng) {
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(size);
  return idx;
}

}  // namespace

PhaseHistory train_u(DenseNetwork& net, const pde::PdeProblem& problem, const USets& sets,
                     const TrainConfig& config, int epochs, std::uint64_t seed) {
  PhaseHistory h;
  if (epochs <= 0) return h;
  const LossUData data(problem, sets, config.ic_weight, config.bc_weight);
  ParamVector params = net.parameters();
  AdamState state = AdamState::zeros(params.size());
  sampling::Rng rng(seed);
  const bool batched = config.batch_size > 0 && config.batch_size < data.pde_points();
  h.loss.reserve(epochs);
  ParamVector grad;
  for (int e = 0; e < epochs; ++e) {
    std::vector<Eigen::Index> subset;
    if (batched) subset = minibatch(data.pde_points(), config.batch_size, rng);
    const LossU l = data.evaluate(net, &grad, batched ? &subset : nullptr);
    check_finite("u training", e, l.total, grad);
    h.loss.push_back(l.total);
    adam_step(params, grad, state, config.learning_rate, config.adam_beta1, config.adam_beta2,
              config.adam_eps);
    net.set_parameters(params);
  }
  return h;
}

PhaseHistory train_v(DenseNetwork& pot, const ResidualSnapshot& snap, const TrainConfig& config,
                     int epochs) {
  PhaseHistory h;
  if (epochs <= 0) return h;
  ParamVector params = pot.parameters();
  AdamState state = AdamState::zeros(params.size());
  h.loss.reserve(epochs);
  ParamVector grad;
  for (int e = 0; e < epochs; ++e) {
    const LossV l = loss_v_estimate(pot, snap, &grad);
    check_finite("velocity training", e, l.value, grad);
    h.loss.push_back(l.value);
    adam_step(params, grad, state, config.learning_rate, config.adam_beta1, config.adam_beta2,
              config.adam_eps);
    pot.set_parameters(params);
  }
  return h;
}

// ---- Evaluation -----------------------------------------------------------

namespace {

const pde::LatticeField1D& allen_cahn_reference(int out_x, int out_t) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, pde::LatticeField1D> cache;
  std::lock_guard<std::mutex> lock(mu);
  const auto key = std::pair{out_x, out_t};
  auto it = cache.find(key);
  if (it == cache.end()) {
    pde::AllenCahnSolverOptions o;
    o.out_x = out_x;
    o.out_t = out_t;
    it = cache.emplace(key, pde::solve_allen_cahn_reference(o)).first;
  }
  return it->second;
}

}  // namespace

metrics::ErrorPair evaluate_errors(const pde::PdeProblem& problem, const DenseNetwork& net,
                                   const EvalSpec& eval) {
  const int d = problem.spatial_dim();
  if (!problem.has_exact()) {
    if (problem.name() != "allen_cahn") throw ContractError("no reference for " + problem.name());
    const pde::LatticeField1D& ref = allen_cahn_reference(eval.ac_out_x, eval.ac_out_t);
    metrics::Lattice lattice{{ref.xs}, ref.ts};
    const Matrix z = lattice.spacetime();
    const Vector u = solution_values(problem, net, z);
    const Vector r = Eigen::Map<const Vector>(ref.values.data(), static_cast<Eigen::Index>(ref.values.size()));
    return metrics::lattice_errors(u, r, lattice);
  }
  if (d > 2) {
    const Matrix z = metrics::sample_gaussian_track(problem.domain(), problem.coefficient("alpha"),
                                                    problem.horizon(), eval.n_mc, eval.mc_seed);
    const Vector u = solution_values(problem, net, z);
    Vector r(z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      r[j] = problem.exact({z.col(j).data(), static_cast<std::size_t>(d)}, z(d, j));
    }
    return metrics::weighted_errors(u, r);
  }
  const metrics::Lattice lattice =
      metrics::Lattice::uniform(problem.domain(), eval.nodes_per_axis, eval.n_times, problem.horizon());
  const Matrix z = lattice.spacetime();
  const Vector u = solution_values(problem, net, z);
  Vector r(z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    r[j] = problem.exact({z.col(j).data(), static_cast<std::size_t>(d)}, z(d, j));
  }
  return metrics::lattice_errors(u, r, lattice);
}

std::optional<double> band_fraction(const pde::PdeProblem& problem, const CollocationSet& set,
                                    sampling::Origin origin, double band, const TimeGrid& grid) {
  std::vector<std::size_t> in(grid.size(), 0), all(grid.size(), 0);
  for (std::size_t j = 0; j < set.size(); ++j) {
    if (set.origin(j) != origin || set.slice(j) < 0) continue;
    const auto dist = problem.feature_distance(set.x(j), set.t(j));
    if (!dist) return std::nullopt;
    ++all[set.slice(j)];
    if (*dist < band) ++in[set.slice(j)];
  }
  double sum = 0.0;
  int slices = 0;
  for (int k = 0; k < grid.size(); ++k) {
    if (all[k] == 0) continue;
    sum += static_cast<double>(in[k]) / all[k];
    ++slices;
  }
  if (slices == 0) return std::nullopt;
  return sum / slices;
}

// ---- Runs -----------------------------------------------------------------

namespace {

enum SeedTag : std::uint64_t {
  kSeedU = 1,
  kSeedPhi,
  kSeedPde,
  kSeedInitial,
  kSeedBoundary,
  kSeedProbe,
  kSeedJoint,
  kSeedNewSamples = 100,
  kSeedBatch = 200,
};

std::vector<int> layer_sizes(const pde::PdeProblem& problem, const TrainConfig& config) {
  std::vector<int> sizes{problem.input_dim()};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(1);
  return sizes;
}

std::uint64_t seed_for(const TrainConfig& c, std::uint64_t tag) {
  return sampling::derive_seed(c.seed, {tag});
}

std::optional<double> front_error(const pde::PdeProblem& problem, const DenseNetwork& net,
                                  const EvalSpec& eval) {
  if (problem.name() != "burgers") return std::nullopt;
  std::vector<double> times(eval.n_times);
  for (int k = 0; k < eval.n_times; ++k) times[k] = problem.horizon() * k / (eval.n_times - 1);
  return metrics::diagonal_front_error(
      [&](const Matrix& z) { return solution_values(problem, net, z); }, problem.domain(), times, 0.5,
      17, 2001);
}

/// Writes everything a failed run holds so it can be inspected or resumed by hand.
void dump_abort(const std::filesystem::path& dir, const RunResult& res, const DenseNetwork* pot,
                int iteration, const std::string& phase, const std::string& message) {
  if (dir.empty()) return;
  ad::write_checkpoint(dir / "u.json", res.u_net);
  if (pot) ad::write_checkpoint(dir / "phi.json", *pot);
  io::write_file_atomic(dir / "sets" / "pde.csv", res.sets.pde.to_csv());
  io::write_file_atomic(dir / "sets" / "initial.csv", res.sets.initial.to_csv());
  io::write_file_atomic(dir / "sets" / "boundary.csv", res.sets.boundary.to_csv());
  const nlohmann::json state{{"problem", res.problem}, {"method", res.method},
                             {"seed", res.seed},       {"iteration", iteration},
                             {"phase", phase},         {"error", message},
                             {"u_epochs_done", res.u_history.size()},
                             {"v_epochs_done", res.v_history.size()}};
  io::write_file_atomic(dir / "state.json", state.dump(2) + "\n");
}

}  // namespace

RunResult msm_run(const pde::PdeProblem& problem, const TrainConfig& config, const EvalSpec& eval,
                  const std::filesystem::path& abort_dir) {
  config.validate();
  const TimeGrid grid(config.Nt, problem.horizon());
  const std::vector<int> sizes = layer_sizes(problem, config);

  RunResult res;
  res.problem = problem.name();
  res.method = "msm";
  res.seed = config.seed;
  res.u_net = DenseNetwork::init(sizes, seed_for(config, kSeedU));
  DenseNetwork pot = DenseNetwork::init(sizes, seed_for(config, kSeedPhi));

  USets& sets = res.sets;
  // Joint mode counts N per slice, like the baseline budget.
  const std::size_t n_uniform =
      config.set_mode == pde::SetMode::per_slice ? config.N : config.N * static_cast<std::size_t>(config.Nt);
  sets.pde = sampling::assemble_pde_set(problem, n_uniform, grid, config.set_mode, seed_for(config, kSeedPde));
  if (config.joint_extra > 0) {
    sets.pde.append(sampling::assemble_pde_set(problem, config.joint_extra, grid,
                                               pde::SetMode::joint_spacetime, seed_for(config, kSeedJoint)));
  }
  sets.initial = config.N0 > 0
                     ? sampling::assemble_initial_set(problem, config.initial_strategy, config.N0,
                                                      config.uniform_fraction, seed_for(config, kSeedInitial))
                     : CollocationSet(problem.spatial_dim());
  sets.boundary = (config.Nb > 0 && !problem.has_hard_constraint())
                      ? sampling::assemble_boundary_set(problem, config.Nb, grid, seed_for(config, kSeedBoundary))
                      : CollocationSet(problem.spatial_dim());
  const CollocationSet probes =
      config.probe_per_slice > 0
          ? sampling::assemble_pde_set(problem, config.probe_per_slice, grid, pde::SetMode::per_slice,
                                       seed_for(config, kSeedProbe))
          : CollocationSet(problem.spatial_dim());

  int iteration = 0;
  std::string phase = "setup";
  try {
    for (int i = 1; i <= config.M; ++i) {
      iteration = i;
      IterationRecord rec;
      rec.iteration = i;
      phase = "train_u";
      const PhaseHistory hu = train_u(res.u_net, problem, sets, config, config.M1, seed_for(config, kSeedBatch + i));
      res.u_history.insert(res.u_history.end(), hu.loss.begin(), hu.loss.end());

      CollocationSet vset = sets.pde;
      if (i == 1) {
        // The first velocity phase also sees S0 on slice 0.
        for (std::size_t j = 0; j < sets.initial.size(); ++j) {
          vset.add(sets.initial.x(j), 0.0, 0, sets.initial.origin(j));
        }
      }
      phase = "snapshot";
      const ResidualSnapshot snap = residual_snapshot(res.u_net, problem, vset, probes, grid,
                                                      config.grad_mode, config.fd_step, config.gamma);
      phase = "train_v";
      const PhaseHistory hv = train_v(pot, snap, config, config.M2);
      res.v_history.insert(res.v_history.end(), hv.loss.begin(), hv.loss.end());
      const LossV lv = loss_v_estimate(pot, snap);
      rec.loss_v = lv.value;
      rec.skipped_v = lv.skipped;

      phase = "evolve";
      const sampling::Points x0 = sampling::sample_initial(problem, config.initial_strategy, config.n1_at(i),
                                                           seed_for(config, kSeedNewSamples + i));
      const flow::VelocityPotential vp{pot};
      flow::FlowTrajectory traj = flow::evolve_samples(flow::PotentialVelocity(vp), x0, grid,
                                                       config.substeps, problem.domain(), true);
      std::size_t added = 0;
      for (int k = 0; k < grid.size(); ++k) {
        for (int p = 0; p < traj.points(); ++p) {
          if (!traj.alive[k][p]) {
            ++rec.discarded;
            continue;
          }
          sets.pde.add({traj.positions[k].col(p).data(), static_cast<std::size_t>(problem.spatial_dim())},
                       grid[k], k, sampling::Origin::adaptive, i);
          ++added;
        }
      }
      rec.added = added;
      rec.pde_points = sets.pde.size();
      rec.loss_u = loss_u_estimate(res.u_net, problem, sets, config.ic_weight, config.bc_weight).total;
      rec.errors = evaluate_errors(problem, res.u_net, eval);

      // Concentration of this iteration's moved samples around the singular feature.
      CollocationSet fresh(problem.spatial_dim());
      for (std::size_t j = 0; j < sets.pde.size(); ++j) {
        if (sets.pde.origin(j) == sampling::Origin::adaptive && sets.pde.iteration(j) == i) {
          fresh.add(sets.pde.x(j), sets.pde.t(j), sets.pde.slice(j), sampling::Origin::adaptive, i);
        }
      }
      rec.adaptive_band_fraction = band_fraction(problem, fresh, sampling::Origin::adaptive, 0.1, grid);
      rec.uniform_band_fraction = band_fraction(problem, sets.pde, sampling::Origin::uniform, 0.1, grid);
      res.iterations.push_back(rec);
      res.trajectories.push_back(std::move(traj));
    }

    iteration = config.M + 1;
    phase = "train_u_final";
    const PhaseHistory hf = train_u(res.u_net, problem, sets, config, config.M_final,
                                    seed_for(config, kSeedBatch + config.M + 1));
    res.u_history.insert(res.u_history.end(), hf.loss.begin(), hf.loss.end());
  } catch (const NumericError& e) {
    dump_abort(abort_dir, res, &pot, iteration, phase, e.what());
    throw;
  }
  res.potential = std::move(pot);
  res.final_loss_u = loss_u_estimate(res.u_net, problem, sets, config.ic_weight, config.bc_weight).total;
  res.final_errors = evaluate_errors(problem, res.u_net, eval);
  res.front_error = front_error(problem, res.u_net, eval);
  return res;
}

RunResult pinn_run(const pde::PdeProblem& problem, const TrainConfig& config, const EvalSpec& eval,
                   const std::filesystem::path& abort_dir) {
  config.validate();
  const TimeGrid grid(config.Nt, problem.horizon());
  RunResult res;
  res.problem = problem.name();
  res.method = "pinn";
  res.seed = config.seed;
  res.u_net = DenseNetwork::init(layer_sizes(problem, config), seed_for(config, kSeedU));

  const std::size_t budget = config.effective_pinn_budget();
  USets& sets = res.sets;
  if (config.set_mode == pde::SetMode::per_slice) {
    sets.pde = sampling::assemble_pde_set(problem, budget, grid, pde::SetMode::per_slice, seed_for(config, kSeedPde));
  } else {
    // Same number of space-time points as the budget spread over every slice.
    sets.pde = sampling::assemble_pde_set(problem, budget * static_cast<std::size_t>(config.Nt), grid,
                                          pde::SetMode::joint_spacetime, seed_for(config, kSeedPde));
  }
  if (config.joint_extra > 0) {
    sets.pde.append(sampling::assemble_pde_set(problem, config.joint_extra, grid,
                                               pde::SetMode::joint_spacetime, seed_for(config, kSeedJoint)));
  }
  if (!problem.has_hard_constraint()) {
    if (config.N0 > 0) {
      sets.initial = sampling::assemble_initial_set(problem, pde::InitialStrategy::uniform, config.N0, 1.0,
                                                    seed_for(config, kSeedInitial));
    }
    if (config.Nb > 0) {
      sets.boundary = sampling::assemble_boundary_set(problem, config.Nb, grid, seed_for(config, kSeedBoundary));
    }
  }
  if (sets.initial.dim() == 0) sets.initial = CollocationSet(problem.spatial_dim());
  if (sets.boundary.dim() == 0) sets.boundary = CollocationSet(problem.spatial_dim());

  const int epochs = config.M * config.M1 + config.M_final;
  try {
    const PhaseHistory h =
        train_u(res.u_net, problem, sets, config, epochs, seed_for(config, kSeedBatch + config.M + 1));
    res.u_history = h.loss;
  } catch (const NumericError& e) {
    dump_abort(abort_dir, res, nullptr, 0, "train_u", e.what());
    throw;
  }
  res.final_loss_u = loss_u_estimate(res.u_net, problem, sets, config.ic_weight, config.bc_weight).total;
  res.final_errors = evaluate_errors(problem, res.u_net, eval);
  res.front_error = front_error(problem, res.u_net, eval);
  return res;
}

// ---- Persistence ----------------------------------------------------------

nlohmann::json run_metrics_json(const RunResult& r) {
  nlohmann::json j;
  j["problem"] = r.problem;
  j["method"] = r.method;
  j["seed"] = r.seed;
  nlohmann::json its = nlohmann::json::array();
  for (const auto& it : r.iterations) {
    nlohmann::json e{{"iteration", it.iteration},
                     {"loss_u", it.loss_u},
                     {"loss_v", it.loss_v},
                     {"pde_points", it.pde_points},
                     {"added", it.added},
                     {"discarded", it.discarded},
                     {"skipped_v", it.skipped_v},
                     {"rel_l2", it.errors.rel_l2},
                     {"l_inf", it.errors.l_inf}};
    if (it.adaptive_band_fraction) e["adaptive_band_fraction"] = *it.adaptive_band_fraction;
    if (it.uniform_band_fraction) e["uniform_band_fraction"] = *it.uniform_band_fraction;
    its.push_back(std::move(e));
  }
  j["iterations"] = std::move(its);
  j["final"] = {{"loss_u", r.final_loss_u},
                {"rel_l2", r.final_errors.rel_l2},
                {"l_inf", r.final_errors.l_inf},
                {"pde_points", r.sets.pde.size()},
                {"u_epochs", r.u_history.size()},
                {"v_epochs", r.v_history.size()}};
  if (r.front_error) j["final"]["front_error"] = *r.front_error;
  return j;
}

void write_run(const RunResult& r, const std::filesystem::path& dir, const TimeGrid& grid,
               const ExportOptions& options) {
  io::write_file_atomic(dir / "metrics.json", run_metrics_json(r).dump(2) + "\n");
  std::ostringstream hist;
  hist << "phase,epoch,loss\n";
  for (std::size_t e = 0; e < r.u_history.size(); ++e) hist << "u," << e << ',' << io::format_double(r.u_history[e]) << '\n';
  for (std::size_t e = 0; e < r.v_history.size(); ++e) hist << "v," << e << ',' << io::format_double(r.v_history[e]) << '\n';
  io::write_file_atomic(dir / "history.csv", hist.str());
  if (options.checkpoints) {
    ad::write_checkpoint(dir / "checkpoints" / "u.json", r.u_net);
    if (r.potential) ad::write_checkpoint(dir / "checkpoints" / "phi.json", *r.potential);
  }
  if (options.sets) {
    io::write_file_atomic(dir / "sets" / "pde.csv", r.sets.pde.to_csv());
    io::write_file_atomic(dir / "sets" / "initial.csv", r.sets.initial.to_csv());
    io::write_file_atomic(dir / "sets" / "boundary.csv", r.sets.boundary.to_csv());
  }
  if (options.trajectories) {
    for (std::size_t i = 0; i < r.trajectories.size(); ++i) {
      io::write_file_atomic(dir / "trajectories" / ("iteration_" + std::to_string(i + 1) + ".csv"),
                            r.trajectories[i].to_csv(grid));
    }
  }
}

}  // namespace msm::training
