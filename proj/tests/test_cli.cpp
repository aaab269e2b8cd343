#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <sstream>
#include <string>

#include "msm/cli/experiment.hpp"
#include "msm/errors.hpp"
#include "msm/io.hpp"
#include "msm/pde/benchmarks.hpp"
#include "support.hpp"

using namespace msm;
using cli::ExperimentConfig;

namespace {

const char* kTiny = R"(problem = "rotation"
preset = "desk"

[train]
hidden = [8, 8]
M = 2
M1 = 10
M2 = 10
M_final = 5

[sampling]
N = 40
N0 = 30
Nb = 10
N1_first = 30
N1 = 10
Nt = 3

[output]
eval_nodes = 11
eval_times = 3
)";

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("full presets carry the benchmark budgets") {
  const auto ac = cli::preset_config("allen_cahn", "full");
  CHECK(ac.train.N == 200);
  CHECK(ac.train.N1 == 600);
  CHECK(ac.train.N1_first == 600);
  CHECK(ac.train.M1 == 6000);
  CHECK(ac.train.set_mode == pde::SetMode::joint_spacetime);
  CHECK(ac.train.initial_strategy == pde::InitialStrategy::uniform);
  CHECK(ac.train.effective_pinn_budget() == 3200);

  const auto rot = cli::preset_config("rotation", "full");
  CHECK(rot.train.N == 1000);
  CHECK(rot.train.N0 == 500);
  CHECK(rot.train.Nb == 400);
  CHECK(rot.train.N1_first == 1000);
  CHECK(rot.train.N1 == 300);
  CHECK(rot.train.M1 == 1500);
  CHECK(rot.train.initial_strategy == pde::InitialStrategy::prop_u0);

  const auto bur = cli::preset_config("burgers", "full");
  CHECK(bur.train.N == 1200);
  CHECK(bur.train.N0 == 500);
  CHECK(bur.train.Nb == 200);
  CHECK(bur.train.N1_first == 1200);
  CHECK(bur.train.N1 == 300);
  CHECK(bur.train.initial_strategy == pde::InitialStrategy::prop_grad_u0_sq);

  const auto fp = cli::preset_config("fokker_planck", "full");
  CHECK(fp.train.N == 1500);
  CHECK(fp.train.N0 == 400);
  CHECK(fp.train.N1 == 800);
  CHECK(fp.train.Nb == 1200);
  CHECK(fp.train.M1 == 6000);
  CHECK(fp.train.joint_extra > 0);

  const auto adv = cli::preset_config("advection6d", "full");
  CHECK(adv.train.N == 5000);
  CHECK(adv.train.N1 == 2000);
  CHECK(adv.train.N0 == 2800);
  CHECK(adv.train.Nb == 360);

  for (const auto& name : pde::problem_names()) {
    const auto c = cli::preset_config(name, "full");
    CHECK(c.train.hidden == std::vector<int>{64, 64, 64});
    CHECK(c.train.M == 5);
    CHECK(c.train.M2 == 1000);
    CHECK(c.train.learning_rate == 1e-3);
    CHECK_NOTHROW(cli::validate(c));
  }
}

TEST_CASE("desk presets divide epochs and halve lattices") {
  for (const auto& name : pde::problem_names()) {
    const auto full = cli::preset_config(name, "full");
    const auto desk = cli::preset_config(name, "desk");
    CHECK(desk.train.M1 == full.train.M1 / 3);
    CHECK(desk.train.M2 == full.train.M2 / 3);
    CHECK(desk.train.M_final == full.train.M_final / 3);
    CHECK(desk.train.N == full.train.N);
    CHECK(desk.eval.nodes_per_axis == 51);
    CHECK(desk.eval.ac_out_x == 129);
    CHECK(desk.eval.ac_out_t == 51);
  }
  CHECK_THROWS_AS(cli::preset_config("rotation", "huge"), ConfigError);
  CHECK_THROWS_AS(cli::preset_config("heat", "full"), ConfigError);
}

TEST_CASE("effective config round trip") {
  for (const auto& name : pde::problem_names()) {
    for (const char* preset : {"full", "desk"}) {
      const auto c = cli::preset_config(name, preset);
      const auto back = cli::parse_config(cli::to_toml(c));
      CHECK(back == c);
      CHECK(cli::to_toml(back) == cli::to_toml(c));
    }
  }
  ExperimentConfig odd = cli::parse_config(kTiny);
  odd.train.learning_rate = 0.1 + 0.2;
  odd.train.gamma = 1.5;
  odd.train.batch_size = 17;
  odd.seeds = {3, 9, 12345678901234ULL};
  odd.out_dir = "some dir/with \"quotes\"";
  odd.exports.trajectories = true;
  odd.train.seed = 3;
  CHECK(cli::parse_config(cli::to_toml(odd)) == odd);
}

TEST_CASE("parsing overrides the preset") {
  const auto c = cli::parse_config(kTiny);
  CHECK(c.problem == "rotation");
  CHECK(c.preset == "desk");
  CHECK(c.train.hidden == std::vector<int>{8, 8});
  CHECK(c.train.M1 == 10);
  CHECK(c.train.Nt == 3);
  CHECK(c.eval.nodes_per_axis == 11);
  CHECK(c.train.initial_strategy == pde::InitialStrategy::prop_u0);
  const auto full = cli::parse_config(kTiny, "tiny", "full");
  CHECK(full.preset == "full");
  CHECK(full.train.M1 == 10);
  CHECK(full.eval.ac_out_x == 257);
  const auto floats = cli::parse_config("problem = \"rotation\"\n[train]\nlearning_rate = 1\n");
  CHECK(floats.train.learning_rate == 1.0);
}

TEST_CASE("configuration errors") {
  auto rejects = [](const std::string& text) {
    INFO(text);
    CHECK_THROWS_AS(cli::parse_config(text), ConfigError);
  };
  rejects("problem = \"rotation\"\nbogus = 1\n");
  rejects("problem = \"rotation\"\n[train]\nfoo = 1\n");
  rejects("problem = \"rotation\"\n[extras]\nx = 1\n");
  rejects("problem = \"rotation\"\n[train]\nM1 = \"many\"\n");
  rejects("problem = \"rotation\"\n[train]\nM1 = 1.5\n");
  rejects("problem = \"rotation\"\n[sampling]\nN = -3\n");
  rejects("problem = \"rotation\"\n[sampling]\ninitial_strategy = \"gaussian\"\n");
  rejects("problem = \"rotation\"\n[sampling]\nset_mode = \"both\"\n");
  rejects("problem = \"rotation\"\n[sampling]\nuniform_mix = \"replace\"\n");
  rejects("problem = \"rotation\"\n[train]\ngamma = 0.25\n");
  rejects("problem = \"rotation\"\nmethod = \"sgd\"\n");
  rejects("problem = \"rotation\"\npreset = \"huge\"\n");
  rejects("problem = \"burgers\"\n[train]\ngrad_mode = \"exact\"\n");
  rejects("problem = \"advection6d\"\n[output]\ngrids = true\n");
  rejects("problem = \"rotation\"\n[output]\nseeds = []\n");
  rejects("problem = \"rotation\"\ntrain = 3\n");
  rejects("[train]\nM = 1\n");
  rejects("problem = \"heat\"\n");
  rejects("problem = \"rotation\"\n[train\n");
  CHECK_THROWS_AS(cli::load_config("/nonexistent/config.toml"), ConfigError);
}

TEST_CASE("config digest") {
  const auto a = cli::parse_config(kTiny);
  auto b = a;
  CHECK(cli::config_digest(a) == cli::config_digest(b));
  CHECK(cli::config_digest(a).size() == 16);
  b.train.M1 += 1;
  CHECK(cli::config_digest(a) != cli::config_digest(b));
}

TEST_CASE("grid export") {
  const auto ac = pde::make_problem("allen_cahn");
  const auto net = test::random_network({2, 4, 1}, 5);
  const std::string csv = cli::grid_csv(*ac, net, 257, 101);
  CHECK(count_lines(csv) == 25957 + 1);
  CHECK(csv.rfind("x1,t,u\n", 0) == 0);
  // The hard constraint puts u0 on the t = 0 row.
  std::istringstream in(csv);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(first == "-1,0,-1");

  const auto rot = pde::make_problem("rotation");
  const std::string csv2 = cli::grid_csv(*rot, test::random_network({3, 4, 1}, 6), 11, 3);
  CHECK(count_lines(csv2) == 11 * 11 * 3 + 1);
  CHECK(csv2.rfind("x1,x2,t,u\n", 0) == 0);

  const auto adv = pde::make_problem("advection6d");
  CHECK_THROWS_AS(cli::grid_csv(*adv, test::random_network({7, 4, 1}, 7), 3, 3), ConfigError);
  CHECK(cli::default_grid(cli::preset_config("allen_cahn", "desk")) == std::pair{257, 101});
}

TEST_CASE("runs write reproducible artifacts") {
  auto c = cli::parse_config(kTiny);
  const auto root = std::filesystem::temp_directory_path() / "msm_cli_test";
  std::filesystem::remove_all(root);
  c.out_dir = root / "a";
  c.export_grid = true;
  const auto first = cli::execute_run(c, "msm", 4);
  c.out_dir = root / "b";
  const auto second = cli::execute_run(c, "msm", 4);
  CHECK(first.dir == root / "a" / "rotation" / "msm" / "seed_4");
  for (const char* f : {"metrics.json", "history.csv", "effective_config.toml", "run.json", "grid.csv",
                        "checkpoints/u.json", "checkpoints/phi.json"}) {
    INFO(f);
    REQUIRE(std::filesystem::exists(first.dir / f));
    if (std::string(f) == "effective_config.toml" || std::string(f) == "run.json") continue;
    CHECK(io::read_file(first.dir / f) == io::read_file(second.dir / f));
  }
  const auto eff = cli::load_config(first.dir / "effective_config.toml");
  CHECK(eff.seeds == std::vector<std::uint64_t>{4});
  CHECK(eff.train.seed == 4);
  CHECK(eff.method == "msm");

  const auto pinn = cli::execute_run(c, "pinn", 4);
  CHECK(std::filesystem::exists(pinn.dir / "metrics.json"));
  CHECK_FALSE(std::filesystem::exists(pinn.dir / "checkpoints" / "phi.json"));
  const auto row = cli::report_row(pinn, "rotation");
  CHECK(row.method == "pinn");
  CHECK(row.seed == "4");
  CHECK(row.rel_l2 == pinn.result.final_errors.rel_l2);
  std::filesystem::remove_all(root);
}

TEST_CASE("shipped configs spell out the full presets") {
  for (const auto& name : pde::problem_names()) {
    INFO(name);
    const auto path = std::filesystem::path(MSM_SOURCE_DIR) / "configs" / (name + ".toml");
    auto expected = cli::preset_config(name, "full");
    expected.seeds = {0, 1, 2};
    CHECK(cli::load_config(path) == expected);
  }
}
