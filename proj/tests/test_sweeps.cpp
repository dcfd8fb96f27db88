#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "twoscale/sweeps.hpp"

#include "test_models.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

using namespace twoscale;
using twoscale::testutil::make_toy;

namespace {

// Constant-cost instance: every estimator must return l0 + h0.
PresetBundle constant_bundle(double l0, double h0) {
  PresetBundle pb;
  pb.model = make_toy(1, 1, -1.0, -10.0);
  pb.model.name = "constant_instance";
  pb.model.R_mult = [](const Vec&) { return Vec::Constant(1, 0.2); };
  pb.model.l = [l0](const Vec&, const Vec&, double) { return l0; };
  pb.model.h = [h0](const Vec&) { return h0; };
  pb.x0 = Vec::Constant(1, 0.4);
  pb.q0 = Vec::Zero(1);
  return pb;
}

ExperimentConfig cheap_config(const PresetBundle& pb) {
  ExperimentConfig cfg;
  cfg.custom = pb;
  cfg.eps_grid = {0.2, 0.1};
  cfg.eta_grid = {0.4, 0.1, 0.0};
  cfg.seed = 5;
  cfg.solver.n_paths = 256;
  cfg.solver.bsde.n_paths = 384;
  cfg.solver.n_policy_rounds = 1;
  cfg.solver.limit_bsde_paths = 512;
  cfg.solver.lambda_cell.n_paths = 6;
  cfg.solver.lambda_cell.n_rounds = 2;
  cfg.solver.lambda_nx = 3;
  cfg.solver.legendre_alpha_points = 81;
  cfg.solver.legendre_z_points = 201;
  cfg.solver.reduced.n_paths = 128;
  cfg.solver.reduced.max_sweeps = 1;
  cfg.solver.lip_paths = 128;
  return cfg;
}

}  // namespace

TEST_CASE("config JSON round trip and validation") {
  const std::string path = "/tmp/twoscale_cfg_test.json";
  {
    std::ofstream os(path);
    os << R"({
      "preset": "linear_toy",
      "epsilon_grid": [0.5, 0.1],
      "eta_grid": [0.2, 0.1, 0.0],
      "seed": 99,
      "out": "/tmp/tw_cfg_out",
      "solver": {
        "n_paths": 111,
        "n_policy_rounds": 2,
        "bsde_steps": 25,
        "basis": {"slow_vars": 1, "fast_vars": 1, "degree": 2},
        "lambda": {"n_x": 5, "dense_step": 0.25, "n_paths": 8, "rounds": 2},
        "legendre": {"alpha_points": 101, "z_points": 301},
        "reduced": {"n_paths": 64, "n_steps": 30, "blocks": 2, "sweeps": 3},
        "limit_bsde_paths": 777
      }
    })";
  }
  const ExperimentConfig c = ExperimentConfig::from_json_file(path);
  CHECK(c.preset == "linear_toy");
  CHECK(c.eps_grid == std::vector<double>{0.5, 0.1});
  CHECK(c.eta_grid == std::vector<double>{0.2, 0.1, 0.0});
  CHECK(c.seed == 99);
  CHECK(c.solver.n_paths == 111);
  CHECK(c.solver.bsde.n_steps == 25);
  CHECK(c.solver.lambda_nx == 5);
  CHECK(c.solver.legendre_alpha_points == 101);
  CHECK(c.solver.reduced.n_blocks == 2);
  CHECK(c.solver.limit_bsde_paths == 777);
  std::remove(path.c_str());

  // Grid ordering violations are configuration errors.
  ExperimentConfig bad;
  bad.eps_grid = {0.1, 0.2};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ExperimentConfig{};
  bad.eta_grid = {0.0, 0.1};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ExperimentConfig{};
  bad.eps_grid = {0.2, -0.1};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("eta sweep on a constant instance: deviations sit at noise level") {
  ExperimentConfig cfg = cheap_config(constant_bundle(0.45, 0.3));
  const SweepResult res = run_eta_sweep(cfg);
  int n_dev = 0;
  for (const auto& r : res.rows) {
    if (r.estimator == "V") {
      CHECK(r.value == doctest::Approx(0.75).epsilon(1e-9));
    }
    if (r.estimator == "deviation") {
      ++n_dev;
      CHECK(r.value <= 3.0 * r.stderr_ + 1e-9);
    }
  }
  CHECK(n_dev == 4);  // two eps x two positive eta
}

TEST_CASE("epsilon sweep on a constant instance agrees with the limit value") {
  ExperimentConfig cfg = cheap_config(constant_bundle(0.45, 0.3));
  cfg.eta_grid = {0.1};
  const SweepResult res = run_epsilon_sweep(cfg);
  INFO(res.audits.summary());
  CHECK(res.pass());
  for (const auto& r : res.rows)
    if (r.estimator == "Y0_limit" || r.estimator == "V")
      CHECK(std::abs(r.value - 0.75) <= 3.0 * r.stderr_ + 5e-3);
}

TEST_CASE("interchange on a constant instance: three equal estimates") {
  ExperimentConfig cfg = cheap_config(constant_bundle(0.45, 0.3));
  const SweepResult res = run_interchange(cfg);
  INFO(res.audits.summary());
  CHECK(res.pass());
  for (const auto& r : res.rows) {
    if (r.estimator == "V_policy_search" || r.estimator == "v_eta_limit_bsde" ||
        r.estimator == "V_reduced")
      CHECK(std::abs(r.value - 0.75) <= 3.0 * r.stderr_ + 5e-3);
  }
}

TEST_CASE("sweep CSVs are reproducible up to the runtime column") {
  ExperimentConfig cfg = cheap_config(constant_bundle(0.45, 0.3));
  auto render = [&](const SweepResult& res) {
    std::ostringstream os;
    for (const auto& r : res.rows)
      os << r.epsilon << '|' << r.eta << '|' << r.estimator << '|' << r.value << '|'
         << r.stderr_ << '|' << r.fingerprint << '\n';
    return os.str();
  };
  const std::string a = render(run_eta_sweep(cfg));
  const std::string b = render(run_eta_sweep(cfg));
  CHECK(a == b);
  const std::string dir = "/tmp/tw_sweep_out";
  const SweepResult res = run_eta_sweep(cfg);
  res.write_csv(dir);
  res.write_plot_data(dir);
  std::ifstream f(dir + "/sweep_eta.csv");
  std::string header;
  std::getline(f, header);
  CHECK(header == "epsilon,eta,estimator,value,stderr,runtime_s,fingerprint");
  std::ifstream g(dir + "/sweep_eta_plot.csv");
  std::getline(g, header);
  CHECK(header == "x,y,y_err");
}

TEST_CASE("model overrides rebuild the reaction-diffusion truncation") {
  const std::string path = "/tmp/twoscale_cfg_model.json";
  {
    std::ofstream os(path);
    os << R"({"preset": "reaction_diffusion", "model": {"n_modes": 4, "m_shift": 3.0}})";
  }
  const ExperimentConfig c = ExperimentConfig::from_json_file(path);
  const PresetBundle pb = c.bundle();
  CHECK(pb.model.n_slow() == 4);
  CHECK(pb.model.B_eigs[0] ==
        doctest::Approx(-(3.14159265358979323846 * 3.14159265358979323846 + 3.0)));
  CHECK(validate_hypotheses(pb.model).all_pass());
  std::remove(path.c_str());
}
