// Command-line harness: preset validation, path inspection, table builds
// and the convergence sweeps.  Exit code 0 iff every audit in the requested
// run passes its stated tolerance.

#include <CLI11.hpp>

#include "twoscale/bsde.hpp"
#include "twoscale/dynamics.hpp"
#include "twoscale/ergodic.hpp"
#include "twoscale/legendre.hpp"
#include "twoscale/presets.hpp"
#include "twoscale/reduced.hpp"
#include "twoscale/sweeps.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace twoscale;

namespace {

struct CommonOpts {
  std::string config_file;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
};

ExperimentConfig load_config(const CommonOpts& opts) {
  ExperimentConfig cfg;
  if (!opts.config_file.empty()) cfg = ExperimentConfig::from_json_file(opts.config_file);
  if (opts.seed_set) cfg.seed = opts.seed;
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_file, "JSON experiment configuration");
  cmd->add_option("--seed", opts.seed, "RNG seed override")
      ->each([&](const std::string&) { opts.seed_set = true; });
  cmd->add_option("--out", opts.out_dir, "output directory override");
}

int finish(const SweepResult& res, const ExperimentConfig& cfg) {
  res.write_csv(cfg.out_dir);
  res.write_plot_data(cfg.out_dir);
  std::cout << res.audits.summary();
  std::cout << (res.pass() ? "ALL AUDITS PASS" : "AUDIT FAILURES") << "\n";
  return res.pass() ? 0 : 1;
}

int cmd_validate(const CommonOpts& opts) {
  const ExperimentConfig cfg = load_config(opts);
  const PresetBundle pb = cfg.bundle();
  const ValidationReport rep = validate_hypotheses(pb.model);
  std::cout << "preset: " << pb.model.name << "\n" << rep.summary();
  const double cA = hs_decay_constant(pb.model.slow_semigroup(), pb.model.gamma);
  const double cB = hs_decay_constant(pb.model.fast_semigroup(), pb.model.gamma);
  std::printf("HS decay constants: A %.4g, B %.4g (gamma = %.3g)\n", cA, cB, pb.model.gamma);
  std::printf("dissipativity margin mu = %.4g\n", pb.model.mu);
  std::cout << (rep.all_pass() ? "ALL AUDITS PASS" : "AUDIT FAILURES") << "\n";
  return rep.all_pass() ? 0 : 1;
}

int cmd_simulate(const CommonOpts& opts) {
  const ExperimentConfig cfg = load_config(opts);
  const PresetBundle pb = cfg.bundle();
  TwoScaleParams p;
  p.epsilon = cfg.eps_grid.front();
  p.eta = cfg.eta_grid.front();
  p.n_steps = default_steps(p.epsilon);
  p.x0 = pb.x0;
  p.q0 = pb.q0;
  const PathBundle b = simulate_pair(pb.model, p, Policy{}, NoiseMode::Keyed, cfg.seed, 0);
  const PathBundle r = replay(pb.model, p, b);
  const double rep_err =
      (b.X - r.X).cwiseAbs().maxCoeff() + (b.Q - r.Q).cwiseAbs().maxCoeff();
  std::filesystem::create_directories(cfg.out_dir);
  b.to_csv(cfg.out_dir + "/paths.csv");
  const MomentReport mom = moment_report(pb.model, p, 256, cfg.seed);
  std::printf("wrote %s/paths.csv (%d steps, eps=%.4g, eta=%.4g)\n", cfg.out_dir.c_str(),
              p.n_steps, p.epsilon, p.eta);
  std::printf("replay max deviation: %.3g (bit-exact: %s)\n", rep_err,
              rep_err == 0.0 ? "yes" : "NO");
  for (const auto& row : mom.rows)
    std::printf("p=%d: E sup|X|^p = %.5g (se %.2g), sup_t E|Q_t|^p = %.5g (se %.2g)\n", row.p,
                row.e_sup_x, row.e_sup_x_se, row.sup_e_q, row.sup_e_q_se);
  std::cout << (rep_err == 0.0 ? "ALL AUDITS PASS" : "AUDIT FAILURES") << "\n";
  return rep_err == 0.0 ? 0 : 1;
}

int cmd_lambda(const CommonOpts& opts) {
  const ExperimentConfig cfg = load_config(opts);
  const Pipeline pl = build_pipeline(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  pl.lambda_table.save_csv(cfg.out_dir + "/lambda_table.csv");
  std::printf("lip(v^eta) estimate %.4g -> a = %.4g, kappa = %.4g\n", pl.lip_estimate,
              pl.trunc.a, pl.trunc.kappa);
  std::printf("lambda table: %zu cells -> %s/lambda_table.csv\n",
              pl.lambda_table.n_cells(), cfg.out_dir.c_str());
  std::cout << pl.lambda_audit.summary();
  std::cout << (pl.lambda_audit.all_pass() ? "ALL AUDITS PASS" : "AUDIT FAILURES") << "\n";
  return pl.lambda_audit.all_pass() ? 0 : 1;
}

int cmd_legendre(const CommonOpts& opts) {
  const ExperimentConfig cfg = load_config(opts);
  const Pipeline pl = build_pipeline(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  pl.lambda_table.save_csv(cfg.out_dir + "/lambda_table.csv");
  pl.legendre_table.save_csv(cfg.out_dir + "/legendre_table.csv");

  // Round-trip audit on the lambda-table x nodes.
  LambdaEval lam = [&](const Vec& x, const Vec& z) {
    Vec zf = Vec::Zero(pl.pb.model.n_slow());
    zf.head(z.size()) = z;
    return pl.lambda_table.value_at(x, zf);
  };
  double worst = 0.0;
  const double zr = pl.trunc.cap_radius();
  for (double s : pl.lambda_table.s_grid) {
    const Vec x = pl.pb.model.point_on_line(s);
    for (int i = 0; i <= 100; ++i) {
      const double z = -zr + 2 * zr * i / 100.0;
      const Vec zz = Vec::Constant(1, z);
      const double tl = tilde_lambda(lam, pl.trunc, x, zz);
      Vec zf = Vec::Zero(pl.pb.model.n_slow());
      zf[0] = z;
      const double rec = fenchel_recover(pl.legendre_table, x, zf);
      worst = std::max(worst, std::abs(rec - tl));
    }
  }
  const bool pass = worst <= 0.05 && pl.containment >= 0.99;
  std::printf("fenchel round-trip sup deviation: %.4g\n", worst);
  std::printf("limit-BSDE z-queries inside the identity region: %.4f\n", pl.containment);
  std::cout << (pass ? "ALL AUDITS PASS" : "AUDIT FAILURES") << "\n";
  return pass ? 0 : 1;
}

int cmd_bsde(const CommonOpts& opts) {
  const ExperimentConfig cfg = load_config(opts);
  const PresetBundle pb = cfg.bundle();
  const double eps = cfg.eps_grid.back();
  double eta = 0.0;
  for (double e : cfg.eta_grid)
    if (e > 0) eta = std::min(eta == 0.0 ? e : eta, e);
  if (eta == 0.0) eta = 0.1;
  const VResult vr = estimate_V(pb.model, eps, eta, cfg.solver.n_paths,
                                cfg.solver.n_policy_rounds, pb.x0, pb.q0, cfg.seed,
                                &cfg.solver.bsde);
  std::printf("eps=%.4g eta=%.4g: Y0 = %.5g (se %.2g), policy value = %.5g (se %.2g)\n", eps,
              eta, vr.y0, vr.y0_stderr, vr.value.mean, vr.value.stderr_);
  std::printf("policy gap (value - Y0) = %.5g\n", vr.policy_gap);
  const bool sandwich = vr.value.mean >= vr.y0 - 3.0 * (vr.value.stderr_ + vr.y0_stderr);
  std::cout << (sandwich ? "ALL AUDITS PASS" : "AUDIT FAILURES") << "\n";
  return sandwich ? 0 : 1;
}

int cmd_reduce(const CommonOpts& opts) {
  const ExperimentConfig cfg = load_config(opts);
  const Pipeline pl = build_pipeline(cfg);
  const ReducedResult rr = solve_reduced(pl.pb.model, pl.legendre_table, 0.0,
                                         cfg.solver.reduced, pl.pb.x0, cfg.seed);
  std::printf("reduced value at eta=0: %.5g (se %.2g)\n", rr.value.mean, rr.value.stderr_);
  std::filesystem::create_directories(cfg.out_dir);
  {
    // Policy coefficients, one row per (block, active dim), with the run
    // fingerprint in the header.
    std::ofstream os(cfg.out_dir + "/reduced_policy.csv");
    os << "# fingerprint=" << std::hex << rr.value.fingerprint << std::dec
       << " value=" << rr.value.mean << " stderr=" << rr.value.stderr_ << "\n";
    os << "block,dim";
    for (int j = 0; j < rr.policy.basis.size(); ++j) os << ",c" << j;
    os << "\n";
    for (int b = 0; b < rr.policy.n_blocks; ++b)
      for (int d = 0; d < rr.policy.active_dim; ++d) {
        os << b << ',' << d;
        for (int j = 0; j < rr.policy.basis.size(); ++j) os << ',' << rr.policy.coefs[b](d, j);
        os << "\n";
      }
  }
  bool pass = true;
  const bool degenerate =
      pl.pb.model.R_mult(pl.pb.x0).cwiseAbs().maxCoeff() == 0.0;
  if (degenerate) {
    const DeterministicResult det =
        solve_reduced_deterministic(pl.pb.model, pl.legendre_table, pl.pb.x0,
                                    cfg.solver.reduced.n_steps, 8, cfg.seed);
    std::printf("deterministic transcription: %.5g\n", det.value);
    {
      std::ofstream os(cfg.out_dir + "/reduced_control_trajectory.csv");
      os << "t";
      for (int d = 0; d < det.alpha.cols(); ++d) os << ",alpha" << d + 1;
      os << "\n";
      for (int k = 0; k < det.alpha.rows(); ++k) {
        os << det.times[k];
        for (int d = 0; d < det.alpha.cols(); ++d) os << ',' << det.alpha(k, d);
        os << "\n";
      }
    }
    pass = std::abs(det.value - rr.value.mean) <= 3.0 * rr.value.stderr_ + 0.02;
    if (pl.pb.model.n_slow() == 1) {
      std::vector<double> xg, ag;
      const double span = pl.lambda_table.s_grid.back();
      for (int i = 0; i <= 120; ++i) xg.push_back(-span + 2 * span * i / 120.0);
      const double ar = pl.pb.model.M + 1.0;
      for (int i = 0; i <= 80; ++i) ag.push_back(-ar + 2 * ar * i / 80.0);
      const double dp = dp_oracle(pl.pb.model, pl.legendre_table, xg, ag, 50, pl.pb.x0);
      std::printf("dp oracle: %.5g\n", dp);
      pass = pass && std::abs(dp - rr.value.mean) <= 0.05;
    }
  }
  std::cout << (pass ? "ALL AUDITS PASS" : "AUDIT FAILURES") << "\n";
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-scale singular-limit toolkit"};
  app.require_subcommand(1);

  CommonOpts opts;
  int rc = 0;
  auto bind = [&](const std::string& name, const std::string& desc, auto fn) {
    CLI::App* cmd = app.add_subcommand(name, desc);
    add_common(cmd, opts);
    cmd->callback([&, fn]() { rc = fn(); });
    return cmd;
  };

  bind("validate", "check the standing hypotheses on the configured preset",
       [&]() { return cmd_validate(opts); });
  bind("simulate", "simulate one two-scale path bundle and verify replay",
       [&]() { return cmd_simulate(opts); });
  bind("lambda", "build the ergodic-value table and audit its properties",
       [&]() { return cmd_lambda(opts); });
  bind("legendre", "build the conjugate table and audit the Fenchel round trip",
       [&]() { return cmd_legendre(opts); });
  bind("bsde", "solve the regularized BSDE and cross-check the policy value",
       [&]() { return cmd_bsde(opts); });
  bind("reduce", "solve the reduced control problem (plus oracles when applicable)",
       [&]() { return cmd_reduce(opts); });
  bind("sweep-eta", "vanishing-noise sweep |V^{eps,eta} - V^{eps,0}| with rate fits", [&]() {
    const ExperimentConfig cfg = load_config(opts);
    return finish(run_eta_sweep(cfg), cfg);
  });
  bind("sweep-eps", "averaging sweep V^{eps,eta} against the limit-BSDE value", [&]() {
    const ExperimentConfig cfg = load_config(opts);
    return finish(run_epsilon_sweep(cfg), cfg);
  });
  bind("interchange", "three-way agreement of the limit value estimates", [&]() {
    const ExperimentConfig cfg = load_config(opts);
    return finish(run_interchange(cfg), cfg);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}
