#include "twoscale/sweeps.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace twoscale {

namespace {

using nlohmann::json;

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double secs() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

double min_positive(const std::vector<double>& v) {
  double best = 0.0;
  for (double x : v)
    if (x > 0 && (best == 0.0 || x < best)) best = x;
  return best;
}

SweepRow make_row(double eps, double eta, const std::string& est, double value, double se,
                  double secs, uint64_t fp) {
  return SweepRow{eps, eta, est, value, se, secs, fp};
}

void push_audit(AuditReport& rep, const std::string& name, double violation,
                const std::string& where = "") {
  rep.items.push_back({name, violation <= 1e-9, violation, where});
}

}  // namespace

void ExperimentConfig::validate() const {
  if (eps_grid.empty()) throw ConfigError("config: epsilon grid is empty");
  for (std::size_t i = 0; i < eps_grid.size(); ++i) {
    if (eps_grid[i] <= 0) throw ConfigError("config: epsilon entries must be positive");
    if (i > 0 && eps_grid[i] >= eps_grid[i - 1])
      throw ConfigError("config: epsilon grid must be sorted descending");
  }
  if (eta_grid.empty()) throw ConfigError("config: eta grid is empty");
  for (std::size_t i = 0; i < eta_grid.size(); ++i) {
    if (eta_grid[i] < 0) throw ConfigError("config: eta entries must be nonnegative");
    if (eta_grid[i] == 0 && i + 1 != eta_grid.size())
      throw ConfigError("config: only a trailing eta = 0 is allowed");
    if (i > 0 && eta_grid[i] >= eta_grid[i - 1])
      throw ConfigError("config: eta grid must be sorted descending");
  }
}

PresetBundle ExperimentConfig::bundle() const {
  PresetBundle pb =
      custom ? *custom : load_preset(preset, n_modes_override, m_shift_override);
  if (custom && (n_modes_override != 0 || m_shift_override != 0.0))
    throw ConfigError("config: model overrides do not apply to in-memory bundles");
  if (x0_override.size() > 0) {
    if (x0_override.size() != pb.model.n_slow())
      throw ConfigError("config: x0 override has the wrong dimension");
    pb.x0 = x0_override;
  }
  if (q0_override.size() > 0) {
    if (q0_override.size() != pb.model.n_fast())
      throw ConfigError("config: q0 override has the wrong dimension");
    pb.q0 = q0_override;
  }
  return pb;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: JSON parse failure: ") + e.what());
  }

  ExperimentConfig c;
  c.preset = j.value("preset", c.preset);
  if (j.contains("epsilon_grid")) c.eps_grid = j["epsilon_grid"].get<std::vector<double>>();
  if (j.contains("eta_grid")) c.eta_grid = j["eta_grid"].get<std::vector<double>>();
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out", c.out_dir);
  if (j.contains("x0")) {
    const auto v = j["x0"].get<std::vector<double>>();
    c.x0_override = Eigen::Map<const Vec>(v.data(), v.size());
  }
  if (j.contains("q0")) {
    const auto v = j["q0"].get<std::vector<double>>();
    c.q0_override = Eigen::Map<const Vec>(v.data(), v.size());
  }
  if (j.contains("model")) {
    c.n_modes_override = j["model"].value("n_modes", 0);
    c.m_shift_override = j["model"].value("m_shift", 0.0);
  }
  if (j.contains("solver")) {
    const json& s = j["solver"];
    c.solver.n_paths = s.value("n_paths", c.solver.n_paths);
    c.solver.n_policy_rounds = s.value("n_policy_rounds", c.solver.n_policy_rounds);
    c.solver.bsde.n_steps = s.value("bsde_steps", c.solver.bsde.n_steps);
    if (s.contains("basis")) {
      c.solver.bsde.basis.slow_vars = s["basis"].value("slow_vars", 2);
      c.solver.bsde.basis.fast_vars = s["basis"].value("fast_vars", 1);
      c.solver.bsde.basis.degree = s["basis"].value("degree", 2);
    }
    if (s.contains("lambda")) {
      const json& l = s["lambda"];
      c.solver.lambda_cell.T = l.value("T", 0.0);
      c.solver.lambda_cell.burn_in = l.value("burn_in", 0.0);
      c.solver.lambda_cell.dt = l.value("dt", c.solver.lambda_cell.dt);
      c.solver.lambda_cell.n_paths = l.value("n_paths", c.solver.lambda_cell.n_paths);
      c.solver.lambda_cell.n_rounds = l.value("rounds", c.solver.lambda_cell.n_rounds);
      c.solver.lambda_nx = l.value("n_x", c.solver.lambda_nx);
      c.solver.lambda_x_span = l.value("x_span", c.solver.lambda_x_span);
      c.solver.lambda_dense_radius = l.value("dense_radius", c.solver.lambda_dense_radius);
      c.solver.lambda_dense_step = l.value("dense_step", c.solver.lambda_dense_step);
    }
    if (s.contains("legendre")) {
      c.solver.legendre_alpha_points =
          s["legendre"].value("alpha_points", c.solver.legendre_alpha_points);
      c.solver.legendre_z_points = s["legendre"].value("z_points", c.solver.legendre_z_points);
    }
    if (s.contains("reduced")) {
      const json& r = s["reduced"];
      c.solver.reduced.n_paths = r.value("n_paths", c.solver.reduced.n_paths);
      c.solver.reduced.n_steps = r.value("n_steps", c.solver.reduced.n_steps);
      c.solver.reduced.n_blocks = r.value("blocks", c.solver.reduced.n_blocks);
      c.solver.reduced.max_sweeps = r.value("sweeps", c.solver.reduced.max_sweeps);
    }
    c.solver.limit_bsde_paths = s.value("limit_bsde_paths", c.solver.limit_bsde_paths);
    c.solver.lip_probe = s.value("lip_probe", c.solver.lip_probe);
    c.solver.lip_paths = s.value("lip_paths", c.solver.lip_paths);
  }
  c.validate();
  return c;
}

TruncationParams estimate_truncation(const ExperimentConfig& config, const PresetBundle& pb,
                                     double* lip_out) {
  const ModelSpec& model = pb.model;
  const SolverConfig& sc = config.solver;
  // Uniform-in-time Lipschitz probe of v^eta along the slow line: central
  // differences of the policy-search value at t = 0, and of the terminal
  // slice v(1, .) = h around the states the paths visit.  The terminal
  // slice usually dominates because the value loses x-memory backwards.
  const double eps_mid = config.eps_grid.front();
  double eta_probe = min_positive(config.eta_grid);
  if (eta_probe == 0.0) eta_probe = 0.1;
  const double delta = sc.lip_probe;
  const Vec dir = model.x_dir / model.x_dir.norm();
  const uint64_t lip_seed = salted_seed(config.seed, 0x11b);
  const VResult vp = estimate_V(model, eps_mid, eta_probe, sc.lip_paths, 1,
                                Vec(pb.x0 + delta * dir), pb.q0, lip_seed, &sc.bsde);
  const VResult vm = estimate_V(model, eps_mid, eta_probe, sc.lip_paths, 1,
                                Vec(pb.x0 - delta * dir), pb.q0, lip_seed, &sc.bsde);
  double lip = std::abs(vp.value.mean - vm.value.mean) / (2.0 * delta);
  for (double shift : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
    const Vec base = pb.x0 + shift * dir;
    const double lip_h = std::abs(model.h(Vec(base + delta * dir)) -
                                  model.h(Vec(base - delta * dir))) /
                         (2.0 * delta);
    lip = std::max(lip, lip_h);
  }
  if (lip_out) *lip_out = lip;
  return choose_kappa(model, config.eta_grid, lip);
}

double derive_s_span(const ExperimentConfig& config, const PresetBundle& pb) {
  const ModelSpec& model = pb.model;
  if (config.solver.lambda_x_span > 0) return config.solver.lambda_x_span;
  int imax = 0;
  model.x_dir.cwiseAbs().maxCoeff(&imax);
  const double a1 = model.A_eigs[imax];
  const double c1 = a1 < -1e-12 ? (1.0 - std::exp(a1)) / (-a1) : 1.0;
  const double v = a1 < -1e-12 ? (1.0 - std::exp(2.0 * a1)) / (-2.0 * a1) : 1.0;
  const double r0 = 1.5 * std::abs(model.R_mult(pb.x0)[imax]);
  const double eta_max = config.eta_grid.front();
  const double sigma = std::sqrt((r0 * r0 + eta_max * eta_max) * v);
  return std::abs(model.line_coordinate(pb.x0)) + (model.M + 1.0) * c1 + 5.0 * sigma + 0.5;
}

Pipeline build_pipeline(const ExperimentConfig& config) {
  config.validate();
  Pipeline pl;
  pl.pb = config.bundle();
  const ModelSpec& model = pl.pb.model;
  const SolverConfig& sc = config.solver;

  pl.trunc = estimate_truncation(config, pl.pb, &pl.lip_estimate);

  // Lambda table grids: the slow-line span covers the initial state, the
  // ball-constrained drift over the unit horizon and a 5-sigma noise band;
  // the z axis is dense where the limit BSDE queries it and sparse out to
  // the cap radius kappa + M.
  const double span = derive_s_span(config, pl.pb);
  std::vector<double> s_grid;
  for (int i = 0; i < sc.lambda_nx; ++i)
    s_grid.push_back(-span + 2.0 * span * i / std::max(1, sc.lambda_nx - 1));

  double dense_radius = sc.lambda_dense_radius;
  if (dense_radius <= 0)
    dense_radius = std::max(1.2 * pl.trunc.identity_radius(), 3.0 * sc.lambda_dense_step);
  dense_radius = std::min(dense_radius, pl.trunc.cap_radius() * 0.9);
  std::vector<std::vector<double>> z_axes(
      model.active_dim, make_z_axis(dense_radius, sc.lambda_dense_step, pl.trunc.cap_radius()));

  pl.lambda_table = build_lambda_table(model, s_grid, z_axes, sc.lambda_cell,
                                       salted_seed(config.seed, 0x1a3));
  pl.lambda_audit = lambda_property_audit(pl.lambda_table, model.M, model.L);

  std::vector<double> a_axis;
  const double aball = model.M + 1.0;
  for (int i = 0; i < sc.legendre_alpha_points; ++i)
    a_axis.push_back(-aball + 2.0 * aball * i / (sc.legendre_alpha_points - 1.0));
  StarSettings ss;
  ss.z_search_radius = pl.trunc.cap_radius();
  ss.n_per_dim = sc.legendre_z_points;
  pl.legendre_table = build_legendre_table(
      pl.lambda_table, pl.trunc, std::vector<std::vector<double>>(model.active_dim, a_axis), ss);

  // Containment of the limit-BSDE z queries in the identity region.
  const double eta_min = min_positive(config.eta_grid);
  if (eta_min > 0) {
    BsdeSettings bst = sc.bsde;
    bst.n_paths = sc.limit_bsde_paths;
    const BsdeSolution sol = solve_limit_bsde(model, eta_min, pl.lambda_table, bst, pl.pb.x0,
                                              salted_seed(config.seed, 0x11f), &pl.trunc);
    pl.containment = sol.z_frac_in_identity;
  }
  return pl;
}

SweepResult run_eta_sweep(const ExperimentConfig& config) {
  config.validate();
  if (min_positive(config.eta_grid) == 0.0 || config.eta_grid.back() != 0.0)
    throw ConfigError("run_eta_sweep: the eta grid must contain positive entries and a trailing 0");
  const PresetBundle pb = config.bundle();
  const SolverConfig& sc = config.solver;

  SweepResult out;
  out.name = "sweep_eta";

  std::vector<double> etas_pos;
  for (double e : config.eta_grid)
    if (e > 0) etas_pos.push_back(e);

  std::vector<double> sup_dev(etas_pos.size(), 0.0);

  for (double eps : config.eps_grid) {
    std::vector<double> devs, dev_ses;
    double v0 = 0.0, v0_se = 0.0;
    // eta = 0 baseline first (the grid is descending with trailing zero).
    {
      Timer t;
      const VResult vr = estimate_V(pb.model, eps, 0.0, sc.n_paths, sc.n_policy_rounds, pb.x0,
                                    pb.q0, config.seed, &sc.bsde);
      v0 = vr.value.mean;
      v0_se = vr.value.stderr_;
      out.rows.push_back(
          make_row(eps, 0.0, "V", v0, v0_se, t.secs(), vr.value.fingerprint));
    }
    for (double eta : etas_pos) {
      Timer t;
      const VResult vr = estimate_V(pb.model, eps, eta, sc.n_paths, sc.n_policy_rounds, pb.x0,
                                    pb.q0, config.seed, &sc.bsde);
      const double dev = std::abs(vr.value.mean - v0);
      const double dev_se = vr.value.stderr_ + v0_se;
      out.rows.push_back(
          make_row(eps, eta, "V", vr.value.mean, vr.value.stderr_, t.secs(),
                   vr.value.fingerprint));
      out.rows.push_back(make_row(eps, eta, "deviation", dev, dev_se, 0.0, 0));
      devs.push_back(dev);
      dev_ses.push_back(dev_se);
    }
    for (std::size_t i = 0; i < etas_pos.size(); ++i)
      sup_dev[i] = std::max(sup_dev[i], devs[i]);

    std::vector<double> ys;
    for (double d : devs) ys.push_back(std::max(d, 1e-6));
    const SlopeFit fit = fit_loglog(etas_pos, ys);
    out.slopes.push_back(fit.slope);
    out.slope_stderrs.push_back(fit.slope_stderr);
    std::ostringstream nm;
    nm << "eta-rate slope >= 0.8 at eps=" << eps;
    push_audit(out.audits, nm.str(), 0.8 - fit.slope);
    out.rows.push_back(make_row(eps, 0.0, "loglog_slope", fit.slope, fit.slope_stderr, 0.0, 0));
  }

  for (std::size_t i = 0; i < etas_pos.size(); ++i)
    out.rows.push_back(make_row(0.0, etas_pos[i], "sup_eps_deviation", sup_dev[i], 0.0, 0.0, 0));

  if (out.slopes.size() >= 2) {
    const double spread = *std::max_element(out.slopes.begin(), out.slopes.end()) -
                          *std::min_element(out.slopes.begin(), out.slopes.end());
    push_audit(out.audits, "slope spread across eps < 0.3", spread - 0.3);
  }
  return out;
}

SweepResult run_epsilon_sweep(const ExperimentConfig& config, const Pipeline* pipeline) {
  config.validate();
  if (min_positive(config.eta_grid) <= 0)
    throw ConfigError("run_epsilon_sweep: needs a positive eta in the grid");

  Pipeline local;
  if (!pipeline) {
    local = build_pipeline(config);
    pipeline = &local;
  }
  const PresetBundle& pb = pipeline->pb;
  const SolverConfig& sc = config.solver;

  SweepResult out;
  out.name = "sweep_eps";

  // One sub-sweep per positive eta in the grid.
  for (double eta : config.eta_grid) {
    if (eta <= 0) continue;
    const std::string tag = " (eta=" + std::to_string(eta).substr(0, 4) + ")";

    BsdeSettings bst = sc.bsde;
    bst.n_paths = sc.limit_bsde_paths;
    double y0, y0_se;
    {
      Timer t;
      const BsdeSolution sol =
          solve_limit_bsde(pb.model, eta, pipeline->lambda_table, bst, pb.x0,
                           salted_seed(config.seed, 0x17), &pipeline->trunc);
      y0 = sol.y0;
      y0_se = sol.y0_stderr;
      Fingerprint fp;
      fp.add(pb.model.fingerprint()).add(eta).add(config.seed).add(std::string("limit_bsde"));
      out.rows.push_back(make_row(0.0, eta, "Y0_limit", y0, y0_se, t.secs(), fp.value()));
    }

    std::vector<double> values, ses, devs;
    for (double eps : config.eps_grid) {
      Timer t;
      const VResult vr = estimate_V(pb.model, eps, eta, sc.n_paths, sc.n_policy_rounds, pb.x0,
                                    pb.q0, config.seed, &sc.bsde);
      values.push_back(vr.value.mean);
      ses.push_back(vr.value.stderr_);
      devs.push_back(std::abs(vr.value.mean - y0));
      out.rows.push_back(make_row(eps, eta, "V", vr.value.mean, vr.value.stderr_, t.secs(),
                                  vr.value.fingerprint));
      out.rows.push_back(
          make_row(eps, eta, "deviation", devs.back(), ses.back() + y0_se, 0.0, 0));
    }

    const std::size_t last = values.size() - 1;
    push_audit(out.audits, "deviation at eps_min <= 3 stderr + 0.05" + tag,
               devs[last] - (3.0 * (ses[last] + y0_se) + 0.05));
    push_audit(out.audits, "deviation at eps_min <= deviation at eps_max" + tag,
               devs[last] - devs[0] - 3.0 * (ses[last] + ses[0] + 2 * y0_se));
    // Cauchy trend: successive differences decrease along the grid.
    double worst_cauchy = -1e300;
    for (std::size_t k = 0; k + 2 < values.size(); ++k) {
      const double d1 = std::abs(values[k + 1] - values[k]);
      const double d2 = std::abs(values[k + 2] - values[k + 1]);
      const double slack = 3.0 * (ses[k] + 2 * ses[k + 1] + ses[k + 2]);
      worst_cauchy = std::max(worst_cauchy, d2 - d1 - slack);
      out.rows.push_back(make_row(config.eps_grid[k + 1], eta, "successive_difference", d1,
                                  ses[k] + ses[k + 1], 0.0, 0));
      if (k + 2 == values.size() - 1)
        out.rows.push_back(make_row(config.eps_grid[k + 2], eta, "successive_difference", d2,
                                    ses[k + 1] + ses[k + 2], 0.0, 0));
    }
    if (values.size() >= 3)
      push_audit(out.audits, "successive differences decrease monotonically" + tag,
                 worst_cauchy);
  }
  return out;
}

SweepResult run_interchange(const ExperimentConfig& config, const Pipeline* pipeline) {
  config.validate();
  Pipeline local;
  if (!pipeline) {
    local = build_pipeline(config);
    pipeline = &local;
  }
  const PresetBundle& pb = pipeline->pb;
  const SolverConfig& sc = config.solver;
  const double eps_min = config.eps_grid.back();
  const double eta_min = min_positive(config.eta_grid);
  if (eta_min <= 0) throw ConfigError("run_interchange: needs a positive eta in the grid");

  SweepResult out;
  out.name = "interchange";

  struct Est {
    std::string name;
    double value, se;
    std::function<double(const Vec&)> at;  // re-evaluation at a shifted x0
  };
  std::vector<Est> ests;

  {
    Timer t;
    const VResult vr = estimate_V(pb.model, eps_min, 0.0, sc.n_paths, sc.n_policy_rounds,
                                  pb.x0, pb.q0, config.seed, &sc.bsde);
    out.rows.push_back(make_row(eps_min, 0.0, "V_policy_search", vr.value.mean,
                                vr.value.stderr_, t.secs(), vr.value.fingerprint));
    ests.push_back({"V_policy_search", vr.value.mean, vr.value.stderr_,
                    [&, eps_min](const Vec& x) {
                      return estimate_V(pb.model, eps_min, 0.0, sc.n_paths,
                                        std::min(sc.n_policy_rounds, 2), x, pb.q0, config.seed,
                                        &sc.bsde)
                          .value.mean;
                    }});
  }
  {
    Timer t;
    BsdeSettings bst = sc.bsde;
    bst.n_paths = sc.limit_bsde_paths;
    const BsdeSolution sol =
        solve_limit_bsde(pb.model, eta_min, pipeline->lambda_table, bst, pb.x0,
                         salted_seed(config.seed, 0x17), &pipeline->trunc);
    Fingerprint fp;
    fp.add(pb.model.fingerprint()).add(eta_min).add(config.seed).add(std::string("limit"));
    out.rows.push_back(
        make_row(0.0, eta_min, "v_eta_limit_bsde", sol.y0, sol.y0_stderr, t.secs(), fp.value()));
    ests.push_back({"v_eta_limit_bsde", sol.y0, sol.y0_stderr, [&, eta_min](const Vec& x) {
                      BsdeSettings b2 = sc.bsde;
                      b2.n_paths = sc.limit_bsde_paths;
                      return solve_limit_bsde(pb.model, eta_min, pipeline->lambda_table, b2, x,
                                              salted_seed(config.seed, 0x17), &pipeline->trunc)
                          .y0;
                    }});
  }
  {
    Timer t;
    const ReducedResult rr = solve_reduced(pb.model, pipeline->legendre_table, 0.0, sc.reduced,
                                           pb.x0, config.seed);
    out.rows.push_back(make_row(0.0, 0.0, "V_reduced", rr.value.mean, rr.value.stderr_,
                                t.secs(), rr.value.fingerprint));
    ests.push_back({"V_reduced", rr.value.mean, rr.value.stderr_, [&](const Vec& x) {
                      ReducedSettings r2 = sc.reduced;
                      r2.max_sweeps = std::min(r2.max_sweeps, 4);
                      return solve_reduced(pb.model, pipeline->legendre_table, 0.0, r2, x,
                                           config.seed)
                          .value.mean;
                    }});
  }

  for (std::size_t i = 0; i < ests.size(); ++i)
    for (std::size_t j = i + 1; j < ests.size(); ++j) {
      const double dev = std::abs(ests[i].value - ests[j].value);
      const double budget = 3.0 * (ests[i].se + ests[j].se) + 0.1;
      push_audit(out.audits, ests[i].name + " vs " + ests[j].name + " within 3 stderr + 0.1",
                 dev - budget);
      out.rows.push_back(
          make_row(0.0, 0.0, "pair_dev:" + ests[i].name + ":" + ests[j].name, dev,
                   ests[i].se + ests[j].se, 0.0, 0));
    }

  // x0-Lipschitz responses agree within 30%.
  const double delta = sc.lip_probe;
  const Vec dir = pb.model.x_dir / pb.model.x_dir.norm();
  std::vector<double> lips;
  for (const auto& est : ests) {
    const double up = est.at(Vec(pb.x0 + delta * dir));
    const double dn = est.at(Vec(pb.x0 - delta * dir));
    const double lip = std::abs(up - dn) / (2.0 * delta);
    lips.push_back(lip);
    out.rows.push_back(make_row(0.0, 0.0, "lipschitz:" + est.name, lip, 0.0, 0.0, 0));
  }
  const double lmax = *std::max_element(lips.begin(), lips.end());
  const double lmin = *std::min_element(lips.begin(), lips.end());
  push_audit(out.audits, "x0-Lipschitz responses within 30%",
             lmax - 1.3 * std::max(lmin, 0.05));
  return out;
}

SweepResult run_lipschitz_audit(const ExperimentConfig& config) {
  config.validate();
  const PresetBundle pb = config.bundle();
  const SolverConfig& sc = config.solver;
  const double delta = sc.lip_probe;
  const Vec dir = pb.model.x_dir / pb.model.x_dir.norm();

  SweepResult out;
  out.name = "lipschitz_uniformity";
  std::vector<double> lips;
  for (double eps : config.eps_grid)
    for (double eta : config.eta_grid) {
      Timer t;
      const uint64_t s = config.seed;
      const int rounds = std::min(sc.n_policy_rounds, 2);
      const double up = estimate_V(pb.model, eps, eta, sc.n_paths, rounds,
                                   Vec(pb.x0 + delta * dir), pb.q0, s, &sc.bsde)
                            .value.mean;
      const double dn = estimate_V(pb.model, eps, eta, sc.n_paths, rounds,
                                   Vec(pb.x0 - delta * dir), pb.q0, s, &sc.bsde)
                            .value.mean;
      const double lip = std::abs(up - dn) / (2.0 * delta);
      lips.push_back(lip);
      out.rows.push_back(make_row(eps, eta, "lipschitz_fd", lip, 0.0, t.secs(), 0));
    }
  const double lmax = *std::max_element(lips.begin(), lips.end());
  const double lmin = *std::min_element(lips.begin(), lips.end());
  push_audit(out.audits, "V Lipschitz estimates vary < 30% across the grid",
             lmax - 1.3 * std::max(lmin, 0.05));
  return out;
}

void SweepResult::write_csv(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/" + name + ".csv";
  std::ofstream os(path);
  if (!os) throw ConfigError("write_csv: cannot open " + path);
  os << "epsilon,eta,estimator,value,stderr,runtime_s,fingerprint\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
  };
  for (const auto& r : rows) {
    put(r.epsilon);
    os << ',';
    put(r.eta);
    os << ',' << r.estimator << ',';
    put(r.value);
    os << ',';
    put(r.stderr_);
    os << ',';
    std::snprintf(buf, sizeof(buf), "%.3f", r.runtime_s);
    os << buf << ',';
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(r.fingerprint));
    os << buf << '\n';
  }
}

void SweepResult::write_plot_data(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/" + name + "_plot.csv";
  std::ofstream os(path);
  if (!os) throw ConfigError("write_plot_data: cannot open " + path);
  os << "x,y,y_err\n";
  char buf[32];
  for (const auto& r : rows) {
    if (r.estimator.rfind("deviation", 0) != 0 && r.estimator != "sup_eps_deviation" &&
        r.estimator.rfind("pair_dev", 0) != 0)
      continue;
    const double x = name == "sweep_eps" ? r.epsilon : r.eta;
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g", x, r.value, r.stderr_);
    os << buf << '\n';
  }
}

}  // namespace twoscale
