#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "twoscale/bsde.hpp"
#include "twoscale/noise.hpp"
#include "twoscale/presets.hpp"

#include "test_models.hpp"

#include <cmath>

using namespace twoscale;
using twoscale::testutil::make_toy;

namespace {

// Small two-scale instance with a genuine control trade-off but a nearly
// open-loop optimal policy (state dependence only through tanh monotones).
ModelSpec make_small_instance() {
  ModelSpec m = make_toy(1, 1, -1.0, -8.0);
  m.U = {-1.0, 1.0};
  m.b = [](const Vec&, const Vec&, double u) { return Vec::Constant(1, 0.4 * u); };
  m.rho = [](double u) { return Vec::Constant(1, 0.5 * u); };
  m.R_mult = [](const Vec&) { return Vec::Constant(1, 0.2); };
  m.G_mult = Vec::Constant(1, 1.0);
  m.l = [](const Vec& x, const Vec&, double u) {
    return 0.25 * u * u + 0.3 * std::tanh(x[0]);
  };
  m.h = [](const Vec& x) { return 0.5 * std::tanh(x[0]); };
  m.M = 1.0;
  m.L = 1.0;
  return m;
}

LambdaTable constant_lambda_table(double c, int n_slow) {
  LambdaTable t;
  t.x_dir = Vec::Zero(n_slow);
  t.x_dir[0] = 1.0;
  t.active_dim = 1;
  t.s_grid = {-50.0, 50.0};
  t.z_axes = {{-500.0, 500.0}};
  t.values.assign(4, c);
  t.stderrs.assign(4, 0.0);
  return t;
}

}  // namespace

TEST_CASE("martingale case: zero driver reproduces E h(X1)") {
  ModelSpec m = make_toy(1, 1, -1.0, -8.0);
  m.U = {0.0};
  m.R_mult = [](const Vec&) { return Vec::Constant(1, 0.3); };
  m.h = [](const Vec& x) { return std::tanh(x[0]); };
  const Vec x0 = Vec::Constant(1, 0.4), q0 = Vec::Zero(1);

  BsdeSettings st;
  st.n_paths = 4000;
  st.n_steps = 25;
  st.basis = {1, 1, 2};
  const BsdeSolution sol = solve_full_bsde(m, 0.5, 0.2, st, x0, q0, 7);

  Policy only = [](double, const Vec&, const Vec&) { return 0; };
  const ValueEstimate direct = value_by_policy(m, 0.5, 0.2, only, 4000, x0, q0, 8);
  CHECK(std::abs(sol.y0 - direct.mean) <= 3.0 * (sol.y0_stderr + direct.stderr_));
  CHECK(sol.max_driver_abs < 1e-12);
}

TEST_CASE("deterministic driver: constants add exactly") {
  ModelSpec m = make_toy(1, 1, -1.0, -8.0);
  m.U = {0.0};
  m.l = [](const Vec&, const Vec&, double) { return 0.45; };
  m.h = [](const Vec&) { return 0.3; };
  const Vec x0 = Vec::Zero(1), q0 = Vec::Zero(1);
  BsdeSettings st;
  st.n_paths = 512;
  st.n_steps = 20;
  st.basis = {1, 1, 2};
  const BsdeSolution sol = solve_full_bsde(m, 0.5, 0.3, st, x0, q0, 11);
  CHECK(sol.y0 == doctest::Approx(0.75).epsilon(1e-10));
}

TEST_CASE("terminal condition is exact pathwise") {
  const ModelSpec m = make_small_instance();
  const Vec x0 = Vec::Constant(1, 0.4), q0 = Vec::Constant(1, 0.2);
  BsdeSettings st;
  st.n_paths = 256;
  st.n_steps = 10;
  st.basis = {1, 1, 2};
  const BsdeSolution sol = solve_full_bsde(m, 0.5, 0.3, st, x0, q0, 13);
  // Y_K equals h(X_1) by construction; verify through the stored values.
  CHECK(sol.Y.row(sol.Y.rows() - 1).cwiseAbs().maxCoeff() <= m.M);
  // |Y| stays within the crude a-priori budget M + horizon * driver bound.
  CHECK(sol.Y.cwiseAbs().maxCoeff() <= m.M + 1.0 * sol.max_driver_abs + 1e-9);
}

TEST_CASE("scaling consistency: psi_scaled path equals pre-divided path") {
  const ModelSpec m = make_small_instance();
  const Vec x0 = Vec::Constant(1, 0.4), q0 = Vec::Constant(1, 0.2);
  BsdeSettings st;
  st.n_paths = 512;
  st.n_steps = 12;
  st.basis = {1, 1, 2};
  const BsdeSolution a = solve_full_bsde(m, 0.31, 0.17, st, x0, q0, 17);
  st.driver_prescaled = true;
  const BsdeSolution b = solve_full_bsde(m, 0.31, 0.17, st, x0, q0, 17);
  CHECK((a.Y - b.Y).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("Y0 matches exhaustive open-loop enumeration on an 8-step instance") {
  const ModelSpec m = make_small_instance();
  const Vec x0 = Vec::Constant(1, 0.4), q0 = Vec::Constant(1, 0.2);
  const double eps = 0.5, eta = 0.3;
  const int K = 8;

  BsdeSettings st;
  st.n_paths = 16000;
  st.n_steps = K;
  st.fine_substeps = 1;
  st.basis = {1, 1, 2};
  const BsdeSolution sol = solve_full_bsde(m, eps, eta, st, x0, q0, 19);

  // Oracle: all 2^8 open-loop control sequences on the same 8-step grid,
  // with common random numbers across sequences.
  double best = 1e300;
  double best_se = 0.0;
  for (int mask = 0; mask < (1 << K); ++mask) {
    Policy pol = [mask, K](double t, const Vec&, const Vec&) {
      const int k = std::min(static_cast<int>(t * K), K - 1);
      return (mask >> k) & 1;
    };
    const ValueEstimate v = value_by_policy(m, eps, eta, pol, 3000, x0, q0, 23, K);
    if (v.mean < best) {
      best = v.mean;
      best_se = v.stderr_;
    }
  }
  // The BSDE value sits at/below the best open-loop value up to the
  // feedback-vs-open-loop gap budget and Monte Carlo noise.
  CHECK(sol.y0 <= best + 3.0 * (sol.y0_stderr + best_se));
  CHECK(sol.y0 >= best - 3.0 * (sol.y0_stderr + best_se) - 0.05);
}

TEST_CASE("sandwich: random policies never beat Y0") {
  const ModelSpec m = make_small_instance();
  const Vec x0 = Vec::Constant(1, 0.4), q0 = Vec::Constant(1, 0.2);
  const double eps = 0.5, eta = 0.3;
  BsdeSettings st;
  st.n_paths = 8000;
  st.n_steps = 20;
  st.basis = {1, 1, 2};
  const BsdeSolution sol = solve_full_bsde(m, eps, eta, st, x0, q0, 29);
  for (int trial = 0; trial < 10; ++trial) {
    Policy random_pol = [trial](double t, const Vec& x, const Vec& q) {
      double h[1];
      gaussian_fill(NoiseKey{91u + trial, 7, static_cast<uint64_t>(t * 1000), 0}, 1.0, h, 1);
      return (h[0] + 0.3 * x[0] - 0.2 * q[0]) > 0 ? 1 : 0;
    };
    const ValueEstimate v = value_by_policy(m, eps, eta, random_pol, 2000, x0, q0, 31 + trial);
    CHECK(v.mean >= sol.y0 - 3.0 * (v.stderr_ + sol.y0_stderr));
  }
}

TEST_CASE("degenerate basis raises a basis error naming the step") {
  ModelSpec m = make_toy(1, 1, -1.0, -8.0);
  m.G_mult = Vec::Zero(1);  // fast state is deterministic: q-columns collapse
  const Vec x0 = Vec::Zero(1), q0 = Vec::Zero(1);
  BsdeSettings st;
  st.n_paths = 256;
  st.n_steps = 10;
  st.basis = {1, 1, 2};
  CHECK_THROWS_AS(solve_full_bsde(m, 0.5, 0.2, st, x0, q0, 37), BasisDegeneracyError);
}

TEST_CASE("limit BSDE with a zero lambda table is the martingale case") {
  ModelSpec m = make_toy(1, 1, -1.0, -8.0);
  m.R_mult = [](const Vec&) { return Vec::Constant(1, 0.3); };
  m.h = [](const Vec& x) { return std::tanh(x[0]); };
  const Vec x0 = Vec::Constant(1, 0.4);
  BsdeSettings st;
  st.n_paths = 4000;
  st.n_steps = 25;
  st.basis = {1, 0, 2};
  const LambdaTable zero = constant_lambda_table(0.0, 1);
  const BsdeSolution sol = solve_limit_bsde(m, 0.2, zero, st, x0, 41);

  // Direct mean of h over the same slow-only dynamics.
  std::vector<double> hs(4000);
  TwoScaleParams p;
  p.epsilon = 1.0;
  p.eta = 0.2;
  p.n_steps = 200;
  p.x0 = x0;
  p.q0 = Vec::Zero(1);
  parallel_for(4000, [&](std::size_t pid) {
    AlphaPolicy zeroa = [](double, const Vec&) { return Vec::Zero(1); };
    const ReducedPath rp = simulate_reduced(m, 0.2, zeroa, p, NoiseMode::Keyed, 43, pid);
    hs[pid] = m.h(rp.X.row(rp.X.rows() - 1).transpose());
  });
  const MeanStderr ms = mean_stderr(hs);
  CHECK(std::abs(sol.y0 - ms.mean) <= 3.0 * (sol.y0_stderr + ms.stderr_));

  // A constant driver shifts Y0 by exactly c.
  const LambdaTable shifted = constant_lambda_table(0.37, 1);
  const BsdeSolution sol2 = solve_limit_bsde(m, 0.2, shifted, st, x0, 41);
  CHECK(sol2.y0 - sol.y0 == doctest::Approx(0.37).epsilon(1e-9));
}

TEST_CASE("limit BSDE reports out-of-table queries with the step index") {
  ModelSpec m = make_toy(1, 1, -1.0, -8.0);
  m.R_mult = [](const Vec&) { return Vec::Constant(1, 0.3); };
  m.h = [](const Vec& x) { return std::tanh(x[0]); };
  LambdaTable tiny = constant_lambda_table(0.0, 1);
  tiny.s_grid = {-0.01, 0.01};  // the cloud immediately leaves this range
  BsdeSettings st;
  st.n_paths = 128;
  st.n_steps = 10;
  st.basis = {1, 0, 2};
  try {
    solve_limit_bsde(m, 0.2, tiny, st, Vec::Constant(1, 0.4), 47);
    FAIL("expected OutOfRangeError");
  } catch (const OutOfRangeError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
    CHECK(std::string(e.what()).find("samples in range") != std::string::npos);
  }
}

TEST_CASE("estimate_V on a singleton control set equals the only policy value") {
  ModelSpec m = make_toy(1, 1, -1.0, -8.0);
  m.U = {0.0};
  m.R_mult = [](const Vec&) { return Vec::Constant(1, 0.25); };
  m.l = [](const Vec& x, const Vec&, double) { return 0.2 * std::tanh(x[0]); };
  m.h = [](const Vec& x) { return 0.4 * std::tanh(x[0]); };
  const Vec x0 = Vec::Constant(1, 0.5), q0 = Vec::Zero(1);
  const VResult vr = estimate_V(m, 0.25, 0.1, 2000, 2, x0, q0, 53);
  Policy only = [](double, const Vec&, const Vec&) { return 0; };
  const ValueEstimate direct = value_by_policy(m, 0.25, 0.1, only, 2000, x0, q0, 59);
  CHECK(std::abs(vr.value.mean - direct.mean) <= 3.0 * (vr.value.stderr_ + direct.stderr_));
}

TEST_CASE("estimate_V cross-checks against the BSDE value at positive eta") {
  const ModelSpec m = make_small_instance();
  const Vec x0 = Vec::Constant(1, 0.4), q0 = Vec::Constant(1, 0.2);
  const VResult vr = estimate_V(m, 0.2, 0.2, 4000, 3, x0, q0, 61);
  // The policy value is an upper bound for the BSDE value (sandwich) and
  // should land close on this small instance.
  CHECK(vr.value.mean >= vr.y0 - 3.0 * (vr.value.stderr_ + vr.y0_stderr));
  CHECK(std::abs(vr.policy_gap) <= 3.0 * (vr.value.stderr_ + vr.y0_stderr) + 0.08);
}

TEST_CASE("basis refinement moves Y0 within combined noise") {
  const PresetBundle pr = load_preset("reaction_diffusion");
  BsdeSettings st;
  st.n_paths = 3000;
  st.n_steps = 50;
  st.basis = {2, 1, 2};
  const BsdeSolution a = solve_full_bsde(pr.model, 0.2, 0.2, st, pr.x0, pr.q0, 71);
  st.basis = {3, 2, 2};
  const BsdeSolution b = solve_full_bsde(pr.model, 0.2, 0.2, st, pr.x0, pr.q0, 71);
  CHECK(std::abs(a.y0 - b.y0) <= 3.0 * (a.y0_stderr + b.y0_stderr));
}

TEST_CASE("constant-field greedy policy minimizes the running cost pointwise") {
  ModelSpec m = make_toy(1, 1, -1.0, -8.0);
  m.U = {0.0, 1.0, 2.0};
  m.l = [](const Vec&, const Vec&, double u) { return (u - 2.0) * (u - 2.0); };
  const VResult vr = estimate_V(m, 0.5, 0.1, 400, 1, Vec::Zero(1), Vec::Zero(1), 67);
  CHECK(vr.best_policy(0.5, Vec::Zero(1), Vec::Zero(1)) == 2);
}
