#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "twoscale/ergodic.hpp"
#include "twoscale/noise.hpp"
#include "twoscale/presets.hpp"

#include "test_models.hpp"

#include <cmath>
#include <cstdio>

using namespace twoscale;
using twoscale::testutil::make_toy;

namespace {

constexpr double kPi = 3.14159265358979323846;

double toy_lambda_closed_form(double z) {
  // linear_toy: lambda(x, z) = 0.3 + min_u { 0.5 z u + 0.2 u^2 }, U = {-1,0,1}.
  return 0.3 + std::min(0.0, 0.2 - 0.5 * std::abs(z));
}

// Model whose myopic policy is far from optimal: the control only pays off
// through the stationary mean of Q.
ModelSpec make_pi_model() {
  ModelSpec m = make_toy(1, 1, -1.0, -2.0);
  m.G_mult = Vec::Constant(1, 2.0);
  m.U = {0.0, 0.5, 1.0, 1.5};
  m.rho = [](double u) { return Vec::Constant(1, u); };
  m.l = [](const Vec&, const Vec& q, double u) {
    return std::min((q[0] - 1.0) * (q[0] - 1.0), 4.0) + 0.05 * u * u;
  };
  m.M = 5.0;
  m.L = 4.0;
  return m;
}

}  // namespace

TEST_CASE("constant running cost gives a constant ergodic value") {
  ModelSpec m = make_toy(1, 1, -1.0, -10.0);
  m.l = [](const Vec&, const Vec&, double) { return 0.7; };
  const ValueEstimate est = estimate_lambda(m, Vec::Zero(1), Vec::Zero(1), {},
                                            LambdaSolver::CesaroPolicy, 11);
  CHECK(std::abs(est.mean - 0.7) <= 3.0 * est.stderr_ + 1e-12);
}

TEST_CASE("state-independent integrand gives z.b0 + l0") {
  ModelSpec m = make_toy(2, 1, -1.0, -10.0);
  Vec b0(2);
  b0 << 0.25, -0.1;
  m.b = [b0](const Vec&, const Vec&, double) { return b0; };
  m.l = [](const Vec&, const Vec&, double) { return 0.4; };
  Vec z(2);
  z << 1.3, -0.7;
  const ValueEstimate est =
      estimate_lambda(m, Vec::Zero(2), z, {}, LambdaSolver::CesaroPolicy, 12);
  CHECK(std::abs(est.mean - (z.dot(b0) + 0.4)) <= 3.0 * est.stderr_ + 1e-12);
}

TEST_CASE("uncontrolled quadratic cost matches the stationary quadrature") {
  // 1 fast mode with eigenvalue -(pi^2+m), G = g, b = 0, rho = 0,
  // l(q) = q^2 ^ 1: lambda equals E_pi[Q^2 ^ 1] under Q ~ N(0, g^2/(2(pi^2+m))).
  const double m_shift = 2.0;
  const double g = 0.9;
  ModelSpec m = make_toy(1, 1, -1.0, -(kPi * kPi + m_shift));
  m.G_mult = Vec::Constant(1, g);
  m.l = [](const Vec&, const Vec& q, double) { return std::min(q[0] * q[0], 1.0); };
  m.M = 1.0;

  const double var = g * g / (2.0 * (kPi * kPi + m_shift));
  const double sigma = std::sqrt(var);
  // Simpson quadrature of min(q^2,1) against the stationary Gaussian.
  const int nq = 4001;
  const double lo = -8 * sigma, hi = 8 * sigma;
  const double hstep = (hi - lo) / (nq - 1);
  double quad = 0.0;
  for (int i = 0; i < nq; ++i) {
    const double q = lo + i * hstep;
    const double f =
        std::min(q * q, 1.0) * std::exp(-q * q / (2 * var)) / std::sqrt(2 * kPi * var);
    const double w = (i == 0 || i == nq - 1) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    quad += w * f;
  }
  quad *= hstep / 3.0;

  LambdaSettings st;
  st.n_paths = 64;
  st.T = 2.0 * 10.0 / m.mu;
  st.burn_in = 3.0 / m.mu;
  const ValueEstimate est =
      estimate_lambda(m, Vec::Zero(1), Vec::Zero(1), st, LambdaSolver::CesaroPolicy, 15);
  CHECK(std::abs(est.mean - quad) <= 3.0 * est.stderr_);
}

TEST_CASE("linear_toy matches its closed form at several z") {
  const PresetBundle pr = load_preset("linear_toy");
  LambdaSettings st;
  st.n_paths = 24;
  for (double z : {-2.0, -0.8, 0.0, 0.4, 1.5}) {
    const ValueEstimate est = estimate_lambda(pr.model, pr.x0, Vec::Constant(1, z), st,
                                              LambdaSolver::CesaroPolicy, 17);
    CHECK(std::abs(est.mean - toy_lambda_closed_form(z)) <= 3.0 * est.stderr_ + 0.02);
  }
}

TEST_CASE("grid value iteration agrees with the closed form and with Cesaro") {
  const PresetBundle pr = load_preset("linear_toy");
  LambdaSettings st;
  st.n_paths = 24;
  for (double z : {-1.2, 0.0, 0.9}) {
    const ValueEstimate vi =
        estimate_lambda(pr.model, pr.x0, Vec::Constant(1, z), st, LambdaSolver::GridVi, 19);
    CHECK(std::abs(vi.mean - toy_lambda_closed_form(z)) <= 5e-3);
    const ValueEstimate ce = estimate_lambda(pr.model, pr.x0, Vec::Constant(1, z), st,
                                             LambdaSolver::CesaroPolicy, 19);
    CHECK(std::abs(ce.mean - vi.mean) <= 3.0 * ce.stderr_ + 0.02);
  }
}

TEST_CASE("policy iteration beats the myopic policy when the payoff is dynamic") {
  const ModelSpec m = make_pi_model();
  LambdaSettings st;
  st.n_paths = 24;
  st.n_rounds = 1;  // myopic only
  const ValueEstimate myopic =
      estimate_lambda(m, Vec::Zero(1), Vec::Zero(1), st, LambdaSolver::CesaroPolicy, 23);
  st.n_rounds = 4;
  const ValueEstimate improved =
      estimate_lambda(m, Vec::Zero(1), Vec::Zero(1), st, LambdaSolver::CesaroPolicy, 23);
  // Monotone in the policy class up to noise, and materially better here.
  CHECK(improved.mean <= myopic.mean + 3.0 * (improved.stderr_ + myopic.stderr_));
  CHECK(improved.mean < myopic.mean - 0.3);
  // The grid oracle bounds the remaining optimality gap.
  const ValueEstimate vi =
      estimate_lambda(m, Vec::Zero(1), Vec::Zero(1), st, LambdaSolver::GridVi, 23);
  CHECK(improved.mean >= vi.mean - 3.0 * improved.stderr_ - 0.02);
  CHECK(improved.mean <= vi.mean + 3.0 * improved.stderr_ + 0.05);
}

TEST_CASE("grid_vi refuses multi-mode fast spaces") {
  ModelSpec m = make_toy(1, 2, -1.0, -10.0);
  CHECK_THROWS_AS(estimate_lambda(m, Vec::Zero(1), Vec::Zero(1), {}, LambdaSolver::GridVi, 1),
                  ConfigError);
}

TEST_CASE("horizon below the mixing requirement is rejected") {
  const PresetBundle pr = load_preset("linear_toy");
  LambdaSettings st;
  st.T = 0.5;  // below 10/mu = 0.84
  CHECK_THROWS_AS(estimate_lambda(pr.model, pr.x0, Vec::Zero(1), st,
                                  LambdaSolver::CesaroPolicy, 1),
                  ArgumentError);
}

TEST_CASE("horizon stability: doubling T moves the estimate within noise") {
  const PresetBundle pr = load_preset("linear_toy");
  LambdaSettings st;
  st.n_paths = 24;
  const Vec z = Vec::Constant(1, 0.9);
  const ValueEstimate a =
      estimate_lambda(pr.model, pr.x0, z, st, LambdaSolver::CesaroPolicy, 29);
  st.T = 2.0 * 10.0 / pr.model.mu;
  st.burn_in = 3.0 / pr.model.mu;
  const ValueEstimate b =
      estimate_lambda(pr.model, pr.x0, z, st, LambdaSolver::CesaroPolicy, 29);
  // The toy integrand is state-independent, so both estimates are exact up
  // to rounding; the floor keeps the zero-stderr case meaningful.
  CHECK(std::abs(a.mean - b.mean) <= 3.0 * (a.stderr_ + b.stderr_) + 1e-9);
}

TEST_CASE("constant-lambda table interpolates exactly and passes the audit") {
  ModelSpec m = make_toy(1, 1, -1.0, -10.0);
  m.l = [](const Vec&, const Vec&, double) { return 0.3; };
  LambdaSettings st;
  st.n_paths = 4;
  const std::vector<double> s_grid = {-1.0, 0.0, 1.0};
  const std::vector<std::vector<double>> z_axes = {{-2.0, -1.0, 0.0, 1.0, 2.0}};
  const LambdaTable t = build_lambda_table(m, s_grid, z_axes, st, 31);
  for (double s : {-0.7, 0.2, 0.9})
    for (double z : {-1.7, -0.3, 1.9}) {
      CHECK(t.value_at(Vec::Constant(1, s), Vec::Constant(1, z)) ==
            doctest::Approx(0.3).epsilon(1e-12));
    }
  const AuditReport rep = lambda_property_audit(t, m.M, m.L);
  INFO(rep.summary());
  CHECK(rep.all_pass());
  for (const auto& item : rep.items) CHECK(item.worst <= 0.0);
}

TEST_CASE("affine-in-z table reproduces the line and measures slope |b0|") {
  ModelSpec m = make_toy(1, 1, -1.0, -10.0);
  const double b0 = 0.25;
  m.b = [b0](const Vec&, const Vec&, double) { return Vec::Constant(1, b0); };
  m.l = [](const Vec&, const Vec&, double) { return 0.4; };
  LambdaSettings st;
  st.n_paths = 4;
  const std::vector<double> s_grid = {0.0};
  const std::vector<std::vector<double>> z_axes = {{-2.0, -0.5, 0.5, 2.0}};
  const LambdaTable t = build_lambda_table(m, s_grid, z_axes, st, 37);
  for (double z : {-1.3, 0.0, 1.7})
    CHECK(t.value_at(Vec::Zero(1), Vec::Constant(1, z)) ==
          doctest::Approx(0.4 + b0 * z).epsilon(1e-9));
  const AuditReport rep = lambda_property_audit(t, m.M, m.L);
  CHECK(rep.all_pass());
  // Measured Lipschitz slope along z is |b0|, well below M = 1.
  const double slope_meas =
      std::abs(t.value_at(Vec::Zero(1), Vec::Constant(1, 2.0)) -
               t.value_at(Vec::Zero(1), Vec::Constant(1, -2.0))) / 4.0;
  CHECK(slope_meas == doctest::Approx(b0).epsilon(1e-9));
}

TEST_CASE("fault injection: corrupting one cell flags exactly that cell") {
  ModelSpec m = make_toy(1, 1, -1.0, -10.0);
  m.l = [](const Vec&, const Vec&, double) { return 0.3; };
  LambdaSettings st;
  st.n_paths = 4;
  const std::vector<double> s_grid = {-1.0, 0.0, 1.0};
  const std::vector<std::vector<double>> z_axes = {{-2.0, -1.0, 0.0, 1.0, 2.0}};
  LambdaTable t = build_lambda_table(m, s_grid, z_axes, st, 41);
  REQUIRE(lambda_property_audit(t, m.M, m.L).all_pass());
  // Corrupt the cell s_grid[1], z = 0 by 10 M.
  t.values[t.flat_index(1, {2})] += 10.0 * m.M;
  const AuditReport rep = lambda_property_audit(t, m.M, m.L);
  CHECK(!rep.all_pass());
  // The bound check points at the corrupted cell itself.
  bool bound_flags_cell = false;
  for (const auto& item : rep.items) {
    if (item.property.rfind("|lambda|", 0) == 0) {
      CHECK(!item.pass);
      bound_flags_cell = item.where.find("s=0 z=(0)") != std::string::npos;
    }
  }
  CHECK(bound_flags_cell);
  // Restoring the cell restores a clean audit.
  t.values[t.flat_index(1, {2})] -= 10.0 * m.M;
  CHECK(lambda_property_audit(t, m.M, m.L).all_pass());
}

TEST_CASE("queries outside the table raise OutOfRangeError") {
  ModelSpec m = make_toy(1, 1, -1.0, -10.0);
  LambdaSettings st;
  st.n_paths = 2;
  const LambdaTable t = build_lambda_table(m, {0.0, 1.0}, {{-1.0, 1.0}}, st, 43);
  CHECK_THROWS_AS(t.value_at(Vec::Constant(1, 2.0), Vec::Zero(1)), OutOfRangeError);
  CHECK_THROWS_AS(t.value_at(Vec::Zero(1), Vec::Constant(1, 1.5)), OutOfRangeError);
  CHECK(!t.in_range(Vec::Zero(1), Vec::Constant(1, 1.5)));
}

TEST_CASE("table CSV round trip preserves grids and values") {
  const PresetBundle pr = load_preset("linear_toy");
  LambdaSettings st;
  st.n_paths = 6;
  const LambdaTable t =
      build_lambda_table(pr.model, {-0.5, 0.5}, {{-1.0, 0.0, 1.0}}, st, 47);
  const std::string path = "/tmp/twoscale_lambda_table_test.csv";
  t.save_csv(path);
  const LambdaTable r = LambdaTable::load_csv(path);
  REQUIRE(r.s_grid == t.s_grid);
  REQUIRE(r.z_axes == t.z_axes);
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    CHECK(r.values[i] == t.values[i]);
    CHECK(r.stderrs[i] == t.stderrs[i]);
  }
  CHECK(r.model_fp == t.model_fp);
  std::remove(path.c_str());
}

TEST_CASE("refinement: doubling z resolution moves off-grid probes within noise") {
  const PresetBundle pr = load_preset("reaction_diffusion");
  LambdaSettings st;
  st.n_paths = 12;
  const std::vector<double> s_grid = {0.5};
  std::vector<double> coarse, fine;
  for (int i = 0; i <= 6; ++i) coarse.push_back(-1.2 + 0.4 * i);
  for (int i = 0; i <= 12; ++i) fine.push_back(-1.2 + 0.2 * i);
  const LambdaTable tc = build_lambda_table(pr.model, s_grid, {coarse}, st, 53);
  const LambdaTable tf = build_lambda_table(pr.model, s_grid, {fine}, st, 53);
  const Vec x = pr.model.point_on_line(0.5);
  for (double z : {-0.9, -0.1, 0.3, 1.1}) {
    const Vec zq = Vec::Constant(pr.model.n_slow(), 0.0).eval();
    Vec zz = zq;
    zz[0] = z;
    const double a = tc.value_at(x, zz);
    const double b = tf.value_at(x, zz);
    const double se = tc.stderr_at(x, zz) + tf.stderr_at(x, zz);
    CHECK(std::abs(a - b) <= 3.0 * se + 0.02);
  }
}
