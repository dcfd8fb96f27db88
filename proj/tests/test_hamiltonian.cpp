#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "twoscale/hamiltonian.hpp"
#include "twoscale/noise.hpp"
#include "twoscale/presets.hpp"

#include "test_models.hpp"

#include <cmath>

using namespace twoscale;
using twoscale::testutil::make_toy;

TEST_CASE("singleton control set") {
  ModelSpec m = make_toy(1, 1);
  m.U = {2.0};
  m.l = [](const Vec&, const Vec&, double) { return 3.0; };
  m.b = [](const Vec&, const Vec&, double) { return Vec::Constant(1, 2.0); };
  const Vec z2 = Vec::Constant(1, 1.0);
  const Vec v = Vec::Zero(1);
  const HamiltonianResult r = psi(m, Vec::Zero(1), Vec::Zero(1), z2, v);
  CHECK(r.value == doctest::Approx(5.0));
  CHECK(r.argmin_u == 0);
  CHECK(r.gap == 0.0);
}

TEST_CASE("two-point minimum with deterministic tie-break") {
  ModelSpec m = make_toy(1, 1);
  m.U = {0.0, 1.0};
  m.l = [](const Vec&, const Vec&, double u) { return u == 0.0 ? 1.0 : 3.0; };
  m.b = [](const Vec&, const Vec&, double u) {
    return Vec::Constant(1, u == 0.0 ? 2.0 : -1.0);
  };
  const HamiltonianResult r =
      psi(m, Vec::Zero(1), Vec::Zero(1), Vec::Constant(1, 1.0), Vec::Zero(1));
  CHECK(r.value == doctest::Approx(2.0));
  CHECK(r.argmin_u == 1);
  CHECK(r.gap == doctest::Approx(1.0));
}

TEST_CASE("empty control set raises a configuration error") {
  ModelSpec m = make_toy(1, 1);
  m.U.clear();
  CHECK_THROWS_AS(psi(m, Vec::Zero(1), Vec::Zero(1), Vec::Zero(1), Vec::Zero(1)), ConfigError);
}

namespace {

// Random coefficient tables for the brute-force comparison.
struct TableModel {
  ModelSpec model;
  std::vector<double> ls;
  std::vector<Vec> bs;
  std::vector<Vec> rhos;
};

TableModel make_table_model(int n_controls, uint64_t seed) {
  TableModel tm;
  tm.model = make_toy(2, 1);
  tm.model.n_noise = 2;
  tm.model.U.resize(n_controls);
  for (int i = 0; i < n_controls; ++i) tm.model.U[i] = i;
  tm.ls.resize(n_controls);
  for (int i = 0; i < n_controls; ++i) {
    Vec b(2), r(2), l(1);
    gaussian_fill(NoiseKey{seed, 0, static_cast<uint64_t>(i), 0}, 1.0, b.data(), 2);
    gaussian_fill(NoiseKey{seed, 1, static_cast<uint64_t>(i), 0}, 1.0, r.data(), 2);
    gaussian_fill(NoiseKey{seed, 2, static_cast<uint64_t>(i), 0}, 1.0, l.data(), 1);
    tm.bs.push_back(b);
    tm.rhos.push_back(r);
    tm.ls[i] = l[0];
  }
  auto bs = tm.bs;
  auto rhos = tm.rhos;
  auto ls = tm.ls;
  tm.model.b = [bs](const Vec&, const Vec&, double u) { return bs[static_cast<int>(u)]; };
  tm.model.rho = [rhos](double u) { return rhos[static_cast<int>(u)]; };
  tm.model.l = [ls](const Vec&, const Vec&, double u) { return ls[static_cast<int>(u)]; };
  return tm;
}

}  // namespace

TEST_CASE("psi matches exhaustive re-evaluation on 16 random controls") {
  const TableModel tm = make_table_model(16, 99);
  for (int trial = 0; trial < 20; ++trial) {
    Vec z2(2), v(2);
    gaussian_fill(NoiseKey{7, 3, static_cast<uint64_t>(trial), 0}, 1.0, z2.data(), 2);
    gaussian_fill(NoiseKey{7, 4, static_cast<uint64_t>(trial), 0}, 1.0, v.data(), 2);
    const HamiltonianResult r = psi(tm.model, Vec::Zero(2), Vec::Zero(1), z2, v);

    double best = 1e300;
    int best_i = -1;
    for (int i = 0; i < 16; ++i) {
      const double val = tm.ls[i] + z2.dot(tm.bs[i]) + v.dot(tm.rhos[i]);
      if (val < best) {
        best = val;
        best_i = i;
      }
    }
    CHECK(r.value == doctest::Approx(best).epsilon(1e-14));
    CHECK(r.argmin_u == best_i);
  }
}

TEST_CASE("psi_scaled equals psi at pre-divided arguments") {
  const TableModel tm = make_table_model(8, 123);
  for (int trial = 0; trial < 25; ++trial) {
    Vec z2(2), v(2);
    gaussian_fill(NoiseKey{17, 5, static_cast<uint64_t>(trial), 0}, 1.0, z2.data(), 2);
    gaussian_fill(NoiseKey{17, 6, static_cast<uint64_t>(trial), 0}, 1.0, v.data(), 2);
    const double eta = 0.5, eps = 0.07;
    const HamiltonianResult a = psi_scaled(tm.model, eps, eta, Vec::Zero(2), Vec::Zero(1), z2, v);
    const HamiltonianResult b =
        psi(tm.model, Vec::Zero(2), Vec::Zero(1), Vec(z2 / eta), Vec(v / std::sqrt(eps)));
    CHECK(a.value == doctest::Approx(b.value).epsilon(1e-14));
    CHECK(a.argmin_u == b.argmin_u);
  }
  CHECK_THROWS_AS(
      psi_scaled(tm.model, 0.0, 1.0, Vec::Zero(2), Vec::Zero(1), Vec::Zero(2), Vec::Zero(2)),
      ArgumentError);
  CHECK_THROWS_AS(
      psi_scaled(tm.model, 1.0, 0.0, Vec::Zero(2), Vec::Zero(1), Vec::Zero(2), Vec::Zero(2)),
      ArgumentError);
}

TEST_CASE("identity scaling leaves psi unchanged") {
  const TableModel tm = make_table_model(5, 321);
  Vec z2(2), v(2);
  z2 << 0.3, -0.8;
  v << 1.1, 0.2;
  const HamiltonianResult a = psi_scaled(tm.model, 1.0, 1.0, Vec::Zero(2), Vec::Zero(1), z2, v);
  const HamiltonianResult b = psi(tm.model, Vec::Zero(2), Vec::Zero(1), z2, v);
  CHECK(a.value == doctest::Approx(b.value).epsilon(1e-15));
  CHECK(a.argmin_u == b.argmin_u);
}

TEST_CASE("argmin ignores a dropped cost term") {
  TableModel tm = make_table_model(6, 555);
  auto zero_l = tm.model;
  zero_l.l = [](const Vec&, const Vec&, double) { return 0.0; };
  Vec z2(2), v(2);
  z2 << 2.0, -1.0;
  v << 0.5, 0.4;
  const double eta = 0.3, eps = 0.2;
  const HamiltonianResult a = psi_scaled(zero_l, eps, eta, Vec::Zero(2), Vec::Zero(1), z2, v);
  double best = 1e300;
  int best_i = -1;
  for (int i = 0; i < 6; ++i) {
    const double val = z2.dot(tm.bs[i]) / eta + v.dot(tm.rhos[i]) / std::sqrt(eps);
    if (val < best) {
      best = val;
      best_i = i;
    }
  }
  CHECK(a.argmin_u == best_i);
}

TEST_CASE("psi is Lipschitz in z2 and v with constant at most M") {
  // The slopes are bounded by sup |b| and sup |rho|; both sit below M.
  ModelSpec m = make_toy(2, 1);
  m.n_noise = 2;
  m.M = 1.0;
  m.U = {-1.0, 0.0, 1.0};
  m.b = [](const Vec& x, const Vec&, double u) {
    Vec out(2);
    out << 0.6 * u, 0.3 * u * std::tanh(x[0]);
    return out;
  };
  m.rho = [](double u) {
    Vec out(2);
    out << 0.5 * u, -0.2 * u;
    return out;
  };
  m.l = [](const Vec&, const Vec&, double u) { return 0.1 * u * u; };

  const Vec x = Vec::Constant(2, 0.4), q = Vec::Zero(1);
  for (int trial = 0; trial < 40; ++trial) {
    Vec z2a(2), z2b(2), va(2), vb(2);
    gaussian_fill(NoiseKey{31, 0, static_cast<uint64_t>(trial), 0}, 1.0, z2a.data(), 2);
    gaussian_fill(NoiseKey{31, 1, static_cast<uint64_t>(trial), 0}, 1.0, z2b.data(), 2);
    gaussian_fill(NoiseKey{31, 2, static_cast<uint64_t>(trial), 0}, 1.0, va.data(), 2);
    gaussian_fill(NoiseKey{31, 3, static_cast<uint64_t>(trial), 0}, 1.0, vb.data(), 2);
    const double fa = psi(m, x, q, z2a, va).value;
    const double fb = psi(m, x, q, z2b, vb).value;
    const double dist = (z2a - z2b).norm() + (va - vb).norm();
    CHECK(std::abs(fa - fb) <= m.M * dist + 1e-12);
  }
}

TEST_CASE("psi is concave in (z2, v)") {
  const TableModel tm = make_table_model(9, 777);
  const Vec x = Vec::Zero(2), q = Vec::Zero(1);
  for (int trial = 0; trial < 40; ++trial) {
    Vec za(2), zb(2), va(2), vb(2);
    gaussian_fill(NoiseKey{41, 0, static_cast<uint64_t>(trial), 0}, 2.0, za.data(), 2);
    gaussian_fill(NoiseKey{41, 1, static_cast<uint64_t>(trial), 0}, 2.0, zb.data(), 2);
    gaussian_fill(NoiseKey{41, 2, static_cast<uint64_t>(trial), 0}, 2.0, va.data(), 2);
    gaussian_fill(NoiseKey{41, 3, static_cast<uint64_t>(trial), 0}, 2.0, vb.data(), 2);
    const double fa = psi(tm.model, x, q, za, va).value;
    const double fb = psi(tm.model, x, q, zb, vb).value;
    const double fm = psi(tm.model, x, q, Vec(0.5 * (za + zb)), Vec(0.5 * (va + vb))).value;
    CHECK(fm >= 0.5 * (fa + fb) - 1e-12);
  }
}

TEST_CASE("psi is Lipschitz in (x, q) with constant L (1 + |z2|)") {
  const PresetBundle pr = load_preset("reaction_diffusion");
  const ModelSpec& m = pr.model;
  for (int trial = 0; trial < 30; ++trial) {
    Vec xa(m.n_slow()), xb(m.n_slow()), qa(m.n_fast()), qb(m.n_fast()), z2(m.n_slow());
    gaussian_fill(NoiseKey{51, 0, static_cast<uint64_t>(trial), 0}, 0.8, xa.data(), m.n_slow());
    gaussian_fill(NoiseKey{51, 1, static_cast<uint64_t>(trial), 0}, 0.8, xb.data(), m.n_slow());
    gaussian_fill(NoiseKey{51, 2, static_cast<uint64_t>(trial), 0}, 0.8, qa.data(), m.n_fast());
    gaussian_fill(NoiseKey{51, 3, static_cast<uint64_t>(trial), 0}, 0.8, qb.data(), m.n_fast());
    gaussian_fill(NoiseKey{51, 4, static_cast<uint64_t>(trial), 0}, 1.5, z2.data(), m.n_slow());
    const Vec v = Vec::Zero(m.n_noise);
    const double fa = psi(m, xa, qa, z2, v).value;
    const double fb = psi(m, xb, qb, z2, v).value;
    const double dist = (xa - xb).norm() + (qa - qb).norm();
    CHECK(std::abs(fa - fb) <= 1.05 * m.L * (1.0 + z2.norm()) * dist + 1e-12);
  }
}

TEST_CASE("greedy policy with zero fields minimizes the running cost") {
  ModelSpec m = make_toy(1, 1);
  m.U = {0.0, 1.0, 2.0};
  m.l = [](const Vec&, const Vec&, double u) { return (u - 1.0) * (u - 1.0); };
  const Policy pol = greedy_policy(m, 0.5, 0.5, CovectorField{}, CovectorField{});
  CHECK(pol(0.0, Vec::Zero(1), Vec::Zero(1)) == 1);
}
