#include "twoscale/model.hpp"

#include "twoscale/noise.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace twoscale {

Vec ModelSpec::fast_drift(const Vec& x, const Vec& q, double u) const {
  Vec d = B_eigs.cwiseProduct(q) + F(x, q);
  const Vec r = rho(u);
  for (int j = 0; j < std::min<int>(n_fast(), static_cast<int>(r.size())); ++j)
    d[j] += G_mult[j] * r[j];
  return d;
}

Vec ModelSpec::apply_G(const Vec& w) const {
  Vec out = Vec::Zero(n_fast());
  for (int j = 0; j < std::min<int>(n_fast(), static_cast<int>(w.size())); ++j)
    out[j] = G_mult[j] * w[j];
  return out;
}

Vec ModelSpec::apply_R(const Vec& x, const Vec& w) const {
  const Vec r = R_mult(x);
  Vec out = Vec::Zero(n_slow());
  for (int i = 0; i < std::min<int>(n_slow(), static_cast<int>(w.size())); ++i)
    out[i] = r[i] * w[i];
  return out;
}

uint64_t ModelSpec::fingerprint() const {
  Fingerprint fp;
  fp.add(name).add(A_eigs).add(B_eigs).add(G_mult).add(x_dir);
  fp.add(M).add(L).add(mu).add(gamma);
  fp.add(static_cast<uint64_t>(n_noise)).add(static_cast<uint64_t>(active_dim));
  for (double u : U) fp.add(u);
  return fp.value();
}

void ModelSpec::check_shapes() const {
  if (n_slow() == 0 || n_fast() == 0 || n_noise == 0)
    throw ConfigError("ModelSpec: truncation dimensions must be positive");
  if (U.empty()) throw ConfigError("ModelSpec: control set U is empty");
  if (G_mult.size() != n_fast()) throw ConfigError("ModelSpec: G multiplier length != n_fast");
  if (x_dir.size() != n_slow()) throw ConfigError("ModelSpec: x_dir length != n_slow");
  if (active_dim < 1 || active_dim > n_slow())
    throw ConfigError("ModelSpec: active_dim outside [1, n_slow]");
  for (int j = 0; j < n_fast(); ++j)
    if (B_eigs[j] > -mu)
      throw ConfigError("ModelSpec: fast eigenvalue above -mu breaks dissipativity");
}

bool ValidationReport::all_pass() const {
  return std::all_of(items.begin(), items.end(), [](const ValidationItem& i) { return i.pass; });
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& i : items)
    os << (i.pass ? "[ok]   " : "[FAIL] ") << i.name << "  measured=" << i.measured
       << "  bound=" << i.bound << "\n";
  return os.str();
}

namespace {

Vec sample_ball(int dim, double radius, uint64_t seed, uint64_t idx, uint32_t tag) {
  Vec v(dim);
  gaussian_fill(NoiseKey{seed, tag, idx, 0}, 1.0, v.data(), dim);
  // Deterministic radius in (0, radius] from one extra draw.
  double r[1];
  gaussian_fill(NoiseKey{seed, tag + 100, idx, 0}, 1.0, r, 1);
  const double frac = 0.5 + 0.5 * std::tanh(r[0]);
  const double nv = v.norm();
  return nv > 0 ? Vec((radius * frac / nv) * v) : v;
}

}  // namespace

ValidationReport validate_hypotheses(const ModelSpec& model, int n_samples, uint64_t seed) {
  model.check_shapes();
  ValidationReport rep;
  const double radius = 2.5;
  const double lip_slack = 1.05;

  double max_b = 0, max_l = 0, max_h = 0, max_rho = 0;
  double lip_b = 0, lip_F = 0, lip_l = 0, lip_h = 0;
  double worst_dissip = -1e300;  // sup of <(B+F)(q)-(B+F)(q'), q-q'> / |q-q'|^2

  for (int s = 0; s < n_samples; ++s) {
    const Vec x = sample_ball(model.n_slow(), radius, seed, s, 1);
    const Vec x2 = sample_ball(model.n_slow(), radius, seed, s, 2);
    const Vec q = sample_ball(model.n_fast(), radius, seed, s, 3);
    const Vec q2 = sample_ball(model.n_fast(), radius, seed, s, 4);
    const double u = model.U[s % model.U.size()];

    max_b = std::max(max_b, model.b(x, q, u).norm());
    max_l = std::max(max_l, std::abs(model.l(x, q, u)));
    max_h = std::max(max_h, std::abs(model.h(x)));
    max_rho = std::max(max_rho, model.rho(u).norm());

    const double dxq = (x - x2).norm() + (q - q2).norm();
    if (dxq > 1e-9) {
      lip_b = std::max(lip_b, (model.b(x, q, u) - model.b(x2, q2, u)).norm() / dxq);
      lip_F = std::max(lip_F, (model.F(x, q) - model.F(x2, q2)).norm() / dxq);
      lip_l = std::max(lip_l, std::abs(model.l(x, q, u) - model.l(x2, q2, u)) / dxq);
    }
    const double dx = (x - x2).norm();
    if (dx > 1e-9) lip_h = std::max(lip_h, std::abs(model.h(x) - model.h(x2)) / dx);

    const Vec dq = q - q2;
    const double dq2 = dq.squaredNorm();
    if (dq2 > 1e-12) {
      const Vec lhs = model.B_eigs.cwiseProduct(dq) + model.F(x, q) - model.F(x, q2);
      worst_dissip = std::max(worst_dissip, lhs.dot(dq) / dq2);
    }
  }

  auto push = [&](const std::string& name, double measured, double bound, bool pass) {
    rep.items.push_back({name, bound, measured, pass});
  };
  push("|b| <= M", max_b, model.M, max_b <= model.M + 1e-12);
  push("|l| <= M", max_l, model.M, max_l <= model.M + 1e-12);
  push("|h| <= M", max_h, model.M, max_h <= model.M + 1e-12);
  push("|rho| <= M", max_rho, model.M, max_rho <= model.M + 1e-12);
  push("Lip(b) <= L", lip_b, model.L * lip_slack, lip_b <= model.L * lip_slack);
  push("Lip(F) <= L", lip_F, model.L * lip_slack, lip_F <= model.L * lip_slack);
  push("Lip(l) <= L", lip_l, model.L * lip_slack, lip_l <= model.L * lip_slack);
  push("Lip(h) <= L", lip_h, model.L * lip_slack, lip_h <= model.L * lip_slack);
  push("dissipativity <= -mu", worst_dissip, -model.mu, worst_dissip <= -model.mu + 1e-9);

  const double b_max_eig = model.B_eigs.maxCoeff();
  push("B eigenvalues <= -mu", b_max_eig, -model.mu, b_max_eig <= -model.mu + 1e-12);

  const double cA = hs_decay_constant(model.slow_semigroup(), model.gamma);
  const double cB = hs_decay_constant(model.fast_semigroup(), model.gamma);
  // Finite on the truncation by construction; flag only absurd blowup.
  push("HS decay constant (A)", cA, 1e6, std::isfinite(cA) && cA < 1e6);
  push("HS decay constant (B)", cB, 1e6, std::isfinite(cB) && cB < 1e6);

  return rep;
}

}  // namespace twoscale
