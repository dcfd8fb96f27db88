#include "twoscale/hamiltonian.hpp"

#include <cmath>
#include <limits>

namespace twoscale {

HamiltonianResult psi(const ModelSpec& model, const Vec& x, const Vec& q, const Vec& z2,
                      const Vec& v) {
  if (model.U.empty()) throw ConfigError("psi: control set U is empty");
  if (x.size() != model.n_slow() || q.size() != model.n_fast() || z2.size() != model.n_slow())
    throw ConfigError("psi: dimension mismatch");

  HamiltonianResult res;
  double best = std::numeric_limits<double>::infinity();
  double second = std::numeric_limits<double>::infinity();
  int best_idx = 0;
  for (int i = 0; i < static_cast<int>(model.U.size()); ++i) {
    const double u = model.U[i];
    double val = model.l(x, q, u) + z2.dot(model.b(x, q, u));
    if (v.size() > 0) {
      const Vec r = model.rho(u);
      const int d = static_cast<int>(std::min(v.size(), r.size()));
      val += v.head(d).dot(r.head(d));
    }
    if (val < best) {
      second = best;
      best = val;
      best_idx = i;
    } else if (val < second) {
      second = val;
    }
  }
  res.value = best;
  res.argmin_u = best_idx;
  res.gap = model.U.size() > 1 ? second - best : 0.0;
  return res;
}

HamiltonianResult psi_scaled(const ModelSpec& model, double epsilon, double eta, const Vec& x,
                             const Vec& q, const Vec& z2, const Vec& v) {
  if (epsilon <= 0) throw ArgumentError("psi_scaled: epsilon must be positive");
  if (eta <= 0) throw ArgumentError("psi_scaled: eta must be positive");
  return psi(model, x, q, Vec(z2 / eta), Vec(v / std::sqrt(epsilon)));
}

Policy greedy_policy(const ModelSpec& model, double epsilon, double eta,
                     const CovectorField& z2_field, const CovectorField& v_field) {
  return [&model, epsilon, eta, z2_field, v_field](double t, const Vec& x, const Vec& q) {
    const Vec z2 = z2_field ? z2_field(t, x, q) : Vec(Vec::Zero(model.n_slow()));
    const Vec v = v_field ? v_field(t, x, q) : Vec(Vec::Zero(model.n_noise));
    return psi_scaled(model, epsilon, eta, x, q, z2, v).argmin_u;
  };
}

}  // namespace twoscale
