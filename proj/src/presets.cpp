#include "twoscale/presets.hpp"

#include "twoscale/spectral.hpp"

#include <cmath>
#include <memory>
#include <sstream>

namespace twoscale {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec laplacian_eigs(int n, double shift) {
  Vec e(n);
  for (int k = 0; k < n; ++k) e[k] = -((k + 1.0) * (k + 1.0) * kPi * kPi + shift);
  return e;
}

Vec unit(int dim, int k) {
  Vec v = Vec::Zero(dim);
  v[k] = 1.0;
  return v;
}

PresetBundle make_reaction_diffusion(int n, double m_shift) {
  const int n_grid = 31; // collocation grid for the pointwise nonlinearity
  const double lip_f = 1.0;  // Lipschitz constant of f in the fast variable, < m
  if (n < 1 || n > n_grid) throw ConfigError("reaction_diffusion: n_modes outside [1, 31]");
  if (m_shift <= lip_f) throw ConfigError("reaction_diffusion: m must exceed Lip_q(f)");

  PresetBundle p;
  ModelSpec& md = p.model;
  md.name = "reaction_diffusion";
  md.A_eigs = laplacian_eigs(n, 0.0);
  md.B_eigs = laplacian_eigs(n, m_shift);
  md.n_noise = n;

  auto dst = std::make_shared<SineTransform>(n_grid);

  const double c_b = 0.6;
  md.b = [n, c_b](const Vec& x, const Vec& /*q*/, double u) {
    Vec out = Vec::Zero(n);
    out[0] = c_b * u * (0.5 + 0.5 * std::tanh(x[0]));
    return out;
  };

  // f(X, Q) = 0.3 tanh(X) + tanh(Q) applied pointwise on the grid, then
  // projected back onto the retained modes.
  md.F = [dst, n, lip_f](const Vec& x, const Vec& q) {
    const Vec xg = dst->to_grid(x);
    const Vec qg = dst->to_grid(q);
    Vec fg(xg.size());
    for (Eigen::Index j = 0; j < xg.size(); ++j)
      fg[j] = 0.3 * std::tanh(xg[j]) + lip_f * std::tanh(qg[j]);
    return dst->to_modes(fg, n);
  };

  const double sigma0 = 0.2;
  md.R_mult = [n, sigma0](const Vec& x) {
    Vec r(n);
    for (int k = 0; k < n; ++k)
      r[k] = sigma0 / ((k + 1.0) * (k + 1.0)) * (1.0 + 0.3 * std::tanh(x[0]));
    return r;
  };

  md.G_mult = Vec(n);
  for (int k = 0; k < n; ++k) md.G_mult[k] = 1.2 / (k + 1.0);

  md.rho = [n](double u) {
    Vec r = Vec::Zero(n);
    r[0] = u;
    return r;
  };

  md.l = [](const Vec& x, const Vec& q, double u) {
    return 0.25 * u * u + 0.35 * std::tanh(2.0 * q[0]) + 0.6 * std::tanh(x[0]);
  };
  md.h = [](const Vec& x) { return 0.8 * std::min(std::abs(x[0]), 1.5); };

  md.U = {-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0};
  md.M = 1.2;
  md.L = 1.0;
  md.mu = m_shift - lip_f;  // conservative margin m - Lip_q(f)
  md.gamma = 0.25;
  md.active_dim = 1;
  md.x_dir = unit(n, 0);

  p.x0 = 0.5 * unit(n, 0);
  p.q0 = 0.3 * unit(n, 0);
  return p;
}

PresetBundle make_linear_toy() {
  PresetBundle p;
  ModelSpec& md = p.model;
  md.name = "linear_toy";
  md.A_eigs = Vec::Constant(1, -1.0);
  md.B_eigs = Vec::Constant(1, -(kPi * kPi + 2.0));
  md.n_noise = 1;

  md.b = [](const Vec&, const Vec&, double u) { return Vec::Constant(1, 0.5 * u); };
  md.F = [](const Vec&, const Vec&) { return Vec::Zero(1); };
  md.R_mult = [](const Vec&) { return Vec::Constant(1, 0.3); };
  md.G_mult = Vec::Constant(1, 1.0);
  md.rho = [](double u) { return Vec::Constant(1, 0.8 * u); };
  md.l = [](const Vec&, const Vec&, double u) { return 0.3 + 0.2 * u * u; };
  md.h = [](const Vec& x) { return 0.5 * std::tanh(x[0]); };

  md.U = {-1.0, 0.0, 1.0};
  md.M = 1.0;
  md.L = 1.0;
  md.mu = kPi * kPi + 2.0;  // exact contraction rate: F does not depend on q
  md.gamma = 0.25;
  md.active_dim = 1;
  md.x_dir = Vec::Constant(1, 1.0);

  p.x0 = Vec::Constant(1, 0.5);
  p.q0 = Vec::Constant(1, 0.3);
  return p;
}

PresetBundle make_degenerate_r0() {
  PresetBundle p;
  ModelSpec& md = p.model;
  md.name = "degenerate_R0";
  md.A_eigs = Vec::Constant(1, -1.0);
  md.B_eigs = Vec::Constant(1, -(kPi * kPi + 2.0));
  md.n_noise = 1;

  md.b = [](const Vec& x, const Vec&, double u) {
    return Vec::Constant(1, 0.5 * u * (0.5 + 0.5 * std::tanh(x[0])));
  };
  md.F = [](const Vec&, const Vec&) { return Vec::Zero(1); };
  md.R_mult = [](const Vec&) { return Vec::Zero(1); };
  md.G_mult = Vec::Constant(1, 1.0);
  md.rho = [](double u) { return Vec::Constant(1, 0.8 * u); };
  md.l = [](const Vec& x, const Vec&, double u) {
    return 0.3 + 0.2 * u * u + 0.3 * std::tanh(x[0]);
  };
  md.h = [](const Vec& x) { return 0.8 * std::min(std::abs(x[0]), 1.5); };

  md.U = {-1.0, 0.0, 1.0};
  md.M = 1.2;
  md.L = 1.0;
  md.mu = kPi * kPi + 2.0;
  md.gamma = 0.25;
  md.active_dim = 1;
  md.x_dir = Vec::Constant(1, 1.0);

  p.x0 = Vec::Constant(1, 0.5);
  p.q0 = Vec::Constant(1, 0.3);
  return p;
}

}  // namespace

PresetBundle load_preset(const std::string& name, int n_modes, double m_shift) {
  if (name == "reaction_diffusion")
    return make_reaction_diffusion(n_modes > 0 ? n_modes : 8, m_shift > 0 ? m_shift : 2.0);
  if (name == "linear_toy") return make_linear_toy();
  if (name == "degenerate_R0") return make_degenerate_r0();
  std::ostringstream os;
  os << "unknown preset '" << name << "'; available:";
  for (const auto& n : preset_names()) os << " " << n;
  throw ConfigError(os.str());
}

std::vector<std::string> preset_names() {
  return {"reaction_diffusion", "linear_toy", "degenerate_R0"};
}

}  // namespace twoscale
