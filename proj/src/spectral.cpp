#include "twoscale/spectral.hpp"

#include <cmath>

namespace twoscale {

Vec apply_semigroup(const DiagonalSemigroup& sg, double t, const Vec& v) {
  if (t < 0) throw ArgumentError("apply_semigroup: t must be nonnegative");
  if (v.size() != sg.eigenvalues.size())
    throw ConfigError("apply_semigroup: dimension mismatch between vector and semigroup");
  return (sg.eigenvalues.array() * t).exp() * v.array();
}

double hs_norm(const DiagonalSemigroup& sg, double s) {
  return std::sqrt((2.0 * s * sg.eigenvalues.array()).exp().sum());
}

double hs_decay_constant(const DiagonalSemigroup& sg, double gamma,
                         double s_min, double s_max, int n_probe) {
  double worst = 0.0;
  for (int i = 0; i < n_probe; ++i) {
    const double f = static_cast<double>(i) / (n_probe - 1);
    const double s = s_min * std::pow(s_max / s_min, f);
    worst = std::max(worst, hs_norm(sg, s) * std::pow(s, gamma));
  }
  return worst;
}

SineTransform::SineTransform(int n_grid) : n_grid_(n_grid) {
  if (n_grid < 1) throw ConfigError("SineTransform: grid size must be positive");
  synth_.resize(n_grid, n_grid);
  const double pi = 3.14159265358979323846;
  for (int j = 0; j < n_grid; ++j) {
    const double xj = static_cast<double>(j + 1) / (n_grid + 1);
    for (int k = 0; k < n_grid; ++k) synth_(j, k) = std::sin((k + 1) * pi * xj);
  }
}

Vec SineTransform::to_modes(const Vec& grid_values, int n_modes) const {
  if (grid_values.size() != n_grid_)
    throw ConfigError("SineTransform::to_modes: grid size incompatible with transform");
  if (n_modes < 1 || n_modes > n_grid_)
    throw ConfigError("SineTransform::to_modes: truncation incompatible with grid");
  // Discrete sine orthogonality: synth^T synth = (n_grid+1)/2 * I.
  Vec full = (2.0 / (n_grid_ + 1)) * (synth_.transpose() * grid_values);
  return full.head(n_modes);
}

Vec SineTransform::to_grid(const Vec& modes) const {
  if (modes.size() < 1 || modes.size() > n_grid_)
    throw ConfigError("SineTransform::to_grid: mode count incompatible with grid");
  return synth_.leftCols(modes.size()) * modes;
}

}  // namespace twoscale
