#pragma once

#include "twoscale/common.hpp"

#include <string>

namespace twoscale {

// Diagonal generator in the eigenbasis of the underlying Hilbert space.
// Eigenvalues carry units 1/time; for the fast operator all of them must
// sit below -mu < 0.
struct DiagonalSemigroup {
  Vec eigenvalues;
  std::string label;  // "A" or "B"
};

// e^{tL} v computed per mode; exact, no time stepping.
Vec apply_semigroup(const DiagonalSemigroup& sg, double t, const Vec& v);

// Hilbert-Schmidt norm |e^{sL}|_{L2} = sqrt(sum_k e^{2 lambda_k s}).
double hs_norm(const DiagonalSemigroup& sg, double s);

// Reports sup over a log-grid of s in [s_min, s_max] of hs_norm(s) * s^gamma,
// the truncated-operator counterpart of the s^{-gamma} smoothing bound.
double hs_decay_constant(const DiagonalSemigroup& sg, double gamma,
                         double s_min = 1e-4, double s_max = 1.0, int n_probe = 200);

// Dirichlet sine basis on (0,1): mode k has grid trace sin(k pi x_j) on the
// uniform interior grid x_j = j/(n_grid+1).  Coefficients are amplitudes,
// so sin(pi x) maps to the first unit coordinate vector.
class SineTransform {
 public:
  explicit SineTransform(int n_grid);

  int n_grid() const { return n_grid_; }

  // Grid samples -> first n_modes coefficients (n_modes <= n_grid).
  Vec to_modes(const Vec& grid_values, int n_modes) const;
  // Coefficients (any length <= n_grid) -> grid samples.
  Vec to_grid(const Vec& modes) const;

 private:
  int n_grid_;
  Mat synth_;  // n_grid x n_grid, synth_(j,k) = sin((k+1) pi x_j)
};

}  // namespace twoscale
