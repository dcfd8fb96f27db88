#pragma once

#include "twoscale/common.hpp"
#include "twoscale/spectral.hpp"

#include <functional>
#include <string>
#include <vector>

namespace twoscale {

// All problem coefficients at Galerkin-truncated scale.  The slow space H
// and fast space K are identified with R^{n_slow} and R^{n_fast} through
// their eigenbases; the noise space is R^{n_noise}.  Controls come from
// the finite set U and are passed to coefficients by value.
struct ModelSpec {
  std::string name = "custom";

  Vec A_eigs;  // slow generator eigenvalues
  Vec B_eigs;  // fast generator eigenvalues, all <= -mu
  int n_noise = 0;

  std::function<Vec(const Vec& x, const Vec& q, double u)> b;  // H-valued, |b| <= M
  std::function<Vec(const Vec& x, const Vec& q)> F;            // K-valued, Lipschitz
  std::function<Vec(const Vec& x)> R_mult;  // per-mode multipliers of the slow noise map
  Vec G_mult;                               // per-mode multipliers of the fast noise map
  std::function<Vec(double u)> rho;         // control channel into the fast equation, |rho| <= M
  std::function<double(const Vec& x, const Vec& q, double u)> l;  // running cost, |l| <= M
  std::function<double(const Vec& x)> h;                          // terminal cost, |h| <= M

  std::vector<double> U;  // finite control set

  double M = 1.0;      // uniform bound on b, l, h, rho
  double L = 1.0;      // Lipschitz constant of b, F, l, h
  double mu = 1.0;     // dissipativity margin of B + F
  double gamma = 0.25; // Hilbert-Schmidt decay exponent

  // Active subspace of the Legendre duality: b's range lives in the span
  // of the first active_dim slow modes.
  int active_dim = 2;
  // Direction along which lambda tables parameterize the slow state.
  Vec x_dir;

  int n_slow() const { return static_cast<int>(A_eigs.size()); }
  int n_fast() const { return static_cast<int>(B_eigs.size()); }

  DiagonalSemigroup slow_semigroup() const { return {A_eigs, "A"}; }
  DiagonalSemigroup fast_semigroup() const { return {B_eigs, "B"}; }

  // Drift of the fast equation at speed 1: B q + F(x,q) + G rho(u).
  Vec fast_drift(const Vec& x, const Vec& q, double u) const;
  Vec apply_G(const Vec& w) const;
  Vec apply_R(const Vec& x, const Vec& w) const;

  // Slow-line coordinate used by lambda / Legendre tables.
  double line_coordinate(const Vec& x) const { return x_dir.dot(x) / x_dir.squaredNorm(); }
  Vec point_on_line(double s) const { return s * x_dir; }

  uint64_t fingerprint() const;
  void check_shapes() const;
};

struct ValidationItem {
  std::string name;
  double bound = 0.0;
  double measured = 0.0;
  bool pass = false;
};

struct ValidationReport {
  std::vector<ValidationItem> items;
  bool all_pass() const;
  std::string summary() const;
};

// Empirical checks of the standing hypotheses on random samples:
// uniform bounds on b, l, h, rho; Lipschitz constants within 5% slack;
// dissipativity of B + F; eigenvalue sign conditions; HS decay with the
// declared gamma.
ValidationReport validate_hypotheses(const ModelSpec& model, int n_samples = 400,
                                     uint64_t seed = 20240901ull);

}  // namespace twoscale
