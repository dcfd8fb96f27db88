#pragma once

#include "twoscale/dynamics.hpp"
#include "twoscale/model.hpp"

namespace twoscale {

struct HamiltonianResult {
  double value = 0.0;
  int argmin_u = 0;
  double gap = 0.0;  // second best minus best, for tie diagnostics
};

// psi(x, q, z2, v) = min over U of l(x,q,u) + z2 . b(x,q,u) + v . rho(u).
// Ties break toward the lowest control index.
HamiltonianResult psi(const ModelSpec& model, const Vec& x, const Vec& q, const Vec& z2,
                      const Vec& v);

// psi(x, q, z2/eta, v/sqrt(eps)); requires eta > 0 and eps > 0.
HamiltonianResult psi_scaled(const ModelSpec& model, double epsilon, double eta, const Vec& x,
                             const Vec& q, const Vec& z2, const Vec& v);

// Covector fields produced by the BSDE regressions.
using CovectorField = std::function<Vec(double t, const Vec& x, const Vec& q)>;

// Pointwise argmin of psi_scaled at the field values.
Policy greedy_policy(const ModelSpec& model, double epsilon, double eta,
                     const CovectorField& z2_field, const CovectorField& v_field);

}  // namespace twoscale
