#pragma once

#include "twoscale/bsde.hpp"
#include "twoscale/legendre.hpp"
#include "twoscale/model.hpp"

namespace twoscale {

// Feedback alpha(t, x): piecewise-constant-in-time coefficients against a
// slow-state polynomial basis, radially clipped to the ball |alpha| <= M+1.
// Values live in the active subspace, embedded into H.
struct ReducedPolicy {
  int n_blocks = 4;
  int active_dim = 1;
  int n_slow = 1;
  double radius = 2.0;  // M + 1
  RegressionBasis basis{2, 0, 2};
  std::vector<Mat> coefs;  // n_blocks entries, active_dim x p

  static ReducedPolicy zero(const ModelSpec& model, int n_blocks, RegressionBasis basis);
  Vec eval(double t, const Vec& x) const;  // length n_slow, |.| <= radius
};

struct ReducedSettings {
  int n_paths = 2000;
  int n_steps = 50;
  int n_blocks = 4;
  int max_sweeps = 6;     // coordinate-search sweeps
  double init_step = 0.4; // initial coordinate step, shrinks on stall
  RegressionBasis basis{2, 0, 2};
};

struct ReducedResult {
  ValueEstimate value;     // fresh-seed evaluation of the best policy
  ReducedPolicy policy;
  std::vector<double> history;  // accepted common-random-number values, non-increasing
};

// Minimizes E[h(X_1) - int_0^1 tilde_lambda_*(X_s, alpha_s) ds] over the
// clipped policy class by coordinate search with common random numbers;
// state dX = A X dt - alpha dt + R(X) dW1 + eta dB.
ReducedResult solve_reduced(const ModelSpec& model, const LegendreTable& legendre_table,
                            double eta, const ReducedSettings& settings, const Vec& x0,
                            uint64_t seed = 0);

struct DeterministicResult {
  double value = 0.0;
  Vec times;       // n_steps knots
  Mat alpha;       // n_steps x active_dim control trajectory
};

// R == 0, eta == 0 transcription: piecewise-constant alpha per step,
// projected finite-difference gradient descent with multi-start.
DeterministicResult solve_reduced_deterministic(const ModelSpec& model,
                                                const LegendreTable& legendre_table,
                                                const Vec& x0, int n_steps = 50,
                                                int n_starts = 8, uint64_t seed = 0);

// Backward dynamic programming oracle for one slow mode: discretized state,
// 5-node Gauss-Hermite quadrature over the R(X) dW transition.
double dp_oracle(const ModelSpec& model, const LegendreTable& legendre_table,
                 const std::vector<double>& x_grid, const std::vector<double>& alpha_grid,
                 int n_steps, const Vec& x0);

}  // namespace twoscale
