#pragma once

#include "twoscale/dynamics.hpp"
#include "twoscale/ergodic.hpp"
#include "twoscale/hamiltonian.hpp"
#include "twoscale/legendre.hpp"
#include "twoscale/model.hpp"

#include <optional>

namespace twoscale {

// Polynomial regression basis in the leading slow and fast coordinates.
struct RegressionBasis {
  int slow_vars = 2;
  int fast_vars = 1;
  int degree = 2;

  int n_vars() const { return slow_vars + fast_vars; }
  int size() const {
    const int v = n_vars();
    return degree >= 2 ? 1 + v + v * (v + 1) / 2 : 1 + v;
  }
  void eval(const Vec& x, const Vec& q, double* out) const;
};

struct BsdeSettings {
  int n_paths = 2000;
  int n_steps = 50;  // regression knots; the forward cloud integrates finer
  RegressionBasis basis;
  int fine_substeps = 0;  // per knot; 0 derives from the stiffness rule
  bool driver_prescaled = false;  // test hook: pre-divide the integrands
};

// Backward solution: per-knot value samples and regression coefficients of
// the integrands, evaluable as covector fields for policy extraction.
struct BsdeSolution {
  Vec times;
  int n_paths = 0;
  double epsilon = 0.0, eta = 0.0;
  RegressionBasis basis;
  bool has_fast = true;

  RowMat Y;                     // (K+1) x n_paths
  RowMat X_terminal;            // n_paths x n_slow, for terminal audits
  std::vector<Vec> cont_coef;   // K entries, basis coefficients of E[Y_{k+1}|.]
  std::vector<Mat> z2_coef;     // K entries, p x n_slow
  std::vector<Mat> z1_coef;     // K entries, p x n_noise
  std::vector<Mat> xi_coef;     // K entries, p x n_noise (pair solver only)

  double y0 = 0.0, y0_stderr = 0.0;
  double max_driver_abs = 0.0;

  // Limit-solver diagnostics of the z = Z^2/eta queries.
  double z_query_max = 0.0;
  double z_frac_in_identity = 1.0;  // fraction inside |z| <= identity radius

  CovectorField z2_field() const;
  CovectorField xi_field() const;

  double terminal_sup_error(const ModelSpec& model, const RowMat& X_terminal) const;
};

// Regularized BSDE along the uncontrolled two-scale cloud; the driver is
// psi(x, q, Z2/eta, Xi/sqrt(eps)) evaluated at the regressed integrands.
BsdeSolution solve_full_bsde(const ModelSpec& model, double epsilon, double eta,
                             const BsdeSettings& settings, const Vec& x0, const Vec& q0,
                             uint64_t seed = 0);

// Reduced BSDE along the slow-only cloud; the driver interpolates the
// lambda table at (X_t, Z2/eta).  Y0 estimates v^eta(x0).  trunc, when
// given, feeds the identity-region containment diagnostic.
BsdeSolution solve_limit_bsde(const ModelSpec& model, double eta,
                              const LambdaTable& lambda_table, const BsdeSettings& settings,
                              const Vec& x0, uint64_t seed = 0,
                              const TruncationParams* trunc = nullptr);

// Strong-formulation policy cost: the control acts in the drift of the
// controlled pair system and the cost functional is averaged over paths.
ValueEstimate value_by_policy(const ModelSpec& model, double epsilon, double eta,
                              const Policy& policy, int n_paths, const Vec& x0, const Vec& q0,
                              uint64_t seed = 0, int n_steps = 0);

struct VResult {
  ValueEstimate value;          // best certified policy value
  double y0 = 0.0;              // BSDE value (eta > 0; surrogate eta otherwise)
  double y0_stderr = 0.0;
  double bsde_eta = 0.0;        // eta actually used by the policy-extraction BSDE
  double policy_gap = 0.0;      // value - y0 when comparable
  Policy best_policy;
};

// Minimum of value_by_policy over a Hamiltonian-greedy policy-improvement
// sequence seeded by the BSDE fields; at eta = 0 the fields come from a
// small surrogate eta and only the evaluation runs on the eta = 0 dynamics.
VResult estimate_V(const ModelSpec& model, double epsilon, double eta, int n_paths,
                   int n_rounds, const Vec& x0, const Vec& q0, uint64_t seed = 0,
                   const BsdeSettings* bsde_settings = nullptr);

}  // namespace twoscale
