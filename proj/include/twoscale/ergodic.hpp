#pragma once

#include "twoscale/model.hpp"

#include <string>
#include <vector>

namespace twoscale {

// Settings for the long-horizon Cesaro estimator of the frozen-x ergodic
// value.  Zero horizon / burn-in fields derive their defaults 10/mu and
// 3/mu from the model.
struct LambdaSettings {
  double T = 0.0;
  double burn_in = 0.0;
  double dt = 0.02;
  int n_paths = 16;
  int n_rounds = 4;  // policy-iteration rounds
};

enum class LambdaSolver { CesaroPolicy, GridVi };

// Ergodic value of the fast subsystem with the slow state frozen at x and
// adjoint weight z: long-run average of z.b + l under the best stationary
// feedback found by policy iteration (CesaroPolicy), or relative value
// iteration on a discretized fast state (GridVi, n_fast = 1 only).
ValueEstimate estimate_lambda(const ModelSpec& model, const Vec& x, const Vec& z,
                              LambdaSettings settings, LambdaSolver solver,
                              uint64_t seed = 0);

// Interpolated lambda estimates over a product grid (slow-line coordinate,
// active z coordinates), with Monte Carlo error bars.
struct LambdaTable {
  Vec x_dir;
  int active_dim = 1;
  std::vector<double> s_grid;                // ascending
  std::vector<std::vector<double>> z_axes;   // active_dim axes, ascending
  std::vector<double> values;                // flat row-major [s][z1][z2]
  std::vector<double> stderrs;

  double T = 0.0, burn_in = 0.0;
  int n_paths = 0, n_rounds = 0;
  uint64_t model_fp = 0;

  std::size_t n_cells() const;
  std::size_t flat_index(std::size_t is, const std::vector<std::size_t>& iz) const;

  // Multilinear interpolation; queries outside the grid raise
  // OutOfRangeError.  z is a full H covector; only its first active_dim
  // coordinates enter.
  double value_at(const Vec& x, const Vec& z) const;
  double stderr_at(const Vec& x, const Vec& z) const;
  bool in_range(const Vec& x, const Vec& z) const;
  double max_abs_z_cover() const;  // radius of the smallest covered box edge

  void save_csv(const std::string& path) const;
  static LambdaTable load_csv(const std::string& path);
};

LambdaTable build_lambda_table(const ModelSpec& model, const std::vector<double>& s_grid,
                               const std::vector<std::vector<double>>& z_axes,
                               const LambdaSettings& settings, uint64_t seed = 0,
                               LambdaSolver solver = LambdaSolver::CesaroPolicy);

// Non-uniform z axis covering [-radius, radius]: dense spacing near zero
// (where the limit BSDE queries the table) and sparse nodes toward the cap.
std::vector<double> make_z_axis(double dense_radius, double dense_step, double radius);

struct AuditItem {
  std::string property;
  bool pass = true;
  double worst = 0.0;  // most positive violation margin; <= 0 passes
  std::string where;
};

struct AuditReport {
  std::vector<AuditItem> items;
  bool all_pass() const;
  std::string summary() const;
};

// Checks the lambda bounds on every grid pair with 3-stderr slack:
// |lambda| <= M(1+|z|), Lipschitz-in-z constant <= M, Lipschitz-in-x
// <= L(1+|z|), and discrete concavity along every z line.
AuditReport lambda_property_audit(const LambdaTable& table, double M, double L);

}  // namespace twoscale
