#pragma once

#include "twoscale/bsde.hpp"
#include "twoscale/ergodic.hpp"
#include "twoscale/legendre.hpp"
#include "twoscale/presets.hpp"
#include "twoscale/reduced.hpp"

#include <optional>
#include <string>
#include <vector>

namespace twoscale {

struct SolverConfig {
  int n_paths = 2000;
  int n_policy_rounds = 3;
  BsdeSettings bsde;             // regression knots and basis
  LambdaSettings lambda_cell;    // per-cell ergodic estimator settings
  int lambda_nx = 7;
  double lambda_x_span = 0.0;    // 0: derived from x0, drift and noise bounds
  double lambda_dense_radius = 0.0;  // 0: derived from the identity radius
  double lambda_dense_step = 0.2;
  int legendre_alpha_points = 241;
  int legendre_z_points = 801;
  ReducedSettings reduced;
  int limit_bsde_paths = 4000;   // slow-only cloud is cheap; more paths tame 1/eta
  double lip_probe = 0.2;        // x0 perturbation for Lipschitz estimates
  int lip_paths = 600;           // paths for the kappa-sizing estimate
};

struct ExperimentConfig {
  std::string preset = "reaction_diffusion";
  std::vector<double> eps_grid{0.2, 0.05};
  std::vector<double> eta_grid{0.4, 0.2, 0.1, 0.05, 0.0};
  uint64_t seed = 1;
  std::string out_dir = "out";
  SolverConfig solver;
  Vec x0_override, q0_override;  // empty: preset defaults
  int n_modes_override = 0;      // reaction_diffusion truncation dimension
  double m_shift_override = 0.0; // reaction_diffusion fast spectral shift
  // In-memory model override for tests and bespoke instances; not part of
  // the JSON schema.
  std::optional<PresetBundle> custom;

  void validate() const;  // grids descending, positivity, trailing eta 0 allowed
  PresetBundle bundle() const;

  static ExperimentConfig from_json_file(const std::string& path);
};

struct SweepRow {
  double epsilon = 0.0;
  double eta = 0.0;
  std::string estimator;
  double value = 0.0;
  double stderr_ = 0.0;
  double runtime_s = 0.0;
  uint64_t fingerprint = 0;
};

struct SweepResult {
  std::string name;
  std::vector<SweepRow> rows;
  AuditReport audits;
  std::vector<double> slopes;         // per-epsilon log-log slopes (eta sweep)
  std::vector<double> slope_stderrs;

  bool pass() const { return audits.all_pass(); }
  void write_csv(const std::string& dir) const;       // <name>.csv
  void write_plot_data(const std::string& dir) const; // <name>_plot.csv: x,y,y_err
};

// Shared heavy artifacts for a configuration: truncation constants sized
// from a value-Lipschitz probe, the lambda table over the derived grids and
// its conjugate table.
struct Pipeline {
  PresetBundle pb;
  TruncationParams trunc;
  LambdaTable lambda_table;
  LegendreTable legendre_table;
  double lip_estimate = 0.0;
  AuditReport lambda_audit;
  double containment = 1.0;  // fraction of limit-BSDE z queries in the identity region
};
Pipeline build_pipeline(const ExperimentConfig& config);

// The kappa-sizing probe of build_pipeline: uniform-in-time Lipschitz
// estimate of v^eta along the slow line, then choose_kappa.
TruncationParams estimate_truncation(const ExperimentConfig& config, const PresetBundle& pb,
                                     double* lip_out = nullptr);

// Slow-line half-width covering x0, the ball drift and a 5-sigma band.
double derive_s_span(const ExperimentConfig& config, const PresetBundle& pb);

// |V^{eps,eta} - V^{eps,0}| over the eta grid with per-epsilon log-log rate
// fits and the sup-over-epsilon deviation per eta.
SweepResult run_eta_sweep(const ExperimentConfig& config);

// V^{eps,eta} against the limit-BSDE value Y0^eta over the epsilon grid,
// with a monotone-trend check; requires a positive eta in the grid.
SweepResult run_epsilon_sweep(const ExperimentConfig& config,
                              const Pipeline* pipeline = nullptr);

// Three independent estimates of V(x0) - policy search at (eps_min, 0), the
// limit BSDE at eta_min, the reduced control problem at eta = 0 - with
// pairwise deviations and an x0-Lipschitz response audit.
SweepResult run_interchange(const ExperimentConfig& config,
                            const Pipeline* pipeline = nullptr);

// Finite-difference Lipschitz estimates of V^{eps,eta} across the grid;
// audits that they vary by less than 30%.
SweepResult run_lipschitz_audit(const ExperimentConfig& config);

}  // namespace twoscale
