#pragma once

#include "twoscale/model.hpp"
#include "twoscale/noise.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace twoscale {

// Time grid for the unit-horizon problem; dt = 1/n_steps so that the
// horizon is exactly 1.
struct TwoScaleParams {
  double epsilon = 0.1;
  double eta = 0.0;
  int n_steps = 200;
  Vec x0;
  Vec q0;

  double dt() const { return 1.0 / n_steps; }
  void validate(const ModelSpec& model) const;
};

// Default grid rule: dt = min(epsilon/10, 1/200).
int default_steps(double epsilon);

enum class NoiseMode { Keyed, Off };

// Feedback control on the grid; returns an index into model.U.
// An empty function means the uncontrolled dynamics (no b, no G rho).
using Policy = std::function<int(double t, const Vec& x, const Vec& q)>;

struct PathBundle {
  Vec times;           // n_steps + 1
  RowMat X;            // (n_steps+1) x n_slow
  RowMat Q;            // (n_steps+1) x n_fast
  RowMat dW1;          // n_steps x n_noise
  RowMat dW2;          // n_steps x n_noise
  RowMat dB;           // n_steps x n_slow
  std::vector<int> u;  // n_steps; -1 where uncontrolled

  void to_csv(const std::string& path) const;
};

// Per-mode exponential-Euler factors for the pair (slow, fast) system.
// The linear part is integrated exactly; drifts are frozen at the left
// endpoint; stochastic convolutions carry their exact per-step variance.
class PairStepper {
 public:
  PairStepper(const ModelSpec& model, double dt, double epsilon, double eta);

  // Advances (x, q) by one step.  u_idx < 0 selects the uncontrolled
  // form.  Increment pointers hold raw N(0, dt) draws.
  void step(Vec& x, Vec& q, int u_idx, const double* dW1, const double* dW2,
            const double* dB) const;

  double dt() const { return dt_; }

 private:
  const ModelSpec& model_;
  double dt_, eta_;
  Vec e_slow_, drift_slow_, conv_slow_;  // e^{a dt}, (e-1)/a, sqrt(phi1(2 a dt))
  Vec e_fast_, drift_fast_, noise_fast_; // e^{b dt/eps}, (e-1)/b, g sqrt(phi1(2 b dt/eps)/eps)
};

// Fast equation with the slow state frozen at x, run at speed 1:
//   dQ = (B Q + F(x, Q) + G rho(beta)) dt + G dW.
class FrozenFastStepper {
 public:
  FrozenFastStepper(const ModelSpec& model, const Vec& x, double dt);
  void step(Vec& q, int u_idx, const double* dW2) const;
  double dt() const { return dt_; }

 private:
  const ModelSpec& model_;
  Vec x_;
  double dt_;
  Vec e_fast_, drift_fast_, noise_fast_;
};

// Reduced slow equation dX = A X dt - alpha dt + R(X) dW1 + eta dB.
class ReducedStepper {
 public:
  ReducedStepper(const ModelSpec& model, double dt, double eta);
  void step(Vec& x, const Vec& alpha, const double* dW1, const double* dB) const;
  double dt() const { return dt_; }

 private:
  const ModelSpec& model_;
  double dt_, eta_;
  Vec e_slow_, drift_slow_, conv_slow_;
};

// Simulates the controlled pair system (uncontrolled when the policy is
// empty), storing states and the increments that produced them.
PathBundle simulate_pair(const ModelSpec& model, const TwoScaleParams& params,
                         const Policy& policy, NoiseMode mode = NoiseMode::Keyed,
                         uint64_t seed = 0, uint64_t path_id = 0);

// Re-integrates a stored bundle; reproduces X and Q bit-for-bit.
PathBundle replay(const ModelSpec& model, const TwoScaleParams& params,
                  const PathBundle& bundle);

// Frozen-x fast trajectory started from Q = 0 over [0, T].
struct FrozenFastPath {
  Vec times;
  RowMat Q;            // (n_steps+1) x n_fast
  RowMat dW2;          // n_steps x n_noise
  std::vector<int> u;
};
using FastPolicy = std::function<int(const Vec& q)>;
FrozenFastPath simulate_frozen_fast(const ModelSpec& model, const Vec& x,
                                    const FastPolicy& policy, double T, double dt,
                                    NoiseMode mode = NoiseMode::Keyed, uint64_t seed = 0,
                                    uint64_t path_id = 0, const Vec* q0 = nullptr);

// Slow-only path under a ball-constrained feedback alpha(t, x); values are
// radially clipped to |alpha| <= M+1 and clip events are counted.
using AlphaPolicy = std::function<Vec(double t, const Vec& x)>;
struct ReducedPath {
  Vec times;
  RowMat X;
  RowMat dW1;  // n_steps x n_noise
  RowMat dB;   // n_steps x n_slow
  int clip_events = 0;
};
ReducedPath simulate_reduced(const ModelSpec& model, double eta, const AlphaPolicy& alpha,
                             const TwoScaleParams& params, NoiseMode mode = NoiseMode::Keyed,
                             uint64_t seed = 0, uint64_t path_id = 0);

// Moment estimates E sup_t |X|^p and sup_t E |Q_t|^p for p in {1,2,4}.
struct MomentRow {
  int p = 0;
  double e_sup_x = 0.0, e_sup_x_se = 0.0;
  double sup_e_q = 0.0, sup_e_q_se = 0.0;
};
struct MomentReport {
  std::vector<MomentRow> rows;
  const MomentRow& row(int p) const;
};
MomentReport moment_report(const ModelSpec& model, const TwoScaleParams& params, int n_paths,
                           uint64_t seed = 0, const Policy& policy = {});

// Grid check of (eps, eta)-uniformity: flags when the largest second-moment
// estimate over the grid exceeds twice the smallest.
struct MomentUniformity {
  double min_e_sup_x2 = 0.0, max_e_sup_x2 = 0.0;
  bool flagged = false;
};
MomentUniformity moment_uniformity_check(const ModelSpec& model, const TwoScaleParams& base,
                                         const std::vector<double>& eps_grid,
                                         const std::vector<double>& eta_grid, int n_paths,
                                         uint64_t seed = 0);

}  // namespace twoscale
