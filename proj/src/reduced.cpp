#include "twoscale/reduced.hpp"

#include "twoscale/noise.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace twoscale {

ReducedPolicy ReducedPolicy::zero(const ModelSpec& model, int n_blocks, RegressionBasis basis) {
  ReducedPolicy p;
  p.n_blocks = n_blocks;
  p.active_dim = model.active_dim;
  p.n_slow = model.n_slow();
  p.radius = model.M + 1.0;
  basis.slow_vars = std::min(basis.slow_vars, model.n_slow());
  basis.fast_vars = 0;
  p.basis = basis;
  p.coefs.assign(n_blocks, Mat::Zero(p.active_dim, basis.size()));
  return p;
}

Vec ReducedPolicy::eval(double t, const Vec& x) const {
  const int b = std::clamp(static_cast<int>(t * n_blocks), 0, n_blocks - 1);
  Vec phi(basis.size());
  basis.eval(x, Vec(), phi.data());
  Vec a = Vec::Zero(n_slow);
  a.head(active_dim) = coefs[b] * phi;
  const double na = a.norm();
  if (na > radius) a *= radius / na;
  return a;
}

namespace {

// Monte Carlo objective E[h(X_1) - sum tilde_lambda_*(X_k, alpha_k) dt]
// under fixed (seed-keyed) noise.
double reduced_objective(const ModelSpec& model, const LegendreTable& table, double eta,
                         const ReducedPolicy& policy, int n_paths, int n_steps, const Vec& x0,
                         uint64_t seed, double* stderr_out = nullptr) {
  const double dt = 1.0 / n_steps;
  std::vector<double> costs(n_paths);
  parallel_for(n_paths, [&](std::size_t pid) {
    ReducedStepper stepper(model, dt, eta);
    Vec x = x0;
    Vec w1(model.n_noise), db(model.n_slow());
    const double sd = std::sqrt(dt);
    double acc = 0.0;
    for (int k = 0; k < n_steps; ++k) {
      const Vec a = policy.eval(k * dt, x);
      const double star = table.value_at(x, Vec(a.head(table.active_dim)));
      if (!std::isfinite(star))
        throw IntegrationError("solve_reduced: NEG_INF conjugate value reached");
      acc -= star * dt;
      if (eta == 0.0 && model.R_mult(x).cwiseAbs().maxCoeff() == 0.0) {
        w1.setZero();
        db.setZero();
      } else {
        gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::W1), pid,
                               static_cast<uint64_t>(k)},
                      sd, w1.data(), model.n_noise);
        gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::B), pid,
                               static_cast<uint64_t>(k)},
                      sd, db.data(), model.n_slow());
      }
      stepper.step(x, a, w1.data(), db.data());
    }
    costs[pid] = acc + model.h(x);
  });
  const MeanStderr ms = mean_stderr(costs);
  if (stderr_out) *stderr_out = ms.stderr_;
  return ms.mean;
}

}  // namespace

ReducedResult solve_reduced(const ModelSpec& model, const LegendreTable& table, double eta,
                            const ReducedSettings& settings, const Vec& x0, uint64_t seed) {
  model.check_shapes();
  if (table.active_dim != model.active_dim)
    throw ConfigError("solve_reduced: table active_dim does not match the model");

  ReducedPolicy pol = ReducedPolicy::zero(model, settings.n_blocks, settings.basis);
  const uint64_t crn = salted_seed(seed, 0x5eed);
  const int n = settings.n_paths;

  auto crn_value = [&](const ReducedPolicy& p) {
    return reduced_objective(model, table, eta, p, n, settings.n_steps, x0, crn);
  };

  ReducedResult out;
  double best = crn_value(pol);
  out.history.push_back(best);

  // Coordinate search with shrinking steps and common random numbers.
  double step = settings.init_step;
  const int p_sz = pol.basis.size();
  for (int sweep = 0; sweep < settings.max_sweeps; ++sweep) {
    bool improved = false;
    for (int b = 0; b < pol.n_blocks; ++b)
      for (int d = 0; d < pol.active_dim; ++d)
        for (int j = 0; j < p_sz; ++j)
          for (double delta : {step, -step}) {
            ReducedPolicy cand = pol;
            cand.coefs[b](d, j) += delta;
            const double v = crn_value(cand);
            if (v < best - 1e-12) {
              best = v;
              pol = cand;
              out.history.push_back(best);
              improved = true;
            }
          }
    if (!improved) {
      step *= 0.5;
      if (step < 0.02) break;
    }
  }

  // Unbiased evaluation of the winner on fresh noise.
  double se = 0.0;
  const double mean =
      reduced_objective(model, table, eta, pol, n, settings.n_steps, x0,
                        salted_seed(seed, 0xe7a1), &se);
  out.value.mean = mean;
  out.value.stderr_ = se;
  out.value.n = n;
  Fingerprint fp;
  fp.add(model.fingerprint()).add(eta).add(static_cast<uint64_t>(n)).add(seed);
  out.value.fingerprint = fp.value();
  out.policy = pol;
  return out;
}

namespace {

struct OdeObjective {
  const ModelSpec* model;
  const LegendreTable* table;
  Vec x0;
  int n_steps;
  double dt;
  Vec e, fac;  // per-mode exact propagation factors

  // alpha flattened as n_steps x active_dim (row-major rows per step).
  double eval(const Mat& alpha) const {
    Vec x = x0;
    double acc = 0.0;
    Vec a_full = Vec::Zero(model->n_slow());
    for (int k = 0; k < n_steps; ++k) {
      a_full.head(table->active_dim) = alpha.row(k).transpose();
      const double star = table->value_at(x, Vec(alpha.row(k).transpose()));
      acc -= star * dt;
      x = e.cwiseProduct(x) - fac.cwiseProduct(a_full);
    }
    return acc + model->h(x);
  }
};

Mat project_ball_rows(Mat alpha, double radius) {
  for (Eigen::Index k = 0; k < alpha.rows(); ++k) {
    const double na = alpha.row(k).norm();
    if (na > radius) alpha.row(k) *= radius / na;
  }
  return alpha;
}

}  // namespace

DeterministicResult solve_reduced_deterministic(const ModelSpec& model,
                                                const LegendreTable& table, const Vec& x0,
                                                int n_steps, int n_starts, uint64_t seed) {
  model.check_shapes();
  // The transcription is only exact without slow noise.
  if (model.R_mult(x0).cwiseAbs().maxCoeff() != 0.0)
    throw ConfigError("solve_reduced_deterministic: requires R == 0");

  OdeObjective obj;
  obj.model = &model;
  obj.table = &table;
  obj.x0 = x0;
  obj.n_steps = n_steps;
  obj.dt = 1.0 / n_steps;
  obj.e.resize(model.n_slow());
  obj.fac.resize(model.n_slow());
  for (int i = 0; i < model.n_slow(); ++i) {
    const double z = model.A_eigs[i] * obj.dt;
    obj.e[i] = std::exp(z);
    obj.fac[i] = obj.dt * phi1(z);
  }

  const int dim = table.active_dim;
  const double radius = model.M + 1.0;
  double best_val = std::numeric_limits<double>::infinity();
  Mat best_alpha = Mat::Zero(n_steps, dim);

  for (int start = 0; start <= n_starts; ++start) {
    Mat alpha = Mat::Zero(n_steps, dim);
    if (start > 0) {
      Vec r(n_steps * dim);
      gaussian_fill(NoiseKey{seed, 11, static_cast<uint64_t>(start), 0}, 0.5 * radius,
                    r.data(), n_steps * dim);
      for (int k = 0; k < n_steps; ++k)
        for (int d = 0; d < dim; ++d) alpha(k, d) = r[k * dim + d];
      alpha = project_ball_rows(alpha, radius);
    }

    double val = obj.eval(alpha);
    double lr = 1.0;
    const double fd = 1e-4;
    for (int iter = 0; iter < 300; ++iter) {
      Mat grad(n_steps, dim);
      for (int k = 0; k < n_steps; ++k)
        for (int d = 0; d < dim; ++d) {
          Mat ap = alpha, am = alpha;
          ap(k, d) += fd;
          am(k, d) -= fd;
          grad(k, d) = (obj.eval(project_ball_rows(ap, radius)) -
                        obj.eval(project_ball_rows(am, radius))) /
                       (2 * fd);
        }
      bool moved = false;
      while (lr > 1e-6) {
        const Mat cand = project_ball_rows(alpha - lr * grad, radius);
        const double cv = obj.eval(cand);
        if (cv < val - 1e-12) {
          alpha = cand;
          val = cv;
          moved = true;
          lr = std::min(1e4, lr * 1.6);  // let the step auto-scale to the curvature
          break;
        }
        lr *= 0.5;
      }
      if (!moved) break;
    }
    if (val < best_val) {
      best_val = val;
      best_alpha = alpha;
    }
  }

  DeterministicResult out;
  out.value = best_val;
  out.alpha = best_alpha;
  out.times.resize(n_steps);
  for (int k = 0; k < n_steps; ++k) out.times[k] = k * obj.dt;
  return out;
}

double dp_oracle(const ModelSpec& model, const LegendreTable& table,
                 const std::vector<double>& x_grid, const std::vector<double>& alpha_grid,
                 int n_steps, const Vec& x0) {
  if (model.n_slow() != 1) throw ConfigError("dp_oracle: requires one slow mode");
  if (x_grid.size() < 2 || alpha_grid.empty()) throw ConfigError("dp_oracle: grids required");
  if (x0[0] < x_grid.front() || x0[0] > x_grid.back())
    throw ConfigError("dp_oracle: x0 outside the state grid");

  const double dt = 1.0 / n_steps;
  const double z = model.A_eigs[0] * dt;
  const double e = std::exp(z);
  const double fac = dt * phi1(z);
  const double conv = std::sqrt(phi1(2.0 * z));

  // 5-node Gauss-Hermite for E f(N(0,1)).
  const double gh_x[5] = {0.0, 0.9585724646138185, -0.9585724646138185, 2.0201828704560856,
                          -2.0201828704560856};
  const double gh_w[5] = {0.9453087204829419, 0.3936193231522412, 0.3936193231522412,
                          0.019953242059045913, 0.019953242059045913};
  const double inv_sqrt_pi = 0.5641895835477563;
  const double sqrt2 = 1.4142135623730951;

  const int nx = static_cast<int>(x_grid.size());
  auto interp = [&](const std::vector<double>& V, double xq) {
    xq = std::clamp(xq, x_grid.front(), x_grid.back());
    const auto it = std::upper_bound(x_grid.begin(), x_grid.end(), xq);
    std::size_t i = std::min<std::size_t>(
        std::max<std::ptrdiff_t>(1, it - x_grid.begin()), x_grid.size() - 1);
    const double w = (xq - x_grid[i - 1]) / (x_grid[i] - x_grid[i - 1]);
    return (1 - w) * V[i - 1] + w * V[i];
  };

  std::vector<double> V(nx), Vn(nx);
  for (int i = 0; i < nx; ++i) V[i] = model.h(Vec::Constant(1, x_grid[i]));

  for (int k = n_steps - 1; k >= 0; --k) {
    for (int i = 0; i < nx; ++i) {
      const Vec x = Vec::Constant(1, x_grid[i]);
      const double r = model.R_mult(x)[0];
      const double sd = std::abs(r) * conv * std::sqrt(dt);
      double best = std::numeric_limits<double>::infinity();
      for (double a : alpha_grid) {
        const double star = table.value_at(x, Vec(Vec::Constant(1, a)));
        const double mean = e * x_grid[i] - fac * a;
        double cont = 0.0;
        if (sd == 0.0) {
          cont = interp(V, mean);
        } else {
          for (int gq = 0; gq < 5; ++gq)
            cont += gh_w[gq] * interp(V, mean + sd * sqrt2 * gh_x[gq]);
          cont *= inv_sqrt_pi;
        }
        best = std::min(best, -star * dt + cont);
      }
      Vn[i] = best;
    }
    V.swap(Vn);
  }
  return interp(V, x0[0]);
}

}  // namespace twoscale
