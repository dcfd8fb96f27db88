#include "twoscale/bsde.hpp"

#include "twoscale/noise.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace twoscale {

void RegressionBasis::eval(const Vec& x, const Vec& q, double* out) const {
  int p = 0;
  out[p++] = 1.0;
  double vars[16];
  int v = 0;
  for (int i = 0; i < slow_vars; ++i) vars[v++] = x[i];
  for (int j = 0; j < fast_vars; ++j) vars[v++] = q[j];
  for (int i = 0; i < v; ++i) out[p++] = vars[i];
  if (degree >= 2)
    for (int i = 0; i < v; ++i)
      for (int j = i; j < v; ++j) out[p++] = vars[i] * vars[j];
}

namespace {

struct Cloud {
  Vec times;                // K+1 knots
  std::vector<RowMat> X;    // K+1, n_paths x n_slow
  std::vector<RowMat> Q;    // K+1 (empty for slow-only clouds)
  std::vector<RowMat> dB;   // K, n_paths x n_slow, aggregated over the knot
  std::vector<RowMat> dW1;  // K, n_paths x n_noise
  std::vector<RowMat> dW2;  // K, n_paths x n_noise
  std::vector<Vec> cost;    // K, accumulated running cost (controlled clouds)
  bool has_fast = true;
};

int substeps_for(const BsdeSettings& st, double epsilon) {
  if (st.fine_substeps > 0) return st.fine_substeps;
  const int fine = default_steps(epsilon);
  return (fine + st.n_steps - 1) / st.n_steps;
}

Cloud build_pair_cloud(const ModelSpec& model, double epsilon, double eta,
                       const BsdeSettings& st, const Vec& x0, const Vec& q0,
                       const Policy& policy, uint64_t seed) {
  const int K = st.n_steps;
  const int sub = substeps_for(st, epsilon);
  const double dtf = 1.0 / (static_cast<double>(K) * sub);
  const int n = st.n_paths;
  const bool controlled = static_cast<bool>(policy);

  Cloud c;
  c.has_fast = true;
  c.times.resize(K + 1);
  for (int k = 0; k <= K; ++k) c.times[k] = static_cast<double>(k) / K;
  c.X.assign(K + 1, RowMat(n, model.n_slow()));
  c.Q.assign(K + 1, RowMat(n, model.n_fast()));
  c.dB.assign(K, RowMat::Zero(n, model.n_slow()));
  c.dW1.assign(K, RowMat::Zero(n, model.n_noise));
  c.dW2.assign(K, RowMat::Zero(n, model.n_noise));
  if (controlled) c.cost.assign(K, Vec::Zero(n));

  parallel_for(n, [&](std::size_t pid) {
    PairStepper stepper(model, dtf, epsilon, eta);
    Vec x = x0, q = q0;
    Vec w1(model.n_noise), w2(model.n_noise), db(model.n_slow());
    const double sd = std::sqrt(dtf);
    c.X[0].row(pid) = x.transpose();
    c.Q[0].row(pid) = q.transpose();
    for (int k = 0; k < K; ++k) {
      double cost_acc = 0.0;
      for (int s = 0; s < sub; ++s) {
        const uint64_t step = static_cast<uint64_t>(k) * sub + s;
        gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::W1), pid, step}, sd,
                      w1.data(), model.n_noise);
        gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::W2), pid, step}, sd,
                      w2.data(), model.n_noise);
        gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::B), pid, step}, sd,
                      db.data(), model.n_slow());
        int u_idx = -1;
        if (controlled) {
          u_idx = policy(step * dtf, x, q);
          if (u_idx < 0 || u_idx >= static_cast<int>(model.U.size()))
            throw ArgumentError("bsde cloud: policy returned control index out of range");
          cost_acc += model.l(x, q, model.U[u_idx]) * dtf;
        }
        stepper.step(x, q, u_idx, w1.data(), w2.data(), db.data());
        c.dW1[k].row(pid) += w1.transpose();
        c.dW2[k].row(pid) += w2.transpose();
        c.dB[k].row(pid) += db.transpose();
      }
      if (!x.allFinite() || !q.allFinite())
        throw IntegrationError("bsde cloud: state diverged");
      c.X[k + 1].row(pid) = x.transpose();
      c.Q[k + 1].row(pid) = q.transpose();
      if (controlled) c.cost[k][pid] = cost_acc;
    }
  });
  return c;
}

Cloud build_slow_cloud(const ModelSpec& model, double eta, const BsdeSettings& st,
                       const Vec& x0, uint64_t seed) {
  const int K = st.n_steps;
  const int sub = st.fine_substeps > 0 ? st.fine_substeps : (200 + K - 1) / K;
  const double dtf = 1.0 / (static_cast<double>(K) * sub);
  const int n = st.n_paths;

  Cloud c;
  c.has_fast = false;
  c.times.resize(K + 1);
  for (int k = 0; k <= K; ++k) c.times[k] = static_cast<double>(k) / K;
  c.X.assign(K + 1, RowMat(n, model.n_slow()));
  c.dB.assign(K, RowMat::Zero(n, model.n_slow()));
  c.dW1.assign(K, RowMat::Zero(n, model.n_noise));

  parallel_for(n, [&](std::size_t pid) {
    ReducedStepper stepper(model, dtf, eta);
    Vec x = x0;
    Vec w1(model.n_noise), db(model.n_slow());
    const Vec zero_alpha = Vec::Zero(model.n_slow());
    const double sd = std::sqrt(dtf);
    c.X[0].row(pid) = x.transpose();
    for (int k = 0; k < K; ++k) {
      for (int s = 0; s < sub; ++s) {
        const uint64_t step = static_cast<uint64_t>(k) * sub + s;
        gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::W1), pid, step}, sd,
                      w1.data(), model.n_noise);
        gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::B), pid, step}, sd,
                      db.data(), model.n_slow());
        stepper.step(x, zero_alpha, w1.data(), db.data());
        c.dW1[k].row(pid) += w1.transpose();
        c.dB[k].row(pid) += db.transpose();
      }
      if (!x.allFinite()) throw IntegrationError("bsde slow cloud: state diverged");
      c.X[k + 1].row(pid) = x.transpose();
    }
  });
  return c;
}

Mat basis_matrix(const RegressionBasis& basis, const RowMat& X, const RowMat* Q) {
  const int n = static_cast<int>(X.rows());
  const int p = basis.size();
  Mat phi(n, p);
  std::vector<double> row(p);
  Vec qdummy;
  for (int i = 0; i < n; ++i) {
    const Vec x = X.row(i).transpose();
    const Vec q = Q ? Vec(Q->row(i).transpose()) : qdummy;
    basis.eval(x, q, row.data());
    for (int j = 0; j < p; ++j) phi(i, j) = row[j];
  }
  return phi;
}

RegressionBasis clamp_basis(RegressionBasis b, const ModelSpec& model, bool has_fast) {
  b.slow_vars = std::min(b.slow_vars, model.n_slow());
  b.fast_vars = has_fast ? std::min(b.fast_vars, model.n_fast()) : 0;
  return b;
}

}  // namespace

CovectorField BsdeSolution::z2_field() const {
  const auto coef = z2_coef;
  const auto b = basis;
  const int K = static_cast<int>(coef.size());
  return [coef, b, K](double t, const Vec& x, const Vec& q) {
    const int k = std::clamp(static_cast<int>(t * K), 0, K - 1);
    Vec phi(b.size());
    b.eval(x, q, phi.data());
    return Vec(coef[k].transpose() * phi);
  };
}

CovectorField BsdeSolution::xi_field() const {
  if (xi_coef.empty()) return {};
  const auto coef = xi_coef;
  const auto b = basis;
  const int K = static_cast<int>(coef.size());
  return [coef, b, K](double t, const Vec& x, const Vec& q) {
    const int k = std::clamp(static_cast<int>(t * K), 0, K - 1);
    Vec phi(b.size());
    b.eval(x, q, phi.data());
    return Vec(coef[k].transpose() * phi);
  };
}

double BsdeSolution::terminal_sup_error(const ModelSpec& model, const RowMat& X_terminal) const {
  double worst = 0.0;
  for (int i = 0; i < Y.cols(); ++i)
    worst = std::max(worst,
                     std::abs(Y(Y.rows() - 1, i) - model.h(X_terminal.row(i).transpose())));
  return worst;
}

namespace {

struct StepFit {
  Vec cont_coef;    // p
  Mat z2_coef;      // p x n_slow
  Mat z1_coef;      // p x n_noise
  Mat xi_coef;      // p x n_noise (empty if no dW2)
  Vec cont_vals;    // n
  Mat z2_vals;      // n x n_slow
  Mat xi_vals;      // n x n_noise
};

// One backward regression step: continuation fit plus control-variate
// integrand fits (targets are continuation residuals against normalized
// increments).
StepFit regress_step(const RegressionBasis& basis, const RowMat& X, const RowMat* Q,
                     const Vec& target, const Cloud& c, int k, double dtm, bool want_xi) {
  const int n = static_cast<int>(X.rows());
  const int p = basis.size();
  StepFit out;

  if (n < 2 * p)
    throw BasisDegeneracyError("bsde regression: fewer than 2p paths");

  const Mat phi = basis_matrix(basis, X, Q);
  Eigen::ColPivHouseholderQR<Mat> qr(phi);
  if (qr.rank() < p) {
    std::ostringstream os;
    os << "bsde regression basis degenerate at step " << k << " (rank " << qr.rank() << " of "
       << p << ")";
    throw BasisDegeneracyError(os.str());
  }

  out.cont_coef = qr.solve(target);
  out.cont_vals = phi * out.cont_coef;
  const Vec resid = target - out.cont_vals;

  const int n_slow = static_cast<int>(c.dB[k].cols());
  const int n_noise = static_cast<int>(c.dW1[k].cols());
  const int m = n_slow + n_noise + (want_xi ? n_noise : 0);
  Mat T(n, m);
  for (int i = 0; i < n_slow; ++i) T.col(i) = resid.cwiseProduct(c.dB[k].col(i)) / dtm;
  for (int j = 0; j < n_noise; ++j)
    T.col(n_slow + j) = resid.cwiseProduct(c.dW1[k].col(j)) / dtm;
  if (want_xi)
    for (int j = 0; j < n_noise; ++j)
      T.col(n_slow + n_noise + j) = resid.cwiseProduct(c.dW2[k].col(j)) / dtm;

  const Mat coefs = qr.solve(T);
  out.z2_coef = coefs.leftCols(n_slow);
  out.z1_coef = coefs.middleCols(n_slow, n_noise);
  if (want_xi) out.xi_coef = coefs.rightCols(n_noise);
  out.z2_vals = phi * out.z2_coef;
  if (want_xi) out.xi_vals = phi * out.xi_coef;
  return out;
}

// Degenerate step 0 (all paths share the initial state): constant fits.
StepFit mean_step(const RegressionBasis& basis, const Vec& target, const Cloud& c, int k,
                  double dtm, bool want_xi) {
  const int n = static_cast<int>(target.size());
  const int p = basis.size();
  StepFit out;
  const double mean = target.mean();
  out.cont_coef = Vec::Zero(p);
  out.cont_coef[0] = mean;
  out.cont_vals = Vec::Constant(n, mean);
  const Vec resid = target.array() - mean;

  const int n_slow = static_cast<int>(c.dB[k].cols());
  const int n_noise = static_cast<int>(c.dW1[k].cols());
  auto mean_of = [&](const Vec& col) { return resid.cwiseProduct(col).mean() / dtm; };
  out.z2_coef = Mat::Zero(p, n_slow);
  out.z1_coef = Mat::Zero(p, n_noise);
  for (int i = 0; i < n_slow; ++i) out.z2_coef(0, i) = mean_of(c.dB[k].col(i));
  for (int j = 0; j < n_noise; ++j) out.z1_coef(0, j) = mean_of(c.dW1[k].col(j));
  out.z2_vals = out.z2_coef.row(0).replicate(n, 1);
  if (want_xi) {
    out.xi_coef = Mat::Zero(p, n_noise);
    for (int j = 0; j < n_noise; ++j) out.xi_coef(0, j) = mean_of(c.dW2[k].col(j));
    out.xi_vals = out.xi_coef.row(0).replicate(n, 1);
  }
  return out;
}

}  // namespace

BsdeSolution solve_full_bsde(const ModelSpec& model, double epsilon, double eta,
                             const BsdeSettings& settings, const Vec& x0, const Vec& q0,
                             uint64_t seed) {
  if (epsilon <= 0) throw ArgumentError("solve_full_bsde: epsilon must be positive");
  if (eta <= 0) throw ArgumentError("solve_full_bsde: eta must be positive (1/eta scaling)");
  model.check_shapes();

  BsdeSettings st = settings;
  st.basis = clamp_basis(st.basis, model, true);
  const int K = st.n_steps;
  const int n = st.n_paths;
  const double dtm = 1.0 / K;

  const Cloud c = build_pair_cloud(model, epsilon, eta, st, x0, q0, Policy{}, seed);

  BsdeSolution sol;
  sol.times = c.times;
  sol.n_paths = n;
  sol.epsilon = epsilon;
  sol.eta = eta;
  sol.basis = st.basis;
  sol.has_fast = true;
  sol.Y.resize(K + 1, n);
  sol.cont_coef.resize(K);
  sol.z2_coef.resize(K);
  sol.z1_coef.resize(K);
  sol.xi_coef.resize(K);

  sol.X_terminal = c.X[K];
  for (int i = 0; i < n; ++i) sol.Y(K, i) = model.h(c.X[K].row(i).transpose());

  const double sqrt_eps = std::sqrt(epsilon);
  for (int k = K - 1; k >= 0; --k) {
    const Vec target = sol.Y.row(k + 1).transpose();
    const StepFit fit =
        k == 0 ? mean_step(st.basis, target, c, k, dtm, true)
               : regress_step(st.basis, c.X[k], &c.Q[k], target, c, k, dtm, true);
    sol.cont_coef[k] = fit.cont_coef;
    sol.z2_coef[k] = fit.z2_coef;
    sol.z1_coef[k] = fit.z1_coef;
    sol.xi_coef[k] = fit.xi_coef;

    for (int i = 0; i < n; ++i) {
      const Vec x = c.X[k].row(i).transpose();
      const Vec q = c.Q[k].row(i).transpose();
      const Vec z2 = fit.z2_vals.row(i).transpose();
      const Vec xi = fit.xi_vals.row(i).transpose();
      double drv;
      if (st.driver_prescaled)
        drv = psi(model, x, q, Vec(z2 / eta), Vec(xi / sqrt_eps)).value;
      else
        drv = psi_scaled(model, epsilon, eta, x, q, z2, xi).value;
      sol.max_driver_abs = std::max(sol.max_driver_abs, std::abs(drv));
      sol.Y(k, i) = fit.cont_vals[i] + dtm * drv;
    }
  }

  sol.y0 = sol.Y(0, 0);
  const Vec y1 = sol.Y.row(1).transpose();
  sol.y0_stderr = std::sqrt((y1.array() - y1.mean()).square().sum() / (n - 1.0) / n);
  return sol;
}

BsdeSolution solve_limit_bsde(const ModelSpec& model, double eta,
                              const LambdaTable& lambda_table, const BsdeSettings& settings,
                              const Vec& x0, uint64_t seed, const TruncationParams* trunc) {
  if (eta <= 0) throw ArgumentError("solve_limit_bsde: eta must be positive");
  model.check_shapes();

  BsdeSettings st = settings;
  st.basis = clamp_basis(st.basis, model, false);
  const int K = st.n_steps;
  const int n = st.n_paths;
  const double dtm = 1.0 / K;

  const Cloud c = build_slow_cloud(model, eta, st, x0, seed);

  BsdeSolution sol;
  sol.times = c.times;
  sol.n_paths = n;
  sol.epsilon = 0.0;
  sol.eta = eta;
  sol.basis = st.basis;
  sol.has_fast = false;
  sol.Y.resize(K + 1, n);
  sol.cont_coef.resize(K);
  sol.z2_coef.resize(K);
  sol.z1_coef.resize(K);

  sol.X_terminal = c.X[K];
  for (int i = 0; i < n; ++i) sol.Y(K, i) = model.h(c.X[K].row(i).transpose());

  const int adim = lambda_table.active_dim;
  std::size_t n_in_identity = 0, n_queries = 0;

  for (int k = K - 1; k >= 0; --k) {
    const Vec target = sol.Y.row(k + 1).transpose();
    const StepFit fit =
        k == 0 ? mean_step(st.basis, target, c, k, dtm, false)
               : regress_step(st.basis, c.X[k], nullptr, target, c, k, dtm, false);
    sol.cont_coef[k] = fit.cont_coef;
    sol.z2_coef[k] = fit.z2_coef;
    sol.z1_coef[k] = fit.z1_coef;

    // Range pre-check so an out-of-table query reports step and quantile.
    int in_range = 0;
    for (int i = 0; i < n; ++i) {
      const Vec x = c.X[k].row(i).transpose();
      const Vec z = fit.z2_vals.row(i).transpose() / eta;
      if (lambda_table.in_range(x, z)) ++in_range;
    }
    if (in_range < n) {
      std::ostringstream os;
      os << "solve_limit_bsde: z or x query outside the lambda table at step " << k
         << " (only " << static_cast<double>(in_range) / n
         << " of samples in range); enlarge the table grids";
      throw OutOfRangeError(os.str());
    }

    for (int i = 0; i < n; ++i) {
      const Vec x = c.X[k].row(i).transpose();
      const Vec z = fit.z2_vals.row(i).transpose() / eta;
      const double za = z.head(adim).norm();
      sol.z_query_max = std::max(sol.z_query_max, za);
      ++n_queries;
      if (!trunc || za <= trunc->identity_radius()) ++n_in_identity;
      const double drv = lambda_table.value_at(x, z);
      sol.max_driver_abs = std::max(sol.max_driver_abs, std::abs(drv));
      sol.Y(k, i) = fit.cont_vals[i] + dtm * drv;
    }
  }

  sol.z_frac_in_identity =
      n_queries > 0 ? static_cast<double>(n_in_identity) / n_queries : 1.0;
  sol.y0 = sol.Y(0, 0);
  const Vec y1 = sol.Y.row(1).transpose();
  sol.y0_stderr = std::sqrt((y1.array() - y1.mean()).square().sum() / (n - 1.0) / n);
  return sol;
}

ValueEstimate value_by_policy(const ModelSpec& model, double epsilon, double eta,
                              const Policy& policy, int n_paths, const Vec& x0, const Vec& q0,
                              uint64_t seed, int n_steps) {
  if (!policy) throw ArgumentError("value_by_policy: a policy is required");
  if (epsilon <= 0) throw ArgumentError("value_by_policy: epsilon must be positive");
  const int fine = n_steps > 0 ? n_steps : default_steps(epsilon);
  const double dtf = 1.0 / fine;

  std::vector<double> costs(n_paths);
  parallel_for(n_paths, [&](std::size_t pid) {
    PairStepper stepper(model, dtf, epsilon, eta);
    Vec x = x0, q = q0;
    Vec w1(model.n_noise), w2(model.n_noise), db(model.n_slow());
    const double sd = std::sqrt(dtf);
    double acc = 0.0;
    for (int k = 0; k < fine; ++k) {
      gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::W1), pid,
                             static_cast<uint64_t>(k)},
                    sd, w1.data(), model.n_noise);
      gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::W2), pid,
                             static_cast<uint64_t>(k)},
                    sd, w2.data(), model.n_noise);
      gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::B), pid,
                             static_cast<uint64_t>(k)},
                    sd, db.data(), model.n_slow());
      const int u_idx = policy(k * dtf, x, q);
      if (u_idx < 0 || u_idx >= static_cast<int>(model.U.size()))
        throw ArgumentError("value_by_policy: policy returned control index out of range");
      acc += model.l(x, q, model.U[u_idx]) * dtf;
      stepper.step(x, q, u_idx, w1.data(), w2.data(), db.data());
    }
    costs[pid] = acc + model.h(x);
  });

  const MeanStderr ms = mean_stderr(costs);
  ValueEstimate est;
  est.mean = ms.mean;
  est.stderr_ = ms.stderr_;
  est.n = n_paths;
  Fingerprint fp;
  fp.add(model.fingerprint()).add(epsilon).add(eta).add(static_cast<uint64_t>(n_paths));
  fp.add(seed).add(static_cast<uint64_t>(fine));
  est.fingerprint = fp.value();
  return est;
}

namespace {

// Policy-evaluation regression along a controlled cloud: cost-to-go fit
// plus integrand fields for the next greedy improvement.
BsdeSolution policy_eval_fields(const ModelSpec& model, const Cloud& c,
                                const RegressionBasis& basis, double epsilon, double eta) {
  const int K = static_cast<int>(c.times.size()) - 1;
  const int n = static_cast<int>(c.X[0].rows());
  const double dtm = 1.0 / K;

  BsdeSolution sol;
  sol.times = c.times;
  sol.n_paths = n;
  sol.epsilon = epsilon;
  sol.eta = eta;
  sol.basis = basis;
  sol.Y.resize(K + 1, n);
  sol.cont_coef.resize(K);
  sol.z2_coef.resize(K);
  sol.z1_coef.resize(K);
  sol.xi_coef.resize(K);

  for (int i = 0; i < n; ++i) sol.Y(K, i) = model.h(c.X[K].row(i).transpose());

  for (int k = K - 1; k >= 0; --k) {
    const Vec target = sol.Y.row(k + 1).transpose() + c.cost[k];
    const StepFit fit = k == 0 ? mean_step(basis, target, c, k, dtm, true)
                               : regress_step(basis, c.X[k], &c.Q[k], target, c, k, dtm, true);
    sol.cont_coef[k] = fit.cont_coef;
    sol.z2_coef[k] = fit.z2_coef;
    sol.z1_coef[k] = fit.z1_coef;
    sol.xi_coef[k] = fit.xi_coef;
    sol.Y.row(k) = fit.cont_vals.transpose();
  }
  sol.y0 = sol.Y(0, 0);
  return sol;
}

}  // namespace

VResult estimate_V(const ModelSpec& model, double epsilon, double eta, int n_paths,
                   int n_rounds, const Vec& x0, const Vec& q0, uint64_t seed,
                   const BsdeSettings* bsde_settings) {
  if (epsilon <= 0) throw ArgumentError("estimate_V: epsilon must be positive");
  if (eta < 0) throw ArgumentError("estimate_V: eta must be nonnegative");
  model.check_shapes();

  BsdeSettings st;
  if (bsde_settings) st = *bsde_settings;
  st.n_paths = std::max(st.n_paths, 2 * st.basis.size() * 4);
  st.basis = clamp_basis(st.basis, model, true);

  // The 1/eta driver needs eta > 0; at eta = 0 a small surrogate provides
  // the policy-extraction fields while evaluation stays at eta = 0.
  const double eta_b = eta > 0 ? eta : 0.05;

  VResult out;
  out.bsde_eta = eta_b;

  const uint64_t seed_bsde = salted_seed(seed, 0xb5de);
  const uint64_t seed_crn = salted_seed(seed, 0xc7a1);
  const uint64_t seed_fresh = salted_seed(seed, 0xf7e5);

  const BsdeSolution sol0 = solve_full_bsde(model, epsilon, eta_b, st, x0, q0, seed_bsde);
  out.y0 = sol0.y0;
  out.y0_stderr = sol0.y0_stderr;

  struct Candidate {
    Policy policy;
    double crn_value = 0.0;
  };
  std::vector<Candidate> cands;

  const Policy myopic = greedy_policy(model, epsilon, eta_b, CovectorField{}, CovectorField{});
  cands.push_back({myopic, 0.0});
  cands.push_back({greedy_policy(model, epsilon, eta_b, sol0.z2_field(), sol0.xi_field()), 0.0});

  auto crn_value = [&](const Policy& pol) {
    return value_by_policy(model, epsilon, eta, pol, n_paths, x0, q0, seed_crn).mean;
  };
  for (auto& cand : cands) cand.crn_value = crn_value(cand.policy);

  std::size_t best = cands[0].crn_value <= cands[1].crn_value ? 0 : 1;

  for (int r = 1; r < n_rounds; ++r) {
    const Cloud cc = build_pair_cloud(model, epsilon, eta_b, st, x0, q0, cands[best].policy,
                                      salted_seed(seed, 0xc10d + r));
    const BsdeSolution ev = policy_eval_fields(model, cc, st.basis, epsilon, eta_b);
    Candidate next;
    next.policy = greedy_policy(model, epsilon, eta_b, ev.z2_field(), ev.xi_field());
    next.crn_value = crn_value(next.policy);
    cands.push_back(next);
    if (next.crn_value < cands[best].crn_value) best = cands.size() - 1;
  }

  out.best_policy = cands[best].policy;
  out.value = value_by_policy(model, epsilon, eta, out.best_policy, n_paths, x0, q0, seed_fresh);
  out.policy_gap = out.value.mean - out.y0;
  return out;
}

}  // namespace twoscale
