#include "twoscale/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace twoscale {

namespace {

inline void check_finite(const Vec& v, const char* what, int step) {
  if (!v.allFinite()) {
    std::ostringstream os;
    os << "integration diverged: " << what << " not finite at step " << step;
    throw IntegrationError(os.str());
  }
}

}  // namespace

void TwoScaleParams::validate(const ModelSpec& model) const {
  if (epsilon <= 0) throw ArgumentError("TwoScaleParams: epsilon must be positive");
  if (eta < 0) throw ArgumentError("TwoScaleParams: eta must be nonnegative");
  if (n_steps < 1) throw ArgumentError("TwoScaleParams: n_steps must be positive");
  if (x0.size() != model.n_slow() || q0.size() != model.n_fast())
    throw ConfigError("TwoScaleParams: initial state dimensions do not match the model");
  // The fast linear part is integrated exactly, so no dt <= eps/4 guard is
  // needed; the unit horizon n_steps * dt = 1 holds by construction.
}

int default_steps(double epsilon) {
  if (epsilon <= 0) throw ArgumentError("default_steps: epsilon must be positive");
  return std::max(200, static_cast<int>(std::ceil(10.0 / epsilon)));
}

PairStepper::PairStepper(const ModelSpec& model, double dt, double epsilon, double eta)
    : model_(model), dt_(dt), eta_(eta) {
  const int n = model.n_slow();
  const int m = model.n_fast();
  e_slow_.resize(n);
  drift_slow_.resize(n);
  conv_slow_.resize(n);
  for (int i = 0; i < n; ++i) {
    const double z = model.A_eigs[i] * dt;
    e_slow_[i] = std::exp(z);
    drift_slow_[i] = dt * phi1(z);
    conv_slow_[i] = std::sqrt(phi1(2.0 * z));
  }
  e_fast_.resize(m);
  drift_fast_.resize(m);
  noise_fast_.resize(m);
  for (int j = 0; j < m; ++j) {
    const double z = model.B_eigs[j] * dt / epsilon;
    e_fast_[j] = std::exp(z);
    drift_fast_[j] = (dt / epsilon) * phi1(z);
    noise_fast_[j] = model.G_mult[j] * std::sqrt(phi1(2.0 * z) / epsilon);
  }
}

void PairStepper::step(Vec& x, Vec& q, int u_idx, const double* dW1, const double* dW2,
                       const double* dB) const {
  const int n = model_.n_slow();
  const int m = model_.n_fast();
  const bool controlled = u_idx >= 0;
  const double u = controlled ? model_.U[u_idx] : 0.0;

  const Vec Fv = model_.F(x, q);
  const Vec r = model_.R_mult(x);
  Vec bv, rv;
  if (controlled) {
    bv = model_.b(x, q, u);
    rv = model_.rho(u);
  }

  Vec xn(n);
  const int n_w1 = std::min<int>(n, model_.n_noise);
  for (int i = 0; i < n; ++i) {
    double noise = eta_ * dB[i];
    if (i < n_w1) noise += r[i] * dW1[i];
    xn[i] = e_slow_[i] * x[i] + conv_slow_[i] * noise;
    if (controlled) xn[i] += drift_slow_[i] * bv[i];
  }

  Vec qn(m);
  const int m_w2 = std::min<int>(m, model_.n_noise);
  for (int j = 0; j < m; ++j) {
    double drift = Fv[j];
    if (controlled && j < static_cast<int>(rv.size())) drift += model_.G_mult[j] * rv[j];
    // drift enters at speed 1/eps; drift_fast_ already carries the 1/eps.
    qn[j] = e_fast_[j] * q[j] + drift_fast_[j] * drift;
    if (j < m_w2) qn[j] += noise_fast_[j] * dW2[j];
  }

  x.swap(xn);
  q.swap(qn);
}

FrozenFastStepper::FrozenFastStepper(const ModelSpec& model, const Vec& x, double dt)
    : model_(model), x_(x), dt_(dt) {
  const int m = model.n_fast();
  e_fast_.resize(m);
  drift_fast_.resize(m);
  noise_fast_.resize(m);
  for (int j = 0; j < m; ++j) {
    const double z = model.B_eigs[j] * dt;
    e_fast_[j] = std::exp(z);
    drift_fast_[j] = dt * phi1(z);
    noise_fast_[j] = model.G_mult[j] * std::sqrt(phi1(2.0 * z));
  }
}

void FrozenFastStepper::step(Vec& q, int u_idx, const double* dW2) const {
  const int m = model_.n_fast();
  const bool controlled = u_idx >= 0;
  const double u = controlled ? model_.U[u_idx] : 0.0;
  const Vec Fv = model_.F(x_, q);
  Vec rv;
  if (controlled) rv = model_.rho(u);

  const int m_w2 = std::min<int>(m, model_.n_noise);
  for (int j = 0; j < m; ++j) {
    double drift = Fv[j];
    if (controlled && j < static_cast<int>(rv.size())) drift += model_.G_mult[j] * rv[j];
    double qn = e_fast_[j] * q[j] + drift_fast_[j] * drift;
    if (j < m_w2) qn += noise_fast_[j] * dW2[j];
    q[j] = qn;
  }
}

ReducedStepper::ReducedStepper(const ModelSpec& model, double dt, double eta)
    : model_(model), dt_(dt), eta_(eta) {
  const int n = model.n_slow();
  e_slow_.resize(n);
  drift_slow_.resize(n);
  conv_slow_.resize(n);
  for (int i = 0; i < n; ++i) {
    const double z = model.A_eigs[i] * dt;
    e_slow_[i] = std::exp(z);
    drift_slow_[i] = dt * phi1(z);
    conv_slow_[i] = std::sqrt(phi1(2.0 * z));
  }
}

void ReducedStepper::step(Vec& x, const Vec& alpha, const double* dW1, const double* dB) const {
  const int n = model_.n_slow();
  const Vec r = model_.R_mult(x);
  const int n_w1 = std::min<int>(n, model_.n_noise);
  for (int i = 0; i < n; ++i) {
    double noise = eta_ * dB[i];
    if (i < n_w1) noise += r[i] * dW1[i];
    x[i] = e_slow_[i] * x[i] - drift_slow_[i] * alpha[i] + conv_slow_[i] * noise;
  }
}

namespace {

void fill_step_noise(RowMat& dW1, RowMat& dW2, RowMat& dB, int k, NoiseMode mode, uint64_t seed,
                     uint64_t path_id, double dt) {
  if (mode == NoiseMode::Off) {
    dW1.row(k).setZero();
    dW2.row(k).setZero();
    dB.row(k).setZero();
    return;
  }
  const double sd = std::sqrt(dt);
  gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::W1), path_id,
                         static_cast<uint64_t>(k)},
                sd, dW1.row(k).data(), static_cast<int>(dW1.cols()));
  gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::W2), path_id,
                         static_cast<uint64_t>(k)},
                sd, dW2.row(k).data(), static_cast<int>(dW2.cols()));
  gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::B), path_id,
                         static_cast<uint64_t>(k)},
                sd, dB.row(k).data(), static_cast<int>(dB.cols()));
}

}  // namespace

PathBundle simulate_pair(const ModelSpec& model, const TwoScaleParams& params,
                         const Policy& policy, NoiseMode mode, uint64_t seed,
                         uint64_t path_id) {
  params.validate(model);
  const int n_steps = params.n_steps;
  const double dt = params.dt();

  PathBundle out;
  out.times.resize(n_steps + 1);
  out.X.resize(n_steps + 1, model.n_slow());
  out.Q.resize(n_steps + 1, model.n_fast());
  out.dW1.resize(n_steps, model.n_noise);
  out.dW2.resize(n_steps, model.n_noise);
  out.dB.resize(n_steps, model.n_slow());
  out.u.assign(n_steps, -1);

  PairStepper stepper(model, dt, params.epsilon, params.eta);
  Vec x = params.x0, q = params.q0;
  out.times[0] = 0.0;
  out.X.row(0) = x.transpose();
  out.Q.row(0) = q.transpose();

  for (int k = 0; k < n_steps; ++k) {
    const double t = k * dt;
    fill_step_noise(out.dW1, out.dW2, out.dB, k, mode, seed, path_id, dt);
    int u_idx = -1;
    if (policy) {
      u_idx = policy(t, x, q);
      if (u_idx < 0 || u_idx >= static_cast<int>(model.U.size()))
        throw ArgumentError("simulate_pair: policy returned control index out of range");
    }
    out.u[k] = u_idx;
    stepper.step(x, q, u_idx, out.dW1.row(k).data(), out.dW2.row(k).data(),
                 out.dB.row(k).data());
    check_finite(x, "slow state", k);
    check_finite(q, "fast state", k);
    out.times[k + 1] = (k + 1) * dt;
    out.X.row(k + 1) = x.transpose();
    out.Q.row(k + 1) = q.transpose();
  }
  return out;
}

PathBundle replay(const ModelSpec& model, const TwoScaleParams& params,
                  const PathBundle& bundle) {
  params.validate(model);
  if (bundle.dW1.rows() != params.n_steps)
    throw ConfigError("replay: bundle step count does not match params");
  PathBundle out = bundle;
  PairStepper stepper(model, params.dt(), params.epsilon, params.eta);
  Vec x = params.x0, q = params.q0;
  out.X.row(0) = x.transpose();
  out.Q.row(0) = q.transpose();
  for (int k = 0; k < params.n_steps; ++k) {
    stepper.step(x, q, bundle.u[k], bundle.dW1.row(k).data(), bundle.dW2.row(k).data(),
                 bundle.dB.row(k).data());
    out.X.row(k + 1) = x.transpose();
    out.Q.row(k + 1) = q.transpose();
  }
  return out;
}

FrozenFastPath simulate_frozen_fast(const ModelSpec& model, const Vec& x,
                                    const FastPolicy& policy, double T, double dt,
                                    NoiseMode mode, uint64_t seed, uint64_t path_id,
                                    const Vec* q0) {
  if (T <= 0) throw ArgumentError("simulate_frozen_fast: horizon must be positive");
  if (dt <= 0) throw ArgumentError("simulate_frozen_fast: dt must be positive");
  const int n_steps = std::max(1, static_cast<int>(std::llround(T / dt)));

  FrozenFastPath out;
  out.times.resize(n_steps + 1);
  out.Q.resize(n_steps + 1, model.n_fast());
  out.dW2.resize(n_steps, model.n_noise);
  out.u.assign(n_steps, -1);

  FrozenFastStepper stepper(model, x, dt);
  Vec q = q0 ? *q0 : Vec::Zero(model.n_fast());
  out.times[0] = 0.0;
  out.Q.row(0) = q.transpose();
  const double sd = std::sqrt(dt);
  Vec tmp(model.n_noise);
  for (int k = 0; k < n_steps; ++k) {
    if (mode == NoiseMode::Off) {
      tmp.setZero();
    } else {
      gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::W2), path_id,
                             static_cast<uint64_t>(k)},
                    sd, tmp.data(), static_cast<int>(tmp.size()));
    }
    out.dW2.row(k) = tmp.transpose();
    int u_idx = policy ? policy(q) : -1;
    if (u_idx >= static_cast<int>(model.U.size()))
      throw ArgumentError("simulate_frozen_fast: control index out of range");
    out.u[k] = u_idx;
    stepper.step(q, u_idx, tmp.data());
    check_finite(q, "frozen fast state", k);
    out.times[k + 1] = (k + 1) * dt;
    out.Q.row(k + 1) = q.transpose();
  }
  return out;
}

ReducedPath simulate_reduced(const ModelSpec& model, double eta, const AlphaPolicy& alpha,
                             const TwoScaleParams& params, NoiseMode mode, uint64_t seed,
                             uint64_t path_id) {
  const int n_steps = params.n_steps;
  const double dt = params.dt();
  const double radius = model.M + 1.0;

  ReducedPath out;
  out.times.resize(n_steps + 1);
  out.X.resize(n_steps + 1, model.n_slow());
  out.dW1.resize(n_steps, model.n_noise);
  out.dB.resize(n_steps, model.n_slow());

  ReducedStepper stepper(model, dt, eta);
  Vec x = params.x0;
  out.times[0] = 0.0;
  out.X.row(0) = x.transpose();
  const double sd = std::sqrt(dt);
  Vec w1(model.n_noise), db(model.n_slow());
  for (int k = 0; k < n_steps; ++k) {
    if (mode == NoiseMode::Off) {
      w1.setZero();
      db.setZero();
    } else {
      gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::W1), path_id,
                             static_cast<uint64_t>(k)},
                    sd, w1.data(), static_cast<int>(w1.size()));
      gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::B), path_id,
                             static_cast<uint64_t>(k)},
                    sd, db.data(), static_cast<int>(db.size()));
    }
    out.dW1.row(k) = w1.transpose();
    out.dB.row(k) = db.transpose();

    Vec a = alpha(k * dt, x);
    const double na = a.norm();
    if (na > radius) {
      a *= radius / na;
      ++out.clip_events;
    }
    stepper.step(x, a, w1.data(), db.data());
    check_finite(x, "reduced slow state", k);
    out.times[k + 1] = (k + 1) * dt;
    out.X.row(k + 1) = x.transpose();
  }
  return out;
}

void PathBundle::to_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw ConfigError("PathBundle::to_csv: cannot open " + path);
  os << "t";
  for (int i = 0; i < X.cols(); ++i) os << ",X" << i + 1;
  for (int j = 0; j < Q.cols(); ++j) os << ",Q" << j + 1;
  for (int i = 0; i < dW1.cols(); ++i) os << ",dW1_" << i + 1;
  for (int i = 0; i < dW2.cols(); ++i) os << ",dW2_" << i + 1;
  for (int i = 0; i < dB.cols(); ++i) os << ",dB_" << i + 1;
  os << ",u\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << ',' << buf;
  };
  for (Eigen::Index k = 0; k < times.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g", times[k]);
    os << buf;
    for (int i = 0; i < X.cols(); ++i) put(X(k, i));
    for (int j = 0; j < Q.cols(); ++j) put(Q(k, j));
    const bool has_inc = k < dW1.rows();
    for (int i = 0; i < dW1.cols(); ++i) put(has_inc ? dW1(k, i) : 0.0);
    for (int i = 0; i < dW2.cols(); ++i) put(has_inc ? dW2(k, i) : 0.0);
    for (int i = 0; i < dB.cols(); ++i) put(has_inc ? dB(k, i) : 0.0);
    os << ',' << (has_inc ? u[k] : -1) << '\n';
  }
}

const MomentRow& MomentReport::row(int p) const {
  for (const auto& r : rows)
    if (r.p == p) return r;
  throw ArgumentError("MomentReport: no row for requested p");
}

MomentReport moment_report(const ModelSpec& model, const TwoScaleParams& params, int n_paths,
                           uint64_t seed, const Policy& policy) {
  params.validate(model);
  const int n_steps = params.n_steps;
  const double dt = params.dt();
  const std::vector<int> ps = {1, 2, 4};

  // Per-path sup |X|; per-step sums of |Q|^p across paths.
  std::vector<std::vector<double>> sup_x(ps.size(), std::vector<double>(n_paths));
  Mat q_sum = Mat::Zero(static_cast<Eigen::Index>(ps.size()), n_steps + 1);
  Mat q_sumsq = Mat::Zero(static_cast<Eigen::Index>(ps.size()), n_steps + 1);
  std::vector<Mat> q_vals(ps.size(), Mat(n_paths, n_steps + 1));

  parallel_for(n_paths, [&](std::size_t pid) {
    PairStepper stepper(model, dt, params.epsilon, params.eta);
    Vec x = params.x0, q = params.q0;
    double sup = x.norm();
    for (std::size_t ip = 0; ip < ps.size(); ++ip) q_vals[ip](pid, 0) = std::pow(q.norm(), ps[ip]);
    Vec w1(model.n_noise), w2(model.n_noise), db(model.n_slow());
    const double sd = std::sqrt(dt);
    for (int k = 0; k < n_steps; ++k) {
      w1.setZero();
      w2.setZero();
      db.setZero();
      gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::W1), pid,
                             static_cast<uint64_t>(k)},
                    sd, w1.data(), static_cast<int>(w1.size()));
      gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::W2), pid,
                             static_cast<uint64_t>(k)},
                    sd, w2.data(), static_cast<int>(w2.size()));
      gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::B), pid,
                             static_cast<uint64_t>(k)},
                    sd, db.data(), static_cast<int>(db.size()));
      const int u_idx = policy ? policy(k * dt, x, q) : -1;
      stepper.step(x, q, u_idx, w1.data(), w2.data(), db.data());
      sup = std::max(sup, x.norm());
      for (std::size_t ip = 0; ip < ps.size(); ++ip)
        q_vals[ip](pid, k + 1) = std::pow(q.norm(), ps[ip]);
    }
    for (std::size_t ip = 0; ip < ps.size(); ++ip) sup_x[ip][pid] = std::pow(sup, ps[ip]);
  });

  for (std::size_t ip = 0; ip < ps.size(); ++ip)
    for (int k = 0; k <= n_steps; ++k) {
      q_sum(ip, k) = q_vals[ip].col(k).sum();
      q_sumsq(ip, k) = q_vals[ip].col(k).squaredNorm();
    }

  MomentReport rep;
  for (std::size_t ip = 0; ip < ps.size(); ++ip) {
    MomentRow row;
    row.p = ps[ip];
    const MeanStderr ms = mean_stderr(sup_x[ip]);
    row.e_sup_x = ms.mean;
    row.e_sup_x_se = ms.stderr_;
    int kmax = 0;
    for (int k = 0; k <= n_steps; ++k)
      if (q_sum(ip, k) > q_sum(ip, kmax)) kmax = k;
    const double mean = q_sum(ip, kmax) / n_paths;
    const double var =
        std::max(0.0, q_sumsq(ip, kmax) / n_paths - mean * mean) * n_paths / (n_paths - 1.0);
    row.sup_e_q = mean;
    row.sup_e_q_se = std::sqrt(var / n_paths);
    rep.rows.push_back(row);
  }
  return rep;
}

MomentUniformity moment_uniformity_check(const ModelSpec& model, const TwoScaleParams& base,
                                         const std::vector<double>& eps_grid,
                                         const std::vector<double>& eta_grid, int n_paths,
                                         uint64_t seed) {
  MomentUniformity out;
  bool first = true;
  for (double eps : eps_grid)
    for (double eta : eta_grid) {
      TwoScaleParams p = base;
      p.epsilon = eps;
      p.eta = eta;
      p.n_steps = default_steps(eps);
      const MomentReport rep = moment_report(model, p, n_paths, seed);
      const double v = rep.row(2).e_sup_x;
      if (first || v < out.min_e_sup_x2) out.min_e_sup_x2 = v;
      if (first || v > out.max_e_sup_x2) out.max_e_sup_x2 = v;
      first = false;
    }
  out.flagged = out.max_e_sup_x2 > 2.0 * out.min_e_sup_x2;
  return out;
}

}  // namespace twoscale
