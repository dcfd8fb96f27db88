#include "twoscale/ergodic.hpp"

#include "twoscale/noise.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace twoscale {

namespace {

// Quadratic monomial basis in the first min(3, n_fast) fast coordinates,
// no constant term (the relative value is defined up to a constant).
struct WBasis {
  int n_vars = 0;
  int size() const { return n_vars + n_vars * (n_vars + 1) / 2; }
  void eval(const Vec& q, Vec& out) const {
    int p = 0;
    for (int i = 0; i < n_vars; ++i) out[p++] = q[i];
    for (int i = 0; i < n_vars; ++i)
      for (int j = i; j < n_vars; ++j) out[p++] = q[i] * q[j];
  }
};

struct CellContext {
  const ModelSpec* model = nullptr;
  Vec x;
  Vec z;
  double dt = 0.0;
  Vec e, fac, noise_sd;       // per-mode step factors at speed 1
  std::vector<Vec> grho;      // G rho(u_i) per control
  WBasis basis;

  double cost(const Vec& q, int ui) const {
    const double u = model->U[ui];
    return z.dot(model->b(x, q, u)) + model->l(x, q, u);
  }
};

CellContext make_context(const ModelSpec& model, const Vec& x, const Vec& z, double dt) {
  CellContext c;
  c.model = &model;
  c.x = x;
  c.z = z;
  c.dt = dt;
  const int m = model.n_fast();
  c.e.resize(m);
  c.fac.resize(m);
  c.noise_sd.resize(m);
  for (int j = 0; j < m; ++j) {
    const double zj = model.B_eigs[j] * dt;
    c.e[j] = std::exp(zj);
    c.fac[j] = dt * phi1(zj);
    c.noise_sd[j] = model.G_mult[j] * std::sqrt(dt * phi1(2.0 * zj));
  }
  for (double u : model.U) c.grho.push_back(model.apply_G(model.rho(u)));
  c.basis.n_vars = std::min(3, m);
  return c;
}

// Greedy control: argmin_u { c(q,u) dt + w(mean next state) }.  An empty
// beta is the myopic policy.
int greedy_control(const CellContext& c, const Vec& q, const Vec& Fv, const Vec& beta,
                   Vec& scratch_mu, Vec& scratch_phi) {
  const int nu = static_cast<int>(c.model->U.size());
  double best = std::numeric_limits<double>::infinity();
  int best_i = 0;
  for (int i = 0; i < nu; ++i) {
    double val = c.cost(q, i) * c.dt;
    if (beta.size() > 0) {
      scratch_mu = c.e.cwiseProduct(q) + c.fac.cwiseProduct(Fv + c.grho[i]);
      c.basis.eval(scratch_mu, scratch_phi);
      val += scratch_phi.dot(beta);
    }
    if (val < best) {
      best = val;
      best_i = i;
    }
  }
  return best_i;
}

struct RoundResult {
  MeanStderr cesaro;
  Vec beta_next;  // LSTD fit of the relative value under this policy
};

RoundResult run_round(const CellContext& c, const LambdaSettings& st, const Vec& beta,
                      uint64_t seed, bool fit_w) {
  const int n_steps = std::max(1, static_cast<int>(std::llround(st.T / c.dt)));
  const int burn_steps = std::min(
      n_steps - 1, static_cast<int>(std::llround(st.burn_in / c.dt)));
  const int p = c.basis.size();
  const int m = c.model->n_fast();

  std::vector<double> path_avgs(st.n_paths, 0.0);
  std::vector<Mat> As(st.n_paths, Mat::Zero(p, p));
  std::vector<Vec> sum_phi(st.n_paths, Vec::Zero(p));
  std::vector<Vec> sum_phic(st.n_paths, Vec::Zero(p));

  parallel_for(st.n_paths, [&](std::size_t pid) {
    Vec q = Vec::Zero(m);
    Vec mu(m), phi(p), phi_next(p), phi_q(p), noise(m);
    double avg = 0.0;
    int counted = 0;
    for (int k = 0; k < n_steps; ++k) {
      const Vec Fv = c.model->F(c.x, q);
      const int ui = greedy_control(c, q, Fv, beta, mu, phi);
      const double ck = c.cost(q, ui);
      gaussian_fill(NoiseKey{seed, static_cast<uint32_t>(NoiseStream::W2), pid,
                             static_cast<uint64_t>(k)},
                    1.0, noise.data(), m);
      Vec qn = c.e.cwiseProduct(q) + c.fac.cwiseProduct(Fv + c.grho[ui]) +
               c.noise_sd.cwiseProduct(noise);
      if (!qn.allFinite()) throw IntegrationError("estimate_lambda: fast state diverged");
      if (k >= burn_steps) {
        avg += ck;
        ++counted;
        if (fit_w) {
          c.basis.eval(q, phi_q);
          c.basis.eval(qn, phi_next);
          As[pid].noalias() += phi_q * (phi_q - phi_next).transpose();
          sum_phi[pid].noalias() += phi_q;
          sum_phic[pid].noalias() += phi_q * (ck * c.dt);
        }
      }
      q.swap(qn);
    }
    path_avgs[pid] = counted > 0 ? avg / counted : 0.0;
  });

  RoundResult out;
  out.cesaro = mean_stderr(path_avgs);
  if (fit_w) {
    Mat A = Mat::Zero(p, p);
    Vec phis = Vec::Zero(p);
    Vec phics = Vec::Zero(p);
    for (int i = 0; i < st.n_paths; ++i) {
      A += As[i];
      phis += sum_phi[i];
      phics += sum_phic[i];
    }
    // Projected Poisson equation: w(q_k) - w(q_{k+1}) = (c_k - lambda) dt.
    const Vec rhs = phics - phis * (out.cesaro.mean * c.dt);
    const double ridge = 1e-8 * (A.cwiseAbs().trace() + 1.0);
    A.diagonal().array() += ridge;
    out.beta_next = A.fullPivLu().solve(rhs);
    if (!out.beta_next.allFinite()) out.beta_next = Vec::Zero(p);
  }
  return out;
}

ValueEstimate cesaro_policy_lambda(const ModelSpec& model, const Vec& x, const Vec& z,
                                   const LambdaSettings& st, uint64_t seed) {
  const CellContext c = make_context(model, x, z, st.dt);

  Vec beta;  // empty: myopic start
  Vec best_beta;
  bool best_is_myopic = true;
  double best_mean = std::numeric_limits<double>::infinity();

  for (int r = 0; r < std::max(1, st.n_rounds); ++r) {
    const bool fit = r + 1 < st.n_rounds;
    const RoundResult rr = run_round(c, st, beta, salted_seed(seed, 0x150 + r), fit);
    if (rr.cesaro.mean < best_mean) {
      best_mean = rr.cesaro.mean;
      best_beta = beta;
      best_is_myopic = beta.size() == 0;
    }
    if (fit) beta = rr.beta_next;
  }

  // Fresh evaluation of the winning policy removes the selection bias of
  // the running minimum.
  const Vec eval_beta = best_is_myopic ? Vec() : best_beta;
  const RoundResult fin = run_round(c, st, eval_beta, salted_seed(seed, 0x1f), false);
  ValueEstimate est;
  est.mean = fin.cesaro.mean;
  est.stderr_ = fin.cesaro.stderr_;
  est.n = st.n_paths;
  Fingerprint fp;
  fp.add(model.fingerprint()).add(x).add(z).add(st.T).add(st.burn_in).add(seed);
  est.fingerprint = fp.value();
  return est;
}

ValueEstimate grid_vi_lambda(const ModelSpec& model, const Vec& x, const Vec& z,
                             const LambdaSettings& st, uint64_t seed) {
  if (model.n_fast() != 1)
    throw ConfigError("estimate_lambda: grid_vi solver supports n_fast == 1 only");
  const double b0 = model.B_eigs[0];
  const double g = model.G_mult[0];
  const double dt = st.dt;
  const double sigma = std::max(g / std::sqrt(2.0 * std::abs(b0)), 0.05);

  const int n = 201;
  const double lo = -5.0 * sigma, hi = 5.0 * sigma;
  Vec grid(n);
  for (int i = 0; i < n; ++i) grid[i] = lo + (hi - lo) * i / (n - 1);
  const double cell = (hi - lo) / (n - 1);

  const double e = std::exp(b0 * dt);
  const double fac = dt * phi1(b0 * dt);
  const double sd = g * std::sqrt(dt * phi1(2.0 * b0 * dt));

  const int nu = static_cast<int>(model.U.size());
  std::vector<RowMat> P(nu, RowMat::Zero(n, n));
  std::vector<Vec> cost(nu, Vec(n));
  auto cdf = [](double t) { return 0.5 * std::erfc(-t * 0.7071067811865475244); };

  for (int ui = 0; ui < nu; ++ui) {
    const double u = model.U[ui];
    const double grho = model.G_mult[0] * model.rho(u)[0];
    for (int i = 0; i < n; ++i) {
      const Vec q = Vec::Constant(1, grid[i]);
      cost[ui][i] = z.dot(model.b(x, q, u)) + model.l(x, q, u);
      const double m = e * grid[i] + fac * (model.F(x, q)[0] + grho);
      if (sd < 1e-12) {
        // Deterministic transition: split between neighbors (reflect at ends).
        double pos = (m - lo) / cell;
        pos = std::clamp(pos, 0.0, static_cast<double>(n - 1));
        const int j0 = std::min(n - 2, static_cast<int>(pos));
        const double w = pos - j0;
        P[ui](i, j0) += 1.0 - w;
        P[ui](i, j0 + 1) += w;
        continue;
      }
      // Gaussian cell masses; tails lumped into the boundary cells.
      double prev = 0.0;
      for (int j = 0; j < n; ++j) {
        const double edge = j + 1 < n ? 0.5 * (grid[j] + grid[j + 1]) : 1e300;
        const double c = j + 1 < n ? cdf((edge - m) / sd) : 1.0;
        P[ui](i, j) = c - prev;
        prev = c;
      }
    }
  }

  Vec h = Vec::Zero(n);
  const int ref = n / 2;
  double gain = 0.0;
  for (int it = 0; it < 200000; ++it) {
    Vec hn(n);
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int ui = 0; ui < nu; ++ui) {
        const double v = cost[ui][i] * dt + P[ui].row(i).dot(h);
        best = std::min(best, v);
      }
      hn[i] = best;
    }
    gain = hn[ref];
    hn.array() -= gain;
    const Vec d = hn - h;
    const double span = d.maxCoeff() - d.minCoeff();
    h = hn;
    if (span < 1e-11) break;
  }

  ValueEstimate est;
  est.mean = gain / dt;
  est.stderr_ = 0.0;
  est.n = n;
  Fingerprint fp;
  fp.add(model.fingerprint()).add(x).add(z).add(dt).add(seed).add(std::string("grid_vi"));
  est.fingerprint = fp.value();
  return est;
}

}  // namespace

ValueEstimate estimate_lambda(const ModelSpec& model, const Vec& x, const Vec& z,
                              LambdaSettings settings, LambdaSolver solver, uint64_t seed) {
  model.check_shapes();
  if (x.size() != model.n_slow() || z.size() != model.n_slow())
    throw ConfigError("estimate_lambda: x and z must be H-dimensional");
  if (settings.T == 0.0) settings.T = 10.0 / model.mu;
  if (settings.burn_in == 0.0) settings.burn_in = 3.0 / model.mu;
  if (settings.T < 10.0 / model.mu * (1.0 - 1e-9))
    throw ArgumentError("estimate_lambda: horizon below 10/mu");
  if (settings.burn_in < 3.0 / model.mu * (1.0 - 1e-9))
    throw ArgumentError("estimate_lambda: burn-in below 3/mu");
  if (settings.burn_in >= settings.T)
    throw ArgumentError("estimate_lambda: burn-in must be below the horizon");

  switch (solver) {
    case LambdaSolver::CesaroPolicy:
      return cesaro_policy_lambda(model, x, z, settings, seed);
    case LambdaSolver::GridVi:
      return grid_vi_lambda(model, x, z, settings, seed);
  }
  throw ArgumentError("estimate_lambda: unknown solver");
}

std::size_t LambdaTable::n_cells() const {
  std::size_t n = s_grid.size();
  for (const auto& ax : z_axes) n *= ax.size();
  return n;
}

std::size_t LambdaTable::flat_index(std::size_t is, const std::vector<std::size_t>& iz) const {
  std::size_t idx = is;
  for (std::size_t d = 0; d < z_axes.size(); ++d) idx = idx * z_axes[d].size() + iz[d];
  return idx;
}

namespace {

// Bracket position of v in ascending axis; returns (index, weight toward
// index+1).  Throws when v falls outside.
std::pair<std::size_t, double> locate(const std::vector<double>& axis, double v,
                                      const char* what) {
  if (axis.empty()) throw ConfigError("table axis empty");
  const double lo = axis.front(), hi = axis.back();
  const double tol = 1e-12 * (1.0 + std::abs(lo) + std::abs(hi));
  if (v < lo - tol || v > hi + tol) {
    std::ostringstream os;
    os << "table query outside grid: " << what << " = " << v << " not in [" << lo << ", "
       << hi << "]";
    throw OutOfRangeError(os.str());
  }
  if (axis.size() == 1) return {0, 0.0};
  v = std::clamp(v, lo, hi);
  std::size_t i = std::upper_bound(axis.begin(), axis.end(), v) - axis.begin();
  if (i == 0) i = 1;
  if (i >= axis.size()) i = axis.size() - 1;
  const double w = (v - axis[i - 1]) / (axis[i] - axis[i - 1]);
  return {i - 1, w};
}

double interp_table(const LambdaTable& t, const std::vector<double>& vals, const Vec& x,
                    const Vec& z) {
  const double s = t.x_dir.dot(x) / t.x_dir.squaredNorm();
  auto [is, ws] = locate(t.s_grid, s, "x coordinate");
  std::vector<std::pair<std::size_t, double>> zi(t.z_axes.size());
  for (std::size_t d = 0; d < t.z_axes.size(); ++d)
    zi[d] = locate(t.z_axes[d], z[d], "z coordinate");

  const std::size_t corners = 1ull << (1 + t.z_axes.size());
  double acc = 0.0;
  for (std::size_t c = 0; c < corners; ++c) {
    double w = (c & 1) ? ws : 1.0 - ws;
    std::size_t s_idx = is + ((c & 1) ? 1 : 0);
    if (t.s_grid.size() == 1) {
      s_idx = 0;
      w = (c & 1) ? 0.0 : 1.0;
    }
    std::vector<std::size_t> idx(t.z_axes.size());
    for (std::size_t d = 0; d < t.z_axes.size(); ++d) {
      const bool up = c & (2ull << d);
      w *= up ? zi[d].second : 1.0 - zi[d].second;
      idx[d] = zi[d].first + (up ? 1 : 0);
      if (t.z_axes[d].size() == 1) {
        idx[d] = 0;
        if (up) w = 0.0;
      }
    }
    if (w != 0.0) acc += w * vals[t.flat_index(s_idx, idx)];
  }
  return acc;
}

}  // namespace

double LambdaTable::value_at(const Vec& x, const Vec& z) const {
  return interp_table(*this, values, x, z);
}

double LambdaTable::stderr_at(const Vec& x, const Vec& z) const {
  return interp_table(*this, stderrs, x, z);
}

bool LambdaTable::in_range(const Vec& x, const Vec& z) const {
  const double s = x_dir.dot(x) / x_dir.squaredNorm();
  if (s < s_grid.front() || s > s_grid.back()) return false;
  for (std::size_t d = 0; d < z_axes.size(); ++d)
    if (z[d] < z_axes[d].front() || z[d] > z_axes[d].back()) return false;
  return true;
}

double LambdaTable::max_abs_z_cover() const {
  double r = std::numeric_limits<double>::infinity();
  for (const auto& ax : z_axes)
    r = std::min(r, std::min(std::abs(ax.front()), std::abs(ax.back())));
  return r;
}

LambdaTable build_lambda_table(const ModelSpec& model, const std::vector<double>& s_grid,
                               const std::vector<std::vector<double>>& z_axes,
                               const LambdaSettings& settings, uint64_t seed,
                               LambdaSolver solver) {
  if (s_grid.empty() || z_axes.empty()) throw ConfigError("build_lambda_table: empty grids");
  if (static_cast<int>(z_axes.size()) != model.active_dim)
    throw ConfigError("build_lambda_table: z axes must match the model's active_dim");

  LambdaTable t;
  t.x_dir = model.x_dir;
  t.active_dim = model.active_dim;
  t.s_grid = s_grid;
  t.z_axes = z_axes;
  LambdaSettings st = settings;
  if (st.T == 0.0) st.T = 10.0 / model.mu;
  if (st.burn_in == 0.0) st.burn_in = 3.0 / model.mu;
  t.T = st.T;
  t.burn_in = st.burn_in;
  t.n_paths = st.n_paths;
  t.n_rounds = st.n_rounds;
  t.model_fp = model.fingerprint();

  const std::size_t n = t.n_cells();
  t.values.assign(n, 0.0);
  t.stderrs.assign(n, 0.0);

  std::vector<std::size_t> zdims;
  for (const auto& ax : z_axes) zdims.push_back(ax.size());

  parallel_for(n, [&](std::size_t cell) {
    std::size_t rem = cell;
    std::vector<std::size_t> iz(zdims.size());
    for (std::size_t d = zdims.size(); d-- > 0;) {
      iz[d] = rem % zdims[d];
      rem /= zdims[d];
    }
    const std::size_t is = rem;
    const Vec x = t.x_dir * s_grid[is];
    Vec z = Vec::Zero(model.n_slow());
    for (std::size_t d = 0; d < zdims.size(); ++d) z[d] = z_axes[d][iz[d]];
    const ValueEstimate est =
        estimate_lambda(model, x, z, st, solver, salted_seed(seed, 0xce1100 + cell));
    t.values[cell] = est.mean;
    t.stderrs[cell] = est.stderr_;
  });
  return t;
}

std::vector<double> make_z_axis(double dense_radius, double dense_step, double radius) {
  if (dense_radius <= 0 || dense_step <= 0 || radius < dense_radius)
    throw ArgumentError("make_z_axis: need 0 < dense_step, 0 < dense_radius <= radius");
  std::vector<double> pos;
  for (double v = 0.0; v < dense_radius + 1e-12; v += dense_step) pos.push_back(v);
  double v = dense_radius;
  while (v < radius * (1 - 1e-12)) {
    v = std::min(radius, v * 1.6);
    pos.push_back(v);
  }
  std::vector<double> axis;
  for (auto it = pos.rbegin(); it != pos.rend(); ++it)
    if (*it > 0) axis.push_back(-*it);
  for (double p : pos) axis.push_back(p);
  axis.erase(std::unique(axis.begin(), axis.end()), axis.end());
  return axis;
}

void LambdaTable::save_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw ConfigError("LambdaTable::save_csv: cannot open " + path);
  os << "# lambda_table v1\n";
  os << "# active_dim=" << active_dim << " T=" << T << " burn_in=" << burn_in
     << " n_paths=" << n_paths << " n_rounds=" << n_rounds << " model_fp=" << model_fp << "\n";
  os << "# x_dir=";
  for (Eigen::Index i = 0; i < x_dir.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x_dir[i]);
    os << (i ? ";" : "") << buf;
  }
  os << "\n";
  os << "s";
  for (int d = 0; d < active_dim; ++d) os << ",z" << d + 1;
  os << ",value,stderr\n";
  std::vector<std::size_t> zdims;
  for (const auto& ax : z_axes) zdims.push_back(ax.size());
  char buf[32];
  auto put = [&](double v, bool lead_comma) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    if (lead_comma) os << ',';
    os << buf;
  };
  for (std::size_t cell = 0; cell < values.size(); ++cell) {
    std::size_t rem = cell;
    std::vector<std::size_t> iz(zdims.size());
    for (std::size_t d = zdims.size(); d-- > 0;) {
      iz[d] = rem % zdims[d];
      rem /= zdims[d];
    }
    put(s_grid[rem], false);
    for (std::size_t d = 0; d < zdims.size(); ++d) put(z_axes[d][iz[d]], true);
    put(values[cell], true);
    put(stderrs[cell], true);
    os << "\n";
  }
}

static LambdaTable load_table_csv_impl(const std::string& path, int expect_cols_minus) {
  (void)expect_cols_minus;
  std::ifstream is(path);
  if (!is) throw ConfigError("LambdaTable::load_csv: cannot open " + path);
  LambdaTable t;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# lambda_table", 0) != 0)
    throw ConfigError("LambdaTable::load_csv: bad header");
  if (!std::getline(is, line)) throw ConfigError("LambdaTable::load_csv: missing meta");
  std::sscanf(line.c_str(), "# active_dim=%d T=%lf burn_in=%lf n_paths=%d n_rounds=%d",
              &t.active_dim, &t.T, &t.burn_in, &t.n_paths, &t.n_rounds);
  {
    auto pos = line.find("model_fp=");
    if (pos != std::string::npos)
      t.model_fp = std::strtoull(line.c_str() + pos + 9, nullptr, 10);
  }
  if (!std::getline(is, line) || line.rfind("# x_dir=", 0) != 0)
    throw ConfigError("LambdaTable::load_csv: missing x_dir");
  {
    std::vector<double> xs;
    std::stringstream ss(line.substr(8));
    std::string tok;
    while (std::getline(ss, tok, ';')) xs.push_back(std::atof(tok.c_str()));
    t.x_dir = Eigen::Map<Vec>(xs.data(), xs.size());
  }
  std::getline(is, line);  // column header

  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) row.push_back(std::atof(tok.c_str()));
    rows.push_back(row);
  }
  if (rows.empty()) throw ConfigError("LambdaTable::load_csv: no data rows");
  const int d = t.active_dim;

  auto uniq = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end(),
                        [](double a, double b) { return a == b; }),
            v.end());
    return v;
  };
  std::vector<double> scol;
  std::vector<std::vector<double>> zcols(d);
  for (const auto& r : rows) {
    scol.push_back(r[0]);
    for (int k = 0; k < d; ++k) zcols[k].push_back(r[1 + k]);
  }
  t.s_grid = uniq(scol);
  for (int k = 0; k < d; ++k) t.z_axes.push_back(uniq(zcols[k]));
  t.values.assign(t.n_cells(), 0.0);
  t.stderrs.assign(t.n_cells(), 0.0);
  for (const auto& r : rows) {
    const std::size_t is =
        std::lower_bound(t.s_grid.begin(), t.s_grid.end(), r[0]) - t.s_grid.begin();
    std::vector<std::size_t> iz(d);
    for (int k = 0; k < d; ++k)
      iz[k] = std::lower_bound(t.z_axes[k].begin(), t.z_axes[k].end(), r[1 + k]) -
              t.z_axes[k].begin();
    const std::size_t cell = t.flat_index(is, iz);
    t.values[cell] = r[1 + d];
    t.stderrs[cell] = r[2 + d];
  }
  return t;
}

LambdaTable LambdaTable::load_csv(const std::string& path) {
  return load_table_csv_impl(path, 0);
}

bool AuditReport::all_pass() const {
  return std::all_of(items.begin(), items.end(), [](const AuditItem& i) { return i.pass; });
}

std::string AuditReport::summary() const {
  std::ostringstream os;
  for (const auto& i : items)
    os << (i.pass ? "[ok]   " : "[FAIL] ") << i.property << "  worst=" << i.worst
       << (i.where.empty() ? "" : "  at " + i.where) << "\n";
  return os.str();
}

AuditReport lambda_property_audit(const LambdaTable& t, double M, double L) {
  AuditReport rep;
  const std::size_t ns = t.s_grid.size();
  std::vector<std::size_t> zdims;
  for (const auto& ax : t.z_axes) zdims.push_back(ax.size());
  const int d = static_cast<int>(zdims.size());

  auto z_of = [&](const std::vector<std::size_t>& iz) {
    Vec z = Vec::Zero(d);
    for (int k = 0; k < d; ++k) z[k] = t.z_axes[k][iz[k]];
    return z;
  };
  auto cell_name = [&](std::size_t is, const std::vector<std::size_t>& iz) {
    std::ostringstream os;
    os << "s=" << t.s_grid[is] << " z=(";
    for (int k = 0; k < d; ++k) os << (k ? "," : "") << t.z_axes[k][iz[k]];
    os << ")";
    return os.str();
  };

  // Enumerate all z multi-indices once.
  std::vector<std::vector<std::size_t>> zidx;
  {
    std::vector<std::size_t> cur(d, 0);
    for (;;) {
      zidx.push_back(cur);
      int k = d - 1;
      while (k >= 0 && ++cur[k] == zdims[k]) cur[k--] = 0;
      if (k < 0) break;
    }
  }

  AuditItem bound{"|lambda| <= M (1 + |z|)", true, -1e300, ""};
  AuditItem lip_z{"Lipschitz in z with constant M", true, -1e300, ""};
  AuditItem lip_x{"Lipschitz in x with constant L (1 + |z|)", true, -1e300, ""};
  AuditItem conc{"concavity along z lines", true, -1e300, ""};

  for (std::size_t is = 0; is < ns; ++is) {
    for (const auto& iz : zidx) {
      const std::size_t cell = t.flat_index(is, iz);
      const Vec z = z_of(iz);
      const double lam = t.values[cell], se = t.stderrs[cell];
      const double viol = std::abs(lam) - (M * (1.0 + z.norm()) + 3.0 * se);
      if (viol > bound.worst) {
        bound.worst = viol;
        bound.where = cell_name(is, iz);
      }
    }
    // Lipschitz in z over all pairs within the slice.
    for (std::size_t a = 0; a < zidx.size(); ++a)
      for (std::size_t b = a + 1; b < zidx.size(); ++b) {
        const Vec za = z_of(zidx[a]), zb = z_of(zidx[b]);
        const double la = t.values[t.flat_index(is, zidx[a])];
        const double lb = t.values[t.flat_index(is, zidx[b])];
        const double sa = t.stderrs[t.flat_index(is, zidx[a])];
        const double sb = t.stderrs[t.flat_index(is, zidx[b])];
        const double viol = std::abs(la - lb) - (M * (za - zb).norm() + 3.0 * (sa + sb));
        if (viol > lip_z.worst) {
          lip_z.worst = viol;
          lip_z.where = cell_name(is, zidx[a]) + " vs " + cell_name(is, zidx[b]);
        }
      }
  }

  // Lipschitz in x along the slow line at fixed z.
  const double dir_norm = t.x_dir.norm();
  for (const auto& iz : zidx) {
    const Vec z = z_of(iz);
    for (std::size_t a = 0; a < ns; ++a)
      for (std::size_t b = a + 1; b < ns; ++b) {
        const double la = t.values[t.flat_index(a, iz)];
        const double lb = t.values[t.flat_index(b, iz)];
        const double sa = t.stderrs[t.flat_index(a, iz)];
        const double sb = t.stderrs[t.flat_index(b, iz)];
        const double dx = std::abs(t.s_grid[a] - t.s_grid[b]) * dir_norm;
        const double viol = std::abs(la - lb) - (L * (1.0 + z.norm()) * dx + 3.0 * (sa + sb));
        if (viol > lip_x.worst) {
          lip_x.worst = viol;
          lip_x.where = cell_name(a, iz) + " vs " + cell_name(b, iz);
        }
      }
  }

  // Concavity: chord test over consecutive triples along each z axis.
  for (std::size_t is = 0; is < ns; ++is)
    for (int axis = 0; axis < d; ++axis)
      for (const auto& iz : zidx) {
        if (iz[axis] + 2 >= zdims[axis]) continue;
        auto iza = iz, izm = iz, izc = iz;
        izm[axis] += 1;
        izc[axis] += 2;
        const double xa = t.z_axes[axis][iza[axis]];
        const double xm = t.z_axes[axis][izm[axis]];
        const double xc = t.z_axes[axis][izc[axis]];
        const double th = (xc - xm) / (xc - xa);
        const double la = t.values[t.flat_index(is, iza)];
        const double lm = t.values[t.flat_index(is, izm)];
        const double lc = t.values[t.flat_index(is, izc)];
        const double sa = t.stderrs[t.flat_index(is, iza)];
        const double sm = t.stderrs[t.flat_index(is, izm)];
        const double sc = t.stderrs[t.flat_index(is, izc)];
        const double chord = th * la + (1.0 - th) * lc;
        const double viol = chord - lm - 3.0 * (sm + th * sa + (1.0 - th) * sc);
        if (viol > conc.worst) {
          conc.worst = viol;
          conc.where = cell_name(is, izm);
        }
      }

  for (AuditItem* it : {&bound, &lip_z, &lip_x, &conc}) {
    it->pass = it->worst <= 1e-9;
    rep.items.push_back(*it);
  }
  return rep;
}

}  // namespace twoscale
