#include "twoscale/legendre.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace twoscale {

void TruncationParams::validate() const {
  if (!(kappa > M)) throw ConfigError("TruncationParams: kappa must exceed M");
  if (!(identity_radius() > a))
    throw ConfigError("TruncationParams: (kappa - M)/(2M + 1) must exceed a");
}

double tilde_lambda(const LambdaEval& lambda, const TruncationParams& params, const Vec& x,
                    const Vec& z) {
  const double cap = -(params.M + 1.0) * z.norm() + params.kappa;
  if (z.norm() >= params.cap_radius()) return cap;
  return std::min(lambda(x, z), cap);
}

TildeEval make_tilde_eval(const LambdaEval& lambda, const TruncationParams& params,
                          const Vec& x) {
  return [lambda, params, x](const Vec& z) { return tilde_lambda(lambda, params, x, z); };
}

namespace {

// Scans the product grid of half-width radius, returning the minimum of
// -z.alpha - tilde(z) and whether it is attained away from the boundary.
struct ScanResult {
  double min_val = std::numeric_limits<double>::infinity();
  bool interior_hit = false;
};

ScanResult scan_grid(const TildeEval& tilde, int dim, const Vec& alpha, double radius, int n) {
  ScanResult out;
  std::vector<int> idx(dim, 0);
  Vec z(dim);
  std::vector<double> axis(n);
  for (int i = 0; i < n; ++i) axis[i] = -radius + 2.0 * radius * i / (n - 1);

  std::vector<std::pair<double, bool>> hits;  // value, boundary?
  for (;;) {
    bool boundary = false;
    for (int d = 0; d < dim; ++d) {
      z[d] = axis[idx[d]];
      boundary = boundary || idx[d] == 0 || idx[d] == n - 1;
    }
    const double val = -z.dot(alpha) - tilde(z);
    if (val < out.min_val) out.min_val = val;
    hits.emplace_back(val, boundary);
    int d = dim - 1;
    while (d >= 0 && ++idx[d] == n) idx[d--] = 0;
    if (d < 0) break;
  }
  const double tol = 1e-12 + 1e-9 * std::abs(out.min_val);
  for (const auto& [val, boundary] : hits)
    if (!boundary && val <= out.min_val + tol) {
      out.interior_hit = true;
      break;
    }
  return out;
}

}  // namespace

double legendre_star(const TildeEval& tilde, int dim, const Vec& alpha, double M,
                     const StarSettings& settings) {
  if (alpha.size() != dim) throw ConfigError("legendre_star: alpha dimension mismatch");
  if (alpha.norm() > M + 1.0) return kNegInf;
  if (settings.z_search_radius <= 0)
    throw ArgumentError("legendre_star: z_search_radius must be positive");
  if (settings.n_per_dim < 3) throw ArgumentError("legendre_star: grid too small");

  double radius = settings.z_search_radius;
  for (int attempt = 0; attempt <= settings.max_doublings; ++attempt) {
    const ScanResult res = scan_grid(tilde, dim, alpha, radius, settings.n_per_dim);
    if (res.interior_hit) return res.min_val;
    radius *= 2.0;
  }
  std::ostringstream os;
  os << "legendre_star: minimum stayed on the search boundary after "
     << settings.max_doublings << " radius doublings (final radius " << radius
     << "); the transform input violates the capped-growth structure";
  throw OutOfRangeError(os.str());
}

std::size_t LegendreTable::n_cells() const {
  std::size_t n = s_grid.size();
  for (const auto& ax : alpha_axes) n *= ax.size();
  return n;
}

std::size_t LegendreTable::flat_index(std::size_t is, const std::vector<std::size_t>& ia) const {
  std::size_t idx = is;
  for (std::size_t d = 0; d < alpha_axes.size(); ++d) idx = idx * alpha_axes[d].size() + ia[d];
  return idx;
}

double LegendreTable::node(std::size_t is, const std::vector<std::size_t>& ia) const {
  const std::size_t cell = flat_index(is, ia);
  return in_ball[cell] ? values[cell] : kNegInf;
}

namespace {

std::pair<std::size_t, double> locate_axis(const std::vector<double>& axis, double v,
                                           const char* what) {
  const double lo = axis.front(), hi = axis.back();
  const double tol = 1e-9 * (1.0 + std::abs(lo) + std::abs(hi));
  if (v < lo - tol || v > hi + tol) {
    std::ostringstream os;
    os << "LegendreTable query outside grid: " << what << " = " << v;
    throw OutOfRangeError(os.str());
  }
  if (axis.size() == 1) return {0, 0.0};
  v = std::clamp(v, lo, hi);
  std::size_t i = std::upper_bound(axis.begin(), axis.end(), v) - axis.begin();
  if (i == 0) i = 1;
  if (i >= axis.size()) i = axis.size() - 1;
  return {i - 1, (v - axis[i - 1]) / (axis[i] - axis[i - 1])};
}

}  // namespace

double LegendreTable::value_at(const Vec& x, const Vec& alpha) const {
  if (alpha.norm() > M + 1.0 + 1e-9)
    throw OutOfRangeError("LegendreTable::value_at: alpha outside the M+1 ball");
  const double s = x_dir.dot(x) / x_dir.squaredNorm();
  auto [is, ws] = locate_axis(s_grid, s, "x coordinate");
  std::vector<std::pair<std::size_t, double>> ai(alpha_axes.size());
  for (std::size_t d = 0; d < alpha_axes.size(); ++d)
    ai[d] = locate_axis(alpha_axes[d], alpha[d], "alpha coordinate");

  const std::size_t corners = 1ull << (1 + alpha_axes.size());
  double acc = 0.0;
  for (std::size_t c = 0; c < corners; ++c) {
    double w = (c & 1) ? ws : 1.0 - ws;
    std::size_t s_idx = is + ((c & 1) ? 1 : 0);
    if (s_grid.size() == 1) {
      s_idx = 0;
      w = (c & 1) ? 0.0 : 1.0;
    }
    std::vector<std::size_t> idx(alpha_axes.size());
    for (std::size_t d = 0; d < alpha_axes.size(); ++d) {
      const bool up = c & (2ull << d);
      w *= up ? ai[d].second : 1.0 - ai[d].second;
      idx[d] = ai[d].first + (up ? 1 : 0);
      if (alpha_axes[d].size() == 1) {
        idx[d] = 0;
        if (up) w = 0.0;
      }
    }
    if (w != 0.0) acc += w * values[flat_index(s_idx, idx)];
  }
  return acc;
}

LegendreTable build_legendre_table(const LambdaTable& lambda_table,
                                   const TruncationParams& params,
                                   const std::vector<std::vector<double>>& alpha_axes,
                                   const StarSettings& settings) {
  params.validate();
  if (static_cast<int>(alpha_axes.size()) != lambda_table.active_dim)
    throw ConfigError("build_legendre_table: alpha axes must match the active dimension");
  if (settings.z_search_radius < params.cap_radius() * (1 - 1e-12))
    throw ArgumentError("build_legendre_table: z_search_radius must cover kappa + M");

  LegendreTable t;
  t.x_dir = lambda_table.x_dir;
  t.active_dim = lambda_table.active_dim;
  t.s_grid = lambda_table.s_grid;
  t.alpha_axes = alpha_axes;
  t.M = params.M;
  t.kappa = params.kappa;
  t.a = params.a;
  t.source_fp = lambda_table.model_fp;

  const int dim = t.active_dim;
  const std::size_t n = t.n_cells();
  t.values.assign(n, 0.0);
  t.in_ball.assign(n, 0);

  LambdaEval lam = [&lambda_table](const Vec& x, const Vec& z) {
    Vec zfull = Vec::Zero(lambda_table.x_dir.size());
    zfull.head(z.size()) = z;
    return lambda_table.value_at(x, zfull);
  };

  std::vector<std::size_t> adims;
  for (const auto& ax : alpha_axes) adims.push_back(ax.size());

  parallel_for(n, [&](std::size_t cell) {
    std::size_t rem = cell;
    std::vector<std::size_t> ia(adims.size());
    for (std::size_t d = adims.size(); d-- > 0;) {
      ia[d] = rem % adims[d];
      rem /= adims[d];
    }
    const std::size_t is = rem;
    const Vec x = t.x_dir * t.s_grid[is];
    Vec alpha(dim);
    for (int d = 0; d < dim; ++d) alpha[d] = alpha_axes[d][ia[d]];

    const double na = alpha.norm();
    const bool inside = na <= params.M + 1.0 + 1e-12;
    Vec eval_alpha = alpha;
    if (!inside) eval_alpha *= (params.M + 1.0) / na;  // radial extension

    const TildeEval tilde = make_tilde_eval(lam, params, x);
    t.values[cell] = legendre_star(tilde, dim, eval_alpha, params.M, settings);
    t.in_ball[cell] = inside ? 1 : 0;
  });
  return t;
}

double fenchel_recover(const LegendreTable& t, const Vec& x, const Vec& z) {
  const double s = t.x_dir.dot(x) / t.x_dir.squaredNorm();
  auto [is, ws] = locate_axis(t.s_grid, s, "x coordinate");
  // Recover on the nearer slice; the audit queries on-grid x.
  const std::size_t slice = ws < 0.5 ? is : std::min(is + 1, t.s_grid.size() - 1);

  std::vector<std::size_t> adims;
  for (const auto& ax : t.alpha_axes) adims.push_back(ax.size());
  const int dim = static_cast<int>(adims.size());

  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> ia(dim, 0);
  Vec alpha(dim);
  for (;;) {
    for (int d = 0; d < dim; ++d) alpha[d] = t.alpha_axes[d][ia[d]];
    const std::size_t cell = t.flat_index(slice, ia);
    if (t.in_ball[cell]) {
      const double val = -z.head(dim).dot(alpha) - t.values[cell];
      best = std::min(best, val);
    }
    int d = dim - 1;
    while (d >= 0 && ++ia[d] == adims[d]) ia[d--] = 0;
    if (d < 0) break;
  }
  return best;
}

TruncationParams choose_kappa(const ModelSpec& model, const std::vector<double>& eta_grid,
                              double v_eta_lipschitz_estimate) {
  (void)eta_grid;
  if (!std::isfinite(v_eta_lipschitz_estimate) || v_eta_lipschitz_estimate < 0)
    throw ConfigError("choose_kappa: degenerate Lipschitz estimate");
  TruncationParams p;
  p.M = model.M;
  p.a = std::max(1.5 * v_eta_lipschitz_estimate, 0.1);
  p.kappa = p.M + (2.0 * p.M + 1.0) * (2.0 * p.a);
  p.validate();
  return p;
}

void LegendreTable::save_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw ConfigError("LegendreTable::save_csv: cannot open " + path);
  os << "# legendre_table v1\n";
  os << "# active_dim=" << active_dim << " M=" << M << " kappa=" << kappa << " a=" << a
     << " source_fp=" << source_fp << "\n";
  os << "# x_dir=";
  for (Eigen::Index i = 0; i < x_dir.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x_dir[i]);
    os << (i ? ";" : "") << buf;
  }
  os << "\n";
  os << "s";
  for (int d = 0; d < active_dim; ++d) os << ",a" << d + 1;
  os << ",value,in_ball\n";
  std::vector<std::size_t> adims;
  for (const auto& ax : alpha_axes) adims.push_back(ax.size());
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << ',' << buf;
  };
  for (std::size_t cell = 0; cell < values.size(); ++cell) {
    std::size_t rem = cell;
    std::vector<std::size_t> ia(adims.size());
    for (std::size_t d = adims.size(); d-- > 0;) {
      ia[d] = rem % adims[d];
      rem /= adims[d];
    }
    std::snprintf(buf, sizeof(buf), "%.17g", s_grid[rem]);
    os << buf;
    for (std::size_t d = 0; d < adims.size(); ++d) put(alpha_axes[d][ia[d]]);
    put(values[cell]);
    os << ',' << static_cast<int>(in_ball[cell]) << '\n';
  }
}

LegendreTable LegendreTable::load_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("LegendreTable::load_csv: cannot open " + path);
  LegendreTable t;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# legendre_table", 0) != 0)
    throw ConfigError("LegendreTable::load_csv: bad header");
  if (!std::getline(is, line)) throw ConfigError("LegendreTable::load_csv: missing meta");
  std::sscanf(line.c_str(), "# active_dim=%d M=%lf kappa=%lf a=%lf", &t.active_dim, &t.M,
              &t.kappa, &t.a);
  {
    auto pos = line.find("source_fp=");
    if (pos != std::string::npos)
      t.source_fp = std::strtoull(line.c_str() + pos + 10, nullptr, 10);
  }
  if (!std::getline(is, line) || line.rfind("# x_dir=", 0) != 0)
    throw ConfigError("LegendreTable::load_csv: missing x_dir");
  {
    std::vector<double> xs;
    std::stringstream ss(line.substr(8));
    std::string tok;
    while (std::getline(ss, tok, ';')) xs.push_back(std::atof(tok.c_str()));
    t.x_dir = Eigen::Map<Vec>(xs.data(), xs.size());
  }
  std::getline(is, line);  // column header

  struct Row {
    double s;
    std::vector<double> a;
    double value;
    int in_ball;
  };
  std::vector<Row> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> cols;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(std::atof(tok.c_str()));
    Row r;
    r.s = cols[0];
    for (int d = 0; d < t.active_dim; ++d) r.a.push_back(cols[1 + d]);
    r.value = cols[1 + t.active_dim];
    r.in_ball = static_cast<int>(cols[2 + t.active_dim]);
    rows.push_back(r);
  }
  auto uniq = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  std::vector<double> scol;
  std::vector<std::vector<double>> acols(t.active_dim);
  for (const auto& r : rows) {
    scol.push_back(r.s);
    for (int d = 0; d < t.active_dim; ++d) acols[d].push_back(r.a[d]);
  }
  t.s_grid = uniq(scol);
  for (int d = 0; d < t.active_dim; ++d) t.alpha_axes.push_back(uniq(acols[d]));
  t.values.assign(t.n_cells(), 0.0);
  t.in_ball.assign(t.n_cells(), 0);
  for (const auto& r : rows) {
    const std::size_t is =
        std::lower_bound(t.s_grid.begin(), t.s_grid.end(), r.s) - t.s_grid.begin();
    std::vector<std::size_t> ia(t.active_dim);
    for (int d = 0; d < t.active_dim; ++d)
      ia[d] = std::lower_bound(t.alpha_axes[d].begin(), t.alpha_axes[d].end(), r.a[d]) -
              t.alpha_axes[d].begin();
    const std::size_t cell = t.flat_index(is, ia);
    t.values[cell] = r.value;
    t.in_ball[cell] = static_cast<uint8_t>(r.in_ball);
  }
  return t;
}

}  // namespace twoscale
