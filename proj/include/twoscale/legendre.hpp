#pragma once

#include "twoscale/ergodic.hpp"
#include "twoscale/model.hpp"

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace twoscale {

// Truncation constants: tilde_lambda caps lambda by -(M+1)|z| + kappa.
// kappa is sized so that the identity region (kappa-M)/(2M+1) strictly
// contains the gradient bound a of the limit BSDE integrand.
struct TruncationParams {
  double M = 1.0;
  double kappa = 10.0;
  double a = 1.0;

  double identity_radius() const { return (kappa - M) / (2.0 * M + 1.0); }
  double cap_radius() const { return kappa + M; }  // beyond this the cap is exact
  void validate() const;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// lambda evaluated at (x, z) where z carries the active coordinates.
using LambdaEval = std::function<double(const Vec& x, const Vec& z)>;
// tilde_lambda at fixed x, as a function of the active z alone.
using TildeEval = std::function<double(const Vec& z)>;

// min(lambda(x,z), -(M+1)|z| + kappa); for |z| >= kappa + M the cap is
// returned without consulting lambda.
double tilde_lambda(const LambdaEval& lambda, const TruncationParams& params, const Vec& x,
                    const Vec& z);
TildeEval make_tilde_eval(const LambdaEval& lambda, const TruncationParams& params,
                          const Vec& x);

struct StarSettings {
  double z_search_radius = 0.0;  // must cover kappa + M
  int n_per_dim = 201;
  int max_doublings = 3;
};

// Concave conjugate inf_z { -z.alpha - tilde(x,z) } over a compact z grid;
// NEG_INF outside the ball |alpha| <= M+1.  When the grid minimum is
// attained only on the search boundary the radius doubles, up to
// max_doublings, then an OutOfRangeError is raised.
double legendre_star(const TildeEval& tilde, int dim, const Vec& alpha, double M,
                     const StarSettings& settings);

// Conjugate values over a product alpha grid per slow-line coordinate.
// Nodes outside the ball store the radially-projected value for clean
// interpolation and are masked; the node accessor reports NEG_INF there.
struct LegendreTable {
  Vec x_dir;
  int active_dim = 1;
  std::vector<double> s_grid;
  std::vector<std::vector<double>> alpha_axes;
  std::vector<double> values;
  std::vector<uint8_t> in_ball;
  double M = 1.0, kappa = 0.0, a = 0.0;
  uint64_t source_fp = 0;

  std::size_t n_cells() const;
  std::size_t flat_index(std::size_t is, const std::vector<std::size_t>& ia) const;
  double node(std::size_t is, const std::vector<std::size_t>& ia) const;
  double value_at(const Vec& x, const Vec& alpha) const;

  void save_csv(const std::string& path) const;
  static LegendreTable load_csv(const std::string& path);
};

LegendreTable build_legendre_table(const LambdaTable& lambda_table,
                                   const TruncationParams& params,
                                   const std::vector<std::vector<double>>& alpha_axes,
                                   const StarSettings& settings);

// Biconjugation over the in-ball alpha nodes; used by the round-trip audit.
double fenchel_recover(const LegendreTable& table, const Vec& x, const Vec& z);

// a := 1.5 x estimated Lipschitz constant of v^eta (floored at 0.1),
// kappa := M + (2M+1) (2a).
TruncationParams choose_kappa(const ModelSpec& model, const std::vector<double>& eta_grid,
                              double v_eta_lipschitz_estimate);

}  // namespace twoscale
