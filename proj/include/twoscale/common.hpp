#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace twoscale {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
// Row-major storage for per-step tables whose rows feed raw-pointer loops.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Error categories used across the library.  Callers that need to
// distinguish configuration mistakes from runtime failures catch these.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};
struct ArgumentError : std::runtime_error {
  explicit ArgumentError(const std::string& m) : std::runtime_error(m) {}
};
struct IntegrationError : std::runtime_error {
  explicit IntegrationError(const std::string& m) : std::runtime_error(m) {}
};
struct OutOfRangeError : std::runtime_error {
  explicit OutOfRangeError(const std::string& m) : std::runtime_error(m) {}
};
struct BasisDegeneracyError : std::runtime_error {
  explicit BasisDegeneracyError(const std::string& m) : std::runtime_error(m) {}
};

// (e^z - 1) / z, stable near z = 0; the workhorse of the exponential
// integrators and of exact Ornstein-Uhlenbeck step variances.
inline double phi1(double z) {
  if (z > -1e-8 && z < 1e-8) return 1.0 + 0.5 * z + z * z / 6.0;
  return std::expm1(z) / z;
}

// Worker count for parallel loops; override with TWOSCALE_WORKERS.
int worker_count();

// Chunked parallel loop over [0, n).  The body must only write to
// index-owned slots; results are gathered by index so output is
// independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
};
MeanStderr mean_stderr(const std::vector<double>& xs);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;  // OLS standard error
};
// Least-squares line through (x, y); used for log-log rate fits.
SlopeFit fit_line(const std::vector<double>& x, const std::vector<double>& y);
SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

// FNV-1a based fingerprint of run configurations, for reproducibility
// bookkeeping in CSV outputs.
class Fingerprint {
 public:
  Fingerprint& add(uint64_t v);
  Fingerprint& add(double v);
  Fingerprint& add(int v) { return add(static_cast<uint64_t>(static_cast<int64_t>(v))); }
  Fingerprint& add(const std::string& s);
  Fingerprint& add(const Vec& v);
  uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  uint64_t state_ = 0xcbf29ce484222325ull;
};

// A Monte Carlo scalar with its sampling error and provenance.
struct ValueEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
  uint64_t fingerprint = 0;
};

}  // namespace twoscale
