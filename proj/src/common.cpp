#include "twoscale/common.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <thread>

namespace twoscale {

int worker_count() {
  if (const char* env = std::getenv("TWOSCALE_WORKERS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const int workers = worker_count();
  if (n == 0) return;
  if (workers <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto run = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      body(i);
    }
  };
  std::vector<std::thread> pool;
  const int k = static_cast<int>(std::min<std::size_t>(workers, n));
  pool.reserve(k - 1);
  for (int t = 0; t < k - 1; ++t) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
}

MeanStderr mean_stderr(const std::vector<double>& xs) {
  MeanStderr out;
  out.n = xs.size();
  if (xs.empty()) return out;
  double s = 0.0;
  for (double x : xs) s += x;
  out.mean = s / xs.size();
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.stderr_ = std::sqrt(ss / (xs.size() - 1.0) / xs.size());
  }
  return out;
}

SlopeFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  SlopeFit f;
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw ArgumentError("fit_line: need >= 2 matched points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0) throw ArgumentError("fit_line: degenerate abscissae");
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (n > 2) {
    double rss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double r = y[i] - (f.intercept + f.slope * x[i]);
      rss += r * r;
    }
    f.slope_stderr = std::sqrt(rss / (n - 2.0) / sxx);
  }
  return f;
}

SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  lx.reserve(x.size());
  ly.reserve(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= 0 || y[i] <= 0) throw ArgumentError("fit_loglog: nonpositive data");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  return fit_line(lx, ly);
}

namespace {
inline uint64_t fnv_step(uint64_t h, uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffull;
    h *= 0x100000001b3ull;
  }
  return h;
}
}  // namespace

Fingerprint& Fingerprint::add(uint64_t v) {
  state_ = fnv_step(state_, v);
  return *this;
}

Fingerprint& Fingerprint::add(double v) {
  uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  return add(bits);
}

Fingerprint& Fingerprint::add(const std::string& s) {
  for (char c : s) state_ = fnv_step(state_, static_cast<uint64_t>(static_cast<unsigned char>(c)));
  return *this;
}

Fingerprint& Fingerprint::add(const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) add(v[i]);
  return *this;
}

std::string Fingerprint::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(state_));
  return std::string(buf);
}

}  // namespace twoscale
