#include "twoscale/noise.hpp"

#include <cmath>

namespace twoscale {

namespace {

inline uint64_t splitmix64(uint64_t& s) {
  uint64_t z = (s += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline double uniform_open(uint64_t v) {
  // (0, 1]; keeps log() finite in Box-Muller.
  return (static_cast<double>(v >> 11) + 1.0) * (1.0 / 9007199254740992.0);
}

}  // namespace

uint64_t key_state(const NoiseKey& key) {
  uint64_t s = key.seed;
  (void)splitmix64(s);
  s ^= 0x632be59bd9b4e019ull * (static_cast<uint64_t>(key.stream) + 1);
  (void)splitmix64(s);
  s ^= 0x9e6c63d0876a9a63ull * (key.path + 1);
  (void)splitmix64(s);
  s ^= 0xd1b54a32d192ed03ull * (key.step + 1);
  uint64_t t = s;
  return splitmix64(t) ^ s;
}

void gaussian_fill(const NoiseKey& key, double sd, double* out, int n) {
  uint64_t state = key_state(key);
  int i = 0;
  while (i < n) {
    const double u1 = uniform_open(splitmix64(state));
    const double u2 = uniform_open(splitmix64(state));
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    out[i++] = sd * r * std::cos(a);
    if (i < n) out[i++] = sd * r * std::sin(a);
  }
}

uint64_t salted_seed(uint64_t seed, uint64_t salt) {
  uint64_t s = seed ^ (0xa0761d6478bd642full * (salt + 1));
  return splitmix64(s);
}

Vec noise_increment(const NoiseSpec& spec, double dt, uint64_t step, uint64_t path) {
  if (dt <= 0) throw ArgumentError("noise_increment: dt must be positive");
  if (spec.n_noise <= 0) throw ConfigError("noise_increment: n_noise must be positive");
  Vec out(spec.n_noise);
  NoiseKey key{spec.seed, static_cast<uint32_t>(spec.stream_id), path, step};
  gaussian_fill(key, std::sqrt(dt), out.data(), spec.n_noise);
  return out;
}

}  // namespace twoscale
