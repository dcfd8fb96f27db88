#pragma once

#include "twoscale/common.hpp"

#include <cstdint>

namespace twoscale {

// Which Wiener process an increment belongs to.
enum class NoiseStream : uint32_t { W1 = 0, W2 = 1, B = 2 };

// Stateless, counter-based Gaussian increments: every draw is a pure
// function of (seed, stream, path, step), so paths can be generated on
// any worker in any order and replayed exactly.
struct NoiseKey {
  uint64_t seed = 0;
  uint32_t stream = 0;
  uint64_t path = 0;
  uint64_t step = 0;
};

uint64_t key_state(const NoiseKey& key);

// Fills out[0..n) with i.i.d. N(0, sd^2) samples determined by the key.
void gaussian_fill(const NoiseKey& key, double sd, double* out, int n);

// Derives an unrelated seed from (seed, salt); used to separate
// estimation stages that must not share randomness.
uint64_t salted_seed(uint64_t seed, uint64_t salt);

struct NoiseSpec {
  int n_noise = 0;
  uint64_t seed = 0;
  NoiseStream stream_id = NoiseStream::W1;
};

// One truncated cylindrical Wiener increment over a step of length dt:
// n_noise i.i.d. N(0, dt) coordinates.
Vec noise_increment(const NoiseSpec& spec, double dt, uint64_t step = 0, uint64_t path = 0);

}  // namespace twoscale
