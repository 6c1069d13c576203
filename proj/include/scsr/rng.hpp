#pragma once

#include <cstdint>
#include <random>

namespace scsr {

// Every random quantity in the toolkit flows through an Rng obtained from a
// root seed plus a purpose tag, so independent parts of a run never share or
// race on one generator and reruns are bit-reproducible.

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  uint64_t s = seed;
  uint64_t h = splitmix64(s);
  s ^= a * 0x9e3779b97f4a7c15ull;
  h ^= splitmix64(s);
  s ^= b * 0xc2b2ae3d27d4eb4full;
  h ^= splitmix64(s);
  s ^= c * 0x165667b19e3779f9ull;
  h ^= splitmix64(s);
  return h;
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  double normal() { return normal_(gen_); }
  double uniform() { return uniform_(gen_); }  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // inclusive range
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return std::uniform_int_distribution<int64_t>(lo, hi)(gen_);
  }
  bool bernoulli(double p) { return uniform() < p; }
  std::mt19937_64& raw() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// Named substream derivation: rng for (seed, stream id, step, sample).
inline Rng make_rng(uint64_t seed, uint64_t stream, uint64_t step = 0, uint64_t sample = 0) {
  return Rng(mix_seed(seed, stream, step, sample));
}

// Stream ids used across the toolkit (stable constants; serialized nowhere).
namespace streams {
constexpr uint64_t matrix_gen = 1;
constexpr uint64_t measurement_noise = 2;
constexpr uint64_t split = 3;
constexpr uint64_t doc_matrix = 4;
constexpr uint64_t doc_transform = 5;
constexpr uint64_t doc_noise = 6;
constexpr uint64_t param_init = 7;
constexpr uint64_t batch_order = 8;
constexpr uint64_t ensemble = 9;
constexpr uint64_t dataset = 10;
constexpr uint64_t sup_doc = 11;
}  // namespace streams

}  // namespace scsr
