// src/rng.hpp

// Copyright 2026  VQP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef VQP_RNG_HPP_
#define VQP_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <string_view>

namespace vqp {

// Deterministic splittable RNG. Every consumer derives its own stream from
// (seed, stream name, index), so resuming at step N reproduces the stream
// without replaying steps 0..N-1. Distributions are hand-rolled to keep
// results identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(Splitmix(seed)) {}

  Rng(uint64_t seed, std::string_view stream, uint64_t index = 0) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the stream name
    for (char c : stream) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    state_ = Splitmix(seed ^ Splitmix(h) ^ Splitmix(index * 0x9e3779b97f4a7c15ULL + 1));
  }

  uint64_t NextU64() {
    // splitmix64 sequence
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double Uniform() {
    return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
  }

  float UniformF() { return static_cast<float>(Uniform()); }

  // Uniform in [lo, hi).
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Uniform integer in [0, n).
  uint64_t Below(uint64_t n) { return NextU64() % n; }

  // Standard normal via Box-Muller (no cached spare, call order stable).
  double Gaussian() {
    double u1 = 0.0;
    while (u1 == 0.0) u1 = Uniform();
    double u2 = Uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double Gaussian(double mean, double stddev) {
    return mean + stddev * Gaussian();
  }

  bool Bernoulli(double p) { return Uniform() < p; }

 private:
  static uint64_t Splitmix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  uint64_t state_;
};

}  // namespace vqp

#endif  // VQP_RNG_HPP_
