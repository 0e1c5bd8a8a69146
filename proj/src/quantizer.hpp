// quantizer.hpp
//
// Copyright 2026 VQP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied. See the License for the specific language governing
// permissions and limitations under the License.

#ifndef VQP_QUANTIZER_HPP_
#define VQP_QUANTIZER_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace vqp {

using namespace ad;

struct PqConfig {
  int input_dim = 30;
  int num_slices = 3;
  int codebook_size = 32;     // entries per sub-quantizer
  float decay = 0.99f;        // EMA decay
  float laplace_eps = 1e-5f;  // empty-code smoothing
  bool enabled = true;        // false: identity pass-through, affines kept

  int slice_dim() const { return input_dim / num_slices; }
};

struct QuantizerOutput {
  Tensor quantized;   // [batch, input_dim], post output affine
  Tensor pre_quant;   // [batch, input_dim], post input affine (slice source)
  std::vector<std::vector<int>> codes;  // [batch][num_slices]
  Tensor commitment;  // scalar; zero when eval or disabled
};

// Histogram of code usage for one sub-quantizer; perplexity is
// exp(entropy) of the empirical code distribution (1 = collapsed,
// codebook_size = uniform).
struct UsageStats {
  std::vector<int64_t> counts;
  double perplexity = 0.0;
};
UsageStats CodebookUsage(std::span<const int> codes, int codebook_size);

// Product quantizer: input affine -> equal slices -> per-slice nearest
// codeword (Euclidean, lowest index on ties) with straight-through
// gradients -> concat -> output affine. Codebooks learn by EMA only and
// never receive autodiff gradients.
class ProductQuantizer {
 public:
  ProductQuantizer(const PqConfig& cfg, Rng& init_rng);

  // x: [batch, input_dim]. In train mode the commitment scalar is on the
  // tape and gradients reach pre_quant slices only.
  QuantizerOutput Quantize(Tape* tape, const Tensor& x, bool train);

  // EMA codebook update from one batch's assignments. Call once per
  // optimizer step, after backward, with that step's QuantizerOutput.
  void EmaUpdate(const QuantizerOutput& out);

  // K-means++ seeding from observed slices (row-major [n, slice_dim] per
  // sub-quantizer, taken from pre_quant). Caps at the first 1024 rows.
  void SeedFromBatch(const Tensor& pre_quant, Rng& rng);
  bool seeded() const { return seeded_; }

  std::vector<Parameter*> TrainableParams();  // the two affines
  std::vector<Parameter*> StateParams();      // codebooks + EMA buffers
  void MarkSeeded() { seeded_ = true; }       // after checkpoint restore

  Parameter& codebook(int i) { return books_[i].entries; }
  Parameter& ema_counts(int i) { return books_[i].counts; }
  Parameter& ema_sums(int i) { return books_[i].sums; }
  const PqConfig& config() const { return cfg_; }

 private:
  struct Book {
    Parameter entries;  // [K, slice_dim]
    Parameter counts;   // [K]
    Parameter sums;     // [K, slice_dim]
  };

  PqConfig cfg_;
  Parameter affine_in_w_, affine_in_b_;
  Parameter affine_out_w_, affine_out_b_;
  std::vector<Book> books_;
  bool seeded_ = false;
};

}  // namespace vqp

#endif  // VQP_QUANTIZER_HPP_
