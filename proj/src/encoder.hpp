// encoder.hpp
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

#ifndef VQP_ENCODER_HPP_
#define VQP_ENCODER_HPP_

#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace vqp {

using namespace ad;  // tensor/autodiff substrate

// Causal dilated TCN over word frames.
struct TcnConfig {
  int layers = 9;
  int filters = 30;
  int kernel_size = 2;
  int stride = 1;
  std::vector<int> dilations;  // empty -> 1, 2, 4, ..., 2^(layers-1)
  float dropout_p = 0.10f;
  int skip_channels = 30;

  std::vector<int> EffectiveDilations() const;
  // 1 + (kernel_size - 1) * sum(dilations); defaults give 512.
  int ReceptiveField() const;
};

// TCN with summed skip connections, masked max-pool, and an output affine.
// Blocks are plain ReLU (no gating): conv -> ReLU -> dropout; the skip
// branch is a 1x1 conv of the block output; the residual adds the block
// input, through a 1x1 conv when channel counts differ (layer 1 only).
class ProsodyEncoder {
 public:
  ProsodyEncoder(const TcnConfig& cfg, Rng& init_rng);

  // Frames of a ragged batch: x is [total_frames, 1], one segment per word.
  // Returns the elementwise sum of all skip branches, [total_frames, skip].
  Tensor TcnForward(Tape* tape, const Tensor& x, const Segments& segs,
                    bool train, Rng* dropout_rng) const;

  // Masked max over each word's frames, then the encoder affine.
  // Returns [num_words, skip_channels].
  Tensor EncodeBatch(Tape* tape, const Tensor& x, const Segments& segs,
                     bool train, Rng* dropout_rng) const;

  std::vector<Parameter*> Params();
  const TcnConfig& config() const { return cfg_; }

 private:
  struct Layer {
    Parameter conv_w, conv_b;   // dilated conv, [kernel * c_in, filters]
    Parameter skip_w, skip_b;   // 1x1 conv onto the skip sum
    Parameter res_w, res_b;     // present only when c_in != filters
    bool has_res = false;
    int dilation = 1;
  };

  TcnConfig cfg_;
  std::vector<Layer> layers_;
  Parameter affine_w_, affine_b_;
};

}  // namespace vqp

#endif  // VQP_ENCODER_HPP_
