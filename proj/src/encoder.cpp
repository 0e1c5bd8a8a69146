// encoder.cpp
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

#include "encoder.hpp"

#include <string>

#include "common.hpp"

namespace vqp {

std::vector<int> TcnConfig::EffectiveDilations() const {
  if (!dilations.empty()) return dilations;
  std::vector<int> d(layers);
  for (int i = 0; i < layers; ++i) d[i] = 1 << i;
  return d;
}

int TcnConfig::ReceptiveField() const {
  int sum = 0;
  for (int d : EffectiveDilations()) sum += d;
  return 1 + (kernel_size - 1) * sum;
}

ProsodyEncoder::ProsodyEncoder(const TcnConfig& cfg, Rng& init_rng)
    : cfg_(cfg) {
  const std::vector<int> dils = cfg_.EffectiveDilations();
  if (static_cast<int>(dils.size()) != cfg_.layers)
    throw UsageError("encoder: dilation count does not match layer count");
  int c_in = 1;
  for (int i = 0; i < cfg_.layers; ++i) {
    Layer layer;
    layer.dilation = dils[i];
    const std::string base = "tcn.layer" + std::to_string(i + 1) + ".";

    Tensor cw = Tensor::Zeros({cfg_.kernel_size * c_in, cfg_.filters});
    KaimingUniform(cw, cfg_.kernel_size * c_in, init_rng);
    layer.conv_w = Parameter(base + "conv.weight", cw);
    layer.conv_b = Parameter(base + "conv.bias", Tensor::Zeros({cfg_.filters}));

    Tensor sw = Tensor::Zeros({cfg_.filters, cfg_.skip_channels});
    KaimingUniform(sw, cfg_.filters, init_rng);
    layer.skip_w = Parameter(base + "skip.weight", sw);
    layer.skip_b =
        Parameter(base + "skip.bias", Tensor::Zeros({cfg_.skip_channels}));

    if (c_in != cfg_.filters) {
      layer.has_res = true;
      Tensor rw = Tensor::Zeros({c_in, cfg_.filters});
      KaimingUniform(rw, c_in, init_rng);
      layer.res_w = Parameter(base + "res.weight", rw);
      layer.res_b = Parameter(base + "res.bias", Tensor::Zeros({cfg_.filters}));
    }
    layers_.push_back(std::move(layer));
    c_in = cfg_.filters;
  }

  Tensor aw = Tensor::Zeros({cfg_.skip_channels, cfg_.skip_channels});
  XavierUniform(aw, cfg_.skip_channels, cfg_.skip_channels, init_rng);
  affine_w_ = Parameter("encoder.affine.weight", aw);
  affine_b_ =
      Parameter("encoder.affine.bias", Tensor::Zeros({cfg_.skip_channels}));
}

Tensor ProsodyEncoder::TcnForward(Tape* tape, const Tensor& x,
                                  const Segments& segs, bool train,
                                  Rng* dropout_rng) const {
  if (x.shape.size() != 2 || x.shape[1] != 1)
    throw UsageError("tcn_forward: expected [frames, 1] input");
  if (x.shape[0] != segs.offsets.back())
    throw UsageError("tcn_forward: segment offsets do not cover the input");
  for (int s = 0; s < segs.count(); ++s)
    if (segs.len(s) < 1)
      throw UsageError("tcn_forward: empty word in batch");
  if (train && !dropout_rng)
    throw UsageError("tcn_forward: train mode needs a dropout rng");

  auto* self = const_cast<ProsodyEncoder*>(this);
  Tensor h = x;
  Tensor skip_sum;
  for (size_t i = 0; i < layers_.size(); ++i) {
    auto& layer = self->layers_[i];
    Tensor conv_w = tape ? tape->Leaf(layer.conv_w) : layer.conv_w.value;
    Tensor conv_b = tape ? tape->Leaf(layer.conv_b) : layer.conv_b.value;
    Tensor block = CausalDilatedConv1d(tape, h, segs, conv_w, conv_b,
                                       cfg_.kernel_size, layer.dilation);
    block = Relu(tape, block);
    if (cfg_.dropout_p > 0.0f && train)
      block = Dropout(tape, block, cfg_.dropout_p, train, *dropout_rng);

    Tensor skip_w = tape ? tape->Leaf(layer.skip_w) : layer.skip_w.value;
    Tensor skip_b = tape ? tape->Leaf(layer.skip_b) : layer.skip_b.value;
    Tensor skip = Affine(tape, block, skip_w, skip_b);
    skip_sum = (i == 0) ? skip : Add(tape, skip_sum, skip);

    Tensor res = h;
    if (layer.has_res) {
      Tensor res_w = tape ? tape->Leaf(layer.res_w) : layer.res_w.value;
      Tensor res_b = tape ? tape->Leaf(layer.res_b) : layer.res_b.value;
      res = Affine(tape, h, res_w, res_b);
    }
    // Scale each residual merge by 1/sqrt(2) so the stream's variance stays
    // roughly constant with depth; without it activations grow layer by layer
    // and the commitment term dwarfs the contrastive signal early in training.
    h = Scale(tape, Add(tape, res, block), 0.70710678f);
  }
  // Average rather than sum the per-layer skip contributions for the same
  // scale-control reason.
  return Scale(tape, skip_sum, 1.0f / static_cast<float>(layers_.size()));
}

Tensor ProsodyEncoder::EncodeBatch(Tape* tape, const Tensor& x,
                                   const Segments& segs, bool train,
                                   Rng* dropout_rng) const {
  Tensor skips = TcnForward(tape, x, segs, train, dropout_rng);
  Tensor pooled = MaxPoolTime(tape, skips, segs);
  auto* self = const_cast<ProsodyEncoder*>(this);
  Tensor w = tape ? tape->Leaf(self->affine_w_) : affine_w_.value;
  Tensor b = tape ? tape->Leaf(self->affine_b_) : affine_b_.value;
  return Affine(tape, pooled, w, b);
}

std::vector<Parameter*> ProsodyEncoder::Params() {
  std::vector<Parameter*> out;
  for (auto& layer : layers_) {
    out.push_back(&layer.conv_w);
    out.push_back(&layer.conv_b);
    out.push_back(&layer.skip_w);
    out.push_back(&layer.skip_b);
    if (layer.has_res) {
      out.push_back(&layer.res_w);
      out.push_back(&layer.res_b);
    }
  }
  out.push_back(&affine_w_);
  out.push_back(&affine_b_);
  return out;
}

}  // namespace vqp
