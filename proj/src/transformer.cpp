// transformer.cpp
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

#include "transformer.hpp"

#include <cmath>
#include <string>

#include "common.hpp"

namespace vqp {

int MaskPlan::NumMasked() const {
  int n = 0;
  for (uint8_t m : masked) n += m != 0;
  return n;
}

MaskPlan MakeMaskPlan(int seq_len, float mask_p, Rng& rng) {
  if (seq_len < 2) throw UsageError("mask plan: sequence too short to mask");
  MaskPlan plan;
  plan.masked.assign(seq_len, 0);
  for (int t = 0; t < seq_len; ++t) plan.masked[t] = rng.Bernoulli(mask_p);
  // floor of 2: top up with uniform draws over still-unmasked positions
  while (plan.NumMasked() < 2) {
    int t = static_cast<int>(rng.Below(seq_len));
    plan.masked[t] = 1;
  }
  return plan;
}

float PositionalEncoding(int pos, int dim, int model_dim) {
  const int pair = dim / 2;
  const double angle =
      pos / std::pow(10000.0, 2.0 * pair / static_cast<double>(model_dim));
  return static_cast<float>((dim % 2 == 0) ? std::sin(angle) : std::cos(angle));
}

std::vector<std::pair<int, int>> WindowSpans(int n, int max_seq) {
  std::vector<std::pair<int, int>> spans;
  for (int b = 0; b < n; b += max_seq)
    spans.emplace_back(b, std::min(n, b + max_seq));
  return spans;
}

ContextTransformer::ContextTransformer(const TransformerConfig& cfg,
                                       Rng& init_rng)
    : cfg_(cfg) {
  if (cfg_.model_dim % cfg_.heads != 0)
    throw UsageError("transformer: model dim not divisible by head count");
  const int d = cfg_.model_dim;

  Tensor iw = Tensor::Zeros({cfg_.input_dim, d});
  XavierUniform(iw, cfg_.input_dim, d, init_rng);
  input_w_ = Parameter("ctx.input_proj.weight", iw);
  input_b_ = Parameter("ctx.input_proj.bias", Tensor::Zeros({d}));

  Tensor me = Tensor::Zeros({d});
  for (auto& v : *me.data) v = 0.02f * static_cast<float>(init_rng.Gaussian());
  mask_emb_ = Parameter("ctx.mask_emb", me);

  for (int i = 0; i < cfg_.layers; ++i) {
    const std::string base = "ctx.layer" + std::to_string(i + 1) + ".";
    Layer layer;
    Tensor qkv = Tensor::Zeros({d, 3 * d});
    XavierUniform(qkv, d, d, init_rng);  // fan per projection, not 3d
    layer.qkv_w = Parameter(base + "qkv.weight", qkv);
    layer.qkv_b = Parameter(base + "qkv.bias", Tensor::Zeros({3 * d}));
    Tensor ow = Tensor::Zeros({d, d});
    XavierUniform(ow, d, d, init_rng);
    layer.out_w = Parameter(base + "out.weight", ow);
    layer.out_b = Parameter(base + "out.bias", Tensor::Zeros({d}));
    Tensor f1 = Tensor::Zeros({d, cfg_.ffn_dim});
    XavierUniform(f1, d, cfg_.ffn_dim, init_rng);
    layer.ffn1_w = Parameter(base + "ffn1.weight", f1);
    layer.ffn1_b = Parameter(base + "ffn1.bias", Tensor::Zeros({cfg_.ffn_dim}));
    Tensor f2 = Tensor::Zeros({cfg_.ffn_dim, d});
    XavierUniform(f2, cfg_.ffn_dim, d, init_rng);
    layer.ffn2_w = Parameter(base + "ffn2.weight", f2);
    layer.ffn2_b = Parameter(base + "ffn2.bias", Tensor::Zeros({d}));
    layer.ln1_g = Parameter(base + "ln1.gain", Tensor::Full({d}, 1.0f));
    layer.ln1_b = Parameter(base + "ln1.bias", Tensor::Zeros({d}));
    layer.ln2_g = Parameter(base + "ln2.gain", Tensor::Full({d}, 1.0f));
    layer.ln2_b = Parameter(base + "ln2.bias", Tensor::Zeros({d}));
    layers_.push_back(std::move(layer));
  }
}

Tensor ContextTransformer::Contextualize(Tape* tape, const Tensor& p,
                                         const MaskPlan* plan, bool train,
                                         Rng* dropout_rng,
                                         std::vector<Tensor>* attn_probs) const {
  if (p.shape.size() != 2) throw UsageError("contextualize: bad input shape");
  Segments segs{{0, p.shape[0]}};
  std::vector<MaskPlan> plans;
  if (plan) plans.push_back(*plan);
  return ContextualizeBatch(tape, p, segs, plan ? &plans : nullptr, train,
                            dropout_rng, attn_probs);
}

Tensor ContextTransformer::ContextualizeBatch(
    Tape* tape, const Tensor& p, const Segments& segs,
    const std::vector<MaskPlan>* plans, bool train, Rng* dropout_rng,
    std::vector<Tensor>* attn_probs) const {
  if (p.shape.size() != 2 || p.shape[1] != cfg_.input_dim)
    throw UsageError("contextualize: bad input shape");
  const int n = p.shape[0];
  if (segs.offsets.empty() || segs.offsets.front() != 0 ||
      segs.offsets.back() != n)
    throw UsageError("contextualize: segment offsets do not cover the batch");
  for (int s = 0; s < segs.count(); ++s) {
    if (segs.len(s) < 1 || segs.len(s) > cfg_.max_seq)
      throw UsageError("contextualize: sequence length out of range");
  }
  if (plans) {
    if (static_cast<int>(plans->size()) != segs.count())
      throw UsageError("contextualize: mask plan count mismatch");
    for (int s = 0; s < segs.count(); ++s)
      if (static_cast<int>((*plans)[s].masked.size()) != segs.len(s))
        throw UsageError("contextualize: mask plan length mismatch");
  }
  if (train && !dropout_rng)
    throw UsageError("contextualize: train mode needs a dropout rng");

  auto* self = const_cast<ContextTransformer*>(this);
  const int d = cfg_.model_dim;
  const int hd = cfg_.head_dim();

  Tensor iw = tape ? tape->Leaf(self->input_w_) : input_w_.value;
  Tensor ib = tape ? tape->Leaf(self->input_b_) : input_b_.value;
  Tensor x = Affine(tape, p, iw, ib);
  if (plans) {
    std::vector<uint8_t> masked(n, 0);
    for (int s = 0; s < segs.count(); ++s)
      for (int t = 0; t < segs.len(s); ++t)
        masked[segs.offsets[s] + t] = (*plans)[s].masked[t];
    Tensor emb = tape ? tape->Leaf(self->mask_emb_) : mask_emb_.value;
    x = ReplaceRows(tape, x, masked, emb);
  }
  // Positions restart at every segment boundary.
  Tensor pe = Tensor::Zeros({n, d});
  for (int s = 0; s < segs.count(); ++s)
    for (int t = 0; t < segs.len(s); ++t)
      for (int j = 0; j < d; ++j)
        (*pe.data)[static_cast<size_t>(segs.offsets[s] + t) * d + j] =
            PositionalEncoding(t, j, d);
  x = Add(tape, x, pe);

  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(hd));
  for (int i = 0; i < cfg_.layers; ++i) {
    auto& L = self->layers_[i];
    auto leaf = [&](Parameter& prm) {
      return tape ? tape->Leaf(prm) : prm.value;
    };

    Tensor h = LayerNorm(tape, x, leaf(L.ln1_g), leaf(L.ln1_b));
    Tensor qkv = Affine(tape, h, leaf(L.qkv_w), leaf(L.qkv_b));
    // Attention stays within each segment; everything else is one dense
    // pass over the whole batch so the matmuls see full-height operands.
    std::vector<Tensor> seg_out(segs.count());
    for (int hi = 0; hi < cfg_.heads; ++hi) {
      Tensor q = SliceCols(tape, qkv, hi * hd, (hi + 1) * hd);
      Tensor k = SliceCols(tape, qkv, d + hi * hd, d + (hi + 1) * hd);
      Tensor v = SliceCols(tape, qkv, 2 * d + hi * hd, 2 * d + (hi + 1) * hd);
      for (int s = 0; s < segs.count(); ++s) {
        const int b = segs.offsets[s], e = segs.offsets[s + 1];
        Tensor qs = (segs.count() == 1) ? q : SliceRows(tape, q, b, e);
        Tensor ks = (segs.count() == 1) ? k : SliceRows(tape, k, b, e);
        Tensor vs = (segs.count() == 1) ? v : SliceRows(tape, v, b, e);
        Tensor scores = Scale(tape, MatMul(tape, qs, ks, false, true), inv_sqrt);
        Tensor probs = SoftmaxRows(tape, scores);
        if (attn_probs) attn_probs->push_back(probs);
        Tensor ctx = MatMul(tape, probs, vs);
        seg_out[s] =
            (hi == 0) ? ctx : ConcatCols(tape, seg_out[s], ctx);
      }
    }
    Tensor heads = (segs.count() == 1) ? seg_out[0]
                                       : ConcatRows(tape, seg_out);
    Tensor attn = Affine(tape, heads, leaf(L.out_w), leaf(L.out_b));
    if (train && cfg_.dropout_p > 0.0f)
      attn = Dropout(tape, attn, cfg_.dropout_p, train, *dropout_rng);
    x = Add(tape, x, attn);

    Tensor h2 = LayerNorm(tape, x, leaf(L.ln2_g), leaf(L.ln2_b));
    Tensor f = Affine(tape, h2, leaf(L.ffn1_w), leaf(L.ffn1_b));
    f = Relu(tape, f);
    f = Affine(tape, f, leaf(L.ffn2_w), leaf(L.ffn2_b));
    if (train && cfg_.dropout_p > 0.0f)
      f = Dropout(tape, f, cfg_.dropout_p, train, *dropout_rng);
    x = Add(tape, x, f);
  }
  return x;
}

std::vector<Parameter*> ContextTransformer::Params() {
  std::vector<Parameter*> out = {&input_w_, &input_b_, &mask_emb_};
  for (auto& L : layers_) {
    out.push_back(&L.qkv_w);
    out.push_back(&L.qkv_b);
    out.push_back(&L.out_w);
    out.push_back(&L.out_b);
    out.push_back(&L.ffn1_w);
    out.push_back(&L.ffn1_b);
    out.push_back(&L.ffn2_w);
    out.push_back(&L.ffn2_b);
    out.push_back(&L.ln1_g);
    out.push_back(&L.ln1_b);
    out.push_back(&L.ln2_g);
    out.push_back(&L.ln2_b);
  }
  return out;
}

}  // namespace vqp
