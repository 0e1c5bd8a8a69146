// transformer.hpp
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

#ifndef VQP_TRANSFORMER_HPP_
#define VQP_TRANSFORMER_HPP_

#include <cstdint>
#include <utility>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace vqp {

using namespace ad;

struct TransformerConfig {
  int layers = 12;
  int heads = 12;
  int model_dim = 768;
  int ffn_dim = 3072;
  float dropout_p = 0.10f;
  int max_seq = 32;
  int min_seq_pretrain = 16;
  int input_dim = 30;

  int head_dim() const { return model_dim / heads; }
};

// Which positions of a sequence get the learned mask embedding.
struct MaskPlan {
  std::vector<uint8_t> masked;  // one flag per position
  int NumMasked() const;
};

// Uniform masking at rate mask_p with a floor of 2 masked positions
// (within-sequence distractors need at least one other masked step).
MaskPlan MakeMaskPlan(int seq_len, float mask_p, Rng& rng);

// Vaswani sinusoidal value: sin(pos / 10000^(2i/d)) at even dims 2i,
// cos at odd dims 2i+1.
float PositionalEncoding(int pos, int dim, int model_dim);

// Consecutive non-overlapping [begin, end) spans of at most max_seq.
std::vector<std::pair<int, int>> WindowSpans(int n, int max_seq);

// Bidirectional pre-norm Transformer encoder over quantized word vectors.
// Masking substitutes the learned embedding after the input projection.
class ContextTransformer {
 public:
  ContextTransformer(const TransformerConfig& cfg, Rng& init_rng);

  // P: [seq, input_dim], seq in [1, max_seq]. Returns [seq, model_dim].
  // With `attn_probs` set (eval diagnostics), every layer's per-head
  // softmax matrix is appended.
  Tensor Contextualize(Tape* tape, const Tensor& p, const MaskPlan* plan,
                       bool train, Rng* dropout_rng,
                       std::vector<Tensor>* attn_probs = nullptr) const;

  // Ragged-batch variant: P stacks several sequences row-wise and `segs`
  // delimits them. All dense projections run as single whole-batch matmuls;
  // attention never crosses a segment boundary. `plans`, when given, must
  // hold one mask plan per segment.
  Tensor ContextualizeBatch(Tape* tape, const Tensor& p, const Segments& segs,
                            const std::vector<MaskPlan>* plans, bool train,
                            Rng* dropout_rng,
                            std::vector<Tensor>* attn_probs = nullptr) const;

  std::vector<Parameter*> Params();
  const TransformerConfig& config() const { return cfg_; }

 private:
  struct Layer {
    Parameter qkv_w, qkv_b;  // [model, 3*model]
    Parameter out_w, out_b;
    Parameter ffn1_w, ffn1_b;
    Parameter ffn2_w, ffn2_b;
    Parameter ln1_g, ln1_b;
    Parameter ln2_g, ln2_b;
  };

  TransformerConfig cfg_;
  Parameter input_w_, input_b_;
  Parameter mask_emb_;
  std::vector<Layer> layers_;
};

}  // namespace vqp

#endif  // VQP_TRANSFORMER_HPP_
