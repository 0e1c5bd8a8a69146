// model.hpp
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

#ifndef VQP_MODEL_HPP_
#define VQP_MODEL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "config.hpp"
#include "encoder.hpp"
#include "quantizer.hpp"
#include "transformer.hpp"

namespace vqp {

struct AblationFlags {
  bool use_pe_output = false;           // probe the encoder output directly
  bool cross_sample_negatives = false;  // distractors from other sequences
  bool no_pitch_scaling = false;        // preprocess keeps original pitch
  bool no_quantization = false;         // quantizer is an affine identity
  bool target_only_quantization = false;  // ctx input bypasses the codebooks
};

// Representation taps along the pipeline.
enum class RepLevel { kPe, kVq1, kVq2, kVq3, kCtx };
RepLevel ParseRepLevel(const std::string& name);  // "pe" | "vq1" | ... | "ctx"
int RepDim(RepLevel level, const PqConfig& pq, const TransformerConfig& ctx);

// Encoder + product quantizer + context transformer + the 768->30
// projection head used by the contrastive loss.
class VqpModel {
 public:
  VqpModel(const TcnConfig& tcn, const PqConfig& pq,
           const TransformerConfig& ctx, uint64_t seed);

  ProsodyEncoder& encoder() { return enc_; }
  ProductQuantizer& quantizer() { return pq_; }
  ContextTransformer& transformer() { return ctx_; }
  Parameter& head_w() { return head_w_; }
  Parameter& head_b() { return head_b_; }

  std::vector<Parameter*> TrainableParams();

  // Checkpoint = trainable params (with optimizer state) + quantizer EMA
  // state + bookkeeping scalars (training step, codebook seeded flag).
  void Save(const std::string& path, int64_t train_step) const;
  int64_t Load(const std::string& path);  // returns stored train step

 private:
  Rng init_rng_;  // must precede the components it initializes
  ProsodyEncoder enc_;
  ProductQuantizer pq_;
  ContextTransformer ctx_;
  Parameter head_w_, head_b_;
};

// Builders from a flat config (missing keys fall back to defaults).
TcnConfig TcnFromConfig(const Config& cfg);
PqConfig PqFromConfig(const Config& cfg);
TransformerConfig CtxFromConfig(const Config& cfg);

}  // namespace vqp

#endif  // VQP_MODEL_HPP_
