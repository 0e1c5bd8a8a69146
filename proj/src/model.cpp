// model.cpp
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

#include "model.hpp"

#include "common.hpp"

namespace vqp {

RepLevel ParseRepLevel(const std::string& name) {
  if (name == "pe") return RepLevel::kPe;
  if (name == "vq1") return RepLevel::kVq1;
  if (name == "vq2") return RepLevel::kVq2;
  if (name == "vq3") return RepLevel::kVq3;
  if (name == "ctx") return RepLevel::kCtx;
  throw UsageError("unknown representation level: " + name);
}

int RepDim(RepLevel level, const PqConfig& pq, const TransformerConfig& ctx) {
  switch (level) {
    case RepLevel::kPe:
      return pq.input_dim;
    case RepLevel::kVq1:
    case RepLevel::kVq2:
    case RepLevel::kVq3:
      return pq.slice_dim();
    case RepLevel::kCtx:
      return ctx.model_dim;
  }
  throw UsageError("bad representation level");
}

VqpModel::VqpModel(const TcnConfig& tcn, const PqConfig& pq,
                   const TransformerConfig& ctx, uint64_t seed)
    : init_rng_(seed, "init", 0),
      enc_(tcn, init_rng_),
      pq_(pq, init_rng_),
      ctx_(ctx, init_rng_) {
  Tensor hw = Tensor::Zeros({ctx.model_dim, pq.input_dim});
  XavierUniform(hw, ctx.model_dim, pq.input_dim, init_rng_);
  head_w_ = Parameter("head.proj.weight", hw);
  head_b_ = Parameter("head.proj.bias", Tensor::Zeros({pq.input_dim}));
}

std::vector<Parameter*> VqpModel::TrainableParams() {
  std::vector<Parameter*> out = enc_.Params();
  for (Parameter* p : pq_.TrainableParams()) out.push_back(p);
  for (Parameter* p : ctx_.Params()) out.push_back(p);
  out.push_back(&head_w_);
  out.push_back(&head_b_);
  return out;
}

void VqpModel::Save(const std::string& path, int64_t train_step) const {
  auto* self = const_cast<VqpModel*>(this);
  std::map<std::string, Tensor> dict =
      PackParameters(self->TrainableParams());
  for (Parameter* p : self->pq_.StateParams()) dict[p->name] = p->value;
  dict["trainer.step"] = Tensor::Scalar(static_cast<float>(train_step));
  dict["pq.seeded"] = Tensor::Scalar(pq_.seeded() ? 1.0f : 0.0f);
  SaveCheckpoint(path, dict);
}

int64_t VqpModel::Load(const std::string& path) {
  std::map<std::string, Tensor> dict = LoadCheckpoint(path);
  UnpackParameters(dict, TrainableParams());
  for (Parameter* p : pq_.StateParams()) {
    auto it = dict.find(p->name);
    if (it == dict.end())
      throw DataError("checkpoint missing tensor " + p->name);
    if (it->second.shape != p->value.shape)
      throw DataError("checkpoint shape mismatch for " + p->name);
    *p->value.data = *it->second.data;
  }
  auto seeded = dict.find("pq.seeded");
  if (seeded != dict.end() && (*seeded->second.data)[0] != 0.0f)
    pq_.MarkSeeded();
  auto step = dict.find("trainer.step");
  return step == dict.end()
             ? 0
             : static_cast<int64_t>((*step->second.data)[0]);
}

TcnConfig TcnFromConfig(const Config& cfg) {
  TcnConfig tcn;
  tcn.layers = static_cast<int>(cfg.GetInt("tcn.layers", tcn.layers));
  tcn.filters = static_cast<int>(cfg.GetInt("tcn.filters", tcn.filters));
  tcn.kernel_size =
      static_cast<int>(cfg.GetInt("tcn.kernel_size", tcn.kernel_size));
  tcn.dropout_p =
      static_cast<float>(cfg.GetDouble("tcn.dropout", tcn.dropout_p));
  tcn.skip_channels =
      static_cast<int>(cfg.GetInt("tcn.skip_channels", tcn.skip_channels));
  return tcn;
}

PqConfig PqFromConfig(const Config& cfg) {
  PqConfig pq;
  pq.input_dim = static_cast<int>(cfg.GetInt("pq.input_dim", pq.input_dim));
  pq.num_slices = static_cast<int>(cfg.GetInt("pq.slices", pq.num_slices));
  pq.codebook_size =
      static_cast<int>(cfg.GetInt("pq.codebook_size", pq.codebook_size));
  pq.decay = static_cast<float>(cfg.GetDouble("pq.decay", pq.decay));
  return pq;
}

TransformerConfig CtxFromConfig(const Config& cfg) {
  TransformerConfig ctx;
  ctx.layers = static_cast<int>(cfg.GetInt("ctx.layers", ctx.layers));
  ctx.heads = static_cast<int>(cfg.GetInt("ctx.heads", ctx.heads));
  ctx.model_dim = static_cast<int>(cfg.GetInt("ctx.model_dim", ctx.model_dim));
  ctx.ffn_dim = static_cast<int>(cfg.GetInt("ctx.ffn_dim", ctx.ffn_dim));
  ctx.dropout_p =
      static_cast<float>(cfg.GetDouble("ctx.dropout", ctx.dropout_p));
  ctx.max_seq = static_cast<int>(cfg.GetInt("ctx.max_seq", ctx.max_seq));
  ctx.min_seq_pretrain =
      static_cast<int>(cfg.GetInt("ctx.min_seq", ctx.min_seq_pretrain));
  // The transformer consumes quantizer output, whose width follows the
  // quantizer input width, so track pq.input_dim unless overridden.
  ctx.input_dim = static_cast<int>(
      cfg.GetInt("ctx.input_dim", cfg.GetInt("pq.input_dim", ctx.input_dim)));
  return ctx;
}

}  // namespace vqp
