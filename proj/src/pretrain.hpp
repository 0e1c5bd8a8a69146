// pretrain.hpp
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

#ifndef VQP_PRETRAIN_HPP_
#define VQP_PRETRAIN_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "config.hpp"
#include "dsp.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace vqp {

struct PretrainConfig {
  float kappa = 0.1f;          // contrastive temperature
  float alpha = 0.5f;          // commitment loss weight
  int distractors = 9;         // K
  float mask_p = 0.30f;
  float lr_max = 1.5e-5f;
  int64_t warmup_steps = 10000;
  int64_t total_steps = 250000;
  int batch_size = 128;
  int64_t checkpoint_every = 500;
  uint64_t seed = 0;
};
PretrainConfig PretrainFromConfig(const Config& cfg);

// Linear warmup to lr_max, then linear decay to 0 at total_steps.
float LrSchedule(const PretrainConfig& cfg, int64_t step);

// K uniform draws with replacement from pool minus `exclude`.
// Empty effective pool returns an empty vector (position skipped).
std::vector<int> SampleDistractors(const std::vector<int>& pool, int exclude,
                                   int k, Rng& rng);

// -log softmax over cosine(c, row)/kappa with the true target at row 0.
// c: [1, d]; candidates: [K+1, d].
Tensor ContrastiveLoss(Tape* tape, const Tensor& c, const Tensor& candidates,
                       float kappa);

struct Utterance {
  std::string sample_id;
  std::string speaker_id;
  std::vector<dsp::AudioWord> words;
};

struct StepStats {
  int64_t step = 0;
  double loss = 0.0;
  double l_contrast = 0.0;
  double l_commit = 0.0;
  float lr = 0.0f;
  std::vector<double> perplexity;
  int masked_positions = 0;
};

// Self-supervised training loop over word sequences (utterance windows of
// min_seq..max_seq words). All randomness derives from (seed, stream,
// step), so a reloaded checkpoint replays the exact remaining schedule.
class Trainer {
 public:
  Trainer(VqpModel& model, const PretrainConfig& cfg,
          const AblationFlags& flags, std::vector<Utterance> corpus);

  int num_sequences() const { return static_cast<int>(seqs_.size()); }

  StepStats Step(int64_t step);

  // Steps [start_step, total). Writes one JSON line per step to `metrics`
  // if given; checkpoints into ckpt_dir ("step_N.vqpt" + "latest.vqpt").
  // On numeric divergence the last good checkpoint is kept and the fault
  // rethrown.
  void Run(const std::string& ckpt_dir, std::ostream* metrics,
           int64_t start_step = 0);

 private:
  struct Seq {
    int utt;
    int begin, end;  // word index range
  };

  VqpModel& model_;
  PretrainConfig cfg_;
  AblationFlags flags_;
  std::vector<Utterance> corpus_;
  std::vector<Seq> seqs_;
};

// Eval-mode representation of one utterance: [num_words, dim] rows in
// word order (CTX runs consecutive windows of at most max_seq words).
Tensor ExtractUtterance(VqpModel& model, const Utterance& utt, RepLevel level);

}  // namespace vqp

#endif  // VQP_PRETRAIN_HPP_
