// pretrain.cpp
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

#include "pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "common.hpp"
#include "json.hpp"

namespace vqp {

PretrainConfig PretrainFromConfig(const Config& cfg) {
  PretrainConfig pc;
  pc.kappa = static_cast<float>(cfg.GetDouble("pretrain.kappa", pc.kappa));
  pc.alpha = static_cast<float>(cfg.GetDouble("pretrain.alpha", pc.alpha));
  pc.distractors =
      static_cast<int>(cfg.GetInt("pretrain.distractors", pc.distractors));
  pc.mask_p = static_cast<float>(cfg.GetDouble("pretrain.mask_p", pc.mask_p));
  pc.lr_max = static_cast<float>(cfg.GetDouble("pretrain.lr_max", pc.lr_max));
  pc.warmup_steps = cfg.GetInt("pretrain.warmup_steps", pc.warmup_steps);
  pc.total_steps = cfg.GetInt("pretrain.total_steps", pc.total_steps);
  pc.batch_size =
      static_cast<int>(cfg.GetInt("pretrain.batch_size", pc.batch_size));
  pc.checkpoint_every =
      cfg.GetInt("pretrain.checkpoint_every", pc.checkpoint_every);
  pc.seed = static_cast<uint64_t>(cfg.GetInt("pretrain.seed", 0));
  if (pc.distractors < 1) throw UsageError("pretrain: distractors must be >= 1");
  if (pc.mask_p <= 0.0f || pc.mask_p >= 1.0f)
    throw UsageError("pretrain: mask_p must lie in (0, 1)");
  return pc;
}

float LrSchedule(const PretrainConfig& cfg, int64_t step) {
  if (step <= 0) return 0.0f;
  if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps)
    return cfg.lr_max * static_cast<float>(step) / cfg.warmup_steps;
  const int64_t decay = cfg.total_steps - cfg.warmup_steps;
  if (decay <= 0) return 0.0f;
  return cfg.lr_max * static_cast<float>(cfg.total_steps - step) / decay;
}

std::vector<int> SampleDistractors(const std::vector<int>& pool, int exclude,
                                   int k, Rng& rng) {
  std::vector<int> eligible;
  eligible.reserve(pool.size());
  for (int p : pool)
    if (p != exclude) eligible.push_back(p);
  std::vector<int> out;
  if (eligible.empty()) return out;
  out.reserve(k);
  for (int i = 0; i < k; ++i)
    out.push_back(eligible[rng.Below(eligible.size())]);
  return out;
}

Tensor ContrastiveLoss(Tape* tape, const Tensor& c, const Tensor& candidates,
                       float kappa) {
  Tensor scores = CosineScores(tape, c, candidates);
  Tensor logits = Scale(tape, scores, 1.0f / kappa);
  return CrossEntropy(tape, logits, 0);
}

Trainer::Trainer(VqpModel& model, const PretrainConfig& cfg,
                 const AblationFlags& flags, std::vector<Utterance> corpus)
    : model_(model), cfg_(cfg), flags_(flags), corpus_(std::move(corpus)) {
  const TransformerConfig& tc = model_.transformer().config();
  for (int u = 0; u < static_cast<int>(corpus_.size()); ++u) {
    const int n = static_cast<int>(corpus_[u].words.size());
    for (auto [b, e] : WindowSpans(n, tc.max_seq))
      if (e - b >= tc.min_seq_pretrain) seqs_.push_back({u, b, e});
  }
  if (seqs_.empty())
    throw DataError(
        "pretrain: corpus has no word sequence of at least " +
        std::to_string(tc.min_seq_pretrain) + " words");
}

StepStats Trainer::Step(int64_t step) {
  Rng batch_rng(cfg_.seed, "batch", static_cast<uint64_t>(step));
  Rng mask_rng(cfg_.seed, "mask", static_cast<uint64_t>(step));
  Rng distractor_rng(cfg_.seed, "distractor", static_cast<uint64_t>(step));
  Rng dropout_rng(cfg_.seed, "dropout", static_cast<uint64_t>(step));

  std::vector<int> chosen(cfg_.batch_size);
  for (int& c : chosen)
    c = static_cast<int>(batch_rng.Below(seqs_.size()));

  // One ragged frame batch across every word of every chosen sequence.
  Segments segs;
  segs.offsets.push_back(0);
  std::vector<int> seq_word_off;  // global word-row offset per sequence
  std::vector<int> seq_len;
  size_t total_frames = 0;
  int total_words = 0;
  for (int c : chosen) {
    const Seq& sq = seqs_[c];
    seq_word_off.push_back(total_words);
    seq_len.push_back(sq.end - sq.begin);
    for (int w = sq.begin; w < sq.end; ++w) {
      total_frames += corpus_[sq.utt].words[w].frames.size();
      segs.offsets.push_back(static_cast<int>(total_frames));
      ++total_words;
    }
  }
  Tensor frames = Tensor::Zeros({static_cast<int>(total_frames), 1});
  {
    float* dst = frames.data->data();
    for (int c : chosen) {
      const Seq& sq = seqs_[c];
      for (int w = sq.begin; w < sq.end; ++w) {
        const auto& f = corpus_[sq.utt].words[w].frames;
        std::copy(f.begin(), f.end(), dst);
        dst += f.size();
      }
    }
  }

  if (!model_.quantizer().seeded()) {
    Tensor warm =
        model_.encoder().EncodeBatch(nullptr, frames, segs, false, nullptr);
    QuantizerOutput q0 = model_.quantizer().Quantize(nullptr, warm, false);
    Rng seed_rng(cfg_.seed, "codebook", 0);
    model_.quantizer().SeedFromBatch(q0.pre_quant, seed_rng);
  }

  Tape tape;
  Tensor enc_out =
      model_.encoder().EncodeBatch(&tape, frames, segs, true, &dropout_rng);
  QuantizerOutput q = model_.quantizer().Quantize(&tape, enc_out, true);
  Tensor ctx_src =
      flags_.target_only_quantization ? q.pre_quant : q.quantized;

  const int batch = cfg_.batch_size;
  std::vector<MaskPlan> plans;
  plans.reserve(batch);
  for (int s = 0; s < batch; ++s)
    plans.push_back(MakeMaskPlan(seq_len[s], cfg_.mask_p, mask_rng));

  // Distractor pools as global word rows of masked positions.
  std::vector<std::vector<int>> own_pool(batch);
  for (int s = 0; s < batch; ++s)
    for (int t = 0; t < seq_len[s]; ++t)
      if (plans[s].masked[t]) own_pool[s].push_back(seq_word_off[s] + t);

  Tensor head_w = tape.Leaf(model_.head_w());
  Tensor head_b = tape.Leaf(model_.head_b());

  Segments word_segs;
  word_segs.offsets.push_back(0);
  for (int s = 0; s < batch; ++s)
    word_segs.offsets.push_back(seq_word_off[s] + seq_len[s]);
  Tensor ctx_out = model_.transformer().ContextualizeBatch(
      &tape, ctx_src, word_segs, &plans, true, &dropout_rng);
  Tensor proj = Affine(&tape, ctx_out, head_w, head_b);

  std::vector<Tensor> losses;
  int masked_total = 0;
  for (int s = 0; s < batch; ++s) {
    std::vector<int> pool;
    if (flags_.cross_sample_negatives) {
      for (int o = 0; o < batch; ++o)
        if (o != s)
          pool.insert(pool.end(), own_pool[o].begin(), own_pool[o].end());
      if (pool.empty()) pool = own_pool[s];  // single-sequence fallback
    } else {
      pool = own_pool[s];
    }

    for (int t = 0; t < seq_len[s]; ++t) {
      if (!plans[s].masked[t]) continue;
      ++masked_total;
      const int g = seq_word_off[s] + t;
      std::vector<int> distractors =
          SampleDistractors(pool, g, cfg_.distractors, distractor_rng);
      if (distractors.empty()) continue;
      std::vector<Tensor> rows;
      rows.push_back(SliceRows(&tape, q.quantized, g, g + 1));
      for (int d : distractors)
        rows.push_back(SliceRows(&tape, q.quantized, d, d + 1));
      Tensor cands = ConcatRows(&tape, rows);
      Tensor ct = SliceRows(&tape, proj, g, g + 1);
      losses.push_back(ContrastiveLoss(&tape, ct, cands, cfg_.kappa));
    }
  }
  if (losses.empty())
    throw DataError("pretrain: no masked position had a distractor pool");

  Tensor l_contrast = MeanScalars(&tape, losses);
  Tensor loss = AddScalars(&tape, l_contrast, q.commitment, cfg_.alpha);

  StepStats stats;
  stats.step = step + 1;
  stats.loss = (*loss.data)[0];
  stats.l_contrast = (*l_contrast.data)[0];
  stats.l_commit = (*q.commitment.data)[0];
  stats.lr = LrSchedule(cfg_, step + 1);
  stats.masked_positions = masked_total;
  if (!std::isfinite(stats.loss))
    throw NumericError("pretrain: loss diverged at step " +
                       std::to_string(step + 1));

  tape.Backward(loss);
  AdamConfig adam;
  adam.lr = stats.lr;
  std::vector<Parameter*> params = model_.TrainableParams();
  OptimizerStep(params, adam);
  ZeroGrads(params);
  model_.quantizer().EmaUpdate(q);

  const PqConfig& pc = model_.quantizer().config();
  if (pc.enabled) {
    for (int i = 0; i < pc.num_slices; ++i) {
      std::vector<int> col;
      col.reserve(q.codes.size());
      for (const auto& row : q.codes) col.push_back(row[i]);
      stats.perplexity.push_back(CodebookUsage(col, pc.codebook_size).perplexity);
    }
  }
  return stats;
}

void Trainer::Run(const std::string& ckpt_dir, std::ostream* metrics,
                  int64_t start_step) {
  for (int64_t s = start_step; s < cfg_.total_steps; ++s) {
    StepStats st;
    try {
      st = Step(s);
    } catch (const NumericError&) {
      // keep the last good checkpoint on disk and surface the fault
      throw;
    }
    if (metrics) {
      nlohmann::json j;
      j["step"] = st.step;
      j["loss"] = st.loss;
      j["l_contrast"] = st.l_contrast;
      j["l_commit"] = st.l_commit;
      j["lr"] = st.lr;
      j["perplexity"] = st.perplexity;
      *metrics << j.dump() << "\n";
      metrics->flush();
    }
    const int64_t done = s + 1;
    if (!ckpt_dir.empty() &&
        (done % cfg_.checkpoint_every == 0 || done == cfg_.total_steps)) {
      model_.Save(ckpt_dir + "/step_" + std::to_string(done) + ".vqpt", done);
      model_.Save(ckpt_dir + "/latest.vqpt", done);
    }
  }
}

Tensor ExtractUtterance(VqpModel& model, const Utterance& utt,
                        RepLevel level) {
  if (utt.words.empty()) throw DataError("extract: utterance has no words");
  Segments segs;
  segs.offsets.push_back(0);
  size_t total = 0;
  for (const auto& w : utt.words) {
    total += w.frames.size();
    segs.offsets.push_back(static_cast<int>(total));
  }
  Tensor frames = Tensor::Zeros({static_cast<int>(total), 1});
  float* dst = frames.data->data();
  for (const auto& w : utt.words) {
    std::copy(w.frames.begin(), w.frames.end(), dst);
    dst += w.frames.size();
  }
  Tensor enc_out =
      model.encoder().EncodeBatch(nullptr, frames, segs, false, nullptr);
  if (level == RepLevel::kPe) return enc_out;

  const PqConfig& pc = model.quantizer().config();
  QuantizerOutput q = model.quantizer().Quantize(nullptr, enc_out, false);
  if (level == RepLevel::kVq1 || level == RepLevel::kVq2 ||
      level == RepLevel::kVq3) {
    if (!pc.enabled)
      throw UsageError("extract: vq levels unavailable without quantization");
    const int i = level == RepLevel::kVq1 ? 0 : level == RepLevel::kVq2 ? 1 : 2;
    if (i >= pc.num_slices)
      throw UsageError("extract: quantizer has no such slice");
    const int sd = pc.slice_dim();
    const int n = static_cast<int>(utt.words.size());
    Tensor out = Tensor::Zeros({n, sd});
    const auto& entries = *model.quantizer().codebook(i).value.data;
    for (int w = 0; w < n; ++w)
      std::copy(entries.begin() + static_cast<size_t>(q.codes[w][i]) * sd,
                entries.begin() + static_cast<size_t>(q.codes[w][i] + 1) * sd,
                out.data->begin() + static_cast<size_t>(w) * sd);
    return out;
  }

  const TransformerConfig& tc = model.transformer().config();
  std::vector<Tensor> parts;
  for (auto [b, e] : WindowSpans(static_cast<int>(utt.words.size()),
                                 tc.max_seq)) {
    Tensor in = SliceRows(nullptr, q.quantized, b, e);
    parts.push_back(model.transformer().Contextualize(nullptr, in, nullptr,
                                                      false, nullptr));
  }
  return parts.size() == 1 ? parts[0] : ConcatRows(nullptr, parts);
}

}  // namespace vqp
