// quantizer.cpp
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

#include "quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "common.hpp"

namespace vqp {

UsageStats CodebookUsage(std::span<const int> codes, int codebook_size) {
  UsageStats stats;
  stats.counts.assign(codebook_size, 0);
  for (int c : codes) {
    if (c < 0 || c >= codebook_size)
      throw UsageError("codebook_usage: code out of range");
    ++stats.counts[c];
  }
  if (codes.empty()) return stats;
  double entropy = 0.0;
  const double n = static_cast<double>(codes.size());
  for (int64_t c : stats.counts) {
    if (c == 0) continue;
    const double p = c / n;
    entropy -= p * std::log(p);
  }
  stats.perplexity = std::exp(entropy);
  return stats;
}

ProductQuantizer::ProductQuantizer(const PqConfig& cfg, Rng& init_rng)
    : cfg_(cfg) {
  if (cfg_.input_dim % cfg_.num_slices != 0)
    throw UsageError("quantizer: input dim not divisible by slice count");
  const int d = cfg_.input_dim;
  Tensor wi = Tensor::Zeros({d, d});
  XavierUniform(wi, d, d, init_rng);
  affine_in_w_ = Parameter("pq.affine_in.weight", wi);
  affine_in_b_ = Parameter("pq.affine_in.bias", Tensor::Zeros({d}));
  Tensor wo = Tensor::Zeros({d, d});
  XavierUniform(wo, d, d, init_rng);
  affine_out_w_ = Parameter("pq.affine_out.weight", wo);
  affine_out_b_ = Parameter("pq.affine_out.bias", Tensor::Zeros({d}));

  const int sd = cfg_.slice_dim();
  for (int i = 0; i < cfg_.num_slices; ++i) {
    const std::string base = "pq.vq" + std::to_string(i + 1) + ".";
    Book book;
    Tensor e = Tensor::Zeros({cfg_.codebook_size, sd});
    for (auto& v : *e.data) v = 0.1f * static_cast<float>(init_rng.Gaussian());
    book.entries = Parameter(base + "codebook", e);
    book.counts = Parameter(base + "ema_counts",
                            Tensor::Full({cfg_.codebook_size}, 1.0f));
    Tensor sums = e;  // m_k = e_k so that e_k == m_k / N_k holds at init
    sums.data = std::make_shared<std::vector<float>>(*e.data);
    book.sums = Parameter(base + "ema_sums", sums);
    books_.push_back(std::move(book));
  }
}

QuantizerOutput ProductQuantizer::Quantize(Tape* tape, const Tensor& x,
                                           bool train) {
  if (x.shape.size() != 2 || x.shape[1] != cfg_.input_dim)
    throw UsageError("quantize: bad input shape");
  const int batch = x.shape[0];
  const int sd = cfg_.slice_dim();

  QuantizerOutput out;
  Tensor win = tape ? tape->Leaf(affine_in_w_) : affine_in_w_.value;
  Tensor bin = tape ? tape->Leaf(affine_in_b_) : affine_in_b_.value;
  out.pre_quant = Affine(tape, x, win, bin);

  Tensor body;
  if (!cfg_.enabled) {
    body = out.pre_quant;
    out.commitment = Tensor::Scalar(0.0f);
  } else {
    out.codes.assign(batch, std::vector<int>(cfg_.num_slices, 0));
    std::vector<Tensor> q_slices;
    std::vector<Tensor> commit_terms;
    for (int i = 0; i < cfg_.num_slices; ++i) {
      Tensor ys = SliceCols(tape, out.pre_quant, i * sd, (i + 1) * sd);
      const std::vector<float>& entries = *books_[i].entries.value.data;
      std::vector<float> picked(static_cast<size_t>(batch) * sd);
      for (int b = 0; b < batch; ++b) {
        const float* row = ys.data->data() + static_cast<size_t>(b) * sd;
        int best = 0;
        double best_d = 1e300;
        for (int k = 0; k < cfg_.codebook_size; ++k) {
          const float* e = entries.data() + static_cast<size_t>(k) * sd;
          double dist = 0.0;
          for (int j = 0; j < sd; ++j) {
            const double diff = row[j] - e[j];
            dist += diff * diff;
          }
          if (dist < best_d) {  // strict: lowest index wins ties
            best_d = dist;
            best = k;
          }
        }
        out.codes[b][i] = best;
        std::copy(entries.begin() + static_cast<size_t>(best) * sd,
                  entries.begin() + static_cast<size_t>(best + 1) * sd,
                  picked.begin() + static_cast<size_t>(b) * sd);
      }
      q_slices.push_back(StraightThrough(tape, ys, picked));
      if (train) {
        // mean over batch of the squared slice-to-codeword distance
        Tensor sq = SqDistToConst(tape, ys, picked);
        commit_terms.push_back(Scale(tape, sq, 1.0f / batch));
      }
    }
    body = q_slices[0];
    for (int i = 1; i < cfg_.num_slices; ++i)
      body = ConcatCols(tape, body, q_slices[i]);
    if (train) {
      Tensor acc = commit_terms[0];
      for (int i = 1; i < cfg_.num_slices; ++i)
        acc = AddScalars(tape, acc, commit_terms[i], 1.0f);
      out.commitment = Scale(tape, acc, 1.0f / cfg_.num_slices);
    } else {
      out.commitment = Tensor::Scalar(0.0f);
    }
  }

  Tensor wout = tape ? tape->Leaf(affine_out_w_) : affine_out_w_.value;
  Tensor bout = tape ? tape->Leaf(affine_out_b_) : affine_out_b_.value;
  out.quantized = Affine(tape, body, wout, bout);
  return out;
}

void ProductQuantizer::EmaUpdate(const QuantizerOutput& out) {
  if (!cfg_.enabled) return;
  const int batch = out.pre_quant.shape[0];
  const int sd = cfg_.slice_dim();
  const float g = cfg_.decay;
  for (int i = 0; i < cfg_.num_slices; ++i) {
    std::vector<float>& counts = *books_[i].counts.value.data;
    std::vector<float>& sums = *books_[i].sums.value.data;
    std::vector<float>& entries = *books_[i].entries.value.data;

    std::vector<float> batch_count(cfg_.codebook_size, 0.0f);
    std::vector<float> batch_sum(static_cast<size_t>(cfg_.codebook_size) * sd,
                                 0.0f);
    for (int b = 0; b < batch; ++b) {
      const int k = out.codes[b][i];
      batch_count[k] += 1.0f;
      const float* row = out.pre_quant.data->data() +
                         static_cast<size_t>(b) * cfg_.input_dim + i * sd;
      float* acc = batch_sum.data() + static_cast<size_t>(k) * sd;
      for (int j = 0; j < sd; ++j) acc[j] += row[j];
    }

    double total = 0.0;
    for (int k = 0; k < cfg_.codebook_size; ++k) {
      counts[k] = g * counts[k] + (1.0f - g) * batch_count[k];
      total += counts[k];
      for (int j = 0; j < sd; ++j) {
        const size_t idx = static_cast<size_t>(k) * sd + j;
        sums[idx] = g * sums[idx] + (1.0f - g) * batch_sum[idx];
      }
    }
    if (total <= 0.0) continue;
    const double eps = cfg_.laplace_eps;
    const double denom = total + cfg_.codebook_size * eps;
    for (int k = 0; k < cfg_.codebook_size; ++k) {
      const double smoothed = (counts[k] + eps) / denom * total;
      for (int j = 0; j < sd; ++j) {
        const size_t idx = static_cast<size_t>(k) * sd + j;
        entries[idx] = static_cast<float>(sums[idx] / smoothed);
      }
    }
  }
}

void ProductQuantizer::SeedFromBatch(const Tensor& pre_quant, Rng& rng) {
  if (!cfg_.enabled) {
    seeded_ = true;
    return;
  }
  const int batch = pre_quant.shape[0];
  const int sd = cfg_.slice_dim();
  const int n = std::min(batch, 1024);
  for (int i = 0; i < cfg_.num_slices; ++i) {
    std::vector<float> slices(static_cast<size_t>(n) * sd);
    for (int b = 0; b < n; ++b)
      std::copy(pre_quant.data->begin() +
                    static_cast<size_t>(b) * cfg_.input_dim + i * sd,
                pre_quant.data->begin() +
                    static_cast<size_t>(b) * cfg_.input_dim + (i + 1) * sd,
                slices.begin() + static_cast<size_t>(b) * sd);

    // k-means++ seeding: first center uniform, then D^2-weighted draws.
    std::vector<float>& entries = *books_[i].entries.value.data;
    std::vector<int> chosen;
    chosen.push_back(static_cast<int>(rng.Below(n)));
    std::vector<double> d2(n, 0.0);
    for (int k = 1; k < cfg_.codebook_size; ++k) {
      double total = 0.0;
      for (int b = 0; b < n; ++b) {
        double best = 1e300;
        for (int c : chosen) {
          double dist = 0.0;
          for (int j = 0; j < sd; ++j) {
            const double diff = slices[static_cast<size_t>(b) * sd + j] -
                                slices[static_cast<size_t>(c) * sd + j];
            dist += diff * diff;
          }
          best = std::min(best, dist);
        }
        d2[b] = best;
        total += best;
      }
      int pick;
      if (total <= 0.0) {
        pick = static_cast<int>(rng.Below(n));  // degenerate: all identical
      } else {
        double r = rng.Uniform() * total;
        pick = n - 1;
        for (int b = 0; b < n; ++b) {
          r -= d2[b];
          if (r <= 0.0) {
            pick = b;
            break;
          }
        }
      }
      chosen.push_back(pick);
    }
    std::vector<float>& counts = *books_[i].counts.value.data;
    std::vector<float>& sums = *books_[i].sums.value.data;
    for (int k = 0; k < cfg_.codebook_size; ++k) {
      for (int j = 0; j < sd; ++j) {
        const float v = slices[static_cast<size_t>(chosen[k]) * sd + j];
        entries[static_cast<size_t>(k) * sd + j] = v;
        sums[static_cast<size_t>(k) * sd + j] = v;
      }
      counts[k] = 1.0f;
    }
  }
  seeded_ = true;
}

std::vector<Parameter*> ProductQuantizer::TrainableParams() {
  return {&affine_in_w_, &affine_in_b_, &affine_out_w_, &affine_out_b_};
}

std::vector<Parameter*> ProductQuantizer::StateParams() {
  std::vector<Parameter*> out;
  for (auto& book : books_) {
    out.push_back(&book.entries);
    out.push_back(&book.counts);
    out.push_back(&book.sums);
  }
  return out;
}

}  // namespace vqp
