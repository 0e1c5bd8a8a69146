// src/mdl.hpp

// Copyright 2026  VQP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef VQP_MDL_HPP_
#define VQP_MDL_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "features.hpp"
#include "rng.hpp"

namespace vqp::mdl {

// ---- prequential codelength ------------------------------------------------

// Prefix boundaries t_1 < t_2 < ... < t_S = n. The first t_1 labels are
// always billed at uniform cost; block i > 1 is coded by a probe trained
// on everything before it.
struct BlockSchedule {
  std::vector<int64_t> boundaries;
  bool degenerate = false;  // n too small: single uniform block
};

BlockSchedule MakeBlockSchedule(int64_t n, int num_blocks = 10,
                                double first_fraction = 0.001,
                                int64_t min_first = 8);

// Two-hidden-layer ReLU FFN probe (hidden size 256, dropout 0.3), Adam
// lr 1e-3 beta2 0.99, sigmoid + binary cross-entropy. The output layer is
// zero-initialized, so an untrained probe codes at exactly uniform cost.
struct ProbeSpec {
  int hidden_layers = 2;  // 0 makes the probe a plain logistic regression
  int hidden = 256;
  float dropout = 0.3f;
  float lr = 1e-3f;
  float beta2 = 0.99f;
  int steps_per_block = 500;
  int batch_size = 256;
  uint64_t seed = 0;
};

// Row-major feature matrix with aligned binary labels.
struct Dataset {
  int64_t n = 0;
  int dim = 0;
  std::vector<float> x;   // n * dim
  std::vector<uint8_t> y; // n
};

struct CodelengthReport {
  double total_bits = 0.0;        // first_block_bits + sum(block_bits)
  double first_block_bits = 0.0;  // t_1 * log2(2)
  std::vector<double> block_bits; // one per coded block (S-1 entries)
  std::vector<uint8_t> divergent; // per coded block: billed at uniform
  std::vector<double> per_item_bits;  // items t_1..n-1 in shuffled order
  double final_auc = 0.5;         // probe AUC on the last block
  int64_t n = 0;
  double ratio = 0.0;             // total_bits / (n * log2 #classes)
  uint64_t shuffle_seed = 0;      // global shuffle that fixed the data order
  bool degenerate_schedule = false;
};

// Shuffles (seeded), schedules, and codes the labels prequentially. Each
// block's probe is retrained from scratch on the preceding prefix.
CodelengthReport PrequentialCodelength(const Dataset& data,
                                       const BlockSchedule& schedule,
                                       const ProbeSpec& spec);

// ---- speaker verification trials -------------------------------------------

struct PooledUtterance {
  std::string sample_id;
  std::string speaker_id;
  std::vector<float> mean;  // representation mean-pooled over time
};

// Mean over the rows [row_start, row_start+row_count) of a representation
// matrix.
std::vector<float> MeanPool(const float* rows, int64_t count, int dim);

struct VerificationTrial {
  std::vector<float> r, s;  // enrolment / trial pooled representations
  uint8_t label = 0;        // same speaker?
};

// Balanced random trials; positive pairs use two distinct utterances of one
// speaker. `trial_side` may supply a second pool for the s-side (same
// speaker ids); nullptr draws both sides from `utts`.
std::vector<VerificationTrial> BuildTrials(
    const std::vector<PooledUtterance>& utts, int num_trials, Rng& rng,
    const std::vector<PooledUtterance>* trial_side = nullptr);

// Probe input for a trial: concat(r, s, |r-s|, r*s).
Dataset TrialsToDataset(const std::vector<VerificationTrial>& trials);

struct DeidResult {
  double ratio = 0.0;  // codelength per label, bits
  CodelengthReport report;
};

// De-identification ratio: prequential codelength per trial label.
DeidResult DeidRatio(const std::vector<VerificationTrial>& trials,
                     const ProbeSpec& spec);

// ---- identification simulation ---------------------------------------------

// ppv * npv^(N-1): probability the verifier singles out the right speaker
// among N candidates.
double PId(double ppv, double npv, int64_t n_candidates);

// ---- downstream evaluation -------------------------------------------------

// Mann-Whitney AUC (tie-corrected). DataError when labels are single-class.
double Auc(const std::vector<double>& scores,
           const std::vector<uint8_t>& labels);

// Trains the probe on `train` and reports final AUC on `test`.
double DownstreamEval(const Dataset& train, const Dataset& test,
                      const ProbeSpec& spec);

// ---- representation files --------------------------------------------------

struct RepIndexEntry {
  std::string sample_id;
  std::string speaker_id;
  int64_t row_start = 0;
  int64_t row_count = 0;
};

struct RepFile {
  int64_t rows = 0;
  int cols = 0;
  std::vector<float> data;  // rows * cols, row-major
  std::vector<RepIndexEntry> index;
};

// Binary matrix (magic "NVQP") plus JSON-lines sidecar `path + ".idx.jsonl"`
// mapping sample ids to row ranges.
void WriteReps(const std::string& path, const RepFile& reps);
RepFile ReadReps(const std::string& path);

// ---- probe reports -----------------------------------------------------------

struct ProbeReportRow {
  std::string feature;
  double mdl_bits = 0.0;
  double mdl_kbits = 0.0;  // 1 kbit = 1000 bits
  double final_auc = 0.5;
  int64_t n = 0;
  bool degenerate = false;  // constant feature: no informative labels
};

// One prequential run per feature: representations aligned to the feature
// table by (sample_id, word_index), labels binarized against the mean.
// Alignment failures raise DataError naming the offending ids.
std::vector<ProbeReportRow> ProbeReport(
    const RepFile& reps, const std::vector<features::WordFeatureRow>& table,
    const ProbeSpec& spec);

}  // namespace vqp::mdl

#endif  // VQP_MDL_HPP_
