// src/pipeline.hpp

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

#ifndef VQP_PIPELINE_HPP_
#define VQP_PIPELINE_HPP_

#include <cstdint>
#include <string>

#include "mdl.hpp"
#include "pretrain.hpp"

namespace vqp::pipeline {

// preprocess: manifest -> per-utterance "VQPW" word files + index.jsonl.
struct PreprocessOptions {
  uint64_t seed = 0;       // recorded in the index header line
  int jobs = 1;
  bool no_pitch_scaling = false;
  int t_max = dsp::kDefaultTMax;
};
// Returns the number of words written.
int64_t Preprocess(const std::string& manifest_path, const std::string& out_dir,
                   const PreprocessOptions& opts);

// Loads a preprocessed directory back into memory.
std::vector<Utterance> LoadPreprocessed(const std::string& dir);

// pretrain: preprocessed dir + config file -> checkpoints + metrics log.
struct PretrainOptions {
  std::string ablation;          // comma-separated: pe,csn,nps,nq,tq
  int64_t steps_override = -1;   // -1 keeps the config's total_steps
  int64_t seed_override = -1;    // -1 keeps the config's pretrain.seed
};
AblationFlags ParseAblation(const std::string& spec);
void Pretrain(const std::string& data_dir, const std::string& config_path,
              const std::string& ckpt_dir, const PretrainOptions& opts);

// extract: preprocessed dir + checkpoint -> NVQP representation file with
// one row per word (CTX/PE) or per word factor row (VQ slices).
void Extract(const std::string& data_dir, const std::string& ckpt_path,
             const std::string& level, const std::string& out_reps,
             const std::string& config_path = "",
             const std::string& ablation = "");

// features: manifest -> JSON-lines word feature table.
struct FeatureOptions {
  int jobs = 1;
  bool no_pitch_scaling = false;  // keep per-speaker pitch offsets
};
int64_t Features(const std::string& manifest_path, const std::string& out_table,
                 const FeatureOptions& opts);

// probe: representations + feature table -> per-feature MDL report (JSON
// file plus aligned table on stdout).
void Probe(const std::string& reps_path, const std::string& table_path,
           const std::string& out_report, const mdl::ProbeSpec& spec);

// deid: speaker-verification MDL ratio over pooled utterance
// representations. `reps_b_path` may be empty (both trial sides drawn
// from reps_a).
double Deid(const std::string& reps_a_path, const std::string& reps_b_path,
            int num_trials, const std::string& out_report,
            const mdl::ProbeSpec& spec);

// downstream: FFN probe AUC on utterance-level binary labels
// (JSON-lines {"sample_id", "label"}).
double Downstream(const std::string& train_reps, const std::string& test_reps,
                  const std::string& labels_path, const std::string& out_report,
                  const mdl::ProbeSpec& spec);

}  // namespace vqp::pipeline

#endif  // VQP_PIPELINE_HPP_
