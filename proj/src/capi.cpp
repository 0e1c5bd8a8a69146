// capi.cpp
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

#include "vqp.h"

#include <string>

#include "common.hpp"
#include "pipeline.hpp"

struct vqp_session {
  std::string last_error;
};

namespace {

std::string Str(const char* s) { return s ? std::string(s) : std::string(); }

// Runs fn, translating exceptions into error codes + session message.
template <typename Fn>
int Guard(vqp_session* s, Fn&& fn) {
  if (!s) return VQP_USAGE_ERROR;
  s->last_error.clear();
  try {
    fn();
    return VQP_OK;
  } catch (const vqp::VqpError& e) {
    s->last_error = e.what();
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    s->last_error = e.what();
    return VQP_DATA_ERROR;
  }
}

}  // namespace

extern "C" {

vqp_session* vqp_session_create(void) { return new vqp_session(); }

void vqp_session_destroy(vqp_session* s) { delete s; }

const char* vqp_last_error(const vqp_session* s) {
  return s ? s->last_error.c_str() : "null session";
}

int vqp_preprocess(vqp_session* s, const char* manifest, const char* out_dir,
                   uint64_t seed, int jobs, int no_pitch_scaling,
                   int64_t* words_out) {
  return Guard(s, [&] {
    if (!manifest || !out_dir)
      throw vqp::UsageError("preprocess: manifest and output dir required");
    vqp::pipeline::PreprocessOptions opts;
    opts.seed = seed;
    opts.jobs = jobs;
    opts.no_pitch_scaling = no_pitch_scaling != 0;
    const int64_t n = vqp::pipeline::Preprocess(manifest, out_dir, opts);
    if (words_out) *words_out = n;
  });
}

int vqp_pretrain(vqp_session* s, const char* data_dir, const char* config,
                 const char* ckpt_dir, const char* ablation,
                 int64_t steps_override, int64_t seed_override) {
  return Guard(s, [&] {
    if (!data_dir || !ckpt_dir)
      throw vqp::UsageError("pretrain: data dir and checkpoint dir required");
    vqp::pipeline::PretrainOptions opts;
    opts.ablation = Str(ablation);
    opts.steps_override = steps_override;
    opts.seed_override = seed_override;
    vqp::pipeline::Pretrain(data_dir, Str(config), ckpt_dir, opts);
  });
}

int vqp_extract(vqp_session* s, const char* data_dir, const char* ckpt,
                const char* level, const char* out_reps, const char* config,
                const char* ablation) {
  return Guard(s, [&] {
    if (!data_dir || !ckpt || !level || !out_reps)
      throw vqp::UsageError(
          "extract: data dir, checkpoint, level, and output required");
    vqp::pipeline::Extract(data_dir, ckpt, level, out_reps, Str(config),
                           Str(ablation));
  });
}

int vqp_features(vqp_session* s, const char* manifest, const char* out_table,
                 uint64_t seed, int jobs, int no_pitch_scaling) {
  (void)seed;  // feature extraction is deterministic
  return Guard(s, [&] {
    if (!manifest || !out_table)
      throw vqp::UsageError("features: manifest and output table required");
    vqp::pipeline::FeatureOptions opts;
    opts.jobs = jobs;
    opts.no_pitch_scaling = no_pitch_scaling != 0;
    vqp::pipeline::Features(manifest, out_table, opts);
  });
}

int vqp_probe(vqp_session* s, const char* reps, const char* table,
              const char* out_report, uint64_t seed) {
  return Guard(s, [&] {
    if (!reps || !table || !out_report)
      throw vqp::UsageError(
          "probe: representations, feature table, and output required");
    vqp::mdl::ProbeSpec spec;
    spec.seed = seed;
    vqp::pipeline::Probe(reps, table, out_report, spec);
  });
}

int vqp_deid(vqp_session* s, const char* reps_a, const char* reps_b,
             int trials, const char* out_report, uint64_t seed,
             double* ratio_out) {
  return Guard(s, [&] {
    if (!reps_a || !out_report)
      throw vqp::UsageError("deid: representations and output required");
    vqp::mdl::ProbeSpec spec;
    spec.seed = seed;
    const double ratio =
        vqp::pipeline::Deid(reps_a, Str(reps_b), trials, out_report, spec);
    if (ratio_out) *ratio_out = ratio;
  });
}

int vqp_downstream(vqp_session* s, const char* train_reps,
                   const char* test_reps, const char* labels,
                   const char* out_report, uint64_t seed, double* auc_out) {
  return Guard(s, [&] {
    if (!train_reps || !test_reps || !labels || !out_report)
      throw vqp::UsageError(
          "downstream: train/test representations, labels, output required");
    vqp::mdl::ProbeSpec spec;
    spec.seed = seed;
    const double auc = vqp::pipeline::Downstream(train_reps, test_reps, labels,
                                                 out_report, spec);
    if (auc_out) *auc_out = auc;
  });
}

}  // extern "C"
