/* vqp.h — C interface to the VQP prosody pipeline.
 *
 * Copyright 2026 VQP Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
 * implied. See the License for the specific language governing
 * permissions and limitations under the License.
 */

#ifndef VQP_H_
#define VQP_H_

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Every entry point returns one of these codes.  On failure the session
 * keeps a human-readable message, retrievable with vqp_last_error(). */
enum {
  VQP_OK = 0,
  VQP_USAGE_ERROR = 1,   /* bad arguments or malformed invocation */
  VQP_DATA_ERROR = 2,    /* unreadable or inconsistent input data */
  VQP_NUMERIC_ERROR = 3, /* non-finite values or diverged computation */
};

/* Opaque handle that owns per-call error state.  Sessions are cheap and
 * not thread-safe; use one per thread. */
typedef struct vqp_session vqp_session;

vqp_session* vqp_session_create(void);
void vqp_session_destroy(vqp_session* s);

/* Message for the most recent failing call on this session, or an empty
 * string.  The pointer stays valid until the next call on the session. */
const char* vqp_last_error(const vqp_session* s);

/* Reads a word-alignment manifest (JSONL), pitch-normalizes each
 * utterance unless no_pitch_scaling is non-zero, and writes per-utterance
 * word tensors plus index.jsonl into out_dir.  On success stores the
 * number of words written in *words_out (may be NULL). */
int vqp_preprocess(vqp_session* s, const char* manifest, const char* out_dir,
                   uint64_t seed, int jobs, int no_pitch_scaling,
                   int64_t* words_out);

/* Trains the encoder/quantizer/transformer stack on a preprocessed
 * directory.  config may be NULL or "" for built-in defaults; ablation is
 * a comma-separated list of pe, csn, nps, nq, tq or "".  steps_override
 * and seed_override take effect when >= 0.  Checkpoints and metrics.jsonl
 * land in ckpt_dir. */
int vqp_pretrain(vqp_session* s, const char* data_dir, const char* config,
                 const char* ckpt_dir, const char* ablation,
                 int64_t steps_override, int64_t seed_override);

/* Runs a trained checkpoint over a preprocessed directory and writes one
 * representation row per word.  level is one of pe, vq1, vq2, vq3, ctx. */
int vqp_extract(vqp_session* s, const char* data_dir, const char* ckpt,
                const char* level, const char* out_reps, const char* config,
                const char* ablation);

/* Computes acoustic word features from raw audio and writes a JSONL
 * table.  On success stores the number of rows in *rows_out (may be
 * NULL). */
int vqp_features(vqp_session* s, const char* manifest, const char* out_table,
                 uint64_t seed, int jobs, int no_pitch_scaling);

/* Prequential probing of a representation file against a feature table;
 * writes a JSON report. */
int vqp_probe(vqp_session* s, const char* reps, const char* table,
              const char* out_report, uint64_t seed);

/* Speaker-verification codelength audit.  reps_b may be NULL to draw
 * both trial sides from reps_a.  Writes a JSON report; on success stores
 * the de-identification ratio in *ratio_out (may be NULL). */
int vqp_deid(vqp_session* s, const char* reps_a, const char* reps_b,
             int trials, const char* out_report, uint64_t seed,
             double* ratio_out);

/* Trains a probe on pooled train representations and reports test AUC
 * against a JSONL label file.  On success stores the AUC in *auc_out
 * (may be NULL). */
int vqp_downstream(vqp_session* s, const char* train_reps,
                   const char* test_reps, const char* labels,
                   const char* out_report, uint64_t seed, double* auc_out);

#ifdef __cplusplus
}
#endif

#endif /* VQP_H_ */
