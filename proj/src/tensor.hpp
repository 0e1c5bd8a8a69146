// src/tensor.hpp

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

#ifndef VQP_TENSOR_HPP_
#define VQP_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace vqp::ad {

// Dense row-major f32 tensor. `node` indexes the tape that recorded it
// (-1 when untracked). Data is shared so graph lambdas can hold it alive.
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<std::vector<float>> data;
  int node = -1;

  Tensor() = default;

  size_t size() const {
    size_t n = 1;
    for (int e : shape) n *= static_cast<size_t>(e);
    return shape.empty() ? (data ? data->size() : 0) : n;
  }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  float* ptr() { return data->data(); }
  const float* ptr() const { return data->data(); }
  bool tracked() const { return node >= 0; }
  bool scalar() const { return size() == 1; }
  float item() const;

  static Tensor Zeros(std::vector<int> shape);
  static Tensor Full(std::vector<int> shape, float v);
  static Tensor FromVec(std::vector<int> shape, std::vector<float> v);
  static Tensor Scalar(float v);
};

// Trainable tensor plus Adam moment buffers. Grad persists across tapes and
// accumulates until zeroed.
struct Parameter {
  std::string name;
  Tensor value;
  std::shared_ptr<std::vector<float>> grad;
  std::shared_ptr<std::vector<float>> m;
  std::shared_ptr<std::vector<float>> v;
  int64_t step = 0;

  Parameter() = default;
  Parameter(std::string name, Tensor t);

  void ZeroGrad();
};

// Reverse-mode tape. Single-writer; Backward() consumes it.
class Tape {
 public:
  int AddNode(size_t size, std::shared_ptr<std::vector<float>> grad = nullptr);
  void SetBackward(int node, std::function<void()> fn);
  std::shared_ptr<std::vector<float>> GradBuf(int node) { return nodes_[node].grad; }

  // Registers a parameter as a leaf, binding the node gradient to the
  // parameter's own grad buffer. Cached so reuse within one graph shares
  // the node.
  Tensor Leaf(Parameter& p);
  // Leaf for a plain tensor; gradient is retained in `grad_out` if given.
  Tensor Watch(const Tensor& t, std::shared_ptr<std::vector<float>> grad_out = nullptr);

  void Backward(const Tensor& loss);
  bool consumed() const { return consumed_; }
  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct NodeRec {
    std::shared_ptr<std::vector<float>> grad;
    std::function<void()> backward;
  };
  std::vector<NodeRec> nodes_;
  std::unordered_map<const void*, int> leaf_cache_;
  bool consumed_ = false;
};

struct AdamConfig {
  enum Kind { kAdam, kAdamW };
  Kind kind = kAdam;
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.0f;
};

void OptimizerStep(std::span<Parameter* const> params, const AdamConfig& cfg);
void ZeroGrads(std::span<Parameter* const> params);

// Toggle for per-op NaN/Inf scanning (on by default; numeric faults carry
// the op name).
void SetFiniteChecks(bool on);
bool FiniteChecksEnabled();

// Ragged batch: rows of a [N, C] tensor partitioned into segments
// (offsets.size() == segments + 1, offsets.front() == 0, back() == N).
struct Segments {
  std::vector<int> offsets;
  int count() const { return static_cast<int>(offsets.size()) - 1; }
  int len(int s) const { return offsets[s + 1] - offsets[s]; }
};

// ---- op family ------------------------------------------------------------
// All ops: if `tape` is non-null and any input is tracked, the result is
// recorded; otherwise pure forward. Shape mismatches raise UsageError.

Tensor Add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor Sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor Mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor Scale(Tape* tape, const Tensor& a, float s);
Tensor AddBias(Tape* tape, const Tensor& x, const Tensor& bias);
Tensor MatMul(Tape* tape, const Tensor& a, const Tensor& b,
              bool trans_a = false, bool trans_b = false);
Tensor Affine(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor Relu(Tape* tape, const Tensor& x);
Tensor Sigmoid(Tape* tape, const Tensor& x);
Tensor SoftmaxRows(Tape* tape, const Tensor& x);
Tensor LayerNorm(Tape* tape, const Tensor& x, const Tensor& gain,
                 const Tensor& bias, float eps = 1e-5f);
Tensor Dropout(Tape* tape, const Tensor& x, float p, bool train, Rng& rng);
// Causal dilated conv over ragged time segments. x: [N, c_in] frames,
// weight: [kernel * c_in, c_out] (tap-major), left zero padding per segment.
Tensor CausalDilatedConv1d(Tape* tape, const Tensor& x, const Segments& segs,
                           const Tensor& weight, const Tensor& bias,
                           int kernel, int dilation);
// Max over each segment's rows (padding never enters: segments are exact).
Tensor MaxPoolTime(Tape* tape, const Tensor& x, const Segments& segs);
Tensor ConcatRows(Tape* tape, std::span<const Tensor> parts);
Tensor ConcatCols(Tape* tape, const Tensor& a, const Tensor& b);
Tensor SliceCols(Tape* tape, const Tensor& x, int c0, int c1);
Tensor SliceRows(Tape* tape, const Tensor& x, int r0, int r1);
// Rows with mask[i] != 0 are replaced by `emb` (learned mask token).
Tensor ReplaceRows(Tape* tape, const Tensor& x, const std::vector<uint8_t>& mask,
                   const Tensor& emb);
// Cosine similarity of vector c against each row of q: [M] scores.
Tensor CosineScores(Tape* tape, const Tensor& c, const Tensor& q,
                    float norm_eps = 1e-8f);
Tensor CosineSimilarity(Tape* tape, const Tensor& a, const Tensor& b,
                        float norm_eps = 1e-8f);
// -log softmax(logits)[target] for a 1-D logits vector.
Tensor CrossEntropy(Tape* tape, const Tensor& logits, int target);
// Mean binary cross-entropy over logits [N] against float labels.
Tensor BceWithLogits(Tape* tape, const Tensor& logits,
                     const std::vector<float>& labels);
// Sum of squared distance to a constant target (stop-gradient side).
Tensor SqDistToConst(Tape* tape, const Tensor& x, std::span<const float> target);
Tensor Sum(Tape* tape, const Tensor& x);
Tensor Mean(Tape* tape, const Tensor& x);
Tensor MeanScalars(Tape* tape, std::span<const Tensor> scalars);
Tensor AddScalars(Tape* tape, const Tensor& a, const Tensor& b, float weight_b);
Tensor L2Norm(Tape* tape, const Tensor& x);
// Forward emits `values`; backward copies the gradient straight through to x.
Tensor StraightThrough(Tape* tape, const Tensor& x, std::span<const float> values);

// ---- checkpoint I/O -------------------------------------------------------
// Format: magic "VQPT", u32 version, u32 count, then per tensor:
// u32 name length, UTF-8 name, u32 rank, u64 extents, f32 LE payload.

void SaveCheckpoint(const std::string& path,
                    const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> LoadCheckpoint(const std::string& path);

// Bundles a parameter set into checkpoint tensors (optimizer state under
// suffixed names ".adam_m", ".adam_v", ".step") and back.
std::map<std::string, Tensor> PackParameters(std::span<Parameter* const> params);
void UnpackParameters(const std::map<std::string, Tensor>& dict,
                      std::span<Parameter* const> params);

// Weight init helpers.
void KaimingUniform(Tensor& t, int fan_in, Rng& rng);
void XavierUniform(Tensor& t, int fan_in, int fan_out, Rng& rng);

}  // namespace vqp::ad

#endif  // VQP_TENSOR_HPP_
