// src/tensor.cpp

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

#include "tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace vqp::ad {

namespace {

bool g_finite_checks = true;

void CheckFinite(const char* op, const std::vector<float>& v) {
  if (!g_finite_checks) return;
  // Branch-free max-|x| reduction vectorizes; Inf fails the final
  // comparison directly and NaN is forced into the accumulator.
  float acc = 0.0f;
  for (float x : v) {
    const float a = std::fabs(x);
    if (a > acc) acc = a;  // NaN compares false here, handled next
    if (x != x) acc = x;
  }
  if (!std::isfinite(acc)) {
    throw NumericError(std::string("non-finite value produced by op '") + op +
                       "'");
  }
}

void RequireSameShape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) {
    throw UsageError(std::string(op) + ": shape mismatch");
  }
}

bool Record(Tape* tape, const Tensor& a) { return tape && a.tracked(); }
bool Record(Tape* tape, const Tensor& a, const Tensor& b) {
  return tape && (a.tracked() || b.tracked());
}

Tensor MakeOut(std::vector<int> shape) {
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<float>>(t.size(), 0.0f);
  return t;
}

void Gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a,
          int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

void Axpy(size_t n, float alpha, const float* x, float* y) {
  cblas_saxpy(static_cast<int>(n), alpha, x, 1, y, 1);
}

}  // namespace

void SetFiniteChecks(bool on) { g_finite_checks = on; }
bool FiniteChecksEnabled() { return g_finite_checks; }

float Tensor::item() const {
  if (!scalar()) throw UsageError("item(): tensor is not scalar");
  return (*data)[0];
}

Tensor Tensor::Zeros(std::vector<int> shape) { return MakeOut(std::move(shape)); }

Tensor Tensor::Full(std::vector<int> shape, float v) {
  Tensor t = MakeOut(std::move(shape));
  std::fill(t.data->begin(), t.data->end(), v);
  return t;
}

Tensor Tensor::FromVec(std::vector<int> shape, std::vector<float> v) {
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<float>>(std::move(v));
  if (t.size() != t.data->size()) throw UsageError("FromVec: shape/data mismatch");
  return t;
}

Tensor Tensor::Scalar(float v) { return FromVec({1}, {v}); }

Parameter::Parameter(std::string name_in, Tensor t) {
  name = std::move(name_in);
  value = std::move(t);
  size_t n = value.size();
  grad = std::make_shared<std::vector<float>>(n, 0.0f);
  m = std::make_shared<std::vector<float>>(n, 0.0f);
  v = std::make_shared<std::vector<float>>(n, 0.0f);
}

void Parameter::ZeroGrad() { std::fill(grad->begin(), grad->end(), 0.0f); }

int Tape::AddNode(size_t size, std::shared_ptr<std::vector<float>> grad) {
  if (consumed_) throw UsageError("tape already consumed by backward()");
  NodeRec rec;
  rec.grad = grad ? std::move(grad)
                  : std::make_shared<std::vector<float>>(size, 0.0f);
  nodes_.push_back(std::move(rec));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::SetBackward(int node, std::function<void()> fn) {
  nodes_[node].backward = std::move(fn);
}

Tensor Tape::Leaf(Parameter& p) {
  auto it = leaf_cache_.find(&p);
  Tensor t = p.value;
  if (it != leaf_cache_.end()) {
    t.node = it->second;
    return t;
  }
  t.node = AddNode(t.size(), p.grad);
  leaf_cache_[&p] = t.node;
  return t;
}

Tensor Tape::Watch(const Tensor& t, std::shared_ptr<std::vector<float>> grad_out) {
  Tensor out = t;
  if (grad_out && grad_out->size() != t.size()) {
    throw UsageError("Watch: grad buffer size mismatch");
  }
  out.node = AddNode(t.size(), std::move(grad_out));
  return out;
}

void Tape::Backward(const Tensor& loss) {
  if (consumed_) throw UsageError("tape already consumed by backward()");
  if (!loss.scalar()) throw UsageError("backward() requires a scalar loss");
  if (!loss.tracked()) throw UsageError("backward(): loss is not on this tape");
  (*nodes_[loss.node].grad)[0] = 1.0f;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    if (nodes_[i].backward) nodes_[i].backward();
    nodes_[i].backward = nullptr;  // release captured activations early
  }
  consumed_ = true;
}

void ZeroGrads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->ZeroGrad();
}

void OptimizerStep(std::span<Parameter* const> params, const AdamConfig& cfg) {
  for (Parameter* p : params) {
    if (!p->grad) throw UsageError("optimizer step: parameter '" + p->name + "' has no gradient");
    p->step += 1;
    const float b1 = cfg.beta1, b2 = cfg.beta2;
    const float inv_bc1 =
        static_cast<float>(1.0 / (1.0 - std::pow(static_cast<double>(b1), static_cast<double>(p->step))));
    const float inv_bc2 =
        static_cast<float>(1.0 / (1.0 - std::pow(static_cast<double>(b2), static_cast<double>(p->step))));
    // Branches hoisted out of the hot loop so it vectorizes.
    const float wd_l2 = (cfg.kind == AdamConfig::kAdam) ? cfg.weight_decay : 0.0f;
    const float wd_decoupled = (cfg.kind == AdamConfig::kAdamW) ? cfg.weight_decay : 0.0f;
    const float eps = cfg.eps, lr = cfg.lr;
    float* w = p->value.ptr();
    const float* g0 = p->grad->data();
    float* m = p->m->data();
    float* v = p->v->data();
    const size_t n = p->value.size();
    for (size_t i = 0; i < n; ++i) {
      const float g = g0[i] + wd_l2 * w[i];  // classic L2-coupled decay
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = b2 * v[i] + (1.0f - b2) * g * g;
      const float upd = (m[i] * inv_bc1) / (std::sqrt(v[i] * inv_bc2) + eps) +
                        wd_decoupled * w[i];  // decoupled decay
      w[i] -= lr * upd;
    }
    CheckFinite("optimizer_step", *p->value.data);
  }
}

// ---- elementwise ----------------------------------------------------------

Tensor Add(Tape* tape, const Tensor& a, const Tensor& b) {
  RequireSameShape("add", a, b);
  Tensor out = MakeOut(a.shape);
  for (size_t i = 0; i < out.size(); ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
  CheckFinite("add", *out.data);
  if (Record(tape, a, b)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto ag = a.tracked() ? tape->GradBuf(a.node) : nullptr;
    auto bg = b.tracked() ? tape->GradBuf(b.node) : nullptr;
    tape->SetBackward(out.node, [og, ag, bg] {
      if (ag) Axpy(og->size(), 1.0f, og->data(), ag->data());
      if (bg) Axpy(og->size(), 1.0f, og->data(), bg->data());
    });
  }
  return out;
}

Tensor Sub(Tape* tape, const Tensor& a, const Tensor& b) {
  RequireSameShape("sub", a, b);
  Tensor out = MakeOut(a.shape);
  for (size_t i = 0; i < out.size(); ++i) (*out.data)[i] = (*a.data)[i] - (*b.data)[i];
  CheckFinite("sub", *out.data);
  if (Record(tape, a, b)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto ag = a.tracked() ? tape->GradBuf(a.node) : nullptr;
    auto bg = b.tracked() ? tape->GradBuf(b.node) : nullptr;
    tape->SetBackward(out.node, [og, ag, bg] {
      if (ag) Axpy(og->size(), 1.0f, og->data(), ag->data());
      if (bg) Axpy(og->size(), -1.0f, og->data(), bg->data());
    });
  }
  return out;
}

Tensor Mul(Tape* tape, const Tensor& a, const Tensor& b) {
  RequireSameShape("mul", a, b);
  Tensor out = MakeOut(a.shape);
  for (size_t i = 0; i < out.size(); ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
  CheckFinite("mul", *out.data);
  if (Record(tape, a, b)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto ag = a.tracked() ? tape->GradBuf(a.node) : nullptr;
    auto bg = b.tracked() ? tape->GradBuf(b.node) : nullptr;
    auto ad = a.data, bd = b.data;
    tape->SetBackward(out.node, [og, ag, bg, ad, bd] {
      for (size_t i = 0; i < og->size(); ++i) {
        if (ag) (*ag)[i] += (*og)[i] * (*bd)[i];
        if (bg) (*bg)[i] += (*og)[i] * (*ad)[i];
      }
    });
  }
  return out;
}

Tensor Scale(Tape* tape, const Tensor& a, float s) {
  Tensor out = MakeOut(a.shape);
  for (size_t i = 0; i < out.size(); ++i) (*out.data)[i] = (*a.data)[i] * s;
  CheckFinite("scale", *out.data);
  if (Record(tape, a)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto ag = tape->GradBuf(a.node);
    tape->SetBackward(out.node, [og, ag, s] {
      Axpy(og->size(), s, og->data(), ag->data());
    });
  }
  return out;
}

Tensor AddBias(Tape* tape, const Tensor& x, const Tensor& bias) {
  const int n = x.rows(), c = x.cols();
  if (static_cast<int>(bias.size()) != c) throw UsageError("add_bias: width mismatch");
  Tensor out = MakeOut(x.shape);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      (*out.data)[i * c + j] = (*x.data)[i * c + j] + (*bias.data)[j];
  CheckFinite("add_bias", *out.data);
  if (Record(tape, x, bias)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto xg = x.tracked() ? tape->GradBuf(x.node) : nullptr;
    auto bg = bias.tracked() ? tape->GradBuf(bias.node) : nullptr;
    tape->SetBackward(out.node, [og, xg, bg, n, c] {
      if (xg) Axpy(og->size(), 1.0f, og->data(), xg->data());
      if (bg) {
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < c; ++j) (*bg)[j] += (*og)[i * c + j];
      }
    });
  }
  return out;
}

// ---- matmul / affine ------------------------------------------------------

Tensor MatMul(Tape* tape, const Tensor& a, const Tensor& b, bool trans_a,
              bool trans_b) {
  if (a.shape.size() != 2 || b.shape.size() != 2)
    throw UsageError("matmul: operands must be rank 2");
  const int am = a.shape[0], an = a.shape[1];
  const int bm = b.shape[0], bn = b.shape[1];
  const int m = trans_a ? an : am;
  const int k = trans_a ? am : an;
  const int kb = trans_b ? bn : bm;
  const int n = trans_b ? bm : bn;
  if (k != kb) throw UsageError("matmul: inner dimensions disagree");
  Tensor out = MakeOut({m, n});
  Gemm(trans_a, trans_b, m, n, k, 1.0f, a.ptr(), an, b.ptr(), bn, 0.0f,
       out.ptr(), n);
  CheckFinite("matmul", *out.data);
  if (Record(tape, a, b)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto ag = a.tracked() ? tape->GradBuf(a.node) : nullptr;
    auto bg = b.tracked() ? tape->GradBuf(b.node) : nullptr;
    auto ad = a.data, bd = b.data;
    tape->SetBackward(out.node, [=] {
      const float* dc = og->data();
      if (ag) {
        // dA: four trans cases
        if (!trans_a && !trans_b)
          Gemm(false, true, am, an, n, 1.0f, dc, n, bd->data(), bn, 1.0f, ag->data(), an);
        else if (!trans_a && trans_b)
          Gemm(false, false, am, an, n, 1.0f, dc, n, bd->data(), bn, 1.0f, ag->data(), an);
        else if (trans_a && !trans_b)
          Gemm(false, true, am, an, m, 1.0f, bd->data(), bn, dc, n, 1.0f, ag->data(), an);
        else
          Gemm(true, true, am, an, m, 1.0f, bd->data(), bn, dc, n, 1.0f, ag->data(), an);
      }
      if (bg) {
        if (!trans_a && !trans_b)
          Gemm(true, false, bm, bn, m, 1.0f, ad->data(), an, dc, n, 1.0f, bg->data(), bn);
        else if (!trans_a && trans_b)
          Gemm(true, false, bm, bn, n, 1.0f, dc, n, ad->data(), an, 1.0f, bg->data(), bn);
        else if (trans_a && !trans_b)
          Gemm(false, false, bm, bn, m, 1.0f, ad->data(), an, dc, n, 1.0f, bg->data(), bn);
        else
          Gemm(true, true, bm, bn, n, 1.0f, dc, n, ad->data(), an, 1.0f, bg->data(), bn);
      }
    });
  }
  return out;
}

Tensor Affine(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& bias) {
  return AddBias(tape, MatMul(tape, x, w), bias);
}

// ---- nonlinearities -------------------------------------------------------

Tensor Relu(Tape* tape, const Tensor& x) {
  Tensor out = MakeOut(x.shape);
  for (size_t i = 0; i < out.size(); ++i)
    (*out.data)[i] = std::max(0.0f, (*x.data)[i]);
  if (Record(tape, x)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto xg = tape->GradBuf(x.node);
    auto xd = x.data;
    tape->SetBackward(out.node, [og, xg, xd] {
      for (size_t i = 0; i < og->size(); ++i)
        if ((*xd)[i] > 0.0f) (*xg)[i] += (*og)[i];
    });
  }
  return out;
}

Tensor Sigmoid(Tape* tape, const Tensor& x) {
  Tensor out = MakeOut(x.shape);
  for (size_t i = 0; i < out.size(); ++i)
    (*out.data)[i] = 1.0f / (1.0f + std::exp(-(*x.data)[i]));
  if (Record(tape, x)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto xg = tape->GradBuf(x.node);
    auto od = out.data;
    tape->SetBackward(out.node, [og, xg, od] {
      for (size_t i = 0; i < og->size(); ++i)
        (*xg)[i] += (*og)[i] * (*od)[i] * (1.0f - (*od)[i]);
    });
  }
  return out;
}

Tensor SoftmaxRows(Tape* tape, const Tensor& x) {
  const int n = x.rows(), c = x.cols();
  Tensor out = MakeOut(x.shape);
  for (int i = 0; i < n; ++i) {
    const float* row = x.ptr() + static_cast<size_t>(i) * c;
    float* o = out.ptr() + static_cast<size_t>(i) * c;
    float mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      o[j] = std::exp(row[j] - mx);
      s += o[j];
    }
    const float inv = static_cast<float>(1.0 / s);
    for (int j = 0; j < c; ++j) o[j] *= inv;
  }
  CheckFinite("softmax", *out.data);
  if (Record(tape, x)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto xg = tape->GradBuf(x.node);
    auto od = out.data;
    tape->SetBackward(out.node, [og, xg, od, n, c] {
      for (int i = 0; i < n; ++i) {
        const float* y = od->data() + static_cast<size_t>(i) * c;
        const float* dy = og->data() + static_cast<size_t>(i) * c;
        float* dx = xg->data() + static_cast<size_t>(i) * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += static_cast<double>(dy[j]) * y[j];
        for (int j = 0; j < c; ++j)
          dx[j] += y[j] * (dy[j] - static_cast<float>(dot));
      }
    });
  }
  return out;
}

Tensor LayerNorm(Tape* tape, const Tensor& x, const Tensor& gain,
                 const Tensor& bias, float eps) {
  const int n = x.rows(), c = x.cols();
  if (static_cast<int>(gain.size()) != c || static_cast<int>(bias.size()) != c)
    throw UsageError("layer_norm: gain/bias width mismatch");
  Tensor out = MakeOut(x.shape);
  auto xhat = std::make_shared<std::vector<float>>(x.size());
  auto inv_std = std::make_shared<std::vector<float>>(n);
  for (int i = 0; i < n; ++i) {
    const float* row = x.ptr() + static_cast<size_t>(i) * c;
    double mean = 0.0;
    for (int j = 0; j < c; ++j) mean += row[j];
    mean /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      double d = row[j] - mean;
      var += d * d;
    }
    var /= c;
    const float is = static_cast<float>(1.0 / std::sqrt(var + eps));
    (*inv_std)[i] = is;
    float* xh = xhat->data() + static_cast<size_t>(i) * c;
    float* o = out.ptr() + static_cast<size_t>(i) * c;
    for (int j = 0; j < c; ++j) {
      xh[j] = static_cast<float>((row[j] - mean) * is);
      o[j] = xh[j] * (*gain.data)[j] + (*bias.data)[j];
    }
  }
  CheckFinite("layer_norm", *out.data);
  if (Record(tape, x) || Record(tape, gain, bias)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto xg = x.tracked() ? tape->GradBuf(x.node) : nullptr;
    auto gg = gain.tracked() ? tape->GradBuf(gain.node) : nullptr;
    auto bg = bias.tracked() ? tape->GradBuf(bias.node) : nullptr;
    auto gd = gain.data;
    tape->SetBackward(out.node, [=] {
      for (int i = 0; i < n; ++i) {
        const float* dy = og->data() + static_cast<size_t>(i) * c;
        const float* xh = xhat->data() + static_cast<size_t>(i) * c;
        if (gg || bg) {
          for (int j = 0; j < c; ++j) {
            if (gg) (*gg)[j] += dy[j] * xh[j];
            if (bg) (*bg)[j] += dy[j];
          }
        }
        if (xg) {
          double sum_dxh = 0.0, sum_dxh_xh = 0.0;
          for (int j = 0; j < c; ++j) {
            double dxh = static_cast<double>(dy[j]) * (*gd)[j];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh[j];
          }
          float* dx = xg->data() + static_cast<size_t>(i) * c;
          const float is = (*inv_std)[i];
          for (int j = 0; j < c; ++j) {
            double dxh = static_cast<double>(dy[j]) * (*gd)[j];
            dx[j] += static_cast<float>(
                is * (dxh - sum_dxh / c - xh[j] * sum_dxh_xh / c));
          }
        }
      }
    });
  }
  return out;
}

Tensor Dropout(Tape* tape, const Tensor& x, float p, bool train, Rng& rng) {
  if (p < 0.0f || p >= 1.0f) throw UsageError("dropout: p must be in [0, 1)");
  if (!train || p == 0.0f) return x;  // eval-mode dropout is identity
  Tensor out = MakeOut(x.shape);
  auto mask = std::make_shared<std::vector<float>>(x.size());
  const float scale = 1.0f / (1.0f - p);  // inverted dropout
  for (size_t i = 0; i < x.size(); ++i) {
    (*mask)[i] = rng.Bernoulli(p) ? 0.0f : scale;
    (*out.data)[i] = (*x.data)[i] * (*mask)[i];
  }
  if (Record(tape, x)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto xg = tape->GradBuf(x.node);
    tape->SetBackward(out.node, [og, xg, mask] {
      for (size_t i = 0; i < og->size(); ++i) (*xg)[i] += (*og)[i] * (*mask)[i];
    });
  }
  return out;
}

// ---- convolution / pooling ------------------------------------------------

Tensor CausalDilatedConv1d(Tape* tape, const Tensor& x, const Segments& segs,
                           const Tensor& weight, const Tensor& bias, int kernel,
                           int dilation) {
  const int n = x.rows(), c_in = x.cols();
  if (weight.shape.size() != 2 || weight.shape[0] != kernel * c_in)
    throw UsageError("causal_dilated_conv1d: weight must be [kernel*c_in, c_out]");
  const int c_out = weight.shape[1];
  if (segs.offsets.empty() || segs.offsets.front() != 0 || segs.offsets.back() != n)
    throw UsageError("causal_dilated_conv1d: bad segment offsets");
  // im2col with per-segment causal left-zero padding, then one gemm.
  auto col = std::make_shared<std::vector<float>>(
      static_cast<size_t>(n) * kernel * c_in, 0.0f);
  for (int s = 0; s < segs.count(); ++s) {
    const int base = segs.offsets[s], len = segs.len(s);
    for (int t = 0; t < len; ++t) {
      float* crow = col->data() + static_cast<size_t>(base + t) * kernel * c_in;
      for (int j = 0; j < kernel; ++j) {
        const int src = t - j * dilation;
        if (src < 0) continue;  // left zero padding
        std::memcpy(crow + static_cast<size_t>(j) * c_in,
                    x.ptr() + static_cast<size_t>(base + src) * c_in,
                    sizeof(float) * c_in);
      }
    }
  }
  Tensor out = MakeOut({n, c_out});
  Gemm(false, false, n, c_out, kernel * c_in, 1.0f, col->data(), kernel * c_in,
       weight.ptr(), c_out, 0.0f, out.ptr(), c_out);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c_out; ++j) (*out.data)[static_cast<size_t>(i) * c_out + j] += (*bias.data)[j];
  CheckFinite("causal_dilated_conv1d", *out.data);
  if (Record(tape, x, weight) || Record(tape, bias)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto xg = x.tracked() ? tape->GradBuf(x.node) : nullptr;
    auto wg = weight.tracked() ? tape->GradBuf(weight.node) : nullptr;
    auto bg = bias.tracked() ? tape->GradBuf(bias.node) : nullptr;
    auto wd = weight.data;
    auto offsets = segs.offsets;
    tape->SetBackward(out.node, [=] {
      const float* dy = og->data();
      if (bg) {
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < c_out; ++j) (*bg)[j] += dy[static_cast<size_t>(i) * c_out + j];
      }
      if (wg) {
        Gemm(true, false, kernel * c_in, c_out, n, 1.0f, col->data(),
             kernel * c_in, dy, c_out, 1.0f, wg->data(), c_out);
      }
      if (xg) {
        std::vector<float> dcol(static_cast<size_t>(n) * kernel * c_in);
        Gemm(false, true, n, kernel * c_in, c_out, 1.0f, dy, c_out, wd->data(),
             c_out, 0.0f, dcol.data(), kernel * c_in);
        for (size_t s = 0; s + 1 < offsets.size(); ++s) {
          const int base = offsets[s], len = offsets[s + 1] - offsets[s];
          for (int t = 0; t < len; ++t) {
            const float* crow = dcol.data() + static_cast<size_t>(base + t) * kernel * c_in;
            for (int j = 0; j < kernel; ++j) {
              const int src = t - j * dilation;
              if (src < 0) continue;
              Axpy(c_in, 1.0f, crow + static_cast<size_t>(j) * c_in,
                   xg->data() + static_cast<size_t>(base + src) * c_in);
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor MaxPoolTime(Tape* tape, const Tensor& x, const Segments& segs) {
  const int n = x.rows(), c = x.cols();
  if (segs.offsets.empty() || segs.offsets.back() != n)
    throw UsageError("max_pool_time: bad segment offsets");
  const int s_count = segs.count();
  Tensor out = MakeOut({s_count, c});
  auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(s_count) * c);
  for (int s = 0; s < s_count; ++s) {
    const int base = segs.offsets[s], len = segs.len(s);
    if (len <= 0) throw UsageError("max_pool_time: empty segment");
    for (int j = 0; j < c; ++j) {
      float best = -std::numeric_limits<float>::infinity();
      int best_t = base;
      for (int t = base; t < base + len; ++t) {
        const float v = (*x.data)[static_cast<size_t>(t) * c + j];
        if (v > best) {
          best = v;
          best_t = t;
        }
      }
      (*out.data)[static_cast<size_t>(s) * c + j] = best;
      (*argmax)[static_cast<size_t>(s) * c + j] = best_t;
    }
  }
  if (Record(tape, x)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto xg = tape->GradBuf(x.node);
    tape->SetBackward(out.node, [og, xg, argmax, s_count, c] {
      for (int s = 0; s < s_count; ++s)
        for (int j = 0; j < c; ++j) {
          const size_t k = static_cast<size_t>(s) * c + j;
          (*xg)[static_cast<size_t>((*argmax)[k]) * c + j] += (*og)[k];
        }
    });
  }
  return out;
}

// ---- shape plumbing -------------------------------------------------------

Tensor ConcatRows(Tape* tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw UsageError("concat_rows: no inputs");
  const int c = parts[0].cols();
  int n = 0;
  bool any_tracked = false;
  for (const Tensor& p : parts) {
    if (p.cols() != c) throw UsageError("concat_rows: width mismatch");
    n += p.rows();
    any_tracked = any_tracked || p.tracked();
  }
  Tensor out = MakeOut({n, c});
  int r = 0;
  for (const Tensor& p : parts) {
    std::memcpy(out.ptr() + static_cast<size_t>(r) * c, p.ptr(),
                sizeof(float) * p.size());
    r += p.rows();
  }
  if (tape && any_tracked) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    struct Piece { std::shared_ptr<std::vector<float>> grad; int row0, rows; };
    auto pieces = std::make_shared<std::vector<Piece>>();
    r = 0;
    for (const Tensor& p : parts) {
      if (p.tracked()) pieces->push_back({tape->GradBuf(p.node), r, p.rows()});
      r += p.rows();
    }
    tape->SetBackward(out.node, [og, pieces, c] {
      for (const auto& p : *pieces)
        Axpy(static_cast<size_t>(p.rows) * c, 1.0f,
             og->data() + static_cast<size_t>(p.row0) * c, p.grad->data());
    });
  }
  return out;
}

Tensor ConcatCols(Tape* tape, const Tensor& a, const Tensor& b) {
  const int n = a.rows();
  if (b.rows() != n) throw UsageError("concat_cols: row mismatch");
  const int ca = a.cols(), cb = b.cols();
  Tensor out = MakeOut({n, ca + cb});
  for (int i = 0; i < n; ++i) {
    std::memcpy(out.ptr() + static_cast<size_t>(i) * (ca + cb),
                a.ptr() + static_cast<size_t>(i) * ca, sizeof(float) * ca);
    std::memcpy(out.ptr() + static_cast<size_t>(i) * (ca + cb) + ca,
                b.ptr() + static_cast<size_t>(i) * cb, sizeof(float) * cb);
  }
  if (Record(tape, a, b)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto ag = a.tracked() ? tape->GradBuf(a.node) : nullptr;
    auto bg = b.tracked() ? tape->GradBuf(b.node) : nullptr;
    tape->SetBackward(out.node, [og, ag, bg, n, ca, cb] {
      for (int i = 0; i < n; ++i) {
        if (ag)
          Axpy(ca, 1.0f, og->data() + static_cast<size_t>(i) * (ca + cb),
               ag->data() + static_cast<size_t>(i) * ca);
        if (bg)
          Axpy(cb, 1.0f, og->data() + static_cast<size_t>(i) * (ca + cb) + ca,
               bg->data() + static_cast<size_t>(i) * cb);
      }
    });
  }
  return out;
}

Tensor SliceCols(Tape* tape, const Tensor& x, int c0, int c1) {
  const int n = x.rows(), c = x.cols();
  if (c0 < 0 || c1 > c || c0 >= c1) throw UsageError("slice_cols: bad range");
  const int w = c1 - c0;
  Tensor out = MakeOut({n, w});
  for (int i = 0; i < n; ++i)
    std::memcpy(out.ptr() + static_cast<size_t>(i) * w,
                x.ptr() + static_cast<size_t>(i) * c + c0, sizeof(float) * w);
  if (Record(tape, x)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto xg = tape->GradBuf(x.node);
    tape->SetBackward(out.node, [og, xg, n, c, c0, w] {
      for (int i = 0; i < n; ++i)
        Axpy(w, 1.0f, og->data() + static_cast<size_t>(i) * w,
             xg->data() + static_cast<size_t>(i) * c + c0);
    });
  }
  return out;
}

Tensor SliceRows(Tape* tape, const Tensor& x, int r0, int r1) {
  const int n = x.rows(), c = x.cols();
  if (r0 < 0 || r1 > n || r0 >= r1) throw UsageError("slice_rows: bad range");
  const int h = r1 - r0;
  Tensor out = MakeOut({h, c});
  std::memcpy(out.ptr(), x.ptr() + static_cast<size_t>(r0) * c,
              sizeof(float) * out.size());
  if (Record(tape, x)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto xg = tape->GradBuf(x.node);
    tape->SetBackward(out.node, [og, xg, r0, c] {
      Axpy(og->size(), 1.0f, og->data(), xg->data() + static_cast<size_t>(r0) * c);
    });
  }
  return out;
}

Tensor ReplaceRows(Tape* tape, const Tensor& x, const std::vector<uint8_t>& mask,
                   const Tensor& emb) {
  const int n = x.rows(), c = x.cols();
  if (static_cast<int>(mask.size()) != n) throw UsageError("replace_rows: mask size mismatch");
  if (static_cast<int>(emb.size()) != c) throw UsageError("replace_rows: embedding width mismatch");
  Tensor out = MakeOut(x.shape);
  for (int i = 0; i < n; ++i) {
    const float* src = mask[i] ? emb.ptr() : x.ptr() + static_cast<size_t>(i) * c;
    std::memcpy(out.ptr() + static_cast<size_t>(i) * c, src, sizeof(float) * c);
  }
  if (Record(tape, x, emb)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto xg = x.tracked() ? tape->GradBuf(x.node) : nullptr;
    auto eg = emb.tracked() ? tape->GradBuf(emb.node) : nullptr;
    tape->SetBackward(out.node, [og, xg, eg, mask, n, c] {
      for (int i = 0; i < n; ++i) {
        const float* dy = og->data() + static_cast<size_t>(i) * c;
        if (mask[i]) {
          if (eg) Axpy(c, 1.0f, dy, eg->data());
        } else if (xg) {
          Axpy(c, 1.0f, dy, xg->data() + static_cast<size_t>(i) * c);
        }
      }
    });
  }
  return out;
}

// ---- similarity / losses --------------------------------------------------

Tensor CosineScores(Tape* tape, const Tensor& c, const Tensor& q, float norm_eps) {
  const int dim = static_cast<int>(c.size());
  const int m = q.rows();
  if (q.cols() != dim) throw UsageError("cosine_scores: dimension mismatch");
  Tensor out = MakeOut({m});
  double cn2 = 0.0;
  for (int j = 0; j < dim; ++j) cn2 += static_cast<double>((*c.data)[j]) * (*c.data)[j];
  const double cn = std::sqrt(cn2) + norm_eps;
  auto qnorms = std::make_shared<std::vector<double>>(m);
  for (int i = 0; i < m; ++i) {
    const float* row = q.ptr() + static_cast<size_t>(i) * dim;
    double qn2 = 0.0, dot = 0.0;
    for (int j = 0; j < dim; ++j) {
      qn2 += static_cast<double>(row[j]) * row[j];
      dot += static_cast<double>(row[j]) * (*c.data)[j];
    }
    (*qnorms)[i] = std::sqrt(qn2) + norm_eps;
    (*out.data)[i] = static_cast<float>(dot / (cn * (*qnorms)[i]));
  }
  CheckFinite("cosine_scores", *out.data);
  if (Record(tape, c, q)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto cg = c.tracked() ? tape->GradBuf(c.node) : nullptr;
    auto qg = q.tracked() ? tape->GradBuf(q.node) : nullptr;
    auto cd = c.data, qd = q.data;
    auto od = out.data;
    tape->SetBackward(out.node, [=] {
      for (int i = 0; i < m; ++i) {
        const float ds = (*og)[i];
        if (ds == 0.0f) continue;
        const float* row = qd->data() + static_cast<size_t>(i) * dim;
        const double qn = (*qnorms)[i];
        const double s = (*od)[i];
        // d cos / dc = q/(|c||q|) - s * c/|c|^2 ; symmetric for q.
        for (int j = 0; j < dim; ++j) {
          if (cg)
            (*cg)[j] += static_cast<float>(ds * (row[j] / (cn * qn) - s * (*cd)[j] / (cn * cn)));
          if (qg)
            (*qg)[static_cast<size_t>(i) * dim + j] += static_cast<float>(
                ds * ((*cd)[j] / (cn * qn) - s * row[j] / (qn * qn)));
        }
      }
    });
  }
  return out;
}

Tensor CosineSimilarity(Tape* tape, const Tensor& a, const Tensor& b, float norm_eps) {
  Tensor brow = b;
  brow.shape = {1, static_cast<int>(b.size())};
  return CosineScores(tape, a, brow, norm_eps);
}

Tensor CrossEntropy(Tape* tape, const Tensor& logits, int target) {
  const int m = static_cast<int>(logits.size());
  if (target < 0 || target >= m) throw UsageError("cross_entropy: target out of range");
  float mx = (*logits.data)[0];
  for (int j = 1; j < m; ++j) mx = std::max(mx, (*logits.data)[j]);
  double z = 0.0;
  for (int j = 0; j < m; ++j) z += std::exp(static_cast<double>((*logits.data)[j]) - mx);
  const double logz = std::log(z) + mx;
  Tensor out = Tensor::Scalar(static_cast<float>(logz - (*logits.data)[target]));
  CheckFinite("cross_entropy", *out.data);
  if (Record(tape, logits)) {
    out.node = tape->AddNode(1);
    auto og = tape->GradBuf(out.node);
    auto lg = tape->GradBuf(logits.node);
    auto ld = logits.data;
    tape->SetBackward(out.node, [og, lg, ld, logz, target, m] {
      const float d = (*og)[0];
      for (int j = 0; j < m; ++j) {
        float p = static_cast<float>(std::exp(static_cast<double>((*ld)[j]) - logz));
        (*lg)[j] += d * (p - (j == target ? 1.0f : 0.0f));
      }
    });
  }
  return out;
}

Tensor BceWithLogits(Tape* tape, const Tensor& logits,
                     const std::vector<float>& labels) {
  const int n = static_cast<int>(logits.size());
  if (static_cast<int>(labels.size()) != n)
    throw UsageError("bce_with_logits: label count mismatch");
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = (*logits.data)[i];
    // softplus(z) - y*z, numerically stable
    const double sp = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    total += sp - labels[i] * z;
  }
  Tensor out = Tensor::Scalar(static_cast<float>(total / n));
  CheckFinite("bce_with_logits", *out.data);
  if (Record(tape, logits)) {
    out.node = tape->AddNode(1);
    auto og = tape->GradBuf(out.node);
    auto lg = tape->GradBuf(logits.node);
    auto ld = logits.data;
    tape->SetBackward(out.node, [og, lg, ld, labels, n] {
      const float d = (*og)[0] / n;
      for (int i = 0; i < n; ++i) {
        const float s = 1.0f / (1.0f + std::exp(-(*ld)[i]));
        (*lg)[i] += d * (s - labels[i]);
      }
    });
  }
  return out;
}

Tensor SqDistToConst(Tape* tape, const Tensor& x, std::span<const float> target) {
  if (x.size() != target.size()) throw UsageError("sq_dist: size mismatch");
  double total = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = (*x.data)[i] - target[i];
    total += d * d;
  }
  Tensor out = Tensor::Scalar(static_cast<float>(total));
  if (Record(tape, x)) {
    out.node = tape->AddNode(1);
    auto og = tape->GradBuf(out.node);
    auto xg = tape->GradBuf(x.node);
    auto xd = x.data;
    std::vector<float> tgt(target.begin(), target.end());
    tape->SetBackward(out.node, [og, xg, xd, tgt = std::move(tgt)] {
      const float d = (*og)[0];
      for (size_t i = 0; i < xd->size(); ++i)
        (*xg)[i] += d * 2.0f * ((*xd)[i] - tgt[i]);
    });
  }
  return out;
}

Tensor Sum(Tape* tape, const Tensor& x) {
  double s = 0.0;
  for (float v : *x.data) s += v;
  Tensor out = Tensor::Scalar(static_cast<float>(s));
  if (Record(tape, x)) {
    out.node = tape->AddNode(1);
    auto og = tape->GradBuf(out.node);
    auto xg = tape->GradBuf(x.node);
    tape->SetBackward(out.node, [og, xg] {
      const float d = (*og)[0];
      for (float& g : *xg) g += d;
    });
  }
  return out;
}

Tensor Mean(Tape* tape, const Tensor& x) {
  return Scale(tape, Sum(tape, x), 1.0f / static_cast<float>(x.size()));
}

Tensor MeanScalars(Tape* tape, std::span<const Tensor> scalars) {
  if (scalars.empty()) throw UsageError("mean_scalars: empty");
  double s = 0.0;
  bool any_tracked = false;
  for (const Tensor& t : scalars) {
    s += t.item();
    any_tracked = any_tracked || t.tracked();
  }
  const int n = static_cast<int>(scalars.size());
  Tensor out = Tensor::Scalar(static_cast<float>(s / n));
  if (tape && any_tracked) {
    out.node = tape->AddNode(1);
    auto og = tape->GradBuf(out.node);
    auto grads = std::make_shared<std::vector<std::shared_ptr<std::vector<float>>>>();
    for (const Tensor& t : scalars)
      if (t.tracked()) grads->push_back(tape->GradBuf(t.node));
    tape->SetBackward(out.node, [og, grads, n] {
      const float d = (*og)[0] / n;
      for (auto& g : *grads) (*g)[0] += d;
    });
  }
  return out;
}

Tensor AddScalars(Tape* tape, const Tensor& a, const Tensor& b, float weight_b) {
  Tensor out = Tensor::Scalar(a.item() + weight_b * b.item());
  if (Record(tape, a, b)) {
    out.node = tape->AddNode(1);
    auto og = tape->GradBuf(out.node);
    auto ag = a.tracked() ? tape->GradBuf(a.node) : nullptr;
    auto bg = b.tracked() ? tape->GradBuf(b.node) : nullptr;
    tape->SetBackward(out.node, [og, ag, bg, weight_b] {
      if (ag) (*ag)[0] += (*og)[0];
      if (bg) (*bg)[0] += weight_b * (*og)[0];
    });
  }
  return out;
}

Tensor L2Norm(Tape* tape, const Tensor& x) {
  double s = 0.0;
  for (float v : *x.data) s += static_cast<double>(v) * v;
  const double norm = std::sqrt(s);
  Tensor out = Tensor::Scalar(static_cast<float>(norm));
  if (Record(tape, x)) {
    out.node = tape->AddNode(1);
    auto og = tape->GradBuf(out.node);
    auto xg = tape->GradBuf(x.node);
    auto xd = x.data;
    const double denom = std::max(norm, 1e-12);
    tape->SetBackward(out.node, [og, xg, xd, denom] {
      const float d = (*og)[0];
      for (size_t i = 0; i < xd->size(); ++i)
        (*xg)[i] += static_cast<float>(d * (*xd)[i] / denom);
    });
  }
  return out;
}

Tensor StraightThrough(Tape* tape, const Tensor& x, std::span<const float> values) {
  if (x.size() != values.size())
    throw UsageError("straight_through: size mismatch");
  Tensor out;
  out.shape = x.shape;
  out.data = std::make_shared<std::vector<float>>(values.begin(), values.end());
  CheckFinite("straight_through", *out.data);
  if (Record(tape, x)) {
    out.node = tape->AddNode(out.size());
    auto og = tape->GradBuf(out.node);
    auto xg = tape->GradBuf(x.node);
    tape->SetBackward(out.node, [og, xg] {
      Axpy(og->size(), 1.0f, og->data(), xg->data());
    });
  }
  return out;
}

// ---- checkpoint I/O -------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'V', 'Q', 'P', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void WriteRaw(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T ReadRaw(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
}  // namespace

void SaveCheckpoint(const std::string& path,
                    const std::map<std::string, Tensor>& tensors) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open checkpoint for writing: " + path);
  f.write(kMagic, 4);
  WriteRaw(f, kVersion);
  WriteRaw(f, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    WriteRaw(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    WriteRaw(f, static_cast<uint32_t>(t.shape.size()));
    for (int e : t.shape) WriteRaw(f, static_cast<uint64_t>(e));
    f.write(reinterpret_cast<const char*>(t.ptr()),
            static_cast<std::streamsize>(sizeof(float) * t.size()));
  }
  if (!f) throw DataError("short write to checkpoint: " + path);
}

std::map<std::string, Tensor> LoadCheckpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("bad checkpoint magic in " + path);
  const uint32_t version = ReadRaw<uint32_t>(f);
  if (version != kVersion)
    throw DataError("unsupported checkpoint version in " + path);
  const uint32_t count = ReadRaw<uint32_t>(f);
  std::map<std::string, Tensor> out;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = ReadRaw<uint32_t>(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const uint32_t rank = ReadRaw<uint32_t>(f);
    std::vector<int> shape(rank);
    for (uint32_t r = 0; r < rank; ++r)
      shape[r] = static_cast<int>(ReadRaw<uint64_t>(f));
    Tensor t = Tensor::Zeros(shape);
    f.read(reinterpret_cast<char*>(t.ptr()),
           static_cast<std::streamsize>(sizeof(float) * t.size()));
    if (!f) throw DataError("truncated checkpoint: " + path);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

std::map<std::string, Tensor> PackParameters(std::span<Parameter* const> params) {
  std::map<std::string, Tensor> out;
  for (const Parameter* p : params) {
    out[p->name] = p->value;
    out[p->name + ".adam_m"] = Tensor::FromVec(p->value.shape, *p->m);
    out[p->name + ".adam_v"] = Tensor::FromVec(p->value.shape, *p->v);
    out[p->name + ".step"] = Tensor::Scalar(static_cast<float>(p->step));
  }
  return out;
}

void UnpackParameters(const std::map<std::string, Tensor>& dict,
                      std::span<Parameter* const> params) {
  for (Parameter* p : params) {
    auto it = dict.find(p->name);
    if (it == dict.end())
      throw DataError("checkpoint missing tensor '" + p->name + "'");
    if (it->second.size() != p->value.size())
      throw DataError("checkpoint size mismatch for '" + p->name + "'");
    *p->value.data = *it->second.data;
    if (auto m = dict.find(p->name + ".adam_m"); m != dict.end())
      *p->m = *m->second.data;
    if (auto v = dict.find(p->name + ".adam_v"); v != dict.end())
      *p->v = *v->second.data;
    if (auto s = dict.find(p->name + ".step"); s != dict.end())
      p->step = static_cast<int64_t>(s->second.item());
  }
}

void KaimingUniform(Tensor& t, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  for (float& v : *t.data) v = static_cast<float>(rng.Uniform(-bound, bound));
}

void XavierUniform(Tensor& t, int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (float& v : *t.data) v = static_cast<float>(rng.Uniform(-bound, bound));
}

}  // namespace vqp::ad
