#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "doctest.h"
#include "quantizer.hpp"
#include "rng.hpp"
#include "tensor.hpp"

using namespace vqp;

namespace {

void SetIdentityAffines(ProductQuantizer& pq) {
  auto params = pq.TrainableParams();
  for (Parameter* p : params) {
    std::fill(p->value.data->begin(), p->value.data->end(), 0.0f);
    if (p->name.ends_with("weight")) {
      const int d = p->value.shape[0];
      for (int i = 0; i < d; ++i) (*p->value.data)[i * d + i] = 1.0f;
    }
  }
}

Tensor RowTensor(const std::vector<float>& v) {
  Tensor t = Tensor::Zeros({1, static_cast<int>(v.size())});
  std::copy(v.begin(), v.end(), t.data->begin());
  return t;
}

}  // namespace

TEST_CASE("quantize basics with identity affines") {
  PqConfig cfg;
  Rng rng(1);
  ProductQuantizer pq(cfg, rng);
  SetIdentityAffines(pq);

  SUBCASE("codebook containing the slice exactly: zero error") {
    std::vector<float> x(30);
    Rng data_rng(2);
    for (auto& v : x) v = static_cast<float>(data_rng.Gaussian());
    // plant each slice at entry 5 of its codebook
    for (int i = 0; i < 3; ++i) {
      auto& entries = *pq.codebook(i).value.data;
      std::copy(x.begin() + i * 10, x.begin() + (i + 1) * 10,
                entries.begin() + 5 * 10);
    }
    QuantizerOutput out = pq.Quantize(nullptr, RowTensor(x), false);
    for (int i = 0; i < 3; ++i) CHECK(out.codes[0][i] == 5);
    for (int j = 0; j < 30; ++j)
      CHECK((*out.quantized.data)[j] == doctest::Approx(x[j]).epsilon(1e-6));
  }

  SUBCASE("equidistant to entries 3 and 7: lowest index wins") {
    std::vector<float> x(30, 0.0f);
    for (int i = 0; i < 3; ++i) {
      auto& entries = *pq.codebook(i).value.data;
      std::fill(entries.begin(), entries.end(), 100.0f);  // park the rest far
      for (int j = 0; j < 10; ++j) {
        entries[3 * 10 + j] = 1.0f;   // distance sqrt(10) from origin
        entries[7 * 10 + j] = -1.0f;  // same distance
      }
    }
    QuantizerOutput out = pq.Quantize(nullptr, RowTensor(x), false);
    for (int i = 0; i < 3; ++i) CHECK(out.codes[0][i] == 3);
  }
}

TEST_CASE("chosen code equals brute-force argmin (exhaustive oracle)") {
  PqConfig cfg;
  Rng rng(3);
  ProductQuantizer pq(cfg, rng);
  SetIdentityAffines(pq);
  Rng data_rng(4);
  for (int i = 0; i < 3; ++i)
    for (auto& v : *pq.codebook(i).value.data)
      v = static_cast<float>(data_rng.Gaussian());

  const int n = 1000;
  Tensor x = Tensor::Zeros({n, 30});
  for (auto& v : *x.data) v = static_cast<float>(data_rng.Gaussian());
  QuantizerOutput out = pq.Quantize(nullptr, x, false);
  for (int b = 0; b < n; ++b) {
    for (int i = 0; i < 3; ++i) {
      const auto& entries = *pq.codebook(i).value.data;
      int best = -1;
      double best_d = 1e300;
      for (int k = 0; k < 32; ++k) {
        double dist = 0.0;
        for (int j = 0; j < 10; ++j) {
          double diff = (*x.data)[b * 30 + i * 10 + j] - entries[k * 10 + j];
          dist += diff * diff;
        }
        if (dist < best_d) {
          best_d = dist;
          best = k;
        }
      }
      CHECK(out.codes[b][i] == best);
    }
  }
}

TEST_CASE("commitment loss") {
  PqConfig cfg;
  Rng rng(5);
  ProductQuantizer pq(cfg, rng);
  SetIdentityAffines(pq);

  SUBCASE("perfect quantization gives zero") {
    std::vector<float> x(30, 0.25f);
    for (int i = 0; i < 3; ++i) {
      auto& entries = *pq.codebook(i).value.data;
      std::fill(entries.begin(), entries.end(), 9.0f);
      std::fill(entries.begin(), entries.begin() + 10, 0.25f);
    }
    Tape tape;
    QuantizerOutput out = pq.Quantize(&tape, RowTensor(x), true);
    CHECK((*out.commitment.data)[0] == doctest::Approx(0.0).epsilon(1e-9));
  }

  SUBCASE("slices at distance d from codewords give d squared") {
    // codeword at origin, slice = d/sqrt(10) per coordinate -> ||diff||^2 = d^2
    const double d = 0.7;
    std::vector<float> x(30, static_cast<float>(d / std::sqrt(10.0)));
    for (int i = 0; i < 3; ++i) {
      auto& entries = *pq.codebook(i).value.data;
      std::fill(entries.begin(), entries.end(), 50.0f);
      std::fill(entries.begin(), entries.begin() + 10, 0.0f);
    }
    Tape tape;
    QuantizerOutput out = pq.Quantize(&tape, RowTensor(x), true);
    CHECK((*out.commitment.data)[0] == doctest::Approx(d * d).epsilon(1e-5));
  }

  SUBCASE("random batch matches recomputation from stored slices and codes") {
    Rng data_rng(6);
    for (int i = 0; i < 3; ++i)
      for (auto& v : *pq.codebook(i).value.data)
        v = static_cast<float>(data_rng.Gaussian());
    Tensor x = Tensor::Zeros({16, 30});
    for (auto& v : *x.data) v = static_cast<float>(data_rng.Gaussian());
    Tape tape;
    QuantizerOutput out = pq.Quantize(&tape, x, true);
    double want = 0.0;
    for (int i = 0; i < 3; ++i) {
      const auto& entries = *pq.codebook(i).value.data;
      double mean = 0.0;
      for (int b = 0; b < 16; ++b) {
        double dist = 0.0;
        for (int j = 0; j < 10; ++j) {
          double diff = (*out.pre_quant.data)[b * 30 + i * 10 + j] -
                        entries[out.codes[b][i] * 10 + j];
          dist += diff * diff;
        }
        mean += dist;
      }
      want += mean / 16.0;
    }
    want /= 3.0;
    CHECK((*out.commitment.data)[0] == doctest::Approx(want).epsilon(1e-4));
  }
}

TEST_CASE("straight-through gradients match an unquantized pass") {
  PqConfig cfg;
  Rng rng(7);
  ProductQuantizer pq(cfg, rng);
  PqConfig off = cfg;
  off.enabled = false;
  Rng rng2(7);  // identical affines
  ProductQuantizer ident(off, rng2);

  Rng data_rng(8);
  Tensor x = Tensor::Zeros({4, 30});
  for (auto& v : *x.data) v = static_cast<float>(data_rng.Gaussian());

  auto grad_of = [&](ProductQuantizer& q) {
    Tape tape;
    auto grad = std::make_shared<std::vector<float>>(x.data->size(), 0.0f);
    Tensor xt = tape.Watch(x, grad);
    QuantizerOutput out = q.Quantize(&tape, xt, true);
    Tensor loss = Sum(&tape, out.quantized);  // excludes the commitment term
    tape.Backward(loss);
    return *grad;
  };
  std::vector<float> g_quant = grad_of(pq);
  std::vector<float> g_ident = grad_of(ident);
  REQUIRE(g_quant.size() == g_ident.size());
  for (size_t i = 0; i < g_quant.size(); ++i)
    CHECK(g_quant[i] == doctest::Approx(g_ident[i]).epsilon(1e-5));
}

TEST_CASE("ema updates") {
  SUBCASE("unassigned entry is unchanged up to smoothing") {
    PqConfig cfg;
    Rng rng(9);
    ProductQuantizer pq(cfg, rng);
    SetIdentityAffines(pq);
    // park entry 31 far away so it is never assigned (keep m = e * N)
    std::vector<float> before;
    for (int i = 0; i < 3; ++i) {
      auto& entries = *pq.codebook(i).value.data;
      auto& sums = *pq.ema_sums(i).value.data;
      for (int j = 0; j < 10; ++j) {
        entries[31 * 10 + j] = 1000.0f;
        sums[31 * 10 + j] = 1000.0f;
      }
    }
    for (int i = 0; i < 3; ++i) {
      const auto& entries = *pq.codebook(i).value.data;
      before.insert(before.end(), entries.begin() + 31 * 10,
                    entries.begin() + 32 * 10);
    }
    Rng data_rng(10);
    Tensor x = Tensor::Zeros({8, 30});
    for (auto& v : *x.data) v = static_cast<float>(data_rng.Gaussian());
    QuantizerOutput out = pq.Quantize(nullptr, x, true);
    pq.EmaUpdate(out);
    for (int i = 0; i < 3; ++i) {
      const auto& entries = *pq.codebook(i).value.data;
      for (int j = 0; j < 10; ++j)
        CHECK(entries[31 * 10 + j] ==
              doctest::Approx(before[i * 10 + j]).epsilon(1e-3));
    }
  }

  SUBCASE("constant assignments converge geometrically (closed form)") {
    PqConfig cfg;
    cfg.codebook_size = 4;
    cfg.num_slices = 3;
    Rng rng(11);
    ProductQuantizer pq(cfg, rng);
    SetIdentityAffines(pq);
    // all slices equal v; entry 0 starts at the origin and owns them
    const float v = 2.0f;
    for (int i = 0; i < 3; ++i) {
      auto& entries = *pq.codebook(i).value.data;
      auto& sums = *pq.ema_sums(i).value.data;
      std::fill(entries.begin(), entries.end(), -50.0f);
      std::fill(entries.begin(), entries.begin() + 10, 0.0f);
      sums = entries;  // counts start at 1, so m = e
    }
    const int batch = 8;
    Tensor x = Tensor::Zeros({batch, 30});
    std::fill(x.data->begin(), x.data->end(), v);

    // independent recursion in doubles, including Laplace smoothing
    double N[4] = {1, 1, 1, 1};
    double m0 = 0.0;  // per-coordinate sum for entry 0
    double m_other = -50.0;
    const double g = cfg.decay, eps = cfg.laplace_eps;
    double expect0 = 0.0;
    const int steps = 25;
    for (int t = 0; t < steps; ++t) {
      N[0] = g * N[0] + (1 - g) * batch;
      for (int k = 1; k < 4; ++k) N[k] = g * N[k];
      m0 = g * m0 + (1 - g) * batch * v;
      m_other = g * m_other;
      double total = N[0] + N[1] + N[2] + N[3];
      double denom = total + 4 * eps;
      expect0 = m0 / ((N[0] + eps) / denom * total);
    }
    for (int t = 0; t < steps; ++t) {
      QuantizerOutput out = pq.Quantize(nullptr, x, true);
      for (int b = 0; b < batch; ++b)
        for (int i = 0; i < 3; ++i) REQUIRE(out.codes[b][i] == 0);
      pq.EmaUpdate(out);
    }
    for (int i = 0; i < 3; ++i) {
      const auto& entries = *pq.codebook(i).value.data;
      for (int j = 0; j < 10; ++j)
        CHECK(entries[j] == doctest::Approx(expect0).epsilon(1e-4));
    }
    // geometric approach to v at rate decay
    CHECK(std::fabs(expect0 - v) < v);
    CHECK(std::fabs(expect0 - v) > 0.0);
  }

  SUBCASE("two separated clusters recovered within 1e-2") {
    PqConfig cfg;
    cfg.codebook_size = 2;
    Rng rng(13);
    ProductQuantizer pq(cfg, rng);
    SetIdentityAffines(pq);

    Rng data_rng(14);
    auto make_batch = [&]() {
      Tensor x = Tensor::Zeros({16, 30});
      for (int b = 0; b < 16; ++b) {
        const float center = (b % 2 == 0) ? -3.0f : 3.0f;
        for (int j = 0; j < 30; ++j)
          (*x.data)[b * 30 + j] =
              center + 0.01f * static_cast<float>(data_rng.Gaussian());
      }
      return x;
    };
    Rng seed_rng(15);
    pq.SeedFromBatch(pq.Quantize(nullptr, make_batch(), true).pre_quant,
                     seed_rng);
    for (int t = 0; t < 500; ++t) {
      QuantizerOutput out = pq.Quantize(nullptr, make_batch(), true);
      pq.EmaUpdate(out);
    }
    for (int i = 0; i < 3; ++i) {
      const auto& entries = *pq.codebook(i).value.data;
      std::vector<double> centers;
      for (int k = 0; k < 2; ++k) {
        double mean = 0.0;
        for (int j = 0; j < 10; ++j) mean += entries[k * 10 + j];
        centers.push_back(mean / 10.0);
      }
      std::sort(centers.begin(), centers.end());
      CHECK(centers[0] == doctest::Approx(-3.0).epsilon(1e-2));
      CHECK(centers[1] == doctest::Approx(3.0).epsilon(1e-2));
    }
  }
}

TEST_CASE("codebook usage and perplexity") {
  SUBCASE("all codes identical: perplexity 1") {
    std::vector<int> codes(100, 7);
    UsageStats s = CodebookUsage(codes, 32);
    CHECK(s.counts[7] == 100);
    CHECK(s.perplexity == doctest::Approx(1.0));
  }
  SUBCASE("uniform over 32: perplexity 32") {
    std::vector<int> codes;
    for (int r = 0; r < 5; ++r)
      for (int k = 0; k < 32; ++k) codes.push_back(k);
    UsageStats s = CodebookUsage(codes, 32);
    CHECK(s.perplexity == doctest::Approx(32.0));
  }
  SUBCASE("mixed stream matches direct entropy") {
    std::vector<int> codes = {0, 0, 0, 1, 1, 2};
    UsageStats s = CodebookUsage(codes, 4);
    const double p0 = 3.0 / 6, p1 = 2.0 / 6, p2 = 1.0 / 6;
    const double h = -(p0 * std::log(p0) + p1 * std::log(p1) + p2 * std::log(p2));
    CHECK(s.perplexity == doctest::Approx(std::exp(h)));
  }
}

TEST_CASE("disabled quantizer is an affine pass-through") {
  PqConfig cfg;
  cfg.enabled = false;
  Rng rng(17);
  ProductQuantizer pq(cfg, rng);

  Rng data_rng(18);
  Tensor x = Tensor::Zeros({3, 30});
  for (auto& v : *x.data) v = static_cast<float>(data_rng.Gaussian());
  QuantizerOutput out = pq.Quantize(nullptr, x, true);
  CHECK(out.codes.empty());
  CHECK((*out.commitment.data)[0] == 0.0f);

  // affine_out(affine_in(x)) recomputed directly
  auto params = pq.TrainableParams();
  Tensor y = Affine(nullptr, x, params[0]->value, params[1]->value);
  Tensor z = Affine(nullptr, y, params[2]->value, params[3]->value);
  for (size_t i = 0; i < z.data->size(); ++i)
    CHECK((*out.quantized.data)[i] == doctest::Approx((*z.data)[i]));
}

TEST_CASE("seeding draws codewords from observed slices") {
  PqConfig cfg;
  Rng rng(19);
  ProductQuantizer pq(cfg, rng);
  SetIdentityAffines(pq);
  CHECK(!pq.seeded());

  Rng data_rng(20);
  Tensor x = Tensor::Zeros({64, 30});
  for (auto& v : *x.data) v = static_cast<float>(data_rng.Gaussian());
  QuantizerOutput out = pq.Quantize(nullptr, x, true);
  Rng seed_rng(21);
  pq.SeedFromBatch(out.pre_quant, seed_rng);
  CHECK(pq.seeded());

  for (int i = 0; i < 3; ++i) {
    const auto& entries = *pq.codebook(i).value.data;
    for (int k = 0; k < 32; ++k) {
      bool found = false;
      for (int b = 0; b < 64 && !found; ++b) {
        bool same = true;
        for (int j = 0; j < 10; ++j)
          if (entries[k * 10 + j] != (*out.pre_quant.data)[b * 30 + i * 10 + j])
            same = false;
        found = same;
      }
      CHECK(found);
    }
  }
}
