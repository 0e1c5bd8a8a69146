// Acceptance suite: one pass/fail line per criterion, exit 0 iff all pass.
//
// Criteria 6-9 and 12 share one synthetic corpus, one preprocessing pass,
// and one full pretraining run; everything lands under a scratch directory
// that is rebuilt from scratch on every invocation.

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dsp.hpp"
#include "features.hpp"
#include "json.hpp"
#include "mdl.hpp"
#include "model.hpp"
#include "pipeline.hpp"
#include "pretrain.hpp"
#include "rng.hpp"
#include "synth.hpp"
#include "tensor.hpp"
#include "transformer.hpp"

using namespace vqp;
using namespace vqp::ad;
namespace fs = std::filesystem;

namespace {

int g_failed = 0;

void Report(int idx, const std::string& name, bool ok,
            const std::string& detail = "") {
  std::printf("%s %2d %s%s%s\n", ok ? "PASS" : "FAIL", idx, name.c_str(),
              detail.empty() ? "" : " — ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failed;
}

std::string Fmt(const char* fmt, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, fmt);
  vsnprintf(buf, sizeof(buf), fmt, ap);
  va_end(ap);
  return buf;
}

Parameter RandomParam(const std::string& name, std::vector<int> shape,
                      Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::Zeros(std::move(shape));
  for (float& v : *t.data) v = static_cast<float>(rng.Uniform(-scale, scale));
  return Parameter(name, std::move(t));
}

std::vector<float> FiniteDiff(Parameter& leaf,
                              const std::function<float()>& forward,
                              float h = 1e-3f) {
  std::vector<float> grad(leaf.value.size());
  for (size_t i = 0; i < grad.size(); ++i) {
    const float orig = (*leaf.value.data)[i];
    (*leaf.value.data)[i] = orig + h;
    const float fp = forward();
    (*leaf.value.data)[i] = orig - h;
    const float fm = forward();
    (*leaf.value.data)[i] = orig;
    grad[i] = (fp - fm) / (2 * h);
  }
  return grad;
}

bool GradsClose(const std::vector<float>& analytic,
                const std::vector<float>& numeric, float rel_tol = 1e-3f) {
  if (analytic.size() != numeric.size()) return false;
  for (size_t i = 0; i < analytic.size(); ++i) {
    const float denom =
        std::max({std::fabs(analytic[i]), std::fabs(numeric[i]), 1.0f});
    if (std::fabs(analytic[i] - numeric[i]) / denom >= rel_tol) return false;
  }
  return true;
}

dsp::AudioBuffer Sine(double hz, double seconds, double rate) {
  dsp::AudioBuffer b;
  b.sample_rate = rate;
  const int n = static_cast<int>(seconds * rate);
  b.samples.resize(n);
  for (int i = 0; i < n; ++i)
    b.samples[i] = 0.5f * std::sin(2.0 * M_PI * hz * i / rate);
  return b;
}

double Rms(const std::vector<float>& v) {
  double s = 0.0;
  for (float x : v) s += double(x) * x;
  return std::sqrt(s / std::max<size_t>(1, v.size()));
}

// ---------------------------------------------------------------------------
// Criterion 1: finite-difference gradient fidelity per layer type.

bool Criterion1(std::string* detail) {
  Rng rng(42);
  bool ok = true;
  auto check = [&](const char* what, Parameter& p,
                   const std::function<Tensor(Tape*)>& build) {
    if (p.grad) std::fill(p.grad->begin(), p.grad->end(), 0.0f);
    Tape tape;
    tape.Backward(build(&tape));
    const auto numeric =
        FiniteDiff(p, [&] { return build(nullptr).item(); });
    if (!GradsClose(*p.grad, numeric)) {
      ok = false;
      if (!detail->empty()) *detail += ", ";
      *detail += what;
    }
  };

  {  // dense chain: matmul, bias, relu, sigmoid
    Parameter x = RandomParam("x", {3, 5}, rng);
    Parameter w = RandomParam("w", {5, 4}, rng);
    Parameter b = RandomParam("b", {4}, rng, 0.1);
    auto build = [&](Tape* t) {
      Tensor h = Affine(t, t ? t->Leaf(x) : x.value,
                        t ? t->Leaf(w) : w.value, t ? t->Leaf(b) : b.value);
      return Sum(t, Sigmoid(t, Relu(t, h)));
    };
    check("affine", x, build);
    check("affine.w", w, build);
  }
  {  // softmax + cross entropy over logits
    Parameter x = RandomParam("x", {1, 8}, rng);
    auto build2 = [&](Tape* t) {
      return CrossEntropy(t, Scale(t, t ? t->Leaf(x) : x.value, 1.7f), 3);
    };
    check("cross_entropy", x, build2);
    auto build3 = [&](Tape* t) {
      Tensor s = SoftmaxRows(t, t ? t->Leaf(x) : x.value);
      return Sum(t, Mul(t, s, s));
    };
    check("softmax", x, build3);
  }
  {  // layer norm
    Parameter x = RandomParam("x", {3, 6}, rng);
    Parameter g = RandomParam("g", {6}, rng);
    Parameter b = RandomParam("b", {6}, rng, 0.1);
    auto build = [&](Tape* t) {
      Tensor y = LayerNorm(t, t ? t->Leaf(x) : x.value,
                           t ? t->Leaf(g) : g.value, t ? t->Leaf(b) : b.value);
      return Sum(t, Mul(t, y, y));
    };
    check("layer_norm", x, build);
    check("layer_norm.g", g, build);
  }
  {  // causal dilated conv + masked time pooling over a ragged batch
    Parameter x = RandomParam("x", {9, 2}, rng);
    Parameter w = RandomParam("w", {4, 3}, rng);
    Parameter b = RandomParam("b", {3}, rng, 0.1);
    Segments segs{{0, 5, 9}};
    auto build = [&](Tape* t) {
      Tensor y = CausalDilatedConv1d(t, t ? t->Leaf(x) : x.value, segs,
                                     t ? t->Leaf(w) : w.value,
                                     t ? t->Leaf(b) : b.value, 2, 2);
      return Sum(t, MaxPoolTime(t, y, segs));
    };
    check("conv1d", x, build);
    check("conv1d.w", w, build);
  }
  {  // cosine similarity scoring + temperature + cross entropy
    Parameter c = RandomParam("c", {1, 6}, rng);
    Parameter q = RandomParam("q", {4, 6}, rng);
    auto build = [&](Tape* t) {
      Tensor s = CosineScores(t, t ? t->Leaf(c) : c.value,
                              t ? t->Leaf(q) : q.value);
      return CrossEntropy(t, Scale(t, s, 10.0f), 0);
    };
    check("cosine", c, build);
    check("cosine.q", q, build);
  }
  {  // binary cross entropy head
    Parameter x = RandomParam("x", {6}, rng);
    const std::vector<float> labels = {1, 0, 1, 1, 0, 0};
    auto build = [&](Tape* t) {
      return BceWithLogits(t, t ? t->Leaf(x) : x.value, labels);
    };
    check("bce", x, build);
  }
  {  // full encoder stack (conv blocks, skips, residuals, pool, affine)
    TcnConfig tc;
    tc.layers = 3;
    tc.filters = 3;
    tc.skip_channels = 3;
    tc.dropout_p = 0.0f;
    Rng init(7);
    ProsodyEncoder enc(tc, init);
    Parameter x = RandomParam("x", {10, 1}, rng);
    Segments segs{{0, 6, 10}};
    auto build = [&](Tape* t) {
      Tensor h = enc.EncodeBatch(t, t ? t->Leaf(x) : x.value, segs, false,
                                 nullptr);
      return Sum(t, Mul(t, h, h));
    };
    check("encoder", x, build);
  }
  {  // transformer block (attention, ffn, residuals, mask embedding)
    TransformerConfig cc;
    cc.layers = 1;
    cc.heads = 2;
    cc.model_dim = 8;
    cc.ffn_dim = 16;
    cc.input_dim = 4;
    cc.dropout_p = 0.0f;
    cc.max_seq = 8;
    Rng init(11);
    ContextTransformer ctx(cc, init);
    Rng prng(42);
    Parameter p = RandomParam("p", {5, 4}, prng);
    MaskPlan plan;
    plan.masked = {0, 1, 0, 0, 1};
    // Linear readout: squaring the output pushes the FD curvature past
    // what f32 central differences can resolve at 1e-3.
    auto build = [&](Tape* t) {
      Tensor h = ctx.Contextualize(t, t ? t->Leaf(p) : p.value, &plan, false,
                                   nullptr);
      return Sum(t, h);
    };
    check("transformer", p, build);
  }
  {  // quantizer commitment path (assignments fixed under the probe step)
    PqConfig pc;
    pc.input_dim = 6;
    pc.num_slices = 2;
    pc.codebook_size = 4;
    Rng init(3);
    ProductQuantizer pq(pc, init);
    Parameter x = RandomParam("x", {3, 6}, rng);
    auto build = [&](Tape* t) {
      Tensor h = t ? t->Leaf(x) : x.value;
      return pq.Quantize(t, h, true).commitment;
    };
    check("commitment", x, build);
  }
  return ok;
}

// ---------------------------------------------------------------------------
// Shared synthetic-corpus artifacts for criteria 6-9 and 12.

struct CorpusArtifacts {
  fs::path root;
  std::string corpus;       // raw wavs + manifest
  std::string data;         // preprocessed (pitch-normalized)
  std::string ckpts;        // full pretraining run
  std::string config_path;  // desk-scale training config
  double train_seconds = 0.0;
  double final_contrastive = 0.0;  // mean over the last 100 steps
  bool trained = false;
};

// Desk-scale schedule: the published schedule (250k steps at 1.5e-5 peak)
// would never move in 2k steps, so the peak rate is raised accordingly.
constexpr float kDeskLr = 1e-3f;
constexpr int64_t kDeskWarmup = 200;
constexpr int64_t kDeskSteps = 2000;
constexpr int kDeskBatch = 8;

void WriteDeskConfig(const std::string& path) {
  std::ofstream cfg(path);
  // Desk-scale context model: the paper-scale 12x768 transformer is far too
  // slow for a single desktop core-set and badly overparameterized for a
  // 200-utterance corpus. Encoder and quantizer stay at full scale so the
  // three VQ factors and their 32^3 product states are exercised as-is.
  cfg << "ctx.layers = 4\n"
      << "ctx.heads = 4\n"
      << "ctx.model_dim = 256\n"
      << "ctx.ffn_dim = 1024\n"
      << "pretrain.batch_size = " << kDeskBatch << "\n"
      << "pretrain.warmup_steps = " << kDeskWarmup << "\n"
      << "pretrain.total_steps = " << kDeskSteps << "\n"
      << "pretrain.lr_max = " << kDeskLr << "\n"
      << "pretrain.checkpoint_every = 500\n"
      << "pretrain.seed = 7\n";
}

std::vector<nlohmann::json> ReadJsonl(const std::string& path) {
  std::ifstream is(path);
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  return out;
}

bool Criterion6(CorpusArtifacts* art, std::string* detail) {
  fs::remove_all(art->root);
  fs::create_directories(art->root);
  art->corpus = (art->root / "corpus").string();
  art->data = (art->root / "data").string();
  art->ckpts = (art->root / "ckpts").string();
  art->config_path = (art->root / "desk.cfg").string();

  SynthConfig sc;  // provided generator defaults: 200 utts of 16-32 words
  GenerateCorpus(sc, art->corpus);
  pipeline::PreprocessOptions po;
  pipeline::Preprocess(art->corpus + "/manifest.jsonl", art->data, po);
  WriteDeskConfig(art->config_path);

  const auto t0 = std::chrono::steady_clock::now();
  pipeline::Pretrain(art->data, art->config_path, art->ckpts, {});
  art->train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  const auto rows = ReadJsonl(art->ckpts + "/metrics.jsonl");
  if (rows.size() != static_cast<size_t>(kDeskSteps)) {
    *detail = Fmt("expected %lld metric rows, got %zu",
                  static_cast<long long>(kDeskSteps), rows.size());
    return false;
  }
  double mean = 0.0;
  for (size_t i = rows.size() - 100; i < rows.size(); ++i)
    mean += rows[i].at("l_contrast").get<double>();
  mean /= 100.0;
  art->final_contrastive = mean;
  art->trained = true;

  const bool loss_ok = mean < 2.0;
  const bool time_ok = art->train_seconds < 1800.0;
  *detail = Fmt("mean contrastive %.4f over final 100 steps, %.0f s",
                mean, art->train_seconds);
  return loss_ok && time_ok;
}

// Maps every feature-table row onto its representation row (word order in
// the preprocessed corpus matches the manifest).
std::vector<int64_t> RepRowForTable(
    const mdl::RepFile& reps,
    const std::vector<features::WordFeatureRow>& table) {
  std::map<std::string, const mdl::RepIndexEntry*> by_sample;
  for (const auto& e : reps.index) by_sample[e.sample_id] = &e;
  std::vector<int64_t> rows(table.size(), -1);
  for (size_t i = 0; i < table.size(); ++i) {
    const auto* e = by_sample.at(table[i].sample_id);
    if (table[i].word_index >= 0 && table[i].word_index < e->row_count)
      rows[i] = e->row_start + table[i].word_index;
  }
  return rows;
}

// Binary dataset: representation rows as inputs, a feature thresholded at
// its corpus mean as labels.
mdl::Dataset FeatureDataset(const mdl::RepFile& reps,
                            const std::vector<features::WordFeatureRow>& table,
                            const std::string& feature) {
  std::vector<std::optional<double>> values(table.size());
  for (size_t i = 0; i < table.size(); ++i) {
    const auto m = features::FeatureMap(table[i].features);
    const auto it = m.find(feature);
    if (it != m.end()) values[i] = it->second;
  }
  const auto bin = features::BinarizeVsMean(
      feature, values, std::vector<bool>(values.size(), true));
  const auto rows = RepRowForTable(reps, table);
  mdl::Dataset d;
  d.dim = reps.cols;
  for (size_t i = 0; i < table.size(); ++i) {
    if (!bin.labels[i].has_value() || rows[i] < 0) continue;
    const float* src = reps.data.data() + rows[i] * reps.cols;
    d.x.insert(d.x.end(), src, src + reps.cols);
    d.y.push_back(*bin.labels[i] ? 1 : 0);
    ++d.n;
  }
  return d;
}

double ProbeBits(const mdl::Dataset& d, uint64_t seed) {
  mdl::ProbeSpec spec;
  spec.seed = seed;
  return mdl::PrequentialCodelength(d, mdl::MakeBlockSchedule(d.n), spec)
      .total_bits;
}

double ShuffledBits(mdl::Dataset d, uint64_t seed) {
  Rng rng(seed, "label-shuffle", 0);
  for (size_t i = d.y.size() - 1; i > 0; --i)
    std::swap(d.y[i], d.y[rng.Below(i + 1)]);
  return ProbeBits(d, seed);
}

bool Criterion7(const CorpusArtifacts& art, std::string* detail) {
  const std::string reps_path = (art.root / "ctx.reps").string();
  const std::string table_path = (art.root / "features.jsonl").string();
  pipeline::Extract(art.data, art.ckpts + "/latest.vqpt", "ctx", reps_path,
                    art.config_path);
  pipeline::Features(art.corpus + "/manifest.jsonl", table_path, {});

  const mdl::RepFile reps = mdl::ReadReps(reps_path);
  const auto table = features::ReadFeatureTable(table_path);

  const mdl::Dataset pitch = FeatureDataset(reps, table, "pitch_hz");
  const mdl::Dataset dur = FeatureDataset(reps, table, "word_duration_s");

  // Planted pure-noise labels: same inputs, coin-flip targets.
  mdl::Dataset noise = pitch;

  double pitch_bits = 0, dur_bits = 0, noise_bits = 0;
  double pitch_base = 0, dur_base = 0, noise_base = 0;
  const uint64_t kSeeds = 5;
  for (uint64_t s = 0; s < kSeeds; ++s) {
    Rng coin(s, "planted-noise", 0);
    for (auto& y : noise.y) y = coin.Bernoulli(0.5) ? 1 : 0;
    pitch_bits += ProbeBits(pitch, s);
    dur_bits += ProbeBits(dur, s);
    noise_bits += ProbeBits(noise, s);
    pitch_base += ShuffledBits(pitch, s);
    dur_base += ShuffledBits(dur, s);
    noise_base += ShuffledBits(noise, s);
  }
  pitch_bits /= kSeeds; dur_bits /= kSeeds; noise_bits /= kSeeds;
  pitch_base /= kSeeds; dur_base /= kSeeds; noise_base /= kSeeds;

  const bool pitch_ok = pitch_bits <= 0.85 * pitch_base;
  const bool dur_ok = dur_bits <= 0.85 * dur_base;
  const bool noise_ok = std::fabs(noise_bits - noise_base) <= 0.05 * noise_base;
  *detail = Fmt(
      "pitch %.0f vs base %.0f, duration %.0f vs %.0f, noise %.0f vs %.0f",
      pitch_bits, pitch_base, dur_bits, dur_base, noise_bits, noise_base);
  return pitch_ok && dur_ok && noise_ok;
}

bool Criterion8(const CorpusArtifacts& art, std::string* detail) {
  const std::string table_path = (art.root / "features.jsonl").string();
  const auto table = features::ReadFeatureTable(table_path);
  double bits[3][2];  // [factor][pitch, duration]
  for (int f = 0; f < 3; ++f) {
    const std::string level = "vq" + std::to_string(f + 1);
    const std::string path = (art.root / (level + ".reps")).string();
    pipeline::Extract(art.data, art.ckpts + "/latest.vqpt", level, path,
                      art.config_path);
    const mdl::RepFile reps = mdl::ReadReps(path);
    bits[f][0] = ProbeBits(FeatureDataset(reps, table, "pitch_hz"), 0);
    bits[f][1] = ProbeBits(FeatureDataset(reps, table, "word_duration_s"), 0);
  }
  bool specialized = false;
  for (int feat = 0; feat < 2 && !specialized; ++feat)
    for (int f = 0; f < 3; ++f) {
      bool below_both = true;
      for (int g = 0; g < 3; ++g)
        if (g != f && bits[f][feat] > 0.9 * bits[g][feat]) below_both = false;
      if (below_both) specialized = true;
    }
  *detail = Fmt("pitch bits {%.0f, %.0f, %.0f}, duration {%.0f, %.0f, %.0f}",
                bits[0][0], bits[1][0], bits[2][0], bits[0][1], bits[1][1],
                bits[2][1]);
  return specialized;
}

double DeidOf(const std::vector<mdl::PooledUtterance>& utts, int trials,
              uint64_t seed) {
  Rng rng(seed, "trials", 0);
  const auto tr = mdl::BuildTrials(utts, trials, rng);
  mdl::ProbeSpec spec;
  spec.seed = seed;
  return mdl::DeidRatio(tr, spec).ratio;
}

bool Criterion9(const CorpusArtifacts& art, std::string* detail) {
  const int kTrials = 4000;
  const mdl::RepFile ctx = mdl::ReadReps((art.root / "ctx.reps").string());

  // One-hot speaker codes: maximally identifiable.
  std::map<std::string, int> speakers;
  for (const auto& e : ctx.index)
    speakers.emplace(e.speaker_id, static_cast<int>(speakers.size()));
  std::vector<mdl::PooledUtterance> onehot, random_reps, pooled_ctx;
  Rng noise(99, "independent-reps", 0);
  for (const auto& e : ctx.index) {
    mdl::PooledUtterance u;
    u.sample_id = e.sample_id;
    u.speaker_id = e.speaker_id;
    u.mean.assign(speakers.size(), 0.0f);
    u.mean[speakers.at(e.speaker_id)] = 1.0f;
    onehot.push_back(u);
    for (auto& v : u.mean) v = static_cast<float>(noise.Gaussian());
    random_reps.push_back(u);
    u.mean = mdl::MeanPool(ctx.data.data() + e.row_start * ctx.cols,
                           e.row_count, ctx.cols);
    pooled_ctx.push_back(std::move(u));
  }

  // Raw acoustic features with per-speaker pitch offsets kept.
  const std::string raw_table = (art.root / "features_raw.jsonl").string();
  pipeline::FeatureOptions fo;
  fo.no_pitch_scaling = true;
  pipeline::Features(art.corpus + "/manifest.jsonl", raw_table, fo);
  const auto table = features::ReadFeatureTable(raw_table);
  const auto names = features::FeatureNames();
  std::map<std::string, std::pair<std::vector<float>, int64_t>> agg;
  std::map<std::string, std::string> spk_of;
  {
    std::ifstream mf(art.corpus + "/manifest.jsonl");
    std::string line;
    while (std::getline(mf, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      spk_of[j.at("sample_id")] = j.at("speaker_id");
    }
  }
  for (const auto& row : table) {
    auto& slot = agg[row.sample_id];
    if (slot.first.empty()) slot.first.assign(names.size(), 0.0f);
    const auto m = features::FeatureMap(row.features);
    for (size_t k = 0; k < names.size(); ++k) {
      const auto it = m.find(names[k]);
      if (it != m.end()) slot.first[k] += static_cast<float>(it->second);
    }
    ++slot.second;
  }
  std::vector<mdl::PooledUtterance> raw;
  for (auto& [sid, slot] : agg) {
    mdl::PooledUtterance u;
    u.sample_id = sid;
    u.speaker_id = spk_of.at(sid);
    for (float& v : slot.first) v /= static_cast<float>(slot.second);
    u.mean = std::move(slot.first);
    raw.push_back(std::move(u));
  }
  // Column z-scoring keeps the probe's fixed learning rate in range.
  for (size_t k = 0; k < names.size(); ++k) {
    double mu = 0, var = 0;
    for (const auto& u : raw) mu += u.mean[k];
    mu /= raw.size();
    for (const auto& u : raw) var += (u.mean[k] - mu) * (u.mean[k] - mu);
    const double sd = std::sqrt(var / raw.size());
    for (auto& u : raw)
      u.mean[k] = sd > 0 ? static_cast<float>((u.mean[k] - mu) / sd) : 0.0f;
  }

  const double d_onehot = DeidOf(onehot, kTrials, 1);
  const double d_indep = DeidOf(random_reps, kTrials, 2);
  const double d_ctx = DeidOf(pooled_ctx, kTrials, 3);
  const double d_raw = DeidOf(raw, kTrials, 4);

  const bool ok = d_onehot < 0.3 && std::fabs(d_indep - 1.0) <= 0.05 &&
                  d_ctx >= 0.8 && d_raw <= d_ctx - 0.15;
  *detail = Fmt("one-hot %.3f, independent %.3f, ctx %.3f, raw %.3f",
                d_onehot, d_indep, d_ctx, d_raw);
  return ok;
}

bool Criterion12(const CorpusArtifacts& art, std::string* detail) {
  auto run = [&](const std::string& tag, int64_t steps) {
    const std::string dir = (art.root / tag).string();
    pipeline::PretrainOptions opts;
    opts.steps_override = steps;
    opts.seed_override = 7;
    pipeline::Pretrain(art.data, art.config_path, dir, opts);
    std::ifstream is(dir + "/metrics.jsonl");
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  const std::string log_a = run("det_a", 50);
  const std::string log_b = run("det_b", 50);
  if (log_a.empty() || log_a != log_b) {
    *detail = "metrics logs differ between identical runs";
    return false;
  }
  run("det_ref", 51);
  const auto ref_rows = ReadJsonl((art.root / "det_ref").string() +
                                  "/metrics.jsonl");
  const double ref_loss = ref_rows.back().at("loss").get<double>();

  // Reload the 50-step checkpoint and replay step 51.
  Config cfg = Config::FromFile(art.config_path);
  PretrainConfig pc = PretrainFromConfig(cfg);
  pc.total_steps = 51;
  pc.seed = 7;
  VqpModel model(TcnFromConfig(cfg), PqFromConfig(cfg), CtxFromConfig(cfg),
                 pc.seed);
  const int64_t start =
      model.Load((art.root / "det_a").string() + "/latest.vqpt");
  if (start != 50) {
    *detail = Fmt("checkpoint stored step %lld, expected 50",
                  static_cast<long long>(start));
    return false;
  }
  Trainer trainer(model, pc, {}, pipeline::LoadPreprocessed(art.data));
  const StepStats st = trainer.Step(start);
  const bool replay_ok = std::fabs(st.loss - ref_loss) <= 1e-6;
  *detail = Fmt("resumed step-51 loss %.8f vs %.8f", st.loss, ref_loss);
  return replay_ok;
}

}  // namespace

int main() {
  SetFiniteChecks(true);

  {  // 1: gradients
    std::string detail;
    bool ok = false;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      ok = Criterion1(&detail);
    } catch (const std::exception& e) {
      detail = e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (secs >= 60.0) {
      ok = false;
      detail += Fmt(" (suite took %.1f s)", secs);
    }
    Report(1, "finite-difference gradients, all layer types", ok, detail);
  }

  {  // 2: architecture constants
    std::string detail;
    bool ok = true;
    const TcnConfig tcn;
    if (tcn.ReceptiveField() != 512) {
      ok = false;
      detail += Fmt("receptive field %d", tcn.ReceptiveField());
    }
    const PqConfig pq;
    double states = 1;
    for (int i = 0; i < pq.num_slices; ++i) states *= pq.codebook_size;
    if (states != 32768) {
      ok = false;
      detail += Fmt(" product states %.0f", states);
    }
    const int d = 768;
    for (int pos : {0, 1, 7, 31}) {
      for (int dim = 0; dim < d && ok; ++dim) {
        const double angle = pos / std::pow(10000.0, (2.0 * (dim / 2)) / d);
        const double want = (dim % 2 == 0) ? std::sin(angle) : std::cos(angle);
        if (std::fabs(PositionalEncoding(pos, dim, d) - want) > 1e-6) {
          ok = false;
          detail += Fmt(" pe(%d,%d)", pos, dim);
        }
      }
    }
    Report(2, "architecture constants (RF 512, 32768 states, sinusoidal PE)",
           ok, detail);
  }

  {  // 3: causality
    std::string detail;
    bool ok = true;
    try {
      TcnConfig tc;  // full default stack
      Rng init(5);
      ProsodyEncoder enc(tc, init);
      const int T = 96;
      Rng rng(17);
      Tensor x = Tensor::Zeros({T, 1});
      for (float& v : *x.data) v = static_cast<float>(rng.Uniform(-1, 1));
      Segments segs{{0, T}};
      const Tensor base = enc.TcnForward(nullptr, x, segs, false, nullptr);
      for (int pair = 0; pair < 20 && ok; ++pair) {
        const int t = static_cast<int>(rng.Below(T - 1));
        const int tp = t + 1 + static_cast<int>(rng.Below(T - 1 - t));
        Tensor pert = x;
        pert.data = std::make_shared<std::vector<float>>(*x.data);
        (*pert.data)[tp] += 1.0f;
        const Tensor out = enc.TcnForward(nullptr, pert, segs, false, nullptr);
        for (int c = 0; c < base.shape[1]; ++c)
          if ((*out.data)[t * base.shape[1] + c] !=
              (*base.data)[t * base.shape[1] + c]) {
            ok = false;
            detail = Fmt("future frame %d leaked into frame %d", tp, t);
          }
      }
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    Report(3, "TCN causality under 20 future-frame perturbations", ok, detail);
  }

  {  // 4: quantizer oracle
    std::string detail;
    bool ok = true;
    try {
      PqConfig pc;  // 3 slices x 32 codes over 30 dims
      Rng init(9);
      ProductQuantizer pq(pc, init);
      Rng rng(23);
      const int n = 1000;
      Tensor x = Tensor::Zeros({n, pc.input_dim});
      for (float& v : *x.data) v = static_cast<float>(rng.Uniform(-2, 2));
      auto out = pq.Quantize(nullptr, x, false);
      const int sd = pc.slice_dim();
      for (int i = 0; i < n && ok; ++i)
        for (int s = 0; s < pc.num_slices && ok; ++s) {
          int best = 0;
          double best_d = 1e300;
          for (int k = 0; k < pc.codebook_size; ++k) {
            double dist = 0;
            for (int j = 0; j < sd; ++j) {
              const double diff =
                  (*out.pre_quant.data)[i * pc.input_dim + s * sd + j] -
                  (*pq.codebook(s).value.data)[k * sd + j];
              dist += diff * diff;
            }
            if (dist < best_d) {
              best_d = dist;
              best = k;
            }
          }
          if (out.codes[i][s] != best) {
            ok = false;
            detail = Fmt("row %d slice %d chose %d, argmin %d", i, s,
                         out.codes[i][s], best);
          }
        }

      // EMA recovers two synthetic cluster means.
      PqConfig two;
      two.input_dim = 4;
      two.num_slices = 1;
      two.codebook_size = 2;
      Rng init2(31);
      ProductQuantizer ema(two, init2);
      const std::vector<float> mean_a = {1.0f, -0.5f, 0.25f, 2.0f};
      const std::vector<float> mean_b = {-1.5f, 0.75f, -2.0f, 0.5f};
      {  // drop the codebooks near the clusters so assignment is stable
        auto& book = ema.codebook(0);
        for (int j = 0; j < 4; ++j) {
          (*book.value.data)[0 * 4 + j] = mean_a[j] + 0.3f;
          (*book.value.data)[1 * 4 + j] = mean_b[j] - 0.3f;
        }
        ema.MarkSeeded();
      }
      // Identity input affine: feed pre-chosen points straight through by
      // building output = codes of x under the model's own affine; instead
      // drive EmaUpdate directly with synthetic assignments.
      Rng samp(77);
      for (int step = 0; step < 500; ++step) {
        const int bs = 16;
        QuantizerOutput qo;
        qo.pre_quant = Tensor::Zeros({bs, 4});
        qo.codes.assign(bs, std::vector<int>(1, 0));
        for (int i = 0; i < bs; ++i) {
          const bool a = (i % 2) == 0;
          qo.codes[i][0] = a ? 0 : 1;
          const auto& mu = a ? mean_a : mean_b;
          for (int j = 0; j < 4; ++j)
            (*qo.pre_quant.data)[i * 4 + j] =
                mu[j] + static_cast<float>(samp.Gaussian(0.0, 0.01));
        }
        ema.EmaUpdate(qo);
      }
      for (int j = 0; j < 4 && ok; ++j) {
        if (std::fabs((*ema.codebook(0).value.data)[0 * 4 + j] - mean_a[j]) >
                1e-2 ||
            std::fabs((*ema.codebook(0).value.data)[1 * 4 + j] - mean_b[j]) >
                1e-2) {
          ok = false;
          detail = "EMA codewords off cluster means by more than 1e-2";
        }
      }
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    Report(4, "quantizer argmin oracle and EMA cluster recovery", ok, detail);
  }

  {  // 5: loss calibration
    std::string detail;
    bool ok = true;
    try {
      // All candidates identical: uniform softmax over K+1 = 10.
      Tensor c = Tensor::Zeros({1, 6});
      Tensor cand = Tensor::Zeros({10, 6});
      for (int j = 0; j < 6; ++j) {
        (*c.data)[j] = 0.3f * (j + 1);
        for (int i = 0; i < 10; ++i) (*cand.data)[i * 6 + j] = 1.0f - 0.1f * j;
      }
      const Tensor loss = ContrastiveLoss(nullptr, c, cand, 0.1f);
      const double want = std::log(10.0);
      if (std::fabs(loss.item() - want) > 1e-6) {
        ok = false;
        detail = Fmt("symmetric loss %.8f != ln 10", loss.item());
      }

      // Untrained model: mean batch contrastive near ln 10. A zero peak
      // learning rate freezes the parameters while stepping the pipeline.
      SynthConfig sc;
      sc.num_utterances = 24;
      sc.num_speakers = 4;
      const fs::path tmp = fs::temp_directory_path() / "vqp_acceptance_c5";
      fs::remove_all(tmp);
      GenerateCorpus(sc, (tmp / "corpus").string());
      pipeline::Preprocess((tmp / "corpus" / "manifest.jsonl").string(),
                           (tmp / "data").string(), {});
      PretrainConfig pc;
      pc.batch_size = kDeskBatch;
      pc.lr_max = 0.0f;
      pc.total_steps = 50;
      pc.seed = 7;
      VqpModel model(TcnConfig{}, PqConfig{}, TransformerConfig{}, pc.seed);
      Trainer tr(model, pc, {}, pipeline::LoadPreprocessed((tmp / "data")
                                                               .string()));
      double mean = 0.0;
      for (int s = 0; s < 50; ++s) mean += tr.Step(s).l_contrast;
      mean /= 50.0;
      fs::remove_all(tmp);
      if (std::fabs(mean - want) > 0.10 * want) {
        ok = false;
        detail += Fmt(" untrained mean %.4f outside ln 10 +/- 10%%", mean);
      } else if (ok) {
        detail = Fmt("untrained mean %.4f", mean);
      }
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    Report(5, "contrastive loss calibration at ln 10", ok, detail);
  }

  CorpusArtifacts art;
  art.root = fs::temp_directory_path() / "vqp_acceptance";

  {  // 6: desk-scale learning
    std::string detail;
    bool ok = false;
    try {
      ok = Criterion6(&art, &detail);
    } catch (const std::exception& e) {
      detail = e.what();
    }
    Report(6, "2k-step pretraining learns below 2.0 within 30 min", ok,
           detail);
  }

  {  // 7: probe selectivity
    std::string detail;
    bool ok = false;
    try {
      if (!art.trained) throw DataError("no trained checkpoint (criterion 6)");
      ok = Criterion7(art, &detail);
    } catch (const std::exception& e) {
      detail = e.what();
    }
    Report(7, "MDL probes find pitch and duration, not planted noise", ok,
           detail);
  }

  {  // 8: factor specialization
    std::string detail;
    bool ok = false;
    try {
      if (!art.trained) throw DataError("no trained checkpoint (criterion 6)");
      ok = Criterion8(art, &detail);
    } catch (const std::exception& e) {
      detail = e.what();
    }
    Report(8, "one VQ factor specializes for pitch or duration", ok, detail);
  }

  {  // 9: de-identification calibration
    std::string detail;
    bool ok = false;
    try {
      if (!art.trained) throw DataError("no trained checkpoint (criterion 6)");
      ok = Criterion9(art, &detail);
    } catch (const std::exception& e) {
      detail = e.what();
    }
    Report(9, "de-identification ratio ordering", ok, detail);
  }

  {  // 10: identification probability
    std::string detail;
    bool ok = true;
    Rng rng(55);
    for (int i = 0; i < 20 && ok; ++i) {
      const double ppv = rng.Uniform(0.01, 1.0);
      const double npv = rng.Uniform(0.01, 1.0);
      if (mdl::PId(1.0, 1.0, 1 + static_cast<int64_t>(rng.Below(1000))) !=
          1.0) {
        ok = false;
        detail = "p_id(1,1,N) != 1";
      }
      if (mdl::PId(ppv, npv, 1) != ppv) {
        ok = false;
        detail = "p_id(ppv,npv,1) != ppv";
      }
    }
    for (int i = 0; i < 100 && ok; ++i) {
      const double ppv = rng.Uniform(0.01, 1.0);
      const double npv = rng.Uniform(0.01, 0.999999);
      const int64_t n1 = 1 + static_cast<int64_t>(rng.Below(1000));
      const int64_t n2 = n1 + 1 + static_cast<int64_t>(rng.Below(1000));
      if (mdl::PId(ppv, npv, n2) > mdl::PId(ppv, npv, n1)) {
        ok = false;
        detail = Fmt("not monotone at ppv %.3f npv %.3f", ppv, npv);
      }
    }
    Report(10, "identification probability identities and monotonicity", ok,
           detail);
  }

  {  // 11: DSP oracles
    std::string detail;
    bool ok = true;
    try {
      const dsp::AudioBuffer tone = Sine(200.0, 1.0, 16000.0);
      const double med = dsp::MedianVoicedPitch(dsp::TrackPitch(tone, {}));
      if (std::fabs(med - 200.0) > 2.0) {
        ok = false;
        detail += Fmt("200 Hz tracked at %.2f;", med);
      }
      const dsp::AudioBuffer three = Sine(300.0, 1.0, 16000.0);
      const dsp::AudioBuffer shifted = dsp::PitchShift(three, 0.5);
      const double smed =
          dsp::MedianVoicedPitch(dsp::TrackPitch(shifted, {}));
      if (std::fabs(smed - 150.0) > 3.0) {
        ok = false;
        detail += Fmt(" shifted to %.2f;", smed);
      }
      const double dur_ratio =
          static_cast<double>(shifted.samples.size()) / three.samples.size();
      if (std::fabs(dur_ratio - 1.0) > 0.01) {
        ok = false;
        detail += Fmt(" duration ratio %.4f;", dur_ratio);
      }
      // Steady-state attenuation: the middle of the tone, away from the
      // onset/offset spectral splatter no causal filter can remove.
      const dsp::AudioBuffer two_s = Sine(300.0, 2.0, 16000.0);
      const dsp::AudioBuffer down = dsp::Downsample500(two_s);
      const std::vector<float> mid(down.samples.begin() + 100,
                                   down.samples.end() - 100);
      const double att = Rms(mid) / Rms(two_s.samples);
      if (att > 0.01) {
        ok = false;
        detail += Fmt(" 300 Hz attenuation only %.1f dB;",
                      -20.0 * std::log10(att));
      }
      if (ok)
        detail = Fmt("200 Hz at %.2f, shift to %.2f, attenuation %.0f dB",
                     med, smed, -20.0 * std::log10(att));
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    Report(11, "pitch tracking, pitch shifting, anti-alias attenuation", ok,
           detail);
  }

  {  // 12: determinism and resume
    std::string detail;
    bool ok = false;
    try {
      if (!art.trained && !fs::exists(art.data))
        throw DataError("no preprocessed corpus (criterion 6)");
      ok = Criterion12(art, &detail);
    } catch (const std::exception& e) {
      detail = e.what();
    }
    Report(12, "seeded training determinism and checkpoint replay", ok,
           detail);
  }

  std::printf("%d of 12 criteria passed\n", 12 - g_failed);
  return g_failed == 0 ? 0 : 1;
}
