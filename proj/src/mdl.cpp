// mdl.cpp
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

#include "mdl.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include "json.hpp"
#include "tensor.hpp"

namespace vqp::mdl {

using namespace ad;

namespace {

constexpr double kMinProb = 1e-6;  // caps any single item at ~20 bits

// FFN with ReLU hidden layers and a zero-initialized scalar output head.
struct Probe {
  std::vector<Parameter> hidden_w, hidden_b;
  Parameter out_w, out_b;
  float dropout_p;

  Probe(int dim, const ProbeSpec& spec, Rng& rng) : dropout_p(spec.dropout) {
    int in = dim;
    for (int l = 0; l < spec.hidden_layers; ++l) {
      Tensor t = Tensor::Zeros({in, spec.hidden});
      KaimingUniform(t, in, rng);
      const std::string base = "probe.l" + std::to_string(l + 1);
      hidden_w.emplace_back(base + ".weight", t);
      hidden_b.emplace_back(base + ".bias", Tensor::Zeros({spec.hidden}));
      in = spec.hidden;
    }
    // zero head: the untrained probe emits logit 0, i.e. exactly p = 0.5
    out_w = Parameter("probe.out.weight", Tensor::Zeros({in, 1}));
    out_b = Parameter("probe.out.bias", Tensor::Zeros({1}));
  }

  std::vector<Parameter*> Params() {
    std::vector<Parameter*> out;
    for (size_t l = 0; l < hidden_w.size(); ++l) {
      out.push_back(&hidden_w[l]);
      out.push_back(&hidden_b[l]);
    }
    out.push_back(&out_w);
    out.push_back(&out_b);
    return out;
  }

  Tensor Logits(Tape* tape, const Tensor& x, bool train, Rng* drop) {
    auto leaf = [&](Parameter& p) { return tape ? tape->Leaf(p) : p.value; };
    Tensor h = x;
    for (size_t l = 0; l < hidden_w.size(); ++l) {
      h = Relu(tape, Affine(tape, h, leaf(hidden_w[l]), leaf(hidden_b[l])));
      if (train && dropout_p > 0.0f)
        h = Dropout(tape, h, dropout_p, train, *drop);
    }
    return Affine(tape, h, leaf(out_w), leaf(out_b));  // [rows, 1]
  }
};

Tensor GatherRows(const Dataset& data, const std::vector<int64_t>& order,
                  int64_t begin, int64_t end) {
  Tensor x = Tensor::Zeros({static_cast<int>(end - begin), data.dim});
  for (int64_t i = begin; i < end; ++i)
    std::memcpy(x.ptr() + (i - begin) * data.dim,
                data.x.data() + order[i] * data.dim,
                sizeof(float) * data.dim);
  return x;
}

// Trains a fresh probe on the shuffled prefix [0, prefix).
Probe TrainProbe(const Dataset& data, const std::vector<int64_t>& order,
                 int64_t prefix, const ProbeSpec& spec, int block_index) {
  Rng init_rng(spec.seed, "probe_init", static_cast<uint64_t>(block_index));
  Rng batch_rng(spec.seed, "probe_batch", static_cast<uint64_t>(block_index));
  Rng drop_rng(spec.seed, "probe_dropout", static_cast<uint64_t>(block_index));
  Probe probe(data.dim, spec, init_rng);
  std::vector<Parameter*> params = probe.Params();
  AdamConfig adam;
  adam.lr = spec.lr;
  adam.beta2 = spec.beta2;
  const int bs = static_cast<int>(std::min<int64_t>(spec.batch_size, prefix));
  for (int step = 0; step < spec.steps_per_block; ++step) {
    Tensor x = Tensor::Zeros({bs, data.dim});
    std::vector<float> y(bs);
    for (int i = 0; i < bs; ++i) {
      const int64_t j = order[batch_rng.Below(static_cast<uint64_t>(prefix))];
      std::memcpy(x.ptr() + static_cast<int64_t>(i) * data.dim,
                  data.x.data() + j * data.dim, sizeof(float) * data.dim);
      y[i] = data.y[j] ? 1.0f : 0.0f;
    }
    Tape tape;
    Tensor logits = probe.Logits(&tape, x, true, &drop_rng);
    Tensor loss = BceWithLogits(&tape, logits, y);
    tape.Backward(loss);
    OptimizerStep(params, adam);
    ZeroGrads(params);
  }
  return probe;
}

std::vector<double> PredictProbs(Probe& probe, const Dataset& data,
                                 const std::vector<int64_t>& order,
                                 int64_t begin, int64_t end) {
  Tensor x = GatherRows(data, order, begin, end);
  Tensor logits = probe.Logits(nullptr, x, false, nullptr);
  std::vector<double> p(end - begin);
  for (int64_t i = 0; i < end - begin; ++i) {
    const double z = (*logits.data)[i];
    if (!std::isfinite(z)) throw NumericError("probe produced non-finite logit");
    p[i] = 1.0 / (1.0 + std::exp(-z));
  }
  return p;
}

}  // namespace

BlockSchedule MakeBlockSchedule(int64_t n, int num_blocks,
                                double first_fraction, int64_t min_first) {
  if (n < 1) throw UsageError("block schedule: empty dataset");
  if (num_blocks < 2) throw UsageError("block schedule: need at least 2 blocks");
  BlockSchedule out;
  if (n < 2 * min_first) {
    out.boundaries = {n};
    out.degenerate = true;
    return out;
  }
  const int64_t t1 = std::max<int64_t>(
      min_first, static_cast<int64_t>(std::ceil(first_fraction * n)));
  // Cap the block count so the geometric growth factor is at least 2;
  // otherwise tiny datasets would shatter into nearly empty blocks.
  const int max_blocks =
      1 + static_cast<int>(std::floor(std::log2(static_cast<double>(n) / t1)));
  const int blocks = std::max(2, std::min(num_blocks, max_blocks));
  const double ratio = std::pow(static_cast<double>(n) / t1,
                                1.0 / (blocks - 1));
  out.boundaries.push_back(t1);
  for (int i = 1; i < blocks; ++i) {
    int64_t b = static_cast<int64_t>(std::llround(t1 * std::pow(ratio, i)));
    b = std::min(b, n);
    b = std::max(b, out.boundaries.back() + 1);
    if (b >= n) {
      out.boundaries.push_back(n);
      break;
    }
    out.boundaries.push_back(b);
  }
  if (out.boundaries.back() != n) out.boundaries.push_back(n);
  return out;
}

CodelengthReport PrequentialCodelength(const Dataset& data,
                                       const BlockSchedule& schedule,
                                       const ProbeSpec& spec) {
  if (data.n < 1 || data.dim < 1) throw UsageError("prequential: empty dataset");
  if (static_cast<int64_t>(data.y.size()) != data.n ||
      static_cast<int64_t>(data.x.size()) != data.n * data.dim)
    throw UsageError("prequential: misaligned dataset");
  if (schedule.boundaries.empty() || schedule.boundaries.back() != data.n)
    throw UsageError("prequential: schedule does not end at n");

  CodelengthReport rep;
  rep.n = data.n;
  rep.shuffle_seed = spec.seed;
  rep.degenerate_schedule = schedule.degenerate;

  std::vector<int64_t> order(data.n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(spec.seed, "shuffle", 0);
  for (int64_t i = data.n - 1; i > 0; --i)
    std::swap(order[i], order[shuffle_rng.Below(static_cast<uint64_t>(i + 1))]);

  const int64_t t1 = schedule.boundaries.front();
  rep.first_block_bits = static_cast<double>(t1);  // log2(2) bits each
  rep.total_bits = rep.first_block_bits;

  const size_t num_coded = schedule.boundaries.size() - 1;
  for (size_t i = 0; i < num_coded; ++i) {
    const int64_t begin = schedule.boundaries[i];
    const int64_t end = schedule.boundaries[i + 1];
    double bits = 0.0;
    bool diverged = false;
    std::vector<double> item_bits(end - begin, 1.0);
    std::vector<double> probs;
    try {
      Probe probe = TrainProbe(data, order, begin, spec,
                               static_cast<int>(i));
      probs = PredictProbs(probe, data, order, begin, end);
      for (int64_t j = begin; j < end; ++j) {
        double p = probs[j - begin];
        p = std::clamp(p, kMinProb, 1.0 - kMinProb);
        const double cost =
            -std::log2(data.y[order[j]] ? p : 1.0 - p);
        item_bits[j - begin] = cost;
        bits += cost;
      }
      if (i + 1 == num_coded) {
        std::vector<uint8_t> labels;
        for (int64_t j = begin; j < end; ++j)
          labels.push_back(data.y[order[j]]);
        const bool two_class =
            std::count(labels.begin(), labels.end(), uint8_t{1}) > 0 &&
            std::count(labels.begin(), labels.end(), uint8_t{0}) > 0;
        if (two_class) rep.final_auc = Auc(probs, labels);
      }
    } catch (const NumericError&) {
      diverged = true;
      bits = static_cast<double>(end - begin);  // uniform fallback
      std::fill(item_bits.begin(), item_bits.end(), 1.0);
    }
    // Code each block with the better of the probe and the uniform predictor.
    // Without this an overconfident probe on uninformative inputs is billed
    // arbitrarily many bits per label and the ratio loses its calibration at
    // 1.0 for independent labels.
    if (bits > static_cast<double>(end - begin)) {
      diverged = true;
      bits = static_cast<double>(end - begin);
      std::fill(item_bits.begin(), item_bits.end(), 1.0);
    }
    rep.block_bits.push_back(bits);
    rep.divergent.push_back(diverged);
    rep.per_item_bits.insert(rep.per_item_bits.end(), item_bits.begin(),
                             item_bits.end());
    rep.total_bits += bits;
  }
  rep.ratio = rep.total_bits / static_cast<double>(rep.n);
  return rep;
}

std::vector<float> MeanPool(const float* rows, int64_t count, int dim) {
  if (count < 1) throw UsageError("mean pool: empty range");
  std::vector<double> acc(dim, 0.0);
  for (int64_t r = 0; r < count; ++r)
    for (int d = 0; d < dim; ++d) acc[d] += rows[r * dim + d];
  std::vector<float> out(dim);
  for (int d = 0; d < dim; ++d)
    out[d] = static_cast<float>(acc[d] / static_cast<double>(count));
  return out;
}

std::vector<VerificationTrial> BuildTrials(
    const std::vector<PooledUtterance>& utts, int num_trials, Rng& rng,
    const std::vector<PooledUtterance>* trial_side) {
  const std::vector<PooledUtterance>& side = trial_side ? *trial_side : utts;
  std::map<std::string, std::vector<const PooledUtterance*>> by_spk_r, by_spk_s;
  for (const auto& u : utts) by_spk_r[u.speaker_id].push_back(&u);
  for (const auto& u : side) by_spk_s[u.speaker_id].push_back(&u);
  if (by_spk_r.size() < 2 || by_spk_s.size() < 2)
    throw DataError("build trials: need at least 2 speakers");

  // Speakers that can supply a positive pair (two distinct utterances).
  std::vector<std::string> pos_spk;
  for (const auto& [spk, rs] : by_spk_r) {
    auto it = by_spk_s.find(spk);
    if (it == by_spk_s.end()) continue;
    for (const auto* r : rs)
      for (const auto* s : it->second)
        if (r->sample_id != s->sample_id) {
          pos_spk.push_back(spk);
          goto next_speaker;
        }
  next_speaker:;
  }
  if (pos_spk.empty())
    throw DataError("build trials: no speaker has two distinct utterances");
  std::vector<std::string> r_spk;
  for (const auto& [spk, _] : by_spk_r) r_spk.push_back(spk);

  std::vector<VerificationTrial> trials;
  trials.reserve(num_trials);
  for (int t = 0; t < num_trials; ++t) {
    VerificationTrial trial;
    trial.label = rng.Bernoulli(0.5f) ? 1 : 0;
    if (trial.label) {
      const std::string& spk = pos_spk[rng.Below(pos_spk.size())];
      const auto& rs = by_spk_r[spk];
      const auto& ss = by_spk_s[spk];
      const PooledUtterance* r = rs[rng.Below(rs.size())];
      const PooledUtterance* s = ss[rng.Below(ss.size())];
      while (s->sample_id == r->sample_id) s = ss[rng.Below(ss.size())];
      trial.r = r->mean;
      trial.s = s->mean;
    } else {
      const std::string& a = r_spk[rng.Below(r_spk.size())];
      std::string b = a;
      // draw the s-side speaker until it differs
      std::vector<std::string> s_spk;
      for (const auto& [spk, _] : by_spk_s) s_spk.push_back(spk);
      while (b == a) b = s_spk[rng.Below(s_spk.size())];
      const auto& rs = by_spk_r[a];
      const auto& ss = by_spk_s[b];
      trial.r = rs[rng.Below(rs.size())]->mean;
      trial.s = ss[rng.Below(ss.size())]->mean;
    }
    trials.push_back(std::move(trial));
  }
  return trials;
}

Dataset TrialsToDataset(const std::vector<VerificationTrial>& trials) {
  if (trials.empty()) throw UsageError("trials to dataset: no trials");
  const int d = static_cast<int>(trials[0].r.size());
  Dataset out;
  out.n = static_cast<int64_t>(trials.size());
  out.dim = 4 * d;
  out.x.reserve(out.n * out.dim);
  for (const auto& t : trials) {
    if (static_cast<int>(t.r.size()) != d || static_cast<int>(t.s.size()) != d)
      throw UsageError("trials to dataset: inconsistent dimensions");
    for (int i = 0; i < d; ++i) out.x.push_back(t.r[i]);
    for (int i = 0; i < d; ++i) out.x.push_back(t.s[i]);
    for (int i = 0; i < d; ++i) out.x.push_back(std::fabs(t.r[i] - t.s[i]));
    for (int i = 0; i < d; ++i) out.x.push_back(t.r[i] * t.s[i]);
    out.y.push_back(t.label);
  }
  return out;
}

DeidResult DeidRatio(const std::vector<VerificationTrial>& trials,
                     const ProbeSpec& spec) {
  Dataset data = TrialsToDataset(trials);
  const BlockSchedule schedule = MakeBlockSchedule(data.n);
  DeidResult out;
  out.report = PrequentialCodelength(data, schedule, spec);
  out.ratio = out.report.ratio;
  return out;
}

double PId(double ppv, double npv, int64_t n_candidates) {
  if (ppv < 0.0 || ppv > 1.0 || npv < 0.0 || npv > 1.0)
    throw UsageError("p_id: predictive values must lie in [0, 1]");
  if (n_candidates < 1) throw UsageError("p_id: need at least one candidate");
  return ppv * std::pow(npv, static_cast<double>(n_candidates - 1));
}

double Auc(const std::vector<double>& scores,
           const std::vector<uint8_t>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw UsageError("auc: misaligned scores and labels");
  const int64_t n = static_cast<int64_t>(scores.size());
  int64_t npos = 0;
  for (uint8_t l : labels) npos += l != 0;
  const int64_t nneg = n - npos;
  if (npos == 0 || nneg == 0)
    throw DataError("auc: test labels are single-class");

  std::vector<int64_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](int64_t a, int64_t b) { return scores[a] < scores[b]; });
  // average ranks across ties
  std::vector<double> rank(n);
  int64_t i = 0;
  while (i < n) {
    int64_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg = (i + j) / 2.0 + 1.0;  // ranks are 1-based
    for (int64_t k = i; k <= j; ++k) rank[idx[k]] = avg;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  for (int64_t k = 0; k < n; ++k)
    if (labels[k]) pos_rank_sum += rank[k];
  return (pos_rank_sum - npos * (npos + 1) / 2.0) /
         (static_cast<double>(npos) * static_cast<double>(nneg));
}

double DownstreamEval(const Dataset& train, const Dataset& test,
                      const ProbeSpec& spec) {
  if (train.dim != test.dim)
    throw UsageError("downstream eval: train/test dimension mismatch");
  std::vector<int64_t> train_order(train.n), test_order(test.n);
  std::iota(train_order.begin(), train_order.end(), 0);
  std::iota(test_order.begin(), test_order.end(), 0);
  Probe probe = TrainProbe(train, train_order, train.n, spec, 0);
  const std::vector<double> p =
      PredictProbs(probe, test, test_order, 0, test.n);
  return Auc(p, test.y);
}

void WriteReps(const std::string& path, const RepFile& reps) {
  if (reps.rows * reps.cols != static_cast<int64_t>(reps.data.size()))
    throw UsageError("write reps: shape does not match payload");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open representation file for writing: " + path);
  os.write("NVQP", 4);
  const uint32_t version = 1;
  const uint32_t rows = static_cast<uint32_t>(reps.rows);
  const uint32_t cols = static_cast<uint32_t>(reps.cols);
  os.write(reinterpret_cast<const char*>(&version), 4);
  os.write(reinterpret_cast<const char*>(&rows), 4);
  os.write(reinterpret_cast<const char*>(&cols), 4);
  os.write(reinterpret_cast<const char*>(reps.data.data()),
           static_cast<std::streamsize>(reps.data.size() * sizeof(float)));
  if (!os) throw DataError("short write to representation file: " + path);

  std::ofstream idx(path + ".idx.jsonl");
  if (!idx) throw DataError("cannot open sidecar index: " + path + ".idx.jsonl");
  for (const RepIndexEntry& e : reps.index) {
    nlohmann::json j;
    j["sample_id"] = e.sample_id;
    j["row_start"] = e.row_start;
    j["row_count"] = e.row_count;
    j["speaker_id"] = e.speaker_id;
    idx << j.dump() << "\n";
  }
}

RepFile ReadReps(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open representation file: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "NVQP", 4) != 0)
    throw DataError("bad magic in representation file: " + path);
  uint32_t version = 0, rows = 0, cols = 0;
  is.read(reinterpret_cast<char*>(&version), 4);
  is.read(reinterpret_cast<char*>(&rows), 4);
  is.read(reinterpret_cast<char*>(&cols), 4);
  if (!is || version != 1)
    throw DataError("unsupported representation file version in: " + path);
  RepFile out;
  out.rows = rows;
  out.cols = static_cast<int>(cols);
  out.data.resize(static_cast<size_t>(rows) * cols);
  is.read(reinterpret_cast<char*>(out.data.data()),
          static_cast<std::streamsize>(out.data.size() * sizeof(float)));
  if (!is) throw DataError("truncated representation file: " + path);

  std::ifstream idx(path + ".idx.jsonl");
  if (!idx) throw DataError("missing sidecar index: " + path + ".idx.jsonl");
  std::string line;
  int lineno = 0;
  while (std::getline(idx, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ".idx.jsonl:" + std::to_string(lineno) + ": " +
                      e.what());
    }
    RepIndexEntry e;
    e.sample_id = j.at("sample_id").get<std::string>();
    e.row_start = j.at("row_start").get<int64_t>();
    e.row_count = j.at("row_count").get<int64_t>();
    e.speaker_id = j.at("speaker_id").get<std::string>();
    if (e.row_start < 0 || e.row_start + e.row_count > out.rows)
      throw DataError("sidecar row range out of bounds for sample '" +
                      e.sample_id + "' in " + path);
    out.index.push_back(std::move(e));
  }
  return out;
}

std::vector<ProbeReportRow> ProbeReport(
    const RepFile& reps, const std::vector<features::WordFeatureRow>& table,
    const ProbeSpec& spec) {
  std::map<std::string, const RepIndexEntry*> by_sample;
  for (const RepIndexEntry& e : reps.index) by_sample[e.sample_id] = &e;

  // resolve each table row to a representation row
  std::vector<int64_t> rep_row(table.size());
  for (size_t i = 0; i < table.size(); ++i) {
    auto it = by_sample.find(table[i].sample_id);
    if (it == by_sample.end())
      throw DataError("probe report: sample '" + table[i].sample_id +
                      "' missing from representations");
    const RepIndexEntry& e = *it->second;
    if (table[i].word_index < 0 || table[i].word_index >= e.row_count)
      throw DataError("probe report: word " +
                      std::to_string(table[i].word_index) + " of sample '" +
                      table[i].sample_id + "' outside representation range");
    rep_row[i] = e.row_start + table[i].word_index;
  }

  std::vector<ProbeReportRow> out;
  for (const std::string& name : features::FeatureNames()) {
    std::vector<std::optional<double>> values;
    for (const auto& row : table) {
      const auto m = features::FeatureMap(row.features);
      auto it = m.find(name);
      values.push_back(it == m.end() ? std::nullopt
                                     : std::optional<double>(it->second));
    }
    ProbeReportRow report_row;
    report_row.feature = name;
    features::BinaryLabelSet labels;
    try {
      labels = features::BinarizeVsMean(name, values,
                                        std::vector<bool>(values.size(), true));
    } catch (const DataError&) {
      report_row.degenerate = true;  // no present value at all
      out.push_back(report_row);
      continue;
    }
    report_row.degenerate = labels.degenerate;

    Dataset data;
    data.dim = reps.cols;
    for (size_t i = 0; i < table.size(); ++i) {
      if (!labels.labels[i]) continue;
      const float* src = reps.data.data() + rep_row[i] * reps.cols;
      data.x.insert(data.x.end(), src, src + reps.cols);
      data.y.push_back(*labels.labels[i] ? 1 : 0);
      ++data.n;
    }
    if (data.n < 2) {
      report_row.degenerate = true;
      out.push_back(report_row);
      continue;
    }
    Rng child(spec.seed, "feature-" + name, 0);
    ProbeSpec feature_spec = spec;
    feature_spec.seed = child.Below(std::numeric_limits<uint64_t>::max());
    const BlockSchedule schedule = MakeBlockSchedule(data.n);
    const CodelengthReport rep = PrequentialCodelength(data, schedule,
                                                       feature_spec);
    report_row.mdl_bits = rep.total_bits;
    report_row.mdl_kbits = rep.total_bits / 1000.0;  // 1 kbit = 1000 bits
    report_row.final_auc = rep.final_auc;
    report_row.n = rep.n;
    out.push_back(report_row);
  }
  return out;
}

}  // namespace vqp::mdl
