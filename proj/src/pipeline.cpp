// pipeline.cpp
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

#include "pipeline.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "config.hpp"
#include "json.hpp"

namespace vqp::pipeline {

namespace fs = std::filesystem;

namespace {

// Runs fn(i) for i in [0, n) on `jobs` threads; exceptions resurface on
// the calling thread.
void ParallelFor(int64_t n, int jobs, const std::function<void(int64_t)>& fn) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || n <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> pool;
  for (int w = 0; w < jobs; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int64_t i = next.fetch_add(1); i < n; i = next.fetch_add(1))
          fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string ResolveAudioPath(const std::string& manifest_path,
                             const std::string& audio_path) {
  fs::path p(audio_path);
  if (p.is_absolute()) return audio_path;
  return (fs::path(manifest_path).parent_path() / p).string();
}

dsp::AudioBuffer LoadShifted16k(const std::string& wav_path,
                                bool no_pitch_scaling) {
  dsp::AudioBuffer wav = dsp::ReadWav(wav_path);
  if (wav.sample_rate != 16000.0) wav = dsp::Resample(wav, 16000.0);
  if (no_pitch_scaling) return wav;
  return dsp::PitchShiftToMedian(wav, dsp::kTargetMedianHz);
}

struct PooledReps {
  std::vector<mdl::PooledUtterance> utts;
  int cols = 0;
};

PooledReps PoolPerUtterance(const mdl::RepFile& reps) {
  PooledReps out;
  out.cols = reps.cols;
  for (const mdl::RepIndexEntry& e : reps.index) {
    mdl::PooledUtterance p;
    p.sample_id = e.sample_id;
    p.speaker_id = e.speaker_id;
    p.mean = mdl::MeanPool(reps.data.data() + e.row_start * reps.cols,
                           e.row_count, reps.cols);
    out.utts.push_back(std::move(p));
  }
  return out;
}

void WriteJsonFile(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open report for writing: " + path);
  os << j.dump(2) << "\n";
}

}  // namespace

int64_t Preprocess(const std::string& manifest_path, const std::string& out_dir,
                   const PreprocessOptions& opts) {
  const auto aligns = dsp::ReadManifest(manifest_path);
  if (aligns.empty()) throw DataError("empty manifest: " + manifest_path);
  fs::create_directories(out_dir);

  std::vector<int64_t> word_counts(aligns.size(), 0);
  ParallelFor(static_cast<int64_t>(aligns.size()), opts.jobs, [&](int64_t i) {
    const dsp::WordAlignment& al = aligns[i];
    dsp::AudioBuffer wav =
        dsp::ReadWav(ResolveAudioPath(manifest_path, al.audio_path));
    if (wav.sample_rate != 16000.0) wav = dsp::Resample(wav, 16000.0);
    if (!opts.no_pitch_scaling)
      wav = dsp::PitchShiftToMedian(wav, dsp::kTargetMedianHz);
    dsp::AudioBuffer at500 = dsp::Downsample500(wav);
    at500 = dsp::Normalize(at500);
    const auto words = dsp::SliceWords(at500, al, opts.t_max);
    dsp::WriteAudioWords((fs::path(out_dir) / (al.sample_id + ".vqpw")).string(),
                         words);
    word_counts[i] = static_cast<int64_t>(words.size());
  });

  std::ofstream idx(fs::path(out_dir) / "index.jsonl");
  if (!idx) throw DataError("cannot write index in: " + out_dir);
  nlohmann::json header;
  header["vqp_preprocess"] = 1;
  header["seed"] = opts.seed;
  header["no_pitch_scaling"] = opts.no_pitch_scaling;
  header["t_max"] = opts.t_max;
  idx << header.dump() << "\n";
  int64_t total = 0;
  for (size_t i = 0; i < aligns.size(); ++i) {
    nlohmann::json j;
    j["sample_id"] = aligns[i].sample_id;
    j["speaker_id"] = aligns[i].speaker_id;
    j["path"] = aligns[i].sample_id + ".vqpw";
    j["num_words"] = word_counts[i];
    idx << j.dump() << "\n";
    total += word_counts[i];
  }
  return total;
}

std::vector<Utterance> LoadPreprocessed(const std::string& dir) {
  const std::string index_path = (fs::path(dir) / "index.jsonl").string();
  std::ifstream is(index_path);
  if (!is) throw DataError("missing preprocessed index: " + index_path);
  std::vector<Utterance> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(index_path + ":" + std::to_string(lineno) + ": " +
                      e.what());
    }
    if (j.contains("vqp_preprocess")) continue;  // header line
    Utterance u;
    u.sample_id = j.at("sample_id").get<std::string>();
    u.speaker_id = j.at("speaker_id").get<std::string>();
    u.words = dsp::ReadAudioWords(
        (fs::path(dir) / j.at("path").get<std::string>()).string());
    out.push_back(std::move(u));
  }
  if (out.empty()) throw DataError("no utterances in: " + dir);
  return out;
}

AblationFlags ParseAblation(const std::string& spec) {
  AblationFlags flags;
  std::string token;
  std::stringstream ss(spec);
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    if (token == "pe")
      flags.use_pe_output = true;
    else if (token == "csn")
      flags.cross_sample_negatives = true;
    else if (token == "nps")
      flags.no_pitch_scaling = true;
    else if (token == "nq")
      flags.no_quantization = true;
    else if (token == "tq")
      flags.target_only_quantization = true;
    else
      throw UsageError("unknown ablation '" + token +
                       "' (expected pe, csn, nps, nq, tq)");
  }
  return flags;
}

void Pretrain(const std::string& data_dir, const std::string& config_path,
              const std::string& ckpt_dir, const PretrainOptions& opts) {
  Config cfg = config_path.empty() ? Config() : Config::FromFile(config_path);
  const AblationFlags flags = ParseAblation(opts.ablation);

  PqConfig pq = PqFromConfig(cfg);
  if (flags.no_quantization) pq.enabled = false;
  PretrainConfig pc = PretrainFromConfig(cfg);
  if (opts.steps_override >= 0) pc.total_steps = opts.steps_override;
  if (opts.seed_override >= 0) pc.seed = static_cast<uint64_t>(opts.seed_override);

  std::vector<Utterance> corpus = LoadPreprocessed(data_dir);
  VqpModel model(TcnFromConfig(cfg), pq, CtxFromConfig(cfg), pc.seed);

  fs::create_directories(ckpt_dir);
  std::ofstream metrics(fs::path(ckpt_dir) / "metrics.jsonl");
  if (!metrics) throw DataError("cannot write metrics log in: " + ckpt_dir);
  Trainer trainer(model, pc, flags, std::move(corpus));
  trainer.Run(ckpt_dir, &metrics);
}

void Extract(const std::string& data_dir, const std::string& ckpt_path,
             const std::string& level, const std::string& out_reps,
             const std::string& config_path, const std::string& ablation) {
  Config cfg = config_path.empty() ? Config() : Config::FromFile(config_path);
  const AblationFlags flags = ParseAblation(ablation);
  PqConfig pq = PqFromConfig(cfg);
  if (flags.no_quantization) pq.enabled = false;
  const RepLevel rep_level = ParseRepLevel(level);

  VqpModel model(TcnFromConfig(cfg), pq, CtxFromConfig(cfg), 0);
  model.Load(ckpt_path);

  const std::vector<Utterance> corpus = LoadPreprocessed(data_dir);
  mdl::RepFile reps;
  reps.cols = RepDim(rep_level, model.quantizer().config(),
                     model.transformer().config());
  for (const Utterance& utt : corpus) {
    const ad::Tensor t = ExtractUtterance(model, utt, rep_level);
    if (t.shape[1] != reps.cols)
      throw NumericError("extract: unexpected representation width");
    mdl::RepIndexEntry e;
    e.sample_id = utt.sample_id;
    e.speaker_id = utt.speaker_id;
    e.row_start = reps.rows;
    e.row_count = t.shape[0];
    reps.index.push_back(std::move(e));
    reps.data.insert(reps.data.end(), t.data->begin(), t.data->end());
    reps.rows += t.shape[0];
  }
  mdl::WriteReps(out_reps, reps);
}

int64_t Features(const std::string& manifest_path,
                 const std::string& out_table, const FeatureOptions& opts) {
  const auto aligns = dsp::ReadManifest(manifest_path);
  if (aligns.empty()) throw DataError("empty manifest: " + manifest_path);
  std::vector<std::vector<features::WordFeatureRow>> per_utt(aligns.size());
  ParallelFor(static_cast<int64_t>(aligns.size()), opts.jobs, [&](int64_t i) {
    const dsp::AudioBuffer audio = LoadShifted16k(
        ResolveAudioPath(manifest_path, aligns[i].audio_path),
        opts.no_pitch_scaling);
    per_utt[i] = features::ExtractUtteranceFeatures(audio, aligns[i]);
  });
  std::vector<features::WordFeatureRow> rows;
  for (auto& part : per_utt)
    rows.insert(rows.end(), std::make_move_iterator(part.begin()),
                std::make_move_iterator(part.end()));
  features::WriteFeatureTable(out_table, rows);
  return static_cast<int64_t>(rows.size());
}

void Probe(const std::string& reps_path, const std::string& table_path,
           const std::string& out_report, const mdl::ProbeSpec& spec) {
  const mdl::RepFile reps = mdl::ReadReps(reps_path);
  const auto table = features::ReadFeatureTable(table_path);
  const auto report = mdl::ProbeReport(reps, table, spec);

  nlohmann::json j;
  j["seed"] = spec.seed;
  j["representations"] = reps_path;
  nlohmann::json rows = nlohmann::json::array();
  std::printf("%-18s %12s %10s %8s %6s\n", "feature", "mdl_kbits", "auc", "n",
              "flag");
  for (const auto& row : report) {
    nlohmann::json r;
    r["feature"] = row.feature;
    r["mdl_bits"] = row.mdl_bits;
    r["mdl_kbits"] = row.mdl_kbits;
    r["final_auc"] = row.final_auc;
    r["n"] = row.n;
    r["degenerate"] = row.degenerate;
    rows.push_back(r);
    std::printf("%-18s %12.3f %10.3f %8lld %6s\n", row.feature.c_str(),
                row.mdl_kbits, row.final_auc,
                static_cast<long long>(row.n),
                row.degenerate ? "degen" : "");
  }
  j["rows"] = rows;
  WriteJsonFile(out_report, j);
}

double Deid(const std::string& reps_a_path, const std::string& reps_b_path,
            int num_trials, const std::string& out_report,
            const mdl::ProbeSpec& spec) {
  if (num_trials < 1) throw UsageError("deid: need at least one trial");
  const PooledReps a = PoolPerUtterance(mdl::ReadReps(reps_a_path));
  std::optional<PooledReps> b;
  if (!reps_b_path.empty()) {
    b = PoolPerUtterance(mdl::ReadReps(reps_b_path));
    if (b->cols != a.cols)
      throw DataError("deid: representation widths differ between files");
  }
  Rng trial_rng(spec.seed, "trials", 0);
  const auto trials =
      mdl::BuildTrials(a.utts, num_trials, trial_rng, b ? &b->utts : nullptr);
  const mdl::DeidResult res = mdl::DeidRatio(trials, spec);

  nlohmann::json j;
  j["seed"] = spec.seed;
  j["num_trials"] = num_trials;
  j["deid_ratio"] = res.ratio;
  j["total_bits"] = res.report.total_bits;
  j["first_block_bits"] = res.report.first_block_bits;
  j["block_bits"] = res.report.block_bits;
  j["final_auc"] = res.report.final_auc;
  j["degenerate_schedule"] = res.report.degenerate_schedule;
  WriteJsonFile(out_report, j);
  std::printf("deid_ratio %.4f  (final block auc %.3f, %d trials)\n",
              res.ratio, res.report.final_auc, num_trials);
  return res.ratio;
}

double Downstream(const std::string& train_reps, const std::string& test_reps,
                  const std::string& labels_path,
                  const std::string& out_report, const mdl::ProbeSpec& spec) {
  std::map<std::string, uint8_t> labels;
  {
    std::ifstream is(labels_path);
    if (!is) throw DataError("cannot open labels: " + labels_path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw DataError(labels_path + ":" + std::to_string(lineno) + ": " +
                        e.what());
      }
      labels[j.at("sample_id").get<std::string>()] =
          j.at("label").get<int>() != 0 ? 1 : 0;
    }
  }
  auto to_dataset = [&](const std::string& path) {
    const PooledReps pooled = PoolPerUtterance(mdl::ReadReps(path));
    mdl::Dataset d;
    d.dim = pooled.cols;
    for (const auto& u : pooled.utts) {
      auto it = labels.find(u.sample_id);
      if (it == labels.end())
        throw DataError("downstream: no label for sample '" + u.sample_id +
                        "'");
      d.x.insert(d.x.end(), u.mean.begin(), u.mean.end());
      d.y.push_back(it->second);
      ++d.n;
    }
    return d;
  };
  const double auc =
      mdl::DownstreamEval(to_dataset(train_reps), to_dataset(test_reps), spec);
  nlohmann::json j;
  j["seed"] = spec.seed;
  j["auc"] = auc;
  WriteJsonFile(out_report, j);
  std::printf("downstream auc %.4f\n", auc);
  return auc;
}

}  // namespace vqp::pipeline
