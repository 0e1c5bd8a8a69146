// synth.cpp
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

#include "synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "common.hpp"
#include "dsp.hpp"
#include "json.hpp"
#include "rng.hpp"

namespace vqp {

namespace {

// 3-state pitch, 2-state duration, 2-state intensity; independent chains
// so probes can separate the factors.
constexpr double kPitchHz[3] = {110.0, 150.0, 205.0};
constexpr double kDurationS[2] = {0.25, 0.42};
constexpr double kAmplitude[2] = {0.22, 0.55};

int StepChain(int state, int num_states, double stay_p, Rng& rng) {
  if (rng.Uniform() < stay_p) return state;
  int next = static_cast<int>(rng.Below(num_states - 1));
  return next >= state ? next + 1 : next;
}

}  // namespace

void GenerateCorpus(const SynthConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::ofstream manifest(fs::path(out_dir) / "manifest.jsonl");
  if (!manifest) throw DataError("synth: cannot write manifest in " + out_dir);

  const double sr = cfg.sample_rate;
  for (int u = 0; u < cfg.num_utterances; ++u) {
    Rng rng(cfg.seed, "utterance", static_cast<uint64_t>(u));
    const int spk = u % cfg.num_speakers;
    // fixed per-speaker pitch offset, +-0.35 octaves across speakers
    const double spk_factor =
        std::pow(2.0, (static_cast<double>(spk) / (cfg.num_speakers - 1) - 0.5) *
                          0.7);

    const int num_words =
        cfg.min_words +
        static_cast<int>(rng.Below(cfg.max_words - cfg.min_words + 1));
    int pitch_s = static_cast<int>(rng.Below(3));
    int dur_s = static_cast<int>(rng.Below(2));
    int amp_s = static_cast<int>(rng.Below(2));

    std::vector<float> audio;
    nlohmann::json words = nlohmann::json::array();
    double t = 0.0;
    for (int w = 0; w < num_words; ++w) {
      const double gap = 0.06 + 0.05 * rng.Uniform();
      const int gap_n = static_cast<int>(std::lround(gap * sr));
      audio.insert(audio.end(), gap_n, 0.0f);
      t += gap_n / sr;

      const double f0 =
          kPitchHz[pitch_s] * spk_factor * (1.0 + 0.02 * rng.Gaussian());
      const double dur =
          kDurationS[dur_s] * (1.0 + 0.05 * rng.Gaussian());
      const double amp = kAmplitude[amp_s] * (1.0 + 0.05 * rng.Gaussian());
      const int n = static_cast<int>(std::lround(dur * sr));
      const double start = t;
      const int ramp = static_cast<int>(0.02 * sr);
      for (int i = 0; i < n; ++i) {
        double env = 1.0;
        if (i < ramp) env = static_cast<double>(i) / ramp;
        if (n - 1 - i < ramp) env = std::min(env, (n - 1.0 - i) / ramp);
        double s = 0.0;
        for (int h = 1; h <= 5; ++h)
          s += std::sin(2.0 * M_PI * h * f0 * i / sr) / h;
        audio.push_back(static_cast<float>(amp * env * s / 2.0));
      }
      t += n / sr;
      words.push_back({{"w", "w" + std::to_string(w)},
                       {"start", start},
                       {"end", t}});

      pitch_s = StepChain(pitch_s, 3, 0.6, rng);
      dur_s = StepChain(dur_s, 2, 0.7, rng);
      amp_s = StepChain(amp_s, 2, 0.7, rng);
    }
    audio.insert(audio.end(), static_cast<int>(0.05 * sr), 0.0f);

    char name[32];
    std::snprintf(name, sizeof(name), "utt%04d", u);
    char spk_name[32];
    std::snprintf(spk_name, sizeof(spk_name), "spk%02d", spk);
    const std::string wav_name = std::string(name) + ".wav";

    dsp::AudioBuffer buf;
    buf.sample_rate = sr;
    buf.samples = std::move(audio);
    dsp::WriteWav((fs::path(out_dir) / wav_name).string(), buf);

    nlohmann::json line;
    line["sample_id"] = name;
    line["speaker_id"] = spk_name;
    line["audio_path"] = wav_name;
    line["words"] = words;
    manifest << line.dump() << "\n";
  }
}

}  // namespace vqp
