// synth.hpp
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

#ifndef VQP_SYNTH_HPP_
#define VQP_SYNTH_HPP_

#include <cstdint>
#include <string>

namespace vqp {

// Synthetic prosody corpus: harmonic-tone "words" whose pitch, duration,
// and intensity each follow independent Markov chains, with a fixed
// per-speaker pitch offset. Writes one WAV per utterance plus
// manifest.jsonl into out_dir.
struct SynthConfig {
  int num_utterances = 200;
  int num_speakers = 10;
  int min_words = 16;
  int max_words = 32;
  uint64_t seed = 1234;
  double sample_rate = 16000.0;
};

void GenerateCorpus(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace vqp

#endif  // VQP_SYNTH_HPP_
