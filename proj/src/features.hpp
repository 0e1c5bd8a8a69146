// src/features.hpp

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

#ifndef VQP_FEATURES_HPP_
#define VQP_FEATURES_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsp.hpp"

namespace vqp::features {

// Per-word acoustic descriptors. Optional fields are absent when the word
// carries no voicing (pitch, formants, articulation rate) or no detected
// syllable nucleus (per-syllable duration).
struct WordFeatures {
  std::optional<double> pitch_hz;       // median voiced F0 in the word span
  double intensity_db = -120.0;         // RMS level re full scale
  int num_syllables = 0;
  std::optional<double> artic_rate;     // syllables/s over phonation time
  double speech_rate = 0.0;             // syllables/s over the full slice span
  std::optional<double> syll_duration_s;
  double word_duration_s = 0.0;         // alignment end - start, exactly
  std::optional<double> f1_hz, f2_hz, f3_hz;
};

struct WordFeatureRow {
  std::string sample_id;
  int word_index = 0;
  WordFeatures features;
};

// Canonical feature-name order used everywhere a table is serialized.
const std::vector<std::string>& FeatureNames();

// Flattens to name -> value; absent fields are missing from the map.
std::map<std::string, double> FeatureMap(const WordFeatures& f);

// Extracts features for every aligned word from full-bandwidth audio
// (intended for the 16 kHz pitch-shifted signal, before any downsampling).
// Words whose span falls outside the audio are skipped, so the result may
// have fewer entries than the alignment; `word_index` identifies survivors.
std::vector<WordFeatureRow> ExtractUtteranceFeatures(
    const dsp::AudioBuffer& audio, const dsp::WordAlignment& alignment);

// Binary labels from thresholding at the mean of the training subset.
struct BinaryLabelSet {
  std::string feature;
  double threshold = 0.0;                    // mean over train values
  std::vector<std::optional<bool>> labels;   // absent where value absent
  bool degenerate = false;                   // constant train values
};

// `in_train[i]` selects the values whose mean defines the threshold.
// DataError when no train value is present.
BinaryLabelSet BinarizeVsMean(const std::string& feature,
                              const std::vector<std::optional<double>>& values,
                              const std::vector<bool>& in_train);

// JSON-lines feature table {"sample_id", "word_index", "features": {...}}.
void WriteFeatureTable(const std::string& path,
                       const std::vector<WordFeatureRow>& rows);
std::vector<WordFeatureRow> ReadFeatureTable(const std::string& path);

// Burg-method LPC: returns `order` reflection-derived coefficients a[1..order]
// of the forward prediction polynomial 1 + a1 z^-1 + ... (exposed for tests).
std::vector<double> BurgLpc(const std::vector<double>& frame, int order);

// Roots of 1 + a1 z^-1 + ... -> formant candidates (freq, bandwidth) sorted
// by frequency, already filtered to freq in (90, nyquist-50) and
// bandwidth < 400 Hz (exposed for tests).
std::vector<std::pair<double, double>> LpcFormants(
    const std::vector<double>& lpc, double sample_rate);

}  // namespace vqp::features

#endif  // VQP_FEATURES_HPP_
