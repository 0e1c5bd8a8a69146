// src/dsp.hpp

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

#ifndef VQP_DSP_HPP_
#define VQP_DSP_HPP_

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"

namespace vqp::dsp {

struct AudioBuffer {
  std::vector<float> samples;  // mono
  double sample_rate = 0.0;

  double duration() const {
    return sample_rate > 0 ? samples.size() / sample_rate : 0.0;
  }
};

struct PitchTrack {
  std::vector<double> frame_times;  // seconds, frame centers
  std::vector<double> f0;           // Hz, valid where voiced
  std::vector<uint8_t> voiced;
  double frame_hop = 0.0;  // seconds

  size_t NumVoiced() const {
    size_t n = 0;
    for (uint8_t v : voiced) n += v;
    return n;
  }
};

struct Word {
  std::string text;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct WordAlignment {
  std::string sample_id;
  std::string speaker_id;
  std::string audio_path;
  std::vector<Word> words;
};

struct AudioWord {
  std::vector<float> frames;  // 500 Hz
  int silence_frames = 0;     // leading silence retained after truncation
  std::string text;
  double start_s = 0.0;
  double end_s = 0.0;
  int index = 0;  // position in utterance
};

// Boersma-style autocorrelation tracker settings.
struct PitchConfig {
  double floor_hz = 75.0;
  double ceiling_hz = 500.0;
  double window_s = 0.040;
  double hop_s = 0.010;
  double voicing_threshold = 0.45;  // normalized autocorrelation
  double silence_rms = 1e-4;        // frames quieter than this are unvoiced
};

inline constexpr int kDefaultTMax = 512;    // frames at 500 Hz
inline constexpr double kFrameRate = 500.0; // audio-word frame rate, Hz
inline constexpr double kTargetMedianHz = 150.0;
inline constexpr double kMaxLeadingSilenceS = 2.0;

// ---- core DSP -------------------------------------------------------------

// Windowed-sinc (Kaiser beta=8.6, transition 10% of cutoff) resampler.
AudioBuffer Resample(const AudioBuffer& in, double target_rate);

PitchTrack TrackPitch(const AudioBuffer& in, const PitchConfig& cfg = {});

// Median over voiced frames only; DataError("unvoiced sample") when none.
double MedianVoicedPitch(const PitchTrack& track);

// Duration-preserving pitch shift by `ratio` (phase vocoder 1024/256 then
// resample by the stretch factor).
AudioBuffer PitchShift(const AudioBuffer& in, double ratio);

// Tracks pitch, computes the per-recording median, shifts so the median
// lands on `target_hz`. Unvoiced input passes through; *shifted reports
// whether a shift was applied.
AudioBuffer PitchShiftToMedian(const AudioBuffer& in,
                               double target_hz = kTargetMedianHz,
                               bool* shifted = nullptr,
                               double* median_out = nullptr);

AudioBuffer Downsample500(const AudioBuffer& in);

// Zero mean, unit variance. Constant input yields zeros and sets
// *degenerate.
AudioBuffer Normalize(const AudioBuffer& in, bool* degenerate = nullptr);

// Slices a 500 Hz buffer into audio-words: each spans
// [max(prev_word_end, start - 2 s), end], left-truncated to t_max frames.
std::vector<AudioWord> SliceWords(const AudioBuffer& at500,
                                  const WordAlignment& alignment,
                                  int t_max = kDefaultTMax);

// ---- I/O ------------------------------------------------------------------

// RIFF/WAVE, PCM 16-bit or 32-bit float; multichannel downmixed by
// averaging.
AudioBuffer ReadWav(const std::string& path);
void WriteWav(const std::string& path, const AudioBuffer& buf);

// JSON-lines manifest, one utterance per line.
std::vector<WordAlignment> ReadManifest(const std::string& path);

// Preprocessed words, magic "VQPW".
void WriteAudioWords(const std::string& path, const std::vector<AudioWord>& words);
std::vector<AudioWord> ReadAudioWords(const std::string& path);

// ---- helpers shared with features/tests -----------------------------------

// In-place radix-2 FFT (size must be a power of two).
void Fft(std::vector<std::complex<double>>& a, bool inverse);

double MedianOf(std::vector<double> v);

}  // namespace vqp::dsp

#endif  // VQP_DSP_HPP_
