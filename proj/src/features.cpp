// features.cpp
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

#include "features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>

#include "json.hpp"

namespace vqp::features {

namespace {

constexpr double kSyllBandLowHz = 80.0;
constexpr double kSyllBandHighHz = 400.0;
constexpr double kSyllDipDb = 2.0;
constexpr double kSyllThresholdDb = 2.0;  // above envelope median
constexpr double kEnvWindowS = 0.025;
constexpr double kEnvHopS = 0.010;
constexpr double kLpcRate = 10000.0;
constexpr int kLpcOrder = 10;
constexpr double kLpcWindowS = 0.025;
constexpr double kLpcHopS = 0.010;
constexpr double kMaxFormantBwHz = 400.0;

double Db(double mean_square) { return 10.0 * std::log10(mean_square + 1e-12); }

double MeanSquare(const float* x, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * x[i];
  return n > 0 ? acc / static_cast<double>(n) : 0.0;
}

// Zero-phase band-pass via whole-segment FFT bin masking.
std::vector<double> BandPass(const float* x, size_t n, double sample_rate,
                             double lo_hz, double hi_hz) {
  size_t m = 1;
  while (m < n) m <<= 1;
  std::vector<std::complex<double>> spec(m, 0.0);
  for (size_t i = 0; i < n; ++i) spec[i] = x[i];
  dsp::Fft(spec, false);
  for (size_t k = 0; k < m; ++k) {
    const double freq =
        std::min(k, m - k) * sample_rate / static_cast<double>(m);
    if (freq < lo_hz || freq > hi_hz) spec[k] = 0.0;
  }
  dsp::Fft(spec, true);
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = spec[i].real();
  return out;
}

struct Envelope {
  std::vector<double> db;
  std::vector<double> times;  // frame centers, relative to segment start
};

Envelope IntensityEnvelope(const std::vector<double>& x, double sample_rate) {
  const int win = std::max<int>(1, static_cast<int>(kEnvWindowS * sample_rate));
  const int hop = std::max<int>(1, static_cast<int>(kEnvHopS * sample_rate));
  Envelope env;
  for (int b = 0; b + win <= static_cast<int>(x.size()); b += hop) {
    double acc = 0.0;
    for (int i = b; i < b + win; ++i) acc += x[i] * x[i];
    env.db.push_back(Db(acc / win));
    env.times.push_back((b + win / 2.0) / sample_rate);
  }
  return env;
}

bool VoicedAt(const dsp::PitchTrack& track, double t) {
  if (track.frame_times.empty()) return false;
  size_t best = 0;
  double best_d = std::abs(track.frame_times[0] - t);
  for (size_t i = 1; i < track.frame_times.size(); ++i) {
    const double d = std::abs(track.frame_times[i] - t);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return track.voiced[best] != 0;
}

// Peaks above (median + 2 dB), successive nuclei separated by a dip at
// least 2 dB below the lower of the two peaks, and voiced at the peak.
int CountSyllables(const Envelope& env, const dsp::PitchTrack& track,
                   double seg_start) {
  const size_t n = env.db.size();
  if (n == 0) return 0;
  const double thresh = dsp::MedianOf(env.db) + kSyllThresholdDb;

  std::vector<size_t> peaks;
  for (size_t i = 0; i < n; ++i) {
    const bool left_ok = i == 0 || env.db[i] >= env.db[i - 1];
    const bool right_ok = i + 1 == n || env.db[i] > env.db[i + 1];
    if (!(left_ok && right_ok) || env.db[i] < thresh) continue;
    if (!VoicedAt(track, seg_start + env.times[i])) continue;
    if (!peaks.empty()) {
      double dip = env.db[i];
      for (size_t j = peaks.back(); j <= i; ++j) dip = std::min(dip, env.db[j]);
      const double lower = std::min(env.db[peaks.back()], env.db[i]);
      if (dip > lower - kSyllDipDb) {
        // merged nucleus: keep whichever peak is higher
        if (env.db[i] > env.db[peaks.back()]) peaks.back() = i;
        continue;
      }
    }
    peaks.push_back(i);
  }
  return static_cast<int>(peaks.size());
}

// Roots of the monic polynomial with coefficients c[0..N] (c[0] = 1) by
// Durand-Kerner iteration; deterministic start points.
std::vector<std::complex<double>> PolyRoots(const std::vector<double>& c) {
  const int deg = static_cast<int>(c.size()) - 1;
  auto eval = [&](std::complex<double> z) {
    std::complex<double> acc = c[0];
    for (int i = 1; i <= deg; ++i) acc = acc * z + c[i];
    return acc;
  };
  std::vector<std::complex<double>> r(deg);
  const std::complex<double> seed(0.4, 0.9);
  std::complex<double> p(1.0, 0.0);
  for (int i = 0; i < deg; ++i) {
    p *= seed;
    r[i] = p;
  }
  for (int iter = 0; iter < 200; ++iter) {
    double move = 0.0;
    for (int i = 0; i < deg; ++i) {
      std::complex<double> denom(1.0, 0.0);
      for (int j = 0; j < deg; ++j)
        if (j != i) denom *= r[i] - r[j];
      if (std::abs(denom) < 1e-30) continue;
      const std::complex<double> delta = eval(r[i]) / denom;
      r[i] -= delta;
      move = std::max(move, std::abs(delta));
    }
    if (move < 1e-12) break;
  }
  return r;
}

struct FormantAcc {
  std::vector<double> f1, f2, f3;
};

void AccumulateFormants(const std::vector<double>& frame, double sample_rate,
                        FormantAcc* acc) {
  // Skip near-silent analysis frames: LPC roots there are numerical noise.
  double ms = 0.0;
  for (double v : frame) ms += v * v;
  if (ms / frame.size() < 1e-10) return;
  const std::vector<double> lpc = BurgLpc(frame, kLpcOrder);
  const auto formants = LpcFormants(lpc, sample_rate);
  if (formants.size() >= 1) acc->f1.push_back(formants[0].first);
  if (formants.size() >= 2) acc->f2.push_back(formants[1].first);
  if (formants.size() >= 3) acc->f3.push_back(formants[2].first);
}

}  // namespace

const std::vector<std::string>& FeatureNames() {
  static const std::vector<std::string> names = {
      "pitch_hz",     "intensity_db",    "num_syllables",
      "artic_rate",   "speech_rate",     "syll_duration_s",
      "word_duration_s", "f1_hz",        "f2_hz",
      "f3_hz"};
  return names;
}

std::map<std::string, double> FeatureMap(const WordFeatures& f) {
  std::map<std::string, double> m;
  if (f.pitch_hz) m["pitch_hz"] = *f.pitch_hz;
  m["intensity_db"] = f.intensity_db;
  m["num_syllables"] = f.num_syllables;
  if (f.artic_rate) m["artic_rate"] = *f.artic_rate;
  m["speech_rate"] = f.speech_rate;
  if (f.syll_duration_s) m["syll_duration_s"] = *f.syll_duration_s;
  m["word_duration_s"] = f.word_duration_s;
  if (f.f1_hz) m["f1_hz"] = *f.f1_hz;
  if (f.f2_hz) m["f2_hz"] = *f.f2_hz;
  if (f.f3_hz) m["f3_hz"] = *f.f3_hz;
  return m;
}

std::vector<double> BurgLpc(const std::vector<double>& frame, int order) {
  const int n = static_cast<int>(frame.size());
  if (n <= order) throw UsageError("burg lpc: frame shorter than order");
  std::vector<double> a(order + 1, 0.0);
  a[0] = 1.0;
  std::vector<double> f(frame), b(frame);
  for (int m = 1; m <= order; ++m) {
    double num = 0.0, den = 0.0;
    for (int i = m; i < n; ++i) {
      num += f[i] * b[i - 1];
      den += f[i] * f[i] + b[i - 1] * b[i - 1];
    }
    const double k = den > 0.0 ? -2.0 * num / den : 0.0;
    std::vector<double> prev(a.begin(), a.begin() + m);
    a[m] = k;
    for (int i = 1; i < m; ++i) a[i] = prev[i] + k * prev[m - i];
    for (int i = n - 1; i >= m; --i) {
      const double fi = f[i] + k * b[i - 1];
      b[i] = b[i - 1] + k * f[i];
      f[i] = fi;
    }
  }
  return std::vector<double>(a.begin() + 1, a.end());
}

std::vector<std::pair<double, double>> LpcFormants(
    const std::vector<double>& lpc, double sample_rate) {
  std::vector<double> poly;
  poly.push_back(1.0);
  poly.insert(poly.end(), lpc.begin(), lpc.end());
  const auto roots = PolyRoots(poly);
  std::vector<std::pair<double, double>> out;
  const double nyquist = sample_rate / 2.0;
  for (const auto& r : roots) {
    if (r.imag() <= 0.0) continue;  // keep one of each conjugate pair
    const double freq = std::arg(r) / (2.0 * M_PI) * sample_rate;
    const double mag = std::abs(r);
    if (mag <= 0.0 || mag >= 1.0) continue;
    const double bw = -sample_rate / M_PI * std::log(mag);
    if (freq <= 90.0 || freq >= nyquist - 50.0) continue;
    if (bw >= kMaxFormantBwHz) continue;
    out.emplace_back(freq, bw);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<WordFeatureRow> ExtractUtteranceFeatures(
    const dsp::AudioBuffer& audio, const dsp::WordAlignment& alignment) {
  if (audio.sample_rate <= 0.0 || audio.samples.empty())
    throw DataError("feature extraction: empty audio for sample '" +
                    alignment.sample_id + "'");
  const double sr = audio.sample_rate;
  const double dur = audio.duration();
  const dsp::PitchTrack track = dsp::TrackPitch(audio);

  std::vector<WordFeatureRow> rows;
  double prev_end = 0.0;
  for (size_t wi = 0; wi < alignment.words.size(); ++wi) {
    const dsp::Word& w = alignment.words[wi];
    const double span_start =
        std::max(prev_end, w.start_s - dsp::kMaxLeadingSilenceS);
    const bool in_audio = w.start_s >= 0.0 && w.end_s > w.start_s &&
                          w.end_s <= dur + 1e-9;
    prev_end = w.end_s;
    if (!in_audio) continue;  // span outside the audio: skip this word

    const size_t i0 = static_cast<size_t>(std::llround(w.start_s * sr));
    const size_t i1 = std::min(audio.samples.size(),
                               static_cast<size_t>(std::llround(w.end_s * sr)));
    if (i1 <= i0) continue;
    const float* x = audio.samples.data() + i0;
    const size_t n = i1 - i0;

    WordFeatures f;
    f.word_duration_s = w.end_s - w.start_s;
    f.intensity_db = Db(MeanSquare(x, n));

    std::vector<double> voiced_f0;
    double voiced_time = 0.0;
    for (size_t t = 0; t < track.frame_times.size(); ++t) {
      if (track.frame_times[t] < w.start_s || track.frame_times[t] > w.end_s)
        continue;
      if (!track.voiced[t]) continue;
      voiced_f0.push_back(track.f0[t]);
      voiced_time += track.frame_hop;
    }
    if (!voiced_f0.empty()) f.pitch_hz = dsp::MedianOf(voiced_f0);

    const std::vector<double> band =
        BandPass(x, n, sr, kSyllBandLowHz, kSyllBandHighHz);
    f.num_syllables = CountSyllables(IntensityEnvelope(band, sr), track,
                                     w.start_s);

    const double span = w.end_s - span_start;
    f.speech_rate = span > 0.0 ? f.num_syllables / span : 0.0;
    if (voiced_time > 0.0) f.artic_rate = f.num_syllables / voiced_time;
    if (f.num_syllables > 0)
      f.syll_duration_s = f.word_duration_s / f.num_syllables;

    dsp::AudioBuffer seg;
    seg.sample_rate = sr;
    seg.samples.assign(x, x + n);
    dsp::AudioBuffer lp =
        sr == kLpcRate ? seg : dsp::Resample(seg, kLpcRate);
    // Pre-emphasis flattens the spectral tilt before LPC.
    for (size_t i = lp.samples.size(); i-- > 1;)
      lp.samples[i] -= 0.97f * lp.samples[i - 1];
    const int win = static_cast<int>(kLpcWindowS * kLpcRate);
    const int hop = static_cast<int>(kLpcHopS * kLpcRate);
    FormantAcc acc;
    for (int b = 0; b + win <= static_cast<int>(lp.samples.size()); b += hop) {
      std::vector<double> frame(lp.samples.begin() + b,
                                lp.samples.begin() + b + win);
      for (int i = 0; i < win; ++i)  // Hamming window
        frame[i] *= 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (win - 1));
      AccumulateFormants(frame, kLpcRate, &acc);
    }
    if (!acc.f1.empty()) f.f1_hz = dsp::MedianOf(acc.f1);
    if (!acc.f2.empty()) f.f2_hz = dsp::MedianOf(acc.f2);
    if (!acc.f3.empty()) f.f3_hz = dsp::MedianOf(acc.f3);

    rows.push_back(WordFeatureRow{alignment.sample_id,
                                  static_cast<int>(wi), std::move(f)});
  }
  return rows;
}

BinaryLabelSet BinarizeVsMean(const std::string& feature,
                              const std::vector<std::optional<double>>& values,
                              const std::vector<bool>& in_train) {
  if (values.size() != in_train.size())
    throw UsageError("binarize: train mask length mismatch");
  double sum = 0.0, lo = 0.0, hi = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < values.size(); ++i) {
    if (!in_train[i] || !values[i]) continue;
    const double v = *values[i];
    if (count == 0) lo = hi = v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
    ++count;
  }
  if (count == 0)
    throw DataError("binarize: feature '" + feature +
                    "' has no present train value");
  BinaryLabelSet out;
  out.feature = feature;
  out.threshold = sum / static_cast<double>(count);
  out.degenerate = lo == hi;
  out.labels.resize(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    if (values[i]) out.labels[i] = *values[i] > out.threshold;
  }
  return out;
}

void WriteFeatureTable(const std::string& path,
                       const std::vector<WordFeatureRow>& rows) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open feature table for writing: " + path);
  for (const WordFeatureRow& row : rows) {
    nlohmann::json j;
    j["sample_id"] = row.sample_id;
    j["word_index"] = row.word_index;
    nlohmann::json feats;
    const auto present = FeatureMap(row.features);
    for (const std::string& name : FeatureNames()) {
      auto it = present.find(name);
      if (it == present.end())
        feats[name] = nullptr;
      else
        feats[name] = it->second;
    }
    j["features"] = feats;
    os << j.dump() << "\n";
  }
}

std::vector<WordFeatureRow> ReadFeatureTable(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open feature table: " + path);
  std::vector<WordFeatureRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    WordFeatureRow row;
    row.sample_id = j.at("sample_id").get<std::string>();
    row.word_index = j.at("word_index").get<int>();
    const nlohmann::json& feats = j.at("features");
    WordFeatures& f = row.features;
    auto opt = [&](const char* name) -> std::optional<double> {
      if (!feats.contains(name) || feats[name].is_null()) return std::nullopt;
      return feats[name].get<double>();
    };
    f.pitch_hz = opt("pitch_hz");
    if (auto v = opt("intensity_db")) f.intensity_db = *v;
    if (auto v = opt("num_syllables")) f.num_syllables = static_cast<int>(*v);
    f.artic_rate = opt("artic_rate");
    if (auto v = opt("speech_rate")) f.speech_rate = *v;
    f.syll_duration_s = opt("syll_duration_s");
    if (auto v = opt("word_duration_s")) f.word_duration_s = *v;
    f.f1_hz = opt("f1_hz");
    f.f2_hz = opt("f2_hz");
    f.f3_hz = opt("f3_hz");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace vqp::features
