// src/dsp.cpp

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

#include "dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace vqp::dsp {

namespace {

constexpr double kKaiserBeta = 8.6;        // ~90 dB stopband
constexpr double kTransitionFrac = 0.10;   // of the cutoff frequency
constexpr double kStopbandAtten = 90.0;    // dB, matches the beta above

double BesselI0(double x) {
  // power series; converges quickly for the arguments we use
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 64; ++k) {
    term *= (x / (2.0 * k)) * (x / (2.0 * k));
    sum += term;
    if (term < 1e-16 * sum) break;
  }
  return sum;
}

double Sinc(double x) {
  if (std::fabs(x) < 1e-12) return 1.0;
  return std::sin(M_PI * x) / (M_PI * x);
}

// Interpolated lowpass kernel: cutoff as a fraction of the input rate,
// Kaiser window sized from the transition band.
class SincKernel {
 public:
  SincKernel(double cutoff_norm, double transition_norm) {
    const double n_taps = (kStopbandAtten - 7.95) / (2.285 * 2.0 * M_PI * transition_norm);
    half_width_ = std::max(4.0, std::ceil(n_taps / 2.0));
    cutoff_ = cutoff_norm;
    const int res = 64;  // table points per input-sample spacing
    table_.resize(static_cast<size_t>(half_width_) * res + 2, 0.0);
    const double i0b = BesselI0(kKaiserBeta);
    for (size_t i = 0; i < table_.size(); ++i) {
      const double t = static_cast<double>(i) / res;
      if (t > half_width_) break;
      const double w = BesselI0(kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - (t / half_width_) * (t / half_width_)))) / i0b;
      table_[i] = 2.0 * cutoff_ * Sinc(2.0 * cutoff_ * t) * w;
    }
    res_ = res;
  }

  double half_width() const { return half_width_; }

  double operator()(double t) const {
    const double a = std::fabs(t) * res_;
    const size_t i = static_cast<size_t>(a);
    if (i + 1 >= table_.size()) return 0.0;
    const double f = a - i;
    return table_[i] * (1.0 - f) + table_[i + 1] * f;
  }

 private:
  double half_width_;
  double cutoff_;
  int res_;
  std::vector<double> table_;
};

// Resample `in` so that positions advance by `step` input samples per output
// sample; `cutoff_norm` relative to the input rate.
std::vector<float> ResampleCore(const std::vector<float>& in, double step,
                                size_t out_len, double cutoff_norm) {
  std::vector<float> out(out_len, 0.0f);
  if (in.empty()) return out;
  // The kernel's cutoff is expressed at the input rate, so it is the
  // anti-alias filter for decimation as-is.
  SincKernel kernel(cutoff_norm, kTransitionFrac * cutoff_norm);
  const double hw = kernel.half_width();
  const int n = static_cast<int>(in.size());
  // Reflect at the boundaries: zero-padding turns the signal edges into
  // broadband steps that leak through the stopband.
  auto sample = [&](int j) -> double {
    while (j < 0 || j >= n) {
      if (j < 0) j = -j;
      if (j >= n) j = 2 * (n - 1) - j;
      if (n == 1) return in[0];
    }
    return in[j];
  };
  for (size_t i = 0; i < out_len; ++i) {
    const double p = i * step;
    const int lo = static_cast<int>(std::ceil(p - hw));
    const int hi = static_cast<int>(std::floor(p + hw));
    double acc = 0.0;
    for (int j = lo; j <= hi; ++j) acc += sample(j) * kernel(p - j);
    out[i] = static_cast<float>(acc);
  }
  return out;
}

std::vector<double> HannWindow(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (n - 1));
  return w;
}

double PrincArg(double phase) {
  return phase - 2.0 * M_PI * std::round(phase / (2.0 * M_PI));
}

}  // namespace

void Fft(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw UsageError("fft: size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

double MedianOf(std::vector<double> v) {
  if (v.empty()) throw UsageError("median of empty set");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

AudioBuffer Resample(const AudioBuffer& in, double target_rate) {
  if (target_rate <= 0) throw UsageError("resample: target rate must be positive");
  if (in.sample_rate <= 0) throw UsageError("resample: input rate must be positive");
  if (in.sample_rate == target_rate) return in;
  AudioBuffer out;
  out.sample_rate = target_rate;
  if (in.samples.empty()) return out;
  const double step = in.sample_rate / target_rate;
  const size_t out_len = static_cast<size_t>(std::llround(in.samples.size() / step));
  const double cutoff = 0.5 * std::min(in.sample_rate, target_rate) / in.sample_rate;
  out.samples = ResampleCore(in.samples, step, out_len, cutoff * (1.0 - 0.5 * kTransitionFrac));
  return out;
}

PitchTrack TrackPitch(const AudioBuffer& in, const PitchConfig& cfg) {
  if (in.sample_rate < 2.0 * cfg.ceiling_hz)
    throw UsageError("track_pitch: sample rate below twice the pitch ceiling");
  PitchTrack track;
  track.frame_hop = cfg.hop_s;
  const int win = static_cast<int>(std::lround(cfg.window_s * in.sample_rate));
  const int hop = static_cast<int>(std::lround(cfg.hop_s * in.sample_rate));
  const int n = static_cast<int>(in.samples.size());
  if (n < win || win < 8) return track;  // shorter than one analysis window

  const int lag_min = std::max(2, static_cast<int>(std::floor(in.sample_rate / cfg.ceiling_hz)));
  const int lag_max = static_cast<int>(std::ceil(in.sample_rate / cfg.floor_hz));
  size_t fft_n = 1;
  while (fft_n < static_cast<size_t>(win + lag_max + 1)) fft_n <<= 1;

  const std::vector<double> window = HannWindow(win);
  // Window autocorrelation for Boersma normalization.
  std::vector<double> win_ac(lag_max + 1, 0.0);
  for (int lag = 0; lag <= lag_max; ++lag) {
    double s = 0.0;
    for (int i = 0; i + lag < win; ++i) s += window[i] * window[i + lag];
    win_ac[lag] = s;
  }

  std::vector<std::complex<double>> buf(fft_n);
  for (int start = 0; start + win <= n; start += hop) {
    double mean = 0.0;
    for (int i = 0; i < win; ++i) mean += in.samples[start + i];
    mean /= win;
    double rms = 0.0;
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    for (int i = 0; i < win; ++i) {
      const double v = (in.samples[start + i] - mean);
      rms += v * v;
      buf[i] = v * window[i];
    }
    rms = std::sqrt(rms / win);

    track.frame_times.push_back((start + 0.5 * win) / in.sample_rate);
    if (rms < cfg.silence_rms) {
      track.f0.push_back(0.0);
      track.voiced.push_back(0);
      continue;
    }

    Fft(buf, false);
    for (auto& x : buf) x = std::norm(x);
    Fft(buf, true);
    const double r0 = buf[0].real();
    if (r0 <= 0.0) {
      track.f0.push_back(0.0);
      track.voiced.push_back(0);
      continue;
    }

    // normalized autocorrelation, window effect divided out
    auto norm_ac = [&](int lag) {
      const double denom = win_ac[lag] / win_ac[0];
      return denom > 1e-9 ? (buf[lag].real() / r0) / denom : 0.0;
    };
    // Peak picking with a small octave cost so equal-height peaks at
    // multiples of the period resolve to the shorter lag.
    int best_lag = 0;
    double best_val = 0.0, best_score = -1.0;
    for (int lag = lag_min; lag <= lag_max && lag + 1 < static_cast<int>(fft_n); ++lag) {
      const double v = norm_ac(lag);
      const double score = v - 0.01 * std::log2(static_cast<double>(lag) / lag_min);
      if (score > best_score && norm_ac(lag - 1) <= v && norm_ac(lag + 1) <= v) {
        best_score = score;
        best_val = v;
        best_lag = lag;
      }
    }
    if (best_lag > 0 && best_val > cfg.voicing_threshold) {
      // parabolic interpolation around the peak
      const double ym = norm_ac(best_lag - 1), y0 = best_val, yp = norm_ac(best_lag + 1);
      const double denom = ym - 2.0 * y0 + yp;
      double delta = 0.0;
      if (std::fabs(denom) > 1e-12) delta = 0.5 * (ym - yp) / denom;
      delta = std::clamp(delta, -0.5, 0.5);
      double f0 = in.sample_rate / (best_lag + delta);
      f0 = std::clamp(f0, cfg.floor_hz, cfg.ceiling_hz);
      track.f0.push_back(f0);
      track.voiced.push_back(1);
    } else {
      track.f0.push_back(0.0);
      track.voiced.push_back(0);
    }
  }
  return track;
}

double MedianVoicedPitch(const PitchTrack& track) {
  std::vector<double> voiced;
  for (size_t i = 0; i < track.f0.size(); ++i)
    if (track.voiced[i]) voiced.push_back(track.f0[i]);
  if (voiced.empty()) throw DataError("unvoiced sample: no voiced frames for median pitch");
  return MedianOf(std::move(voiced));
}

AudioBuffer PitchShift(const AudioBuffer& in, double ratio) {
  if (ratio <= 0) throw UsageError("pitch_shift: ratio must be positive");
  if (in.samples.empty()) return in;
  constexpr int kFftSize = 1024;
  constexpr int kAnalysisHop = 256;
  const int syn_hop = std::max(1, static_cast<int>(std::lround(kAnalysisHop * ratio)));
  const double stretch = static_cast<double>(syn_hop) / kAnalysisHop;

  const std::vector<double> window = HannWindow(kFftSize);
  const int n = static_cast<int>(in.samples.size());
  const int num_frames = std::max(1, (n - kFftSize) / kAnalysisHop + 1);
  const int out_len = (num_frames - 1) * syn_hop + kFftSize;
  std::vector<double> acc(out_len, 0.0), wsum(out_len, 0.0);

  std::vector<double> prev_phase(kFftSize / 2 + 1, 0.0);
  std::vector<double> syn_phase(kFftSize / 2 + 1, 0.0);
  std::vector<std::complex<double>> buf(kFftSize);

  for (int f = 0; f < num_frames; ++f) {
    const int start = f * kAnalysisHop;
    for (int i = 0; i < kFftSize; ++i) {
      const double v = (start + i < n) ? in.samples[start + i] : 0.0;
      buf[i] = v * window[i];
    }
    Fft(buf, false);
    for (int k = 0; k <= kFftSize / 2; ++k) {
      const double mag = std::abs(buf[k]);
      const double phase = std::arg(buf[k]);
      const double omega = 2.0 * M_PI * k / kFftSize;
      if (f == 0) {
        syn_phase[k] = phase;
      } else {
        const double dphi = PrincArg(phase - prev_phase[k] - omega * kAnalysisHop);
        const double true_freq = omega + dphi / kAnalysisHop;
        syn_phase[k] += true_freq * syn_hop;
      }
      prev_phase[k] = phase;
      buf[k] = std::polar(mag, syn_phase[k]);
    }
    for (int k = kFftSize / 2 + 1; k < kFftSize; ++k) buf[k] = std::conj(buf[kFftSize - k]);
    Fft(buf, true);
    const int out_start = f * syn_hop;
    for (int i = 0; i < kFftSize; ++i) {
      acc[out_start + i] += buf[i].real() * window[i];
      wsum[out_start + i] += window[i] * window[i];
    }
  }
  std::vector<float> stretched(out_len);
  for (int i = 0; i < out_len; ++i)
    stretched[i] = static_cast<float>(wsum[i] > 1e-9 ? acc[i] / wsum[i] : 0.0);

  // Resample by the stretch factor: duration returns to the original while
  // frequencies scale by `stretch`.
  AudioBuffer out;
  out.sample_rate = in.sample_rate;
  const size_t final_len = in.samples.size();  // duration preserved
  const double cutoff = 0.5 * std::min(1.0, 1.0 / stretch);
  out.samples = ResampleCore(stretched, stretch, final_len, cutoff * (1.0 - 0.5 * kTransitionFrac));
  return out;
}

AudioBuffer PitchShiftToMedian(const AudioBuffer& in, double target_hz,
                               bool* shifted, double* median_out) {
  if (shifted) *shifted = false;
  PitchTrack track = TrackPitch(in);
  double median = 0.0;
  try {
    median = MedianVoicedPitch(track);
  } catch (const DataError&) {
    return in;  // unvoiced sample: pass through, caller flags it
  }
  if (median_out) *median_out = median;
  if (shifted) *shifted = true;
  return PitchShift(in, target_hz / median);
}

AudioBuffer Downsample500(const AudioBuffer& in) {
  if (in.sample_rate < kFrameRate)
    throw UsageError("downsample_500: input rate below 500 Hz");
  return Resample(in, kFrameRate);
}

AudioBuffer Normalize(const AudioBuffer& in, bool* degenerate) {
  if (degenerate) *degenerate = false;
  AudioBuffer out;
  out.sample_rate = in.sample_rate;
  out.samples.resize(in.samples.size());
  if (in.samples.empty()) return out;
  double mean = 0.0;
  for (float v : in.samples) mean += v;
  mean /= static_cast<double>(in.samples.size());
  double var = 0.0;
  for (float v : in.samples) var += (v - mean) * (v - mean);
  var /= static_cast<double>(in.samples.size());
  if (var < 1e-12) {
    if (degenerate) *degenerate = true;
    std::fill(out.samples.begin(), out.samples.end(), 0.0f);
    return out;
  }
  const double inv_std = 1.0 / std::sqrt(var);
  for (size_t i = 0; i < in.samples.size(); ++i)
    out.samples[i] = static_cast<float>((in.samples[i] - mean) * inv_std);
  return out;
}

std::vector<AudioWord> SliceWords(const AudioBuffer& at500,
                                  const WordAlignment& alignment, int t_max) {
  if (at500.sample_rate != kFrameRate)
    throw UsageError("slice_words: buffer must be at 500 Hz");
  std::vector<AudioWord> out;
  const int n = static_cast<int>(at500.samples.size());
  double prev_end = 0.0;
  int index = 0;
  for (const Word& w : alignment.words) {
    const double slice_start_s =
        std::max({0.0, prev_end, w.start_s - kMaxLeadingSilenceS});
    int start_f = static_cast<int>(std::lround(slice_start_s * kFrameRate));
    const int word_start_f = static_cast<int>(std::lround(w.start_s * kFrameRate));
    int end_f = static_cast<int>(std::lround(w.end_s * kFrameRate));
    end_f = std::min(end_f, n);
    prev_end = w.end_s;
    if (end_f <= word_start_f || end_f <= start_f) continue;  // zero-length: skip

    int silence = std::max(0, word_start_f - start_f);
    int len = end_f - start_f;
    if (len > t_max) {  // drop from the left, silence first
      const int drop = len - t_max;
      start_f += drop;
      silence = std::max(0, silence - drop);
      len = t_max;
    }
    AudioWord aw;
    aw.frames.assign(at500.samples.begin() + start_f, at500.samples.begin() + end_f);
    aw.silence_frames = silence;
    aw.text = w.text;
    aw.start_s = w.start_s;
    aw.end_s = w.end_s;
    aw.index = index++;
    out.push_back(std::move(aw));
  }
  return out;
}

// ---- WAV I/O --------------------------------------------------------------

namespace {
template <typename T>
T ReadLE(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

template <typename T>
void WriteLE(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
}  // namespace

AudioBuffer ReadWav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open audio file: " + path);
  char riff[4], wave[4];
  f.read(riff, 4);
  ReadLE<uint32_t>(f);
  f.read(wave, 4);
  if (!f || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0)
    throw DataError("not a RIFF/WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<char> payload;
  while (f) {
    char id[4];
    f.read(id, 4);
    if (!f) break;
    const uint32_t size = ReadLE<uint32_t>(f);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      format = ReadLE<uint16_t>(f);
      channels = ReadLE<uint16_t>(f);
      rate = ReadLE<uint32_t>(f);
      ReadLE<uint32_t>(f);
      ReadLE<uint16_t>(f);
      bits = ReadLE<uint16_t>(f);
      f.seekg(size > 16 ? size - 16 : 0, std::ios::cur);
    } else if (std::memcmp(id, "data", 4) == 0) {
      payload.resize(size);
      f.read(payload.data(), size);
      break;
    } else {
      f.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (channels == 0 || rate == 0) throw DataError("missing fmt chunk in " + path);
  if (payload.empty() && !f) throw DataError("missing data chunk in " + path);

  AudioBuffer out;
  out.sample_rate = rate;
  const size_t bytes_per = bits / 8;
  if (bytes_per == 0) throw DataError("bad bit depth in " + path);
  const size_t num_frames = payload.size() / (bytes_per * channels);
  out.samples.resize(num_frames);
  if (format == 1 && bits == 16) {
    const int16_t* p = reinterpret_cast<const int16_t*>(payload.data());
    for (size_t i = 0; i < num_frames; ++i) {
      double acc = 0.0;
      for (int c = 0; c < channels; ++c) acc += p[i * channels + c] / 32768.0;
      out.samples[i] = static_cast<float>(acc / channels);
    }
  } else if (format == 3 && bits == 32) {
    const float* p = reinterpret_cast<const float*>(payload.data());
    for (size_t i = 0; i < num_frames; ++i) {
      double acc = 0.0;
      for (int c = 0; c < channels; ++c) acc += p[i * channels + c];
      out.samples[i] = static_cast<float>(acc / channels);
    }
  } else {
    throw DataError("unsupported WAV encoding in " + path +
                    " (need PCM16 or float32)");
  }
  for (float v : out.samples)
    if (!std::isfinite(v)) throw DataError("non-finite sample in " + path);
  return out;
}

void WriteWav(const std::string& path, const AudioBuffer& buf) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path);
  const uint32_t data_size = static_cast<uint32_t>(buf.samples.size() * 2);
  f.write("RIFF", 4);
  WriteLE<uint32_t>(f, 36 + data_size);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  WriteLE<uint32_t>(f, 16);
  WriteLE<uint16_t>(f, 1);  // PCM
  WriteLE<uint16_t>(f, 1);  // mono
  WriteLE<uint32_t>(f, static_cast<uint32_t>(buf.sample_rate));
  WriteLE<uint32_t>(f, static_cast<uint32_t>(buf.sample_rate) * 2);
  WriteLE<uint16_t>(f, 2);
  WriteLE<uint16_t>(f, 16);
  f.write("data", 4);
  WriteLE<uint32_t>(f, data_size);
  for (float v : buf.samples) {
    const int s = static_cast<int>(std::lround(std::clamp(v, -1.0f, 1.0f) * 32767.0));
    WriteLE<int16_t>(f, static_cast<int16_t>(s));
  }
  if (!f) throw DataError("short write: " + path);
}

// ---- manifest -------------------------------------------------------------

std::vector<WordAlignment> ReadManifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open manifest: " + path);
  std::vector<WordAlignment> out;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest " + path + " line " + std::to_string(line_no) +
                      ": " + e.what());
    }
    WordAlignment a;
    try {
      a.sample_id = j.at("sample_id").get<std::string>();
      a.speaker_id = j.at("speaker_id").get<std::string>();
      a.audio_path = j.at("audio_path").get<std::string>();
      for (const auto& wj : j.at("words")) {
        Word w;
        w.text = wj.at("w").get<std::string>();
        w.start_s = wj.at("start").get<double>();
        w.end_s = wj.at("end").get<double>();
        a.words.push_back(std::move(w));
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest " + path + " line " + std::to_string(line_no) +
                      ": missing field: " + e.what());
    }
    double prev_end = -1.0;
    for (const Word& w : a.words) {
      if (w.start_s < 0 || w.end_s <= w.start_s)
        throw DataError("manifest sample '" + a.sample_id +
                        "': bad word interval for '" + w.text + "'");
      if (w.start_s < prev_end)
        throw DataError("manifest sample '" + a.sample_id +
                        "': overlapping words near '" + w.text + "'");
      prev_end = w.end_s;
    }
    out.push_back(std::move(a));
  }
  return out;
}

// ---- VQPW -----------------------------------------------------------------

void WriteAudioWords(const std::string& path, const std::vector<AudioWord>& words) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path);
  f.write("VQPW", 4);
  WriteLE<uint32_t>(f, static_cast<uint32_t>(words.size()));
  for (const AudioWord& w : words) {
    WriteLE<uint32_t>(f, static_cast<uint32_t>(w.frames.size()));
    WriteLE<uint32_t>(f, static_cast<uint32_t>(w.silence_frames));
    f.write(reinterpret_cast<const char*>(w.frames.data()),
            static_cast<std::streamsize>(w.frames.size() * sizeof(float)));
  }
  if (!f) throw DataError("short write: " + path);
}

std::vector<AudioWord> ReadAudioWords(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "VQPW", 4) != 0)
    throw DataError("bad magic in audio-word file: " + path);
  const uint32_t count = ReadLE<uint32_t>(f);
  std::vector<AudioWord> out(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t frames = ReadLE<uint32_t>(f);
    out[i].silence_frames = static_cast<int>(ReadLE<uint32_t>(f));
    out[i].frames.resize(frames);
    out[i].index = static_cast<int>(i);
    f.read(reinterpret_cast<char*>(out[i].frames.data()),
           static_cast<std::streamsize>(frames * sizeof(float)));
    if (!f) throw DataError("truncated audio-word file: " + path);
  }
  return out;
}

}  // namespace vqp::dsp
