// Copyright 2026 The Noisetag Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "noisetag/rng.hpp"
#include "noisetag/wav.hpp"

namespace noisetag::dsp {

// Front-end configuration. Spectrograms are intentionally not normalised
// anywhere in this pipeline.
inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kFftSize = 2048;
inline constexpr std::size_t kHop = 512;
inline constexpr std::size_t kSpectrumBins = kFftSize / 2 + 1;  // 1025
inline constexpr std::size_t kMelBins = 96;
inline constexpr double kFMin = 40.0;
inline constexpr double kFMax = 8000.0;
inline constexpr double kSnippetSeconds = 3.0;
inline constexpr std::size_t kSnippetSamples = 48000;
inline constexpr double kPowerEps = 1e-10;
inline constexpr double kDbFloor = -100.0;

/// frames x kSpectrumBins squared-magnitude spectrogram.
struct PowerSpectrogram {
  std::size_t frames = 0;
  std::size_t bins = kSpectrumBins;
  std::vector<double> values;  // row-major frames x bins

  double at(std::size_t t, std::size_t k) const { return values[t * bins + k]; }
};

/// frames x kMelBins matrix in dB, the CNN input representation.
struct MelSpectrogram {
  std::size_t frames = 0;
  std::size_t bins = kMelBins;
  std::size_t hop = kHop;
  std::size_t frame_len = kFftSize;
  std::vector<double> values;  // row-major frames x bins

  double at(std::size_t t, std::size_t b) const { return values[t * bins + b]; }
};

/// Triangular mel filterbank stored sparsely: each row keeps only its
/// non-zero span of FFT bins.
struct MelFilterbank {
  struct Row {
    std::size_t first_bin = 0;
    std::vector<double> weights;
  };
  int sample_rate = kSampleRate;
  std::size_t n_fft = kFftSize;
  std::size_t n_mels = kMelBins;
  double f_min = kFMin;
  double f_max = kFMax;
  std::vector<Row> rows;
  std::vector<double> center_freqs;

  /// Dense accessor, mostly for tests.
  double weight(std::size_t row, std::size_t bin) const;
};

/// Band-limited windowed-sinc resampling. Identity when rates already match;
/// output length is round(len * target / source).
Waveform resample(const Waveform& w, int target_rate);

/// Tiles the signal onto itself until target_len is reached. No-op when the
/// input is already long enough. target_len == 0 is an error.
Waveform circular_pad(const Waveform& w, std::size_t target_len);

/// One random snippet of duration_s seconds from a 16 kHz waveform. Inputs
/// shorter than the snippet are circular-padded first; otherwise the start
/// offset is uniform over all valid positions.
Waveform extract_snippet(const Waveform& w, double duration_s, Rng& rng);

/// Hann-windowed power STFT. frames = 1 + floor((len - kFftSize) / kHop);
/// inputs shorter than one frame are an error (callers pad first).
PowerSpectrogram stft_power(const Waveform& w);

/// HTK mel scale: 2595 * log10(1 + f / 700).
double hz_to_mel(double f);
double mel_to_hz(double m);

MelFilterbank build_mel_filterbank(int sample_rate, std::size_t n_fft,
                                   std::size_t n_mels, double f_min,
                                   double f_max);

/// Elementwise 10*log10(max(p, kPowerEps)), clamped at kDbFloor. Entries must
/// be non-negative.
std::vector<double> power_to_db(const std::vector<double>& power);

/// Full front-end: resample to 16 kHz, power STFT, mel projection, dB scale.
/// No normalisation. Deterministic.
MelSpectrogram compute_features(const Waveform& w);
MelSpectrogram compute_features(const Waveform& w, const MelFilterbank& fb);

/// The process-wide filterbank for the default front-end settings.
const MelFilterbank& default_filterbank();

// Per-clip feature cache: u32 frames, u32 bins, then row-major
// little-endian f32 values.
void write_feature_cache(const std::string& path, const MelSpectrogram& m);
std::optional<MelSpectrogram> read_feature_cache(const std::string& path);

}  // namespace noisetag::dsp
