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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "noisetag/dsp.hpp"
#include "noisetag/error.hpp"
#include "noisetag/rng.hpp"
#include "noisetag/wav.hpp"

using namespace noisetag;
using dsp::Waveform;

namespace {

constexpr double kPi = 3.14159265358979323846;

Waveform sine(double freq, double seconds, int rate, double amp = 0.5) {
  Waveform w;
  w.sample_rate = rate;
  const auto n = static_cast<std::size_t>(seconds * rate);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    w.samples[i] = amp * std::sin(2.0 * kPi * freq * i / rate);
  }
  return w;
}

// O(n^2) DFT magnitude at one bin; the reference the FFT is checked against.
double dft_magnitude(const std::vector<double>& x, std::size_t bin) {
  double re = 0.0, im = 0.0;
  const double w = -2.0 * kPi * static_cast<double>(bin) /
                   static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    re += x[i] * std::cos(w * static_cast<double>(i));
    im += x[i] * std::sin(w * static_cast<double>(i));
  }
  return std::sqrt(re * re + im * im);
}

// Direct enumeration of full windows, independent of the frame formula.
std::size_t count_windows(std::size_t len) {
  std::size_t frames = 0;
  for (std::size_t start = 0; start + dsp::kFftSize <= len;
       start += dsp::kHop) {
    ++frames;
  }
  return frames;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("resample is the identity at matching rates") {
  const Waveform w = sine(440.0, 0.25, 16000);
  const Waveform out = dsp::resample(w, 16000);
  REQUIRE(out.samples.size() == w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    CHECK(out.samples[i] == w.samples[i]);
  }
}

TEST_CASE("resample preserves duration within one sample") {
  const Waveform w = sine(100.0, 1.0, 32000);
  const Waveform out = dsp::resample(w, 16000);
  CHECK(std::llabs(static_cast<long long>(out.samples.size()) - 16000) <= 1);
  CHECK(out.sample_rate == 16000);
}

TEST_CASE("resample keeps a 440 Hz tone at 440 Hz") {
  const Waveform w = sine(440.0, 1.0, 44100);
  const Waveform out = dsp::resample(w, 16000);
  REQUIRE(out.samples.size() == 16000);  // 1 Hz bins in a full-length DFT

  std::size_t best_bin = 0;
  double best_mag = -1.0;
  for (std::size_t bin = 20; bin <= 8000; bin += 10) {
    const double mag = dft_magnitude(out.samples, bin);
    if (mag > best_mag) {
      best_mag = mag;
      best_bin = bin;
    }
  }
  for (std::size_t bin = best_bin - 10; bin <= best_bin + 10; ++bin) {
    const double mag = dft_magnitude(out.samples, bin);
    if (mag > best_mag) {
      best_mag = mag;
      best_bin = bin;
    }
  }
  CHECK(best_bin >= 439);
  CHECK(best_bin <= 441);
}

TEST_CASE("resample rejects empty input") {
  Waveform w;
  w.sample_rate = 16000;
  CHECK_THROWS_AS(dsp::resample(w, 8000), InvalidInputError);
}

TEST_CASE("circular padding tiles the signal") {
  Waveform w;
  w.sample_rate = 16000;
  w.samples = {1, 2, 3};
  const Waveform out = dsp::circular_pad(w, 7);
  CHECK(out.samples == std::vector<double>{1, 2, 3, 1, 2, 3, 1});

  w.samples = {1, 2, 3, 4};
  CHECK(dsp::circular_pad(w, 3).samples == std::vector<double>{1, 2, 3, 4});

  w.samples = {5};
  CHECK(dsp::circular_pad(w, 4).samples == std::vector<double>{5, 5, 5, 5});

  CHECK_THROWS_AS(dsp::circular_pad(w, 0), InvalidInputError);
}

TEST_CASE("circular padding is idempotent") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    Waveform w;
    w.sample_rate = 16000;
    const std::size_t len = 1 + rng.uniform_int(50);
    for (std::size_t i = 0; i < len; ++i) w.samples.push_back(rng.uniform());
    const std::size_t target = 1 + rng.uniform_int(200);
    const Waveform once = dsp::circular_pad(w, target);
    const Waveform twice = dsp::circular_pad(once, target);
    CHECK(once.samples == twice.samples);
    CHECK(once.samples.size() == std::max<std::size_t>(target, len));
    for (std::size_t i = 0; i < once.samples.size(); ++i) {
      CHECK(once.samples[i] == w.samples[i % len]);
    }
  }
}

TEST_CASE("snippet extraction") {
  SUBCASE("a clip of exactly one snippet is returned unchanged") {
    const Waveform w = sine(220.0, 3.0, 16000);
    REQUIRE(w.samples.size() == dsp::kSnippetSamples);
    Rng rng(123);
    const Waveform out = dsp::extract_snippet(w, 3.0, rng);
    CHECK(out.samples == w.samples);
  }
  SUBCASE("short clips tile to the snippet length") {
    const Waveform w = sine(220.0, 1.5, 16000);
    Rng rng(9);
    const Waveform out = dsp::extract_snippet(w, 3.0, rng);
    REQUIRE(out.samples.size() == dsp::kSnippetSamples);
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
      CHECK(out.samples[i] == w.samples[i % w.samples.size()]);
    }
  }
  SUBCASE("same seed draws the same snippet") {
    const Waveform w = sine(220.0, 6.0, 16000);
    Rng a(7), b(7);
    const Waveform s1 = dsp::extract_snippet(w, 3.0, a);
    const Waveform s2 = dsp::extract_snippet(w, 3.0, b);
    CHECK(s1.samples == s2.samples);
    CHECK(s1.samples.size() == dsp::kSnippetSamples);
  }
  SUBCASE("snippets are contiguous slices of the clip") {
    Waveform w;
    w.sample_rate = 16000;
    Rng noise(3);
    w.samples.resize(96000);
    for (auto& s : w.samples) s = noise.uniform(-1.0, 1.0);
    Rng rng(11);
    for (int rep = 0; rep < 5; ++rep) {
      const Waveform s = dsp::extract_snippet(w, 3.0, rng);
      const auto it = std::search(w.samples.begin(), w.samples.end(),
                                  s.samples.begin(), s.samples.end());
      CHECK(it != w.samples.end());
    }
  }
  SUBCASE("non-16k input is rejected") {
    const Waveform w = sine(220.0, 3.0, 22050);
    Rng rng(1);
    CHECK_THROWS_AS(dsp::extract_snippet(w, 3.0, rng), InvalidInputError);
  }
}

TEST_CASE("stft frame count follows the window law") {
  for (std::size_t len : {std::size_t{2048}, std::size_t{2560},
                          std::size_t{48000}, std::size_t{48001}}) {
    Waveform w;
    w.sample_rate = 16000;
    w.samples.assign(len, 0.1);
    const auto spec = dsp::stft_power(w);
    CHECK(spec.frames == count_windows(len));
    CHECK(spec.frames == 1 + (len - dsp::kFftSize) / dsp::kHop);
  }
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(2047, 0.1);
  CHECK_THROWS_AS(dsp::stft_power(w), InvalidInputError);
}

TEST_CASE("a 3 s snippet yields 90 frames") {
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(48000, 0.25);
  CHECK(dsp::stft_power(w).frames == 90);
}

TEST_CASE("stft of silence is all zero") {
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(4096, 0.0);
  const auto spec = dsp::stft_power(w);
  for (double v : spec.values) CHECK(v == 0.0);
}

TEST_CASE("stft power matches a naive DFT") {
  Rng rng(42);
  Waveform w;
  w.sample_rate = 16000;
  w.samples.resize(dsp::kFftSize);
  for (auto& s : w.samples) s = rng.uniform(-1.0, 1.0);

  // Hann-windowed frame, same convention as the implementation.
  std::vector<double> frame(dsp::kFftSize);
  for (std::size_t i = 0; i < frame.size(); ++i) {
    frame[i] = w.samples[i] * 0.5 *
               (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) /
                               static_cast<double>(dsp::kFftSize)));
  }
  const auto spec = dsp::stft_power(w);
  REQUIRE(spec.frames == 1);
  for (std::size_t bin = 0; bin <= dsp::kFftSize / 2; bin += 17) {
    const double want = dft_magnitude(frame, bin);
    const double got = std::sqrt(spec.at(0, bin));
    CHECK(std::fabs(got - want) < 1e-8 * std::max(1.0, want));
  }
}

TEST_CASE("a 1 kHz tone lands on spectrum bin 128") {
  const Waveform w = sine(1000.0, 1.0, 16000);
  const auto spec = dsp::stft_power(w);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    std::size_t argmax = 0;
    double best = -1.0;
    for (std::size_t k = 0; k < spec.bins; ++k) {
      if (spec.at(t, k) > best) {
        best = spec.at(t, k);
        argmax = k;
      }
    }
    CHECK(argmax == 128);  // round(1000 * 2048 / 16000)
  }
}

TEST_CASE("mel scale formula") {
  CHECK(dsp::hz_to_mel(0.0) == 0.0);
  CHECK(dsp::hz_to_mel(700.0) ==
        doctest::Approx(2595.0 * std::log10(2.0)).epsilon(1e-12));
  CHECK(dsp::hz_to_mel(440.0) < dsp::hz_to_mel(880.0));
  CHECK_THROWS_AS(dsp::hz_to_mel(-1.0), InvalidInputError);
  CHECK(dsp::mel_to_hz(dsp::hz_to_mel(1234.5)) == doctest::Approx(1234.5));
}

TEST_CASE("mel filterbank construction") {
  const auto& fb = dsp::default_filterbank();
  CHECK(fb.rows.size() == 96);
  CHECK(fb.center_freqs.size() == 96);

  SUBCASE("rows fit inside the 1025-bin spectrum") {
    for (std::size_t m = 0; m < fb.n_mels; ++m) {
      CHECK(fb.rows[m].first_bin + fb.rows[m].weights.size() <=
            dsp::kSpectrumBins);
    }
  }
  SUBCASE("rows have positive weight and increasing centers") {
    for (std::size_t m = 0; m < fb.n_mels; ++m) {
      double maxw = 0.0;
      for (double v : fb.rows[m].weights) {
        CHECK(v >= 0.0);
        CHECK(std::isfinite(v));
        maxw = std::max(maxw, v);
      }
      CHECK(maxw > 0.0);
      if (m > 0) CHECK(fb.center_freqs[m] > fb.center_freqs[m - 1]);
    }
  }
  SUBCASE("every bin strictly inside the band is covered") {
    const double bin_hz = 16000.0 / 2048.0;
    for (std::size_t k = 0; k < dsp::kSpectrumBins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      if (f <= dsp::kFMin || f >= dsp::kFMax) continue;
      double colsum = 0.0;
      for (std::size_t m = 0; m < fb.n_mels; ++m) colsum += fb.weight(m, k);
      CHECK(colsum > 0.0);
    }
  }
  SUBCASE("invalid bands are rejected") {
    CHECK_THROWS_AS(dsp::build_mel_filterbank(16000, 2048, 96, 8000.0, 40.0),
                    InvalidInputError);
    CHECK_THROWS_AS(dsp::build_mel_filterbank(16000, 2048, 96, 40.0, 9000.0),
                    InvalidInputError);
  }
}

TEST_CASE("pure tones localize to their mel filter") {
  const auto& fb = dsp::default_filterbank();
  for (std::size_t m = 0; m < fb.n_mels; ++m) {
    const Waveform tone = sine(fb.center_freqs[m], 0.5, 16000);
    const auto mel = dsp::compute_features(tone);
    std::vector<double> profile(mel.bins, 0.0);
    for (std::size_t t = 0; t < mel.frames; ++t) {
      for (std::size_t b = 0; b < mel.bins; ++b) profile[b] += mel.at(t, b);
    }
    const auto argmax = static_cast<std::size_t>(
        std::max_element(profile.begin(), profile.end()) - profile.begin());
    if (m == 0 || m + 1 == fb.n_mels) {
      CHECK(std::llabs(static_cast<long long>(argmax) -
                       static_cast<long long>(m)) <= 1);
    } else {
      CHECK(argmax == m);
    }
  }
}

TEST_CASE("power to dB") {
  const auto out = dsp::power_to_db({1.0, 100.0, 0.0});
  CHECK(out[0] == doctest::Approx(0.0));
  CHECK(out[1] == doctest::Approx(20.0));
  CHECK(out[2] == doctest::Approx(dsp::kDbFloor));
  CHECK_THROWS_AS(dsp::power_to_db({-0.5}), InvalidInputError);
}

TEST_CASE("compute_features end to end") {
  SUBCASE("3 s at 16 kHz gives 90 x 96") {
    const Waveform w = sine(440.0, 3.0, 16000);
    const auto mel = dsp::compute_features(w);
    CHECK(mel.frames == 90);
    CHECK(mel.bins == 96);
    for (double v : mel.values) {
      CHECK(std::isfinite(v));
      CHECK(v >= dsp::kDbFloor);
    }
  }
  SUBCASE("silence sits at the dB floor") {
    Waveform w;
    w.sample_rate = 16000;
    w.samples.assign(48000, 0.0);
    const auto mel = dsp::compute_features(w);
    for (double v : mel.values) CHECK(v == dsp::kDbFloor);
  }
  SUBCASE("deterministic across calls") {
    const Waveform w = sine(523.25, 2.0, 16000);
    const auto a = dsp::compute_features(w);
    const auto b = dsp::compute_features(w);
    CHECK(a.values == b.values);
  }
  SUBCASE("non-16k input is resampled first") {
    const Waveform w = sine(440.0, 1.0, 32000);
    const auto mel = dsp::compute_features(w);
    CHECK(mel.frames == 1 + (16000 - dsp::kFftSize) / dsp::kHop);
  }
}

TEST_CASE("wav round trip for pcm16") {
  const Waveform w = sine(330.0, 0.2, 16000, 0.8);
  const std::string path = temp_path("noisetag_test_pcm16.wav");
  dsp::write_wav_pcm16(path, w);
  const Waveform back = dsp::read_wav(path);
  REQUIRE(back.samples.size() == w.samples.size());
  CHECK(back.sample_rate == 16000);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    CHECK(std::fabs(back.samples[i] - w.samples[i]) < 1.0 / 32000.0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("wav reader handles float32 and downmixes stereo") {
  // Hand-built stereo float32 file: L = 0.5, R = -0.5 -> mono 0.
  const std::string path = temp_path("noisetag_test_f32.wav");
  {
    std::vector<unsigned char> bytes;
    const auto put = [&bytes](std::uint32_t v, int n) {
      for (int i = 0; i < n; ++i) {
        bytes.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
      }
    };
    const auto put_tag = [&bytes](const char* t) {
      for (int i = 0; i < 4; ++i) {
        bytes.push_back(static_cast<unsigned char>(t[i]));
      }
    };
    const std::uint32_t frames = 64;
    const std::uint32_t data_size = frames * 2 * 4;
    put_tag("RIFF");
    put(36 + data_size, 4);
    put_tag("WAVE");
    put_tag("fmt ");
    put(16, 4);
    put(3, 2);  // IEEE float
    put(2, 2);  // stereo
    put(16000, 4);
    put(16000 * 8, 4);
    put(8, 2);
    put(32, 2);
    put_tag("data");
    put(data_size, 4);
    const float left = 0.5f, right = -0.5f;
    std::uint32_t lu, ru;
    std::memcpy(&lu, &left, 4);
    std::memcpy(&ru, &right, 4);
    for (std::uint32_t i = 0; i < frames; ++i) {
      put(lu, 4);
      put(ru, 4);
    }
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  }
  const Waveform w = dsp::read_wav(path);
  REQUIRE(w.samples.size() == 64);
  for (double s : w.samples) CHECK(s == doctest::Approx(0.0));
  std::filesystem::remove(path);
}

TEST_CASE("feature cache round trip") {
  const Waveform w = sine(440.0, 3.0, 16000);
  const auto mel = dsp::compute_features(w);
  const std::string path = temp_path("noisetag_test_cache.mel");
  dsp::write_feature_cache(path, mel);
  const auto back = dsp::read_feature_cache(path);
  REQUIRE(back.has_value());
  CHECK(back->frames == mel.frames);
  CHECK(back->bins == mel.bins);
  for (std::size_t i = 0; i < mel.values.size(); ++i) {
    CHECK(back->values[i] == doctest::Approx(mel.values[i]).epsilon(1e-6));
  }
  CHECK(!dsp::read_feature_cache(temp_path("noisetag_missing.mel")));
  std::filesystem::remove(path);
}
