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

#include "noisetag/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "noisetag/error.hpp"
#include "noisetag/kernels.hpp"

namespace noisetag::dsp {
namespace {

constexpr double kPi = 3.14159265358979323846;

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = kPi * x;
  return std::sin(px) / px;
}

// Iterative radix-2 complex FFT over separate re/im arrays (size must be a
// power of two). Twiddles and the bit-reversal permutation are precomputed
// once per size.
struct FftPlan {
  std::size_t n;
  std::vector<std::size_t> bitrev;
  std::vector<double> tw_re, tw_im;  // e^{-2*pi*i*k/n}, k < n/2

  explicit FftPlan(std::size_t size) : n(size) {
    bitrev.resize(n);
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) {
        r = (r << 1) | ((i >> b) & 1);
      }
      bitrev[i] = r;
    }
    tw_re.resize(n / 2);
    tw_im.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
      tw_re[k] = std::cos(a);
      tw_im[k] = std::sin(a);
    }
  }

  void forward(double* re, double* im) const {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = bitrev[i];
      if (j > i) {
        std::swap(re[i], re[j]);
        std::swap(im[i], im[j]);
      }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const std::size_t half = len >> 1;
      const std::size_t stride = n / len;
      for (std::size_t start = 0; start < n; start += len) {
        for (std::size_t k = 0; k < half; ++k) {
          const double wr = tw_re[k * stride];
          const double wi = tw_im[k * stride];
          const std::size_t a = start + k;
          const std::size_t b = a + half;
          const double tr = re[b] * wr - im[b] * wi;
          const double ti = re[b] * wi + im[b] * wr;
          re[b] = re[a] - tr;
          im[b] = im[a] - ti;
          re[a] += tr;
          im[a] += ti;
        }
      }
    }
  }
};

// Real-input FFT of kFftSize samples via one complex FFT of half length plus
// the standard untangling step. Built once, shared read-only.
struct RfftPlan {
  std::size_t n = kFftSize;
  FftPlan half_plan{kFftSize / 2};
  std::vector<double> unpack_re, unpack_im;  // e^{-2*pi*i*k/n}, k <= n/2

  RfftPlan() {
    unpack_re.resize(n / 2 + 1);
    unpack_im.resize(n / 2 + 1);
    for (std::size_t k = 0; k <= n / 2; ++k) {
      const double a = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
      unpack_re[k] = std::cos(a);
      unpack_im[k] = std::sin(a);
    }
  }

  // power[k] = |X_k|^2 for k = 0..n/2, from a windowed real frame.
  void power_spectrum(const double* frame, double* power, double* scratch_re,
                      double* scratch_im) const {
    const std::size_t m = n / 2;
    for (std::size_t i = 0; i < m; ++i) {
      scratch_re[i] = frame[2 * i];
      scratch_im[i] = frame[2 * i + 1];
    }
    half_plan.forward(scratch_re, scratch_im);

    const double dc = scratch_re[0] + scratch_im[0];
    const double nyq = scratch_re[0] - scratch_im[0];
    power[0] = dc * dc;
    power[m] = nyq * nyq;
    for (std::size_t k = 1; k <= m / 2; ++k) {
      const double ar = scratch_re[k], ai = scratch_im[k];
      const double br = scratch_re[m - k], bi = scratch_im[m - k];
      // Even/odd split of the packed spectrum.
      const double er = 0.5 * (ar + br);
      const double ei = 0.5 * (ai - bi);
      const double or_ = 0.5 * (ai + bi);
      const double oi = -0.5 * (ar - br);
      const double wr = unpack_re[k], wi = unpack_im[k];
      const double xr = er + or_ * wr - oi * wi;
      const double xi = ei + or_ * wi + oi * wr;
      power[k] = xr * xr + xi * xi;
      if (k != m - k) {
        // X_{n/2 - k} mirrors with conjugated twiddle.
        const double wr2 = unpack_re[m - k], wi2 = unpack_im[m - k];
        const double er2 = er, ei2 = -ei;
        const double or2 = or_, oi2 = -oi;
        const double yr = er2 + or2 * wr2 - oi2 * wi2;
        const double yi = ei2 + or2 * wi2 + oi2 * wr2;
        power[m - k] = yr * yr + yi * yi;
      }
    }
  }
};

const RfftPlan& rfft_plan() {
  static const RfftPlan plan;
  return plan;
}

const std::vector<double>& hann_window() {
  static const std::vector<double> win = [] {
    std::vector<double> w(kFftSize);
    for (std::size_t i = 0; i < kFftSize; ++i) {
      w[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) /
                                   static_cast<double>(kFftSize)));
    }
    return w;
  }();
  return win;
}

}  // namespace

Waveform resample(const Waveform& w, int target_rate) {
  validate_waveform(w, "resample");
  if (target_rate <= 0) {
    throw InvalidInputError("resample: target_rate must be > 0");
  }
  if (target_rate == w.sample_rate) return w;

  const double ratio =
      static_cast<double>(target_rate) / static_cast<double>(w.sample_rate);
  const auto in_len = static_cast<std::int64_t>(w.samples.size());
  const auto out_len = static_cast<std::int64_t>(
      std::llround(static_cast<double>(in_len) * ratio));
  if (out_len <= 0) {
    throw InvalidInputError("resample: input too short for target rate");
  }

  // Low-pass at the narrower Nyquist; the sinc stretches by 1/ratio when
  // downsampling. 16 zero crossings per side, Hann-windowed, with per-sample
  // gain normalisation to flatten the window's passband ripple.
  const double cutoff = 0.5 * std::min(1.0, ratio);
  const double half_width = 16.0 / std::min(1.0, ratio);
  const auto half_taps = static_cast<std::int64_t>(std::ceil(half_width));

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<std::size_t>(out_len));
  for (std::int64_t i = 0; i < out_len; ++i) {
    const double pos = static_cast<double>(i) / ratio;
    const auto center = static_cast<std::int64_t>(std::floor(pos));
    double acc = 0.0;
    double norm = 0.0;
    for (std::int64_t j = center - half_taps; j <= center + half_taps; ++j) {
      const double t = pos - static_cast<double>(j);
      if (std::fabs(t) > half_width) continue;
      const double win = 0.5 * (1.0 + std::cos(kPi * t / half_width));
      const double h = 2.0 * cutoff * sinc(2.0 * cutoff * t) * win;
      norm += h;
      if (j >= 0 && j < in_len) {
        acc += w.samples[static_cast<std::size_t>(j)] * h;
      }
    }
    out.samples[static_cast<std::size_t>(i)] = norm != 0.0 ? acc / norm : 0.0;
  }
  return out;
}

Waveform circular_pad(const Waveform& w, std::size_t target_len) {
  validate_waveform(w, "circular_pad");
  if (target_len == 0) {
    throw InvalidInputError("circular_pad: target_len must be > 0");
  }
  if (w.samples.size() >= target_len) return w;

  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(target_len);
  const std::size_t n = w.samples.size();
  for (std::size_t i = 0; i < target_len; ++i) {
    out.samples[i] = w.samples[i % n];
  }
  return out;
}

Waveform extract_snippet(const Waveform& w, double duration_s, Rng& rng) {
  validate_waveform(w, "extract_snippet");
  if (w.sample_rate != kSampleRate) {
    throw InvalidInputError("extract_snippet: expected a 16 kHz waveform");
  }
  if (duration_s <= 0.0) {
    throw InvalidInputError("extract_snippet: duration must be > 0");
  }
  const auto target = static_cast<std::size_t>(
      std::llround(duration_s * static_cast<double>(kSampleRate)));

  if (w.samples.size() < target) {
    return circular_pad(w, target);
  }
  const std::size_t max_offset = w.samples.size() - target;
  const auto offset =
      static_cast<std::size_t>(rng.uniform_int(max_offset + 1));
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(offset),
                     w.samples.begin() +
                         static_cast<std::ptrdiff_t>(offset + target));
  return out;
}

PowerSpectrogram stft_power(const Waveform& w) {
  validate_waveform(w, "stft_power");
  if (w.samples.size() < kFftSize) {
    throw InvalidInputError(
        "stft_power: waveform shorter than one frame (" +
        std::to_string(w.samples.size()) + " < " + std::to_string(kFftSize) +
        " samples); pad the input first");
  }
  const std::size_t frames = 1 + (w.samples.size() - kFftSize) / kHop;

  PowerSpectrogram out;
  out.frames = frames;
  out.values.resize(frames * kSpectrumBins);

  const auto& plan = rfft_plan();
  const auto& win = hann_window();
  std::vector<double> frame(kFftSize);
  std::vector<double> sre(kFftSize / 2), sim(kFftSize / 2);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = w.samples.data() + t * kHop;
    for (std::size_t i = 0; i < kFftSize; ++i) frame[i] = src[i] * win[i];
    plan.power_spectrum(frame.data(), out.values.data() + t * kSpectrumBins,
                        sre.data(), sim.data());
  }
  return out;
}

double hz_to_mel(double f) {
  if (f < 0.0) {
    throw InvalidInputError("hz_to_mel: frequency must be non-negative");
  }
  return 2595.0 * std::log10(1.0 + f / 700.0);
}

double mel_to_hz(double m) {
  return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
}

double MelFilterbank::weight(std::size_t row, std::size_t bin) const {
  const Row& r = rows[row];
  if (bin < r.first_bin || bin >= r.first_bin + r.weights.size()) return 0.0;
  return r.weights[bin - r.first_bin];
}

MelFilterbank build_mel_filterbank(int sample_rate, std::size_t n_fft,
                                   std::size_t n_mels, double f_min,
                                   double f_max) {
  if (f_min < 0.0 || f_min >= f_max) {
    throw InvalidInputError("build_mel_filterbank: need 0 <= f_min < f_max");
  }
  if (f_max > sample_rate / 2.0) {
    throw InvalidInputError("build_mel_filterbank: f_max exceeds Nyquist");
  }

  const std::size_t n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);

  // n_mels + 2 edge frequencies, equally spaced on the mel scale; filter m
  // rises from edge m to m+1 and falls to m+2.
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(n_mels + 1));
  }

  MelFilterbank fb;
  fb.sample_rate = sample_rate;
  fb.n_fft = n_fft;
  fb.n_mels = n_mels;
  fb.f_min = f_min;
  fb.f_max = f_max;
  fb.rows.resize(n_mels);
  fb.center_freqs.resize(n_mels);

  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(n_fft);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    fb.center_freqs[m] = mid;
    std::vector<double> dense(n_bins, 0.0);
    std::size_t first = n_bins, last = 0;
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double v = 0.0;
      if (f > lo && f < mid) {
        v = (f - lo) / (mid - lo);
      } else if (f == mid) {
        v = 1.0;
      } else if (f > mid && f < hi) {
        v = (hi - f) / (hi - mid);
      }
      if (v > 0.0) {
        dense[k] = v;
        first = std::min(first, k);
        last = k;
      }
    }
    if (first > last) {
      throw InvalidInputError(
          "build_mel_filterbank: filter " + std::to_string(m) +
          " has no positive weight; FFT resolution too coarse");
    }
    fb.rows[m].first_bin = first;
    fb.rows[m].weights.assign(dense.begin() + static_cast<std::ptrdiff_t>(first),
                              dense.begin() + static_cast<std::ptrdiff_t>(last + 1));
  }
  return fb;
}

std::vector<double> power_to_db(const std::vector<double>& power) {
  std::vector<double> out(power.size());
  for (std::size_t i = 0; i < power.size(); ++i) {
    const double p = power[i];
    if (p < 0.0) {
      throw InvalidInputError("power_to_db: negative power entry");
    }
    out[i] = std::max(10.0 * std::log10(std::max(p, kPowerEps)), kDbFloor);
  }
  return out;
}

const MelFilterbank& default_filterbank() {
  static const MelFilterbank fb =
      build_mel_filterbank(kSampleRate, kFftSize, kMelBins, kFMin, kFMax);
  return fb;
}

MelSpectrogram compute_features(const Waveform& w) {
  return compute_features(w, default_filterbank());
}

MelSpectrogram compute_features(const Waveform& w, const MelFilterbank& fb) {
  validate_waveform(w, "compute_features");
  const Waveform at_rate =
      w.sample_rate == kSampleRate ? w : resample(w, kSampleRate);
  const PowerSpectrogram spec = stft_power(at_rate);

  const auto& ops = kernels::active();
  MelSpectrogram mel;
  mel.frames = spec.frames;
  mel.values.resize(spec.frames * fb.n_mels);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const double* frame = spec.values.data() + t * spec.bins;
    double* out = mel.values.data() + t * fb.n_mels;
    for (std::size_t m = 0; m < fb.n_mels; ++m) {
      const auto& row = fb.rows[m];
      const double p =
          ops.dot(frame + row.first_bin, row.weights.data(), row.weights.size());
      out[m] = std::max(10.0 * std::log10(std::max(p, kPowerEps)), kDbFloor);
    }
  }
  return mel;
}

void write_feature_cache(const std::string& path, const MelSpectrogram& m) {
  std::string bytes;
  bytes.reserve(8 + m.values.size() * 4);
  const auto put_u32 = [&bytes](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  put_u32(static_cast<std::uint32_t>(m.frames));
  put_u32(static_cast<std::uint32_t>(m.bins));
  for (double v : m.values) {
    const auto f = static_cast<float>(v);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(u);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write feature cache: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing feature cache: " + path);
}

std::optional<MelSpectrogram> read_feature_cache(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return std::nullopt;
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 8) throw ParseError("feature cache too short: " + path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const auto get_u32 = [p](std::size_t off) {
    return static_cast<std::uint32_t>(p[off]) |
           (static_cast<std::uint32_t>(p[off + 1]) << 8) |
           (static_cast<std::uint32_t>(p[off + 2]) << 16) |
           (static_cast<std::uint32_t>(p[off + 3]) << 24);
  };
  MelSpectrogram m;
  m.frames = get_u32(0);
  m.bins = get_u32(4);
  const std::size_t count = m.frames * m.bins;
  if (bytes.size() != 8 + count * 4) {
    throw ParseError("feature cache size mismatch: " + path);
  }
  m.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t u = get_u32(8 + i * 4);
    float fv;
    std::memcpy(&fv, &u, 4);
    if (!std::isfinite(fv)) {
      throw ParseError("feature cache has non-finite values: " + path);
    }
    m.values[i] = fv;
  }
  return m;
}

}  // namespace noisetag::dsp
