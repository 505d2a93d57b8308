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

#include "noisetag/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "noisetag/error.hpp"

namespace noisetag::dsp {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0]) |
         static_cast<std::uint16_t>(p[1] << 8);
}

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

}  // namespace

void validate_waveform(const Waveform& w, const char* where) {
  if (w.samples.empty()) {
    throw InvalidInputError(std::string(where) + ": empty waveform");
  }
  if (w.sample_rate <= 0) {
    throw InvalidInputError(std::string(where) + ": sample rate must be > 0");
  }
  for (double s : w.samples) {
    if (!std::isfinite(s)) {
      throw InvalidInputError(std::string(where) + ": non-finite sample");
    }
  }
}

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();

  if (size < 12 || std::memcmp(p, "RIFF", 4) != 0 ||
      std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw ParseError("not a RIFF/WAVE file: " + path);
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_size = 0;

  std::size_t off = 12;
  while (off + 8 <= size) {
    const char* tag = reinterpret_cast<const char*>(p + off);
    const std::uint32_t chunk = read_u32(p + off + 4);
    const std::size_t body = off + 8;
    if (body + chunk > size) {
      throw ParseError("truncated chunk in WAV file: " + path);
    }
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk < 16) throw ParseError("short fmt chunk in " + path);
      format = read_u16(p + body);
      channels = read_u16(p + body + 2);
      rate = read_u32(p + body + 4);
      bits = read_u16(p + body + 14);
      if (format == kFormatExtensible && chunk >= 40) {
        // The sub-format GUID starts with the basic format code.
        format = read_u16(p + body + 24);
      }
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data = p + body;
      data_size = chunk;
    }
    off = body + chunk + (chunk & 1);  // chunks are word-aligned
  }

  if (data == nullptr) throw ParseError("WAV file has no data chunk: " + path);
  if (channels == 0 || rate == 0) {
    throw ParseError("WAV file has no fmt chunk: " + path);
  }
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32) {
    throw ParseError("unsupported WAV encoding (need PCM16 or float32): " +
                     path);
  }

  const std::size_t bytes_per = bits / 8;
  const std::size_t frames = data_size / (bytes_per * channels);
  if (frames == 0) throw ParseError("WAV file has no samples: " + path);

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* s = data + (f * channels + c) * bytes_per;
      if (pcm16) {
        const std::int16_t v =
            static_cast<std::int16_t>(read_u16(s));
        acc += v / 32768.0;
      } else {
        const std::uint32_t u = read_u32(s);
        float fv;
        std::memcpy(&fv, &u, 4);
        acc += fv;
      }
    }
    w.samples[f] = acc / channels;
  }
  validate_waveform(w, "read_wav");
  return w;
}

void write_wav_pcm16(const std::string& path, const Waveform& w) {
  validate_waveform(w, "write_wav_pcm16");
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(w.samples.size() * 2);

  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32(out, 36 + data_size);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_size);
  for (double s : w.samples) {
    const long q = std::lrint(std::clamp(s, -1.0, 1.0) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(q, -32768l, 32767l));
    put_u16(out, static_cast<std::uint16_t>(v));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write WAV file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing WAV file: " + path);
}

}  // namespace noisetag::dsp
