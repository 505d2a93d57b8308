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

#include <string>
#include <vector>

namespace noisetag::dsp {

/// Mono audio in [-1, 1] with its sample rate.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 0;
};

/// Throws InvalidInputError unless the waveform is non-empty, has a positive
/// rate, and every sample is finite.
void validate_waveform(const Waveform& w, const char* where);

/// Reads an uncompressed PCM WAV file. Supports 16-bit PCM and 32-bit IEEE
/// float; multi-channel audio is downmixed to mono by averaging.
Waveform read_wav(const std::string& path);

/// Writes mono 16-bit PCM. Samples are clamped to [-1, 1] before
/// quantization. Byte-deterministic for identical input.
void write_wav_pcm16(const std::string& path, const Waveform& w);

}  // namespace noisetag::dsp
