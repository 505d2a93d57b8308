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

#include <cstdint>
#include <string>

#include "noisetag/autodiff.hpp"

namespace noisetag::nn {

// Versioned binary checkpoint. Layout: magic "NTCKPT01", u32 header length,
// header bytes (free-form text, e.g. a model config), u32 tensor count, then
// per tensor: u32 name length, name, u8 trainable flag, u32 rank, u32
// extents, little-endian f64 payload. A CRC32 of everything before it closes
// the file.

std::uint32_t crc32(const unsigned char* data, std::size_t len);

void save_checkpoint(const std::string& path, const Parameters& params,
                     const std::string& header_text = "");

/// Restores tensor values into an existing parameter store (shapes must
/// match) and returns the header text. Detects truncation and corruption via
/// the trailing CRC.
std::string load_checkpoint(const std::string& path, Parameters& params);

/// Reads only the header text.
std::string read_checkpoint_header(const std::string& path);

}  // namespace noisetag::nn
