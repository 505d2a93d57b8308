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

#include "noisetag/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "noisetag/error.hpp"

namespace noisetag::nn {
namespace {

constexpr char kMagic[8] = {'N', 'T', 'C', 'K', 'P', 'T', '0', '1'};

const std::array<std::uint32_t, 256>& crc_table() {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) {
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      }
      t[i] = c;
    }
    return t;
  }();
  return table;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
}

void put_f64(std::string& out, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
  }
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path)
      : bytes_(bytes), path_(path) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  double f64() {
    need(8);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) {
      u |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 8;
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }

  std::string str(std::size_t len) {
    need(len);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw ParseError("truncated checkpoint: " + path_);
    }
  }
  const std::string& bytes_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t len) {
  const auto& table = crc_table();
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) {
    c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  }
  return c ^ 0xFFFFFFFFu;
}

void save_checkpoint(const std::string& path, const Parameters& params,
                     const std::string& header_text) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  put_u32(out, static_cast<std::uint32_t>(params.items().size()));
  for (const auto& [name, p] : params.items()) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    out.push_back(p.trainable ? 1 : 0);
    put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape) {
      put_u32(out, static_cast<std::uint32_t>(d));
    }
    for (double v : p.value.data) put_f64(out, v);
  }
  put_u32(out, crc32(reinterpret_cast<const unsigned char*>(out.data()),
                     out.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing checkpoint: " + path);
}

namespace {

std::string read_all(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

std::string parse_checkpoint(const std::string& bytes, const std::string& path,
                             Parameters* params) {
  if (bytes.size() < sizeof(kMagic) + 8 ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("not a checkpoint file: " + path);
  }
  // The trailing u32 is little-endian like everything else.
  const auto* tail = reinterpret_cast<const unsigned char*>(bytes.data()) +
                     bytes.size() - 4;
  const std::uint32_t stored = static_cast<std::uint32_t>(tail[0]) |
                               (static_cast<std::uint32_t>(tail[1]) << 8) |
                               (static_cast<std::uint32_t>(tail[2]) << 16) |
                               (static_cast<std::uint32_t>(tail[3]) << 24);
  const std::uint32_t actual =
      crc32(reinterpret_cast<const unsigned char*>(bytes.data()),
            bytes.size() - 4);
  if (stored != actual) {
    throw ParseError("checkpoint CRC mismatch (corrupt file): " + path);
  }

  Reader r(bytes, path);
  r.str(sizeof(kMagic));
  const std::uint32_t header_len = r.u32();
  const std::string header = r.str(header_len);
  const std::uint32_t n_tensors = r.u32();

  if (params != nullptr) {
    if (n_tensors != params->items().size()) {
      throw ParseError("checkpoint holds " + std::to_string(n_tensors) +
                       " tensors, model expects " +
                       std::to_string(params->items().size()) + ": " + path);
    }
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
      const std::uint32_t name_len = r.u32();
      const std::string name = r.str(name_len);
      const bool trainable = r.u8() != 0;
      const std::uint32_t rank = r.u32();
      std::vector<std::size_t> shape(rank);
      for (auto& d : shape) d = r.u32();

      ParamTensor* p = params->find(name);
      if (p == nullptr) {
        throw ParseError("checkpoint tensor '" + name +
                         "' unknown to the model: " + path);
      }
      if (p->value.shape != shape) {
        throw ParseError("checkpoint tensor '" + name + "' has shape " +
                         shape_str(shape) + ", model expects " +
                         shape_str(p->value.shape) + ": " + path);
      }
      p->trainable = trainable;
      for (auto& v : p->value.data) v = r.f64();
    }
  }
  return header;
}

}  // namespace

std::string load_checkpoint(const std::string& path, Parameters& params) {
  const std::string bytes = read_all(path);
  return parse_checkpoint(bytes, path, &params);
}

std::string read_checkpoint_header(const std::string& path) {
  const std::string bytes = read_all(path);
  return parse_checkpoint(bytes, path, nullptr);
}

}  // namespace noisetag::nn
