//
// Copyright 2026 The SpeechDP Authors
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
//

#include "speechdp/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <vector>

namespace speechdp {
namespace checkpoint {
namespace {

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) {
      c = (c & 1U) ? 0xedb88320U ^ (c >> 1) : c >> 1;
    }
    table[i] = c;
  }
  return table;
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<unsigned char>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t len, std::string path)
      : data_(data), len_(len), path_(std::move(path)) {}

  const unsigned char* take(std::size_t n) {
    if (pos_ + n > len_) throw FormatError("truncated checkpoint: " + path_);
    const unsigned char* p = data_ + pos_;
    pos_ += n;
    return p;
  }

  std::uint16_t u16() {
    const auto* p = take(2);
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }

  std::uint32_t u32() {
    const auto* p = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
  }

  std::uint64_t u64() {
    const auto* p = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
  }

  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

 private:
  const unsigned char* data_;
  std::size_t len_;
  std::size_t pos_ = 0;
  std::string path_;
};

}  // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t len) {
  static const auto table = make_crc_table();
  std::uint32_t c = 0xffffffffU;
  for (std::size_t i = 0; i < len; ++i) {
    c = table[(c ^ data[i]) & 0xffU] ^ (c >> 8);
  }
  return c ^ 0xffffffffU;
}

void save(const std::string& path, const ModelParameters& params) {
  std::vector<unsigned char> out;
  out.insert(out.end(), {'D', 'P', 'S', 'M'});
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(params.entries.size()));
  for (const auto& e : params.entries) {
    if (e.name.size() > 0xffff) throw ParameterError("entry name too long: " + e.name);
    put_u16(out, static_cast<std::uint16_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(static_cast<unsigned char>(e.value.shape.size()));
    for (int d : e.value.shape) put_u64(out, static_cast<std::uint64_t>(d));
    for (Eigen::Index i = 0; i < e.value.size(); ++i) put_f64(out, e.value.data[i]);
  }
  put_u32(out, crc32(out.data(), out.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot create checkpoint: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to checkpoint: " + path);
}

ModelParameters load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "DPSM", 4) != 0) {
    throw FormatError("not a checkpoint file: " + path);
  }
  const std::uint32_t stored_crc = crc32(bytes.data(), bytes.size() - 4);
  Reader tail(bytes.data() + bytes.size() - 4, 4, path);
  if (tail.u32() != stored_crc) throw FormatError("checkpoint CRC mismatch: " + path);

  Reader r(bytes.data() + 4, bytes.size() - 8, path);
  if (r.u32() != kFormatVersion) throw FormatError("unsupported checkpoint version: " + path);
  const std::uint32_t count = r.u32();
  ModelParameters params;
  params.entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16();
    const auto* name_bytes = r.take(name_len);
    std::string name(reinterpret_cast<const char*>(name_bytes), name_len);
    const unsigned char rank = *r.take(1);
    std::vector<int> shape(rank);
    Eigen::Index numel = 1;
    for (unsigned char d = 0; d < rank; ++d) {
      const std::uint64_t dim = r.u64();
      if (dim == 0 || dim > 1u << 30) throw FormatError("implausible dimension in " + path);
      shape[d] = static_cast<int>(dim);
      numel *= static_cast<Eigen::Index>(dim);
    }
    Vec data(numel);
    for (Eigen::Index j = 0; j < numel; ++j) data[j] = r.f64();
    params.entries.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return params;
}

}  // namespace checkpoint
}  // namespace speechdp
