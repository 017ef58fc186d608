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

#include "speechdp/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace speechdp {
namespace wav {
namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

}  // namespace

dsp::AudioSignal read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE file: " + path);
  }

  // Walk chunks; require a PCM fmt chunk before data.
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_len = 0;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t len = read_u32(hdr + 4);
    if (pos + 8 + len > bytes.size()) throw FormatError("truncated WAV chunk in " + path);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (len < 16) throw FormatError("fmt chunk too short in " + path);
      format = read_u16(hdr + 8);
      channels = read_u16(hdr + 10);
      rate = read_u32(hdr + 12);
      bits = read_u16(hdr + 22);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = hdr + 8;
      data_len = len;
    }
    pos += 8 + len + (len & 1);  // chunks are word-aligned
  }
  if (!have_fmt || data == nullptr) throw FormatError("missing fmt/data chunk in " + path);
  if (format != 1 || bits != 16) {
    throw FormatError("unsupported WAV encoding (need PCM 16-bit) in " + path);
  }
  if (channels != 1) throw FormatError("unsupported channel count (need mono) in " + path);
  if (rate != kRequiredSampleRate) {
    throw FormatError("unsupported sample rate (need 16 kHz) in " + path);
  }

  const std::uint32_t n = data_len / 2;
  dsp::AudioSignal signal;
  signal.sample_rate = static_cast<int>(rate);
  signal.samples.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto raw = static_cast<std::int16_t>(read_u16(data + 2 * i));
    signal.samples[i] = static_cast<double>(raw) / 32768.0;
  }
  return signal;
}

void write_wav(const std::string& path, const dsp::AudioSignal& signal) {
  if (signal.sample_rate != kRequiredSampleRate) {
    throw FormatError("refusing to write non-16 kHz WAV: " + path);
  }
  const auto n = static_cast<std::uint32_t>(signal.samples.size());
  std::vector<unsigned char> out;
  out.reserve(44 + 2 * n);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, kRequiredSampleRate);
  put_u32(out, kRequiredSampleRate * 2);  // byte rate
  put_u16(out, 2);                        // block align
  put_u16(out, 16);                       // bits per sample
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, 2 * n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const double clamped = std::clamp(signal.samples[i], -1.0, 32767.0 / 32768.0);
    const auto q = static_cast<std::int16_t>(std::lrint(clamped * 32768.0));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot create WAV file: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to WAV file: " + path);
}

}  // namespace wav
}  // namespace speechdp
