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

#ifndef SPEECHDP_WAV_HPP_
#define SPEECHDP_WAV_HPP_

#include <string>

#include "speechdp/dsp.hpp"

namespace speechdp {
namespace wav {

inline constexpr int kRequiredSampleRate = 16000;

// Reads a RIFF/WAVE file. Accepted format: PCM signed 16-bit little-endian,
// mono, 16 kHz; anything else raises FormatError (resampling is out of
// scope). Samples map to [-1, 1) by division by 32768.
dsp::AudioSignal read_wav(const std::string& path);

// Writes the matching format. Samples are clamped to [-1, 1) and quantized
// by rounding toward nearest.
void write_wav(const std::string& path, const dsp::AudioSignal& signal);

}  // namespace wav
}  // namespace speechdp

#endif  // SPEECHDP_WAV_HPP_
