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

#ifndef SPEECHDP_CHECKPOINT_HPP_
#define SPEECHDP_CHECKPOINT_HPP_

#include <cstdint>
#include <string>

#include "speechdp/tensor.hpp"

namespace speechdp {
namespace checkpoint {

// Checkpoint file layout (all integers little-endian):
//   magic "DPSM", format version u32, entry count u32, then per entry:
//   name length u16 + UTF-8 name, rank u8, dims as u64, data as f64;
//   trailing CRC32 of all preceding bytes.
// Round-tripping a parameter set is bitwise identity.
inline constexpr std::uint32_t kFormatVersion = 1;

void save(const std::string& path, const ModelParameters& params);
ModelParameters load(const std::string& path);

// CRC-32 (IEEE reflected polynomial, as used by zlib and PNG).
std::uint32_t crc32(const unsigned char* data, std::size_t len);

}  // namespace checkpoint
}  // namespace speechdp

#endif  // SPEECHDP_CHECKPOINT_HPP_
