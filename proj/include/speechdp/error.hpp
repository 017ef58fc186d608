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

#ifndef SPEECHDP_ERROR_HPP_
#define SPEECHDP_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace speechdp {

// Invalid argument or violated precondition on a public entry point.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values where finite arithmetic is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or unsupported file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Noise calibration could not meet the target inside the search bracket.
class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A documented inter-module contract was violated by the caller.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Cached intermediate state does not match the inputs it claims to describe.
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Filesystem failure, annotated with the offending path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace speechdp

#endif  // SPEECHDP_ERROR_HPP_
