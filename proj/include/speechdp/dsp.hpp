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

#ifndef SPEECHDP_DSP_HPP_
#define SPEECHDP_DSP_HPP_

#include <string>

#include "speechdp/rng.hpp"
#include "speechdp/tensor.hpp"

namespace speechdp {
namespace dsp {

// Mono amplitude sequence, nominally in [-1, 1].
struct AudioSignal {
  Vec samples;
  int sample_rate = 16000;
};

// Triangular mel filters as a dense [n_mels x n_bins] gain matrix. Centers
// are equally spaced on the mel scale; adjacent filters overlap at each
// other's centers, so row supports are monotone in frequency.
struct MelFilterbank {
  Mat weights;
  int n_mels = 0;
  int fft_size = 0;
  int sample_rate = 0;
  double fmin = 0.0;
  double fmax = 0.0;
};

// Natural-log mel energies, [n_mels x n_frames]. The log floor guarantees
// every entry is finite.
struct LogMelSpectrogram {
  Mat values;
  int frame_hop = 0;
  std::string origin_id;

  int n_mels() const { return static_cast<int>(values.rows()); }
  int n_frames() const { return static_cast<int>(values.cols()); }
};

inline constexpr int kDefaultFftSize = 1024;
inline constexpr int kDefaultWinLength = 1024;  // 64 ms at 16 kHz
inline constexpr int kDefaultHop = 256;         // 16 ms, 4x overlap
inline constexpr int kDefaultNumMels = 80;
inline constexpr double kDefaultHighpassHz = 50.0;
inline constexpr double kDefaultLogFloor = 1e-10;
inline constexpr int kDefaultCropFrames = 180;

// HTK mel scale, m = 2595 * log10(1 + f / 700).
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Removes drifting noise below the speech band with a second-order
// Butterworth highpass applied forward and backward (zero net phase).
// The signal is extended with odd edge reflections of 3x the filter order
// before filtering, and the operation is symmetrized in time so that
// filtering a reversed signal and reversing the result reproduces the
// forward output exactly. DC is removed identically (the filter has a
// double zero at z = 1).
AudioSignal zero_phase_highpass(const AudioSignal& signal, double cutoff_hz);

// Hann-windowed short-time power spectrum, [n_bins x n_frames] with
// n_bins = fft_size / 2 + 1. Frame t covers samples [t*hop, t*hop + win_length).
Mat stft_power(const AudioSignal& signal, int fft_size = kDefaultFftSize,
               int win_length = kDefaultWinLength, int hop = kDefaultHop);

MelFilterbank build_mel_filterbank(int n_mels, double fmin, double fmax,
                                   int fft_size, int sample_rate);

// values = ln(max(weights * power, floor)).
LogMelSpectrogram log_mel(const Mat& power, const MelFilterbank& fb,
                          double floor = kDefaultLogFloor);

// Contiguous crop of n_frames starting at a uniformly sampled offset.
// Inputs shorter than n_frames wrap around cyclically, so every input
// length is accepted.
LogMelSpectrogram frame_crop(const LogMelSpectrogram& lms, int n_frames, Prng& rng);

}  // namespace dsp
}  // namespace speechdp

#endif  // SPEECHDP_DSP_HPP_
