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

#include "speechdp/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <vector>

namespace speechdp {
namespace dsp {
namespace {

constexpr int kHighpassOrder = 2;

struct Biquad {
  double b0, b1, b2;  // numerator, normalized by a0
  double a1, a2;      // denominator, a0 == 1
};

// Second-order Butterworth highpass via the bilinear transform (Q = 1/sqrt 2).
Biquad butterworth_highpass(double cutoff_hz, int sample_rate) {
  const double w0 = 2.0 * M_PI * cutoff_hz / sample_rate;
  const double cosw = std::cos(w0);
  const double alpha = std::sin(w0) / std::sqrt(2.0);
  const double a0 = 1.0 + alpha;
  Biquad q;
  q.b0 = (1.0 + cosw) / 2.0 / a0;
  q.b1 = -(1.0 + cosw) / a0;
  q.b2 = (1.0 + cosw) / 2.0 / a0;
  q.a1 = -2.0 * cosw / a0;
  q.a2 = (1.0 - alpha) / a0;
  return q;
}

// Direct form II transposed, zero initial state.
Vec filter_forward(const Biquad& q, const Vec& x) {
  Vec y(x.size());
  double z1 = 0.0, z2 = 0.0;
  for (Eigen::Index n = 0; n < x.size(); ++n) {
    const double xn = x[n];
    const double yn = q.b0 * xn + z1;
    z1 = q.b1 * xn - q.a1 * yn + z2;
    z2 = q.b2 * xn - q.a2 * yn;
    y[n] = yn;
  }
  return y;
}

// Odd reflection of `pad` samples on both ends, then forward-backward
// filtering, then the padding is stripped.
Vec filtfilt_once(const Biquad& q, const Vec& x, Eigen::Index pad) {
  const Eigen::Index n = x.size();
  Vec ext(n + 2 * pad);
  for (Eigen::Index i = 0; i < pad; ++i) {
    ext[i] = 2.0 * x[0] - x[pad - i];
  }
  ext.segment(pad, n) = x;
  for (Eigen::Index j = 0; j < pad; ++j) {
    ext[pad + n + j] = 2.0 * x[n - 1] - x[n - 2 - j];
  }
  Vec fwd = filter_forward(q, ext);
  Vec bwd = filter_forward(q, fwd.reverse());
  return bwd.reverse().segment(pad, n);
}

void check_signal(const AudioSignal& s) {
  if (s.samples.size() == 0) throw ParameterError("audio signal is empty");
  if (s.sample_rate <= 0) throw ParameterError("sample rate must be positive");
  if (!s.samples.allFinite()) throw NumericError("audio signal contains non-finite samples");
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

AudioSignal zero_phase_highpass(const AudioSignal& signal, double cutoff_hz) {
  check_signal(signal);
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < signal.sample_rate / 2.0)) {
    throw ParameterError("highpass cutoff must lie in (0, sample_rate/2)");
  }
  const Eigen::Index n = signal.samples.size();
  if (n < 3 * kHighpassOrder) {
    throw ParameterError("signal too short for forward-backward filtering");
  }
  const Eigen::Index pad = std::min<Eigen::Index>(3 * kHighpassOrder, n - 1);
  const Biquad q = butterworth_highpass(cutoff_hz, signal.sample_rate);

  // Averaging the two time orientations makes the operation exactly
  // time-reversal symmetric; a single forward-backward pass is not, because
  // the causal and anticausal passes see different edge transients.
  Vec a = filtfilt_once(q, signal.samples, pad);
  Vec b = filtfilt_once(q, signal.samples.reverse(), pad);
  AudioSignal out;
  out.sample_rate = signal.sample_rate;
  out.samples = 0.5 * (a + b.reverse());
  return out;
}

Mat stft_power(const AudioSignal& signal, int fft_size, int win_length, int hop) {
  check_signal(signal);
  if (fft_size < 2 || win_length < 2 || win_length > fft_size) {
    throw ParameterError("invalid fft_size/win_length");
  }
  if (hop <= 0) throw ParameterError("hop must be positive");
  const Eigen::Index n = signal.samples.size();
  if (n < win_length) throw ParameterError("signal shorter than one analysis window");

  // Periodic Hann window.
  Vec window(win_length);
  for (int i = 0; i < win_length; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / win_length);
  }

  const int n_bins = fft_size / 2 + 1;
  const auto n_frames = static_cast<int>(1 + (n - win_length) / hop);
  Mat power(n_bins, n_frames);

  Eigen::FFT<double> fft;
  std::vector<double> frame(static_cast<std::size_t>(fft_size), 0.0);
  std::vector<std::complex<double>> spectrum;
  for (int t = 0; t < n_frames; ++t) {
    const Eigen::Index start = static_cast<Eigen::Index>(t) * hop;
    for (int i = 0; i < win_length; ++i) {
      frame[static_cast<std::size_t>(i)] = signal.samples[start + i] * window[i];
    }
    fft.fwd(spectrum, frame);
    for (int k = 0; k < n_bins; ++k) {
      power(k, t) = std::norm(spectrum[static_cast<std::size_t>(k)]);
    }
  }
  return power;
}

MelFilterbank build_mel_filterbank(int n_mels, double fmin, double fmax,
                                   int fft_size, int sample_rate) {
  if (n_mels < 1) throw ParameterError("n_mels must be >= 1");
  if (!(fmin >= 0.0) || !(fmin < fmax) || !(fmax <= sample_rate / 2.0)) {
    throw ParameterError("mel frequency range must satisfy 0 <= fmin < fmax <= sample_rate/2");
  }
  if (fft_size < 2 || sample_rate <= 0) throw ParameterError("invalid fft_size/sample_rate");

  const int n_bins = fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[static_cast<std::size_t>(i)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  }

  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.fft_size = fft_size;
  fb.sample_rate = sample_rate;
  fb.fmin = fmin;
  fb.fmax = fmax;
  fb.weights = Mat::Zero(n_mels, n_bins);
  for (int m = 0; m < n_mels; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m) + 1];
    const double right = edges[static_cast<std::size_t>(m) + 2];
    bool any_positive = false;
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      double w = 0.0;
      if (f > left && f < right) {
        w = (f <= center) ? (f - left) / (center - left) : (right - f) / (right - center);
      }
      fb.weights(m, k) = w;
      any_positive |= w > 0.0;
    }
    if (!any_positive) {
      throw ParameterError("mel filter " + std::to_string(m) +
                           " has no FFT bin support; reduce n_mels or widen the range");
    }
  }
  return fb;
}

LogMelSpectrogram log_mel(const Mat& power, const MelFilterbank& fb, double floor) {
  if (power.rows() != fb.weights.cols()) {
    throw ParameterError("power spectrum bin count does not match the filterbank");
  }
  if (!(floor > 0.0)) throw ParameterError("log floor must be positive");
  LogMelSpectrogram lms;
  lms.frame_hop = kDefaultHop;
  lms.values = (fb.weights * power).cwiseMax(floor).array().log().matrix();
  return lms;
}

LogMelSpectrogram frame_crop(const LogMelSpectrogram& lms, int n_frames, Prng& rng) {
  if (n_frames < 1) throw ParameterError("crop length must be >= 1");
  const int in_frames = lms.n_frames();
  if (in_frames == 0) throw ParameterError("cannot crop an empty spectrogram");

  LogMelSpectrogram out;
  out.frame_hop = lms.frame_hop;
  out.origin_id = lms.origin_id;
  out.values.resize(lms.values.rows(), n_frames);
  if (in_frames >= n_frames) {
    const auto offset =
        static_cast<Eigen::Index>(rng.next_int(0, in_frames - n_frames));
    out.values = lms.values.middleCols(offset, n_frames);
  } else {
    // Cyclic wrap-around from a random phase.
    const auto offset = static_cast<int>(rng.next_int(0, in_frames - 1));
    for (int j = 0; j < n_frames; ++j) {
      out.values.col(j) = lms.values.col((offset + j) % in_frames);
    }
  }
  return out;
}

}  // namespace dsp
}  // namespace speechdp
