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

#ifndef SPEECHDP_ATTACK_HPP_
#define SPEECHDP_ATTACK_HPP_

#include <optional>

#include "speechdp/nn.hpp"
#include "speechdp/rng.hpp"
#include "speechdp/tensor.hpp"

namespace speechdp {
namespace attack {

// Parameter-shaped gradients of the victim model for one training sample
// (or one DP-noised aggregate of it).
struct LeakedGradient {
  ModelParameters param_grads;
  nn::ModelConfig victim_config;
  bool dp_applied = false;
};

// Single-sample softmax cross-entropy gradient of the victim; the raw
// (non-private) leakage scenario.
LeakedGradient leak_single_sample_gradient(const ModelParameters& victim_params,
                                           const nn::ModelConfig& cfg, const Tensor& x,
                                           int label);

// iDLG label recovery: for a single-sample softmax cross-entropy gradient the
// output-bias gradient is p - onehot(y), so exactly the true class is
// negative. Returns nothing when zero or several entries are negative
// (noised or aggregated gradients).
std::optional<int> extract_label_idlg(const Vec& output_bias_grad);

// Flattened squared L2 distance over all parameter gradients.
double gradient_matching_loss(const ModelParameters& dummy_grads,
                              const LeakedGradient& leaked);

struct ReconstructionResult {
  Tensor recovered_input;
  int inferred_label = -1;
  bool label_extracted = false;  // false when the iDLG sign test failed
  double final_match_loss = 0.0;
  double snr_db = 0.0;  // vs ground truth; NaN when no ground truth given
  double lsd = 0.0;     // log-spectral distance, same convention
  int iterations_used = 0;
  bool line_search_failed = false;
  std::vector<double> accepted_losses;  // of the winning label's run
};

struct AttackOptions {
  int iters = 100;
  double lr = 0.1;     // trial step for the first (steepest-descent) iteration
  int history = 10;    // L-BFGS memory
  double fd_step = 1e-6;
};

// Gradient-matching reconstruction: a seeded standard-normal dummy input is
// optimized with L-BFGS (two-loop recursion, backtracking Armijo line
// search) to match the leaked gradients. The label is first inferred via
// extract_label_idlg; when that fails every candidate label is optimized and
// the best final loss wins. Gradients of the matching loss with respect to
// the dummy input are central finite differences over input coordinates.
// Accepted losses are monotone nonincreasing; a line-search failure stops
// early with the best iterate, flagged.
ReconstructionResult lbfgs_reconstruct(const LeakedGradient& leaked,
                                       const ModelParameters& victim_params,
                                       const AttackOptions& options, Prng& rng,
                                       const Tensor* ground_truth = nullptr);

// 10 log10(sum ref^2 / sum (ref - est)^2), capped at +120 dB for exact
// matches. The reference must not be identically zero.
double snr_db(const Tensor& reference, const Tensor& estimate);

// Mean over frames (columns) of the RMS log-energy difference across mel
// bins; the spectrogram-domain stand-in for waveform quality scores.
double log_spectral_distance(const Mat& reference, const Mat& estimate);

}  // namespace attack
}  // namespace speechdp

#endif  // SPEECHDP_ATTACK_HPP_
