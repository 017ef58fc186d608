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

#ifndef SPEECHDP_NN_HPP_
#define SPEECHDP_NN_HPP_

#include <cstdint>
#include <utility>
#include <vector>

#include "speechdp/tensor.hpp"

namespace speechdp {
namespace nn {

// Group normalization is the only kind this stack implements; batch
// normalization exists in the configuration vocabulary solely so that
// DP entry points can refuse it explicitly.
enum class NormKind { kGroup, kBatch };

struct ConvBlockConfig {
  int out_channels = 0;
  int kernel = 3;
  int norm_groups = 1;
};

struct ModelConfig {
  std::vector<int> input_shape;  // {channels, n_mels, n_frames}
  std::vector<ConvBlockConfig> conv_blocks;
  int n_classes = 2;
  std::uint64_t seed = 0;
  NormKind norm = NormKind::kGroup;

  void validate() const;

  // Channel count after the last block == feature dimension after global
  // average pooling.
  int feature_count() const;
};

// Two blocks (16 then 32 channels, 3x3 kernels), group count capped at 32
// and at the channel count, global average pooling, linear head.
ModelConfig desk_scale_config(int n_mels, int n_frames, int n_classes,
                              std::uint64_t seed);

// Kaiming-uniform fan-in init for conv/linear weights, gamma = 1, beta = 0,
// zero head bias; fully determined by cfg.seed.
ModelParameters init_parameters(const ModelConfig& cfg);

// Per-block activations and normalization statistics for the backward pass,
// plus a fingerprint of the parameters that produced them.
struct BlockCache {
  Tensor input;     // block input [C_in, H, W]
  Mat col;          // im2col patches [C_in*k*k, H*W]
  Tensor x_hat;     // normalized conv output before gamma/beta
  Vec inv_std;      // one per group
  Tensor relu_out;  // pool input
};

struct ForwardCache {
  std::vector<BlockCache> blocks;
  Tensor pooled;  // input to global average pooling
  Vec features;
  std::uint64_t params_fingerprint = 0;
};

// Architecture: repeated [conv 3x3 (no bias), group norm, ReLU, 2x2 average
// pool] blocks, global average pool, linear head. Deterministic; logits are
// checked finite.
std::pair<Vec, ForwardCache> model_forward(const ModelParameters& params,
                                           const ModelConfig& cfg,
                                           const Tensor& x);

// y = gamma * (x - mu_g) / sqrt(var_g + eps_n) + beta, statistics taken over
// each group's channels x spatial positions.
Tensor group_norm(const Tensor& x, int groups, const Vec& gamma, const Vec& beta,
                  double eps_n = 1e-5);

struct LossGrad {
  double loss = 0.0;
  Vec grad_logits;
};

// Weighted per-class sigmoid binary cross-entropy, averaged over classes.
// Stable for |z| well beyond 50.
LossGrad sigmoid_bce_loss(const Vec& logits, const Vec& target_onehot,
                          const Vec& class_weights);

// Softmax cross-entropy against an integer label (the gradient-inversion
// victim head).
LossGrad softmax_ce_loss(const Vec& logits, int label);

struct BackwardResult {
  ModelParameters param_grads;
  Tensor input_grad;
};

// Exact reverse-mode gradients of the forward pass; the cache must come from
// a matching model_forward call (checked via fingerprint).
BackwardResult model_backward(const ModelParameters& params, const ModelConfig& cfg,
                              const ForwardCache& cache, const Vec& grad_logits);

struct Sample {
  Tensor x;
  int label = 0;
};

// Per-sample gradients of the weighted-BCE training loss. Element i equals
// the single-sample gradient of batch[i]; the mean over the list equals the
// batch-mean-loss gradient. Optionally reports per-sample losses.
std::vector<ModelParameters> per_example_gradients(
    const ModelParameters& params, const ModelConfig& cfg,
    const std::vector<Sample>& batch, const Vec& class_weights,
    std::vector<double>* losses = nullptr);

// Inverse class frequency, normalized to mean 1. Counts are floored at one
// so classes absent from `labels` still get a finite positive weight.
Vec inverse_frequency_weights(const std::vector<int>& labels, int n_classes);

Vec one_hot(int label, int n_classes);

}  // namespace nn
}  // namespace speechdp

#endif  // SPEECHDP_NN_HPP_
