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

#ifndef SPEECHDP_PRIVACY_HPP_
#define SPEECHDP_PRIVACY_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "speechdp/nn.hpp"
#include "speechdp/optim.hpp"
#include "speechdp/rng.hpp"
#include "speechdp/tensor.hpp"

namespace speechdp {
namespace privacy {

struct PrivacyBudget {
  double epsilon = 0.0;
  double delta = 1e-3;
};

struct NoiseConfig {
  double sigma = 1.0;          // noise multiplier; noise std is sigma * clip_norm
  double clip_norm = 1.5;      // C
  double sample_rate_q = 1.0;  // Poisson inclusion probability
  double delta = 1e-3;

  void validate() const;
};

// Per-order Renyi divergence ledger. RDP composes additively, so the ledger
// is simply accumulated per step; (epsilon, delta) claims are derived from it.
struct AccountantState {
  std::vector<double> orders;
  std::vector<double> rdp;
  long steps = 0;

  static AccountantState with_default_orders();
};

// Integer orders 2..64 plus {1.25, 1.5, 1.75, 128, 256}.
std::vector<double> default_rdp_orders();

// g * min(1, C / ||g||_2), the norm taken over the flattened concatenation
// of all parameter tensors. A zero gradient passes through unchanged.
ModelParameters clip_gradient(const ModelParameters& g, double clip_norm);

// Each index in [0, n) is included independently with probability q.
// Empty lots are legitimate: the caller still consumes budget and applies a
// pure-noise step.
std::vector<int> poisson_lot(int n, double q, Prng& rng);

// (sum of clipped gradients + N(0, sigma^2 C^2 I)) / expected_lot. Inputs
// with norm above C (beyond tolerance) violate the clipping contract. The
// shape template supplies parameter shapes when the lot is empty; noise is
// drawn per coordinate in fixed entry order.
ModelParameters dp_aggregate(const std::vector<ModelParameters>& grads, double clip_norm,
                             double sigma, double expected_lot, Prng& rng,
                             const ModelParameters& shape_template);

// One-step Renyi divergence of the subsampled Gaussian mechanism at integer
// order alpha >= 2. For q = 1 this reduces to alpha / (2 sigma^2); for q < 1
// the binomial closed form is evaluated in log space.
double rdp_sampled_gaussian(double q, double sigma, int alpha);

// Fractional orders are bounded by the larger of the two bracketing integer
// orders (clamped to >= 2); Renyi divergence is nondecreasing in the order,
// so the bound is valid.
double rdp_sampled_gaussian_order(double q, double sigma, double alpha);

// Returns a new state with rdp[alpha] += one step of cfg and steps + 1.
AccountantState accountant_step(AccountantState state, const NoiseConfig& cfg);

struct EpsilonResult {
  double epsilon = 0.0;
  double order = 0.0;
};

// epsilon = min over orders of rdp(alpha) + ln(1/delta) / (alpha - 1).
EpsilonResult rdp_to_epsilon(const AccountantState& state, double delta);

inline constexpr double kSigmaBracketLow = 0.1;
inline constexpr double kSigmaBracketHigh = 100.0;

// Smallest sigma in [0.1, 100] (within 1e-4) whose accounted epsilon after
// `steps` steps at sampling rate q stays at or below the target.
double calibrate_sigma(const PrivacyBudget& target, double q, long steps);

// One privacy unit: all samples owned by one sampling entity (here, one
// synthetic speaker). Its gradient is the mean over the unit's samples.
struct PrivacyUnit {
  std::vector<nn::Sample> samples;
};

// One DP-SGD step: Poisson lot over units -> per-unit gradients -> clip ->
// noisy aggregate -> NAdam update. The accountant advances exactly once per
// call, empty lots included. Refuses model configurations that do not use
// group normalization. The dataset is viewed through `unit_at`, which is
// only invoked for sampled indices (so callers can materialize frame crops
// lazily per step).
struct DpStepInfo {
  int lot_size = 0;
  double mean_loss = 0.0;  // over the lot; 0 when the lot is empty
};

DpStepInfo dp_train_step(ModelParameters& params, optim::AdamState& opt_state,
                         const NoiseConfig& cfg, const nn::ModelConfig& model_cfg,
                         int n_units, const std::function<PrivacyUnit(int)>& unit_at,
                         const Vec& class_weights, double lr, AccountantState& state,
                         Prng& lot_rng, Prng& noise_rng);

}  // namespace privacy
}  // namespace speechdp

#endif  // SPEECHDP_PRIVACY_HPP_
