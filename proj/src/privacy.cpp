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

#include "speechdp/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace speechdp {
namespace privacy {
namespace {

constexpr double kClipTolerance = 1e-9;

double log_sum_exp(const std::vector<double>& log_terms) {
  const double m = *std::max_element(log_terms.begin(), log_terms.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double t : log_terms) s += std::exp(t - m);
  return m + std::log(s);
}

// ln C(n, k) by the additive recurrence; exact enough for n <= a few hundred.
double log_binom(int n, int k) {
  double v = 0.0;
  for (int i = 1; i <= k; ++i) {
    v += std::log(static_cast<double>(n - k + i)) - std::log(static_cast<double>(i));
  }
  return v;
}

}  // namespace

void NoiseConfig::validate() const {
  if (!(sigma > 0.0)) throw ParameterError("sigma must be positive");
  if (!(clip_norm > 0.0)) throw ParameterError("clip_norm must be positive");
  if (!(sample_rate_q > 0.0) || sample_rate_q > 1.0) {
    throw ParameterError("sample_rate_q must lie in (0, 1]");
  }
  if (!(delta > 0.0) || !(delta < 1.0)) throw ParameterError("delta must lie in (0, 1)");
}

std::vector<double> default_rdp_orders() {
  std::vector<double> orders = {1.25, 1.5, 1.75};
  for (int a = 2; a <= 64; ++a) orders.push_back(static_cast<double>(a));
  orders.push_back(128.0);
  orders.push_back(256.0);
  return orders;
}

AccountantState AccountantState::with_default_orders() {
  AccountantState s;
  s.orders = default_rdp_orders();
  s.rdp.assign(s.orders.size(), 0.0);
  s.steps = 0;
  return s;
}

ModelParameters clip_gradient(const ModelParameters& g, double clip_norm) {
  if (!(clip_norm > 0.0)) throw ParameterError("clip norm must be positive");
  if (!g.all_finite()) throw NumericError("non-finite gradient passed to clip");
  const double norm = g.l2_norm();
  ModelParameters out = g;
  if (norm > clip_norm) out.scale(clip_norm / norm);
  return out;
}

std::vector<int> poisson_lot(int n, double q, Prng& rng) {
  if (n < 1) throw ParameterError("dataset size must be >= 1");
  if (!(q > 0.0) || q > 1.0) throw ParameterError("sampling probability must lie in (0, 1]");
  std::vector<int> members;
  for (int i = 0; i < n; ++i) {
    if (rng.next_double() < q) members.push_back(i);
  }
  return members;
}

ModelParameters dp_aggregate(const std::vector<ModelParameters>& grads, double clip_norm,
                             double sigma, double expected_lot, Prng& rng,
                             const ModelParameters& shape_template) {
  if (!(clip_norm > 0.0) || !(sigma > 0.0) || !(expected_lot > 0.0)) {
    throw ParameterError("clip_norm, sigma and expected_lot must be positive");
  }
  ModelParameters sum = shape_template.zeros_like();
  for (const auto& g : grads) {
    if (!g.same_shapes(sum)) throw ParameterError("gradient shape mismatch in aggregate");
    if (g.l2_norm() > clip_norm + kClipTolerance) {
      throw ContractViolation("unclipped gradient passed to dp_aggregate (norm " +
                              std::to_string(g.l2_norm()) + " > C " +
                              std::to_string(clip_norm) + ")");
    }
    sum.axpy(1.0, g);
  }
  const double noise_std = sigma * clip_norm;
  for (auto& e : sum.entries) {
    for (Eigen::Index i = 0; i < e.value.size(); ++i) {
      e.value.data[i] = (e.value.data[i] + noise_std * rng.next_gaussian()) / expected_lot;
    }
  }
  return sum;
}

double rdp_sampled_gaussian(double q, double sigma, int alpha) {
  if (alpha < 2) throw ParameterError("integer closed form requires alpha >= 2");
  if (!(sigma > 0.0)) throw ParameterError("sigma must be positive");
  if (!(q > 0.0) || q > 1.0) throw ParameterError("q must lie in (0, 1]");
  if (q == 1.0) {
    return static_cast<double>(alpha) / (2.0 * sigma * sigma);
  }
  // (1/(alpha-1)) * ln sum_{k=0}^{alpha} C(alpha,k) (1-q)^{alpha-k} q^k
  //                                      * exp(k(k-1) / (2 sigma^2))
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  std::vector<double> log_terms;
  log_terms.reserve(static_cast<std::size_t>(alpha) + 1);
  for (int k = 0; k <= alpha; ++k) {
    log_terms.push_back(log_binom(alpha, k) + (alpha - k) * log_1mq + k * log_q +
                        static_cast<double>(k) * (k - 1) / (2.0 * sigma * sigma));
  }
  return log_sum_exp(log_terms) / (alpha - 1);
}

double rdp_sampled_gaussian_order(double q, double sigma, double alpha) {
  if (!(alpha > 1.0)) throw ParameterError("Renyi order must exceed 1");
  const double fl = std::floor(alpha);
  if (fl == alpha && alpha >= 2.0) {
    return rdp_sampled_gaussian(q, sigma, static_cast<int>(alpha));
  }
  const int lo = std::max(2, static_cast<int>(fl));
  const int hi = std::max(2, static_cast<int>(std::ceil(alpha)));
  double v = rdp_sampled_gaussian(q, sigma, lo);
  if (hi != lo) v = std::max(v, rdp_sampled_gaussian(q, sigma, hi));
  return v;
}

AccountantState accountant_step(AccountantState state, const NoiseConfig& cfg) {
  cfg.validate();
  if (state.orders.size() != state.rdp.size()) {
    throw ParameterError("accountant orders/rdp size mismatch");
  }
  for (std::size_t i = 0; i < state.orders.size(); ++i) {
    state.rdp[i] += rdp_sampled_gaussian_order(cfg.sample_rate_q, cfg.sigma, state.orders[i]);
  }
  state.steps += 1;
  return state;
}

EpsilonResult rdp_to_epsilon(const AccountantState& state, double delta) {
  if (!(delta > 0.0) || !(delta < 1.0)) throw ParameterError("delta must lie in (0, 1)");
  if (state.orders.empty() || state.orders.size() != state.rdp.size()) {
    throw ParameterError("accountant state is empty");
  }
  const double log_inv_delta = std::log(1.0 / delta);
  EpsilonResult best;
  best.epsilon = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < state.orders.size(); ++i) {
    const double eps = state.rdp[i] + log_inv_delta / (state.orders[i] - 1.0);
    if (eps < best.epsilon) {
      best.epsilon = eps;
      best.order = state.orders[i];
    }
  }
  return best;
}

double calibrate_sigma(const PrivacyBudget& target, double q, long steps) {
  if (!(target.epsilon > 0.0)) throw ParameterError("target epsilon must be positive");
  if (!(target.delta > 0.0) || !(target.delta < 1.0)) {
    throw ParameterError("target delta must lie in (0, 1)");
  }
  if (steps < 1) throw ParameterError("steps must be >= 1");
  if (!(q > 0.0) || q > 1.0) throw ParameterError("q must lie in (0, 1]");

  const auto orders = default_rdp_orders();
  // RDP composes additively, so T identical steps accumulate T times the
  // one-step divergence.
  auto accounted_epsilon = [&](double sigma) {
    AccountantState s;
    s.orders = orders;
    s.rdp.reserve(orders.size());
    for (double a : orders) {
      s.rdp.push_back(static_cast<double>(steps) * rdp_sampled_gaussian_order(q, sigma, a));
    }
    s.steps = steps;
    return rdp_to_epsilon(s, target.delta).epsilon;
  };

  // Guard band well below the tolerance of the bisection, so that a forward
  // accountant replaying the run cannot land above the target through
  // floating-point accumulation differences.
  const double goal = target.epsilon * (1.0 - 1e-9);
  double lo = kSigmaBracketLow;
  double hi = kSigmaBracketHigh;
  if (accounted_epsilon(hi) > goal) {
    throw CalibrationError("target epsilon unattainable for sigma in [0.1, 100]");
  }
  if (accounted_epsilon(lo) <= goal) return lo;
  while (hi - lo > 1e-5) {
    const double mid = 0.5 * (lo + hi);
    if (accounted_epsilon(mid) <= goal) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

DpStepInfo dp_train_step(ModelParameters& params, optim::AdamState& opt_state,
                         const NoiseConfig& cfg, const nn::ModelConfig& model_cfg,
                         int n_units, const std::function<PrivacyUnit(int)>& unit_at,
                         const Vec& class_weights, double lr, AccountantState& state,
                         Prng& lot_rng, Prng& noise_rng) {
  cfg.validate();
  if (model_cfg.norm != nn::NormKind::kGroup) {
    throw ParameterError(
        "DP training requires group normalization; batch normalization couples samples");
  }
  if (n_units < 1) throw ParameterError("dataset must contain at least one privacy unit");

  const auto lot = poisson_lot(n_units, cfg.sample_rate_q, lot_rng);

  DpStepInfo info;
  info.lot_size = static_cast<int>(lot.size());
  std::vector<ModelParameters> clipped;
  clipped.reserve(lot.size());
  double loss_sum = 0.0;
  for (int idx : lot) {
    const PrivacyUnit unit = unit_at(idx);
    if (unit.samples.empty()) throw ParameterError("privacy unit without samples");
    std::vector<double> losses;
    const auto grads =
        nn::per_example_gradients(params, model_cfg, unit.samples, class_weights, &losses);
    ModelParameters unit_grad = grads[0];
    for (std::size_t i = 1; i < grads.size(); ++i) unit_grad.axpy(1.0, grads[i]);
    unit_grad.scale(1.0 / static_cast<double>(grads.size()));
    for (double l : losses) loss_sum += l / static_cast<double>(losses.size());
    clipped.push_back(clip_gradient(unit_grad, cfg.clip_norm));
  }
  if (!lot.empty()) info.mean_loss = loss_sum / static_cast<double>(lot.size());

  const double expected_lot = cfg.sample_rate_q * static_cast<double>(n_units);
  ModelParameters noisy =
      dp_aggregate(clipped, cfg.clip_norm, cfg.sigma, expected_lot, noise_rng, params);
  optim::nadam_step(params, noisy, opt_state, lr);
  state = accountant_step(std::move(state), cfg);
  return info;
}

}  // namespace privacy
}  // namespace speechdp
