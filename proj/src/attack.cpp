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

#include "speechdp/attack.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace speechdp {
namespace attack {
namespace {

constexpr double kSnrCapDb = 120.0;
constexpr double kArmijoC1 = 1e-4;
constexpr int kMaxBacktracks = 30;

// Matching loss for a fixed candidate label, as a function of the dummy
// input alone.
double matching_loss_at(const Vec& x_flat, int label, const LeakedGradient& leaked,
                        const ModelParameters& victim_params) {
  Tensor x(leaked.victim_config.input_shape, x_flat);
  auto [logits, cache] = nn::model_forward(victim_params, leaked.victim_config, x);
  const nn::LossGrad lg = nn::softmax_ce_loss(logits, label);
  const auto bw = nn::model_backward(victim_params, leaked.victim_config, cache,
                                     lg.grad_logits);
  return gradient_matching_loss(bw.param_grads, leaked);
}

// Central finite differences over input coordinates; the double-backward
// pass this replaces is the one place this toolkit does not differentiate
// analytically.
Vec matching_loss_grad(const Vec& x, int label, const LeakedGradient& leaked,
                       const ModelParameters& victim_params, double fd_step) {
  Vec g(x.size());
  Vec probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = fd_step * (1.0 + std::abs(x[i]));
    probe[i] = x[i] + h;
    const double up = matching_loss_at(probe, label, leaked, victim_params);
    probe[i] = x[i] - h;
    const double down = matching_loss_at(probe, label, leaked, victim_params);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

struct CurvaturePair {
  Vec s;
  Vec y;
  double rho;
};

// Two-loop recursion with gamma-scaled identity seed.
Vec lbfgs_direction(const Vec& grad, const std::deque<CurvaturePair>& history) {
  Vec q = grad;
  std::vector<double> alpha(history.size());
  for (std::size_t i = history.size(); i-- > 0;) {
    alpha[i] = history[i].rho * history[i].s.dot(q);
    q -= alpha[i] * history[i].y;
  }
  if (!history.empty()) {
    const auto& last = history.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t i = 0; i < history.size(); ++i) {
    const double beta = history[i].rho * history[i].y.dot(q);
    q += (alpha[i] - beta) * history[i].s;
  }
  return -q;
}

struct LabelRun {
  Vec x;
  double loss = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool line_search_failed = false;
  std::vector<double> accepted_losses;
};

LabelRun optimize_for_label(const Vec& init, int label, const LeakedGradient& leaked,
                            const ModelParameters& victim_params,
                            const AttackOptions& options) {
  LabelRun run;
  run.x = init;
  run.loss = matching_loss_at(run.x, label, leaked, victim_params);
  run.accepted_losses.push_back(run.loss);
  if (options.iters == 0) return run;

  Vec grad = matching_loss_grad(run.x, label, leaked, victim_params, options.fd_step);
  std::deque<CurvaturePair> history;

  for (int iter = 0; iter < options.iters; ++iter) {
    Vec dir = history.empty() ? Vec(-grad) : lbfgs_direction(grad, history);
    double slope = grad.dot(dir);
    double t = history.empty() ? options.lr : 1.0;
    if (slope >= 0.0) {
      // Not a descent direction; restart from steepest descent.
      history.clear();
      dir = -grad;
      slope = grad.dot(dir);
      t = options.lr;
      if (slope >= 0.0) break;  // zero gradient
    }

    bool accepted = false;
    double f_new = run.loss;
    Vec x_new;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      x_new = run.x + t * dir;
      f_new = matching_loss_at(x_new, label, leaked, victim_params);
      if (f_new <= run.loss + kArmijoC1 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      run.line_search_failed = true;
      break;
    }

    Vec grad_new = matching_loss_grad(x_new, label, leaked, victim_params, options.fd_step);
    Vec s = x_new - run.x;
    Vec y = grad_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      history.push_back({std::move(s), std::move(y), 1.0 / sy});
      if (static_cast<int>(history.size()) > options.history) history.pop_front();
    }
    run.x = std::move(x_new);
    run.loss = f_new;
    run.accepted_losses.push_back(f_new);
    grad = std::move(grad_new);
    run.iterations = iter + 1;
  }
  return run;
}

}  // namespace

LeakedGradient leak_single_sample_gradient(const ModelParameters& victim_params,
                                           const nn::ModelConfig& cfg, const Tensor& x,
                                           int label) {
  auto [logits, cache] = nn::model_forward(victim_params, cfg, x);
  const nn::LossGrad lg = nn::softmax_ce_loss(logits, label);
  LeakedGradient leak;
  leak.param_grads = nn::model_backward(victim_params, cfg, cache, lg.grad_logits).param_grads;
  leak.victim_config = cfg;
  leak.dp_applied = false;
  return leak;
}

std::optional<int> extract_label_idlg(const Vec& output_bias_grad) {
  int negative_index = -1;
  int negatives = 0;
  for (Eigen::Index i = 0; i < output_bias_grad.size(); ++i) {
    if (output_bias_grad[i] < 0.0) {
      ++negatives;
      negative_index = static_cast<int>(i);
    }
  }
  if (negatives != 1) return std::nullopt;
  return negative_index;
}

double gradient_matching_loss(const ModelParameters& dummy_grads,
                              const LeakedGradient& leaked) {
  if (!dummy_grads.same_shapes(leaked.param_grads)) {
    throw ParameterError("dummy/leaked gradient shapes do not match");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < dummy_grads.entries.size(); ++i) {
    sum += (dummy_grads.entries[i].value.data - leaked.param_grads.entries[i].value.data)
               .squaredNorm();
  }
  return sum;
}

ReconstructionResult lbfgs_reconstruct(const LeakedGradient& leaked,
                                       const ModelParameters& victim_params,
                                       const AttackOptions& options, Prng& rng,
                                       const Tensor* ground_truth) {
  leaked.victim_config.validate();
  if (options.iters < 0) throw ParameterError("iteration count must be >= 0");

  const Eigen::Index n = Tensor::count(leaked.victim_config.input_shape);
  Vec init(n);
  for (Eigen::Index i = 0; i < n; ++i) init[i] = rng.next_gaussian();

  // The output-bias gradient is the last parameter entry by construction.
  const Vec& bias_grad = leaked.param_grads.entries.back().value.data;
  const auto extracted = extract_label_idlg(bias_grad);

  ReconstructionResult result;
  result.label_extracted = extracted.has_value();

  LabelRun best;
  if (extracted.has_value()) {
    best = optimize_for_label(init, *extracted, leaked, victim_params, options);
    result.inferred_label = *extracted;
  } else {
    // Joint search: optimize every candidate label, keep the best fit.
    for (int label = 0; label < leaked.victim_config.n_classes; ++label) {
      LabelRun run = optimize_for_label(init, label, leaked, victim_params, options);
      if (run.loss < best.loss) {
        best = std::move(run);
        result.inferred_label = label;
      }
    }
  }

  result.recovered_input = Tensor(leaked.victim_config.input_shape, best.x);
  result.final_match_loss = best.loss;
  result.iterations_used = best.iterations;
  result.line_search_failed = best.line_search_failed;
  result.accepted_losses = std::move(best.accepted_losses);
  if (ground_truth != nullptr) {
    result.snr_db = snr_db(*ground_truth, result.recovered_input);
    ConstRowMajorMap ref(ground_truth->data.data(), ground_truth->dim(1),
                         ground_truth->dim(2));
    ConstRowMajorMap est(result.recovered_input.data.data(),
                         result.recovered_input.dim(1), result.recovered_input.dim(2));
    result.lsd = log_spectral_distance(ref, est);
  } else {
    result.snr_db = std::numeric_limits<double>::quiet_NaN();
    result.lsd = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

double snr_db(const Tensor& reference, const Tensor& estimate) {
  if (!reference.same_shape(estimate)) throw ParameterError("SNR shape mismatch");
  const double ref_energy = reference.data.squaredNorm();
  if (ref_energy == 0.0) throw ParameterError("SNR reference must not be all-zero");
  const double err_energy = (reference.data - estimate.data).squaredNorm();
  if (err_energy == 0.0) return kSnrCapDb;
  return std::min(kSnrCapDb, 10.0 * std::log10(ref_energy / err_energy));
}

double log_spectral_distance(const Mat& reference, const Mat& estimate) {
  if (reference.rows() != estimate.rows() || reference.cols() != estimate.cols()) {
    throw ParameterError("log-spectral distance shape mismatch");
  }
  double sum = 0.0;
  for (Eigen::Index t = 0; t < reference.cols(); ++t) {
    sum += std::sqrt((reference.col(t) - estimate.col(t)).squaredNorm() /
                     static_cast<double>(reference.rows()));
  }
  return sum / static_cast<double>(reference.cols());
}

}  // namespace attack
}  // namespace speechdp
