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

#include "speechdp/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "speechdp/rng.hpp"

namespace speechdp {
namespace nn {
namespace {

double softplus(double t) {
  return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// FNV-1a over the raw bytes of every entry; ties a ForwardCache to the
// exact parameter values that produced it.
std::uint64_t fingerprint(const ModelParameters& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_bytes = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& e : params.entries) {
    mix_bytes(e.value.data.data(),
              static_cast<std::size_t>(e.value.data.size()) * sizeof(double));
  }
  return h;
}

// Patches of a padded stride-1 convolution: col[(c*k+dy)*k+dx, h*W+w] =
// x[c, h+dy-p, w+dx-p], zero outside the image.
Mat im2col(const Tensor& x, int k) {
  const int c_in = x.dim(0), h_in = x.dim(1), w_in = x.dim(2);
  const int pad = k / 2;
  Mat col = Mat::Zero(static_cast<Eigen::Index>(c_in) * k * k,
                      static_cast<Eigen::Index>(h_in) * w_in);
  for (int c = 0; c < c_in; ++c) {
    for (int dy = 0; dy < k; ++dy) {
      for (int dx = 0; dx < k; ++dx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + dy) * k + dx;
        for (int h = 0; h < h_in; ++h) {
          const int y = h + dy - pad;
          if (y < 0 || y >= h_in) continue;
          const int x0 = std::max(0, pad - dx);
          const int x1 = std::min(w_in, w_in + pad - dx);
          for (int w = x0; w < x1; ++w) {
            col(row, static_cast<Eigen::Index>(h) * w_in + w) =
                x.data[x.at3(c, y, w + dx - pad)];
          }
        }
      }
    }
  }
  return col;
}

// Scatter-add of column gradients back onto the input image.
void col2im_add(const Mat& dcol, int c_in, int h_in, int w_in, int k, Tensor* dx) {
  const int pad = k / 2;
  for (int c = 0; c < c_in; ++c) {
    for (int dy = 0; dy < k; ++dy) {
      for (int dx_off = 0; dx_off < k; ++dx_off) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + dy) * k + dx_off;
        for (int h = 0; h < h_in; ++h) {
          const int y = h + dy - pad;
          if (y < 0 || y >= h_in) continue;
          const int x0 = std::max(0, pad - dx_off);
          const int x1 = std::min(w_in, w_in + pad - dx_off);
          for (int w = x0; w < x1; ++w) {
            dx->data[dx->at3(c, y, w + dx_off - pad)] +=
                dcol(row, static_cast<Eigen::Index>(h) * w_in + w);
          }
        }
      }
    }
  }
}

struct NormResult {
  Tensor y;
  Tensor x_hat;
  Vec inv_std;
};

NormResult group_norm_detail(const Tensor& x, int groups, const Vec& gamma,
                             const Vec& beta, double eps_n) {
  const int channels = x.dim(0);
  if (groups < 1 || channels % groups != 0) {
    throw ParameterError("channel count must be divisible by the group count");
  }
  if (gamma.size() != channels || beta.size() != channels) {
    throw ParameterError("gamma/beta must have one entry per channel");
  }
  if (!(eps_n > 0.0)) throw ParameterError("group-norm epsilon must be positive");

  const Eigen::Index spatial = static_cast<Eigen::Index>(x.dim(1)) * x.dim(2);
  const int cpg = channels / groups;
  const Eigen::Index group_len = cpg * spatial;

  NormResult r;
  r.y = Tensor(x.shape);
  r.x_hat = Tensor(x.shape);
  r.inv_std = Vec(groups);
  for (int g = 0; g < groups; ++g) {
    const auto seg = x.data.segment(g * group_len, group_len);
    const double mean = seg.mean();
    const double var = (seg.array() - mean).square().mean();
    const double inv_std = 1.0 / std::sqrt(var + eps_n);
    r.inv_std[g] = inv_std;
    r.x_hat.data.segment(g * group_len, group_len) = (seg.array() - mean) * inv_std;
    for (int c = g * cpg; c < (g + 1) * cpg; ++c) {
      r.y.data.segment(c * spatial, spatial) =
          gamma[c] * r.x_hat.data.segment(c * spatial, spatial).array() + beta[c];
    }
  }
  return r;
}

// 2x2 average pool with stride 2; trailing odd rows/columns are dropped.
Tensor avg_pool2(const Tensor& x) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int ho = h / 2, wo = w / 2;
  Tensor out({c, ho, wo});
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j) {
        out.data[out.at3(ch, i, j)] =
            0.25 * (x.data[x.at3(ch, 2 * i, 2 * j)] + x.data[x.at3(ch, 2 * i + 1, 2 * j)] +
                    x.data[x.at3(ch, 2 * i, 2 * j + 1)] +
                    x.data[x.at3(ch, 2 * i + 1, 2 * j + 1)]);
      }
    }
  }
  return out;
}

Tensor avg_pool2_backward(const Tensor& dout, int h_in, int w_in) {
  const int c = dout.dim(0), ho = dout.dim(1), wo = dout.dim(2);
  Tensor dx({c, h_in, w_in});
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j) {
        const double g = 0.25 * dout.data[dout.at3(ch, i, j)];
        dx.data[dx.at3(ch, 2 * i, 2 * j)] += g;
        dx.data[dx.at3(ch, 2 * i + 1, 2 * j)] += g;
        dx.data[dx.at3(ch, 2 * i, 2 * j + 1)] += g;
        dx.data[dx.at3(ch, 2 * i + 1, 2 * j + 1)] += g;
      }
    }
  }
  return dx;
}

const Tensor& entry(const ModelParameters& p, std::size_t i) { return p.entries[i].value; }

}  // namespace

void ModelConfig::validate() const {
  if (input_shape.size() != 3) {
    throw ParameterError("input_shape must be {channels, n_mels, n_frames}");
  }
  for (int d : input_shape) {
    if (d < 1) throw ParameterError("input dimensions must be positive");
  }
  if (conv_blocks.empty()) throw ParameterError("at least one conv block required");
  if (n_classes < 2) throw ParameterError("n_classes must be >= 2");
  int h = input_shape[1], w = input_shape[2];
  for (const auto& b : conv_blocks) {
    if (b.out_channels < 1) throw ParameterError("out_channels must be >= 1");
    if (b.kernel < 1 || b.kernel % 2 == 0) {
      throw ParameterError("kernel must be odd (stride-1 same-padding convolution)");
    }
    if (b.norm_groups < 1 || b.out_channels % b.norm_groups != 0) {
      throw ParameterError("out_channels must be divisible by norm_groups");
    }
    if (h < 2 || w < 2) throw ParameterError("spatial dims too small for the pooled block stack");
    h /= 2;
    w /= 2;
  }
}

int ModelConfig::feature_count() const { return conv_blocks.back().out_channels; }

ModelConfig desk_scale_config(int n_mels, int n_frames, int n_classes,
                              std::uint64_t seed) {
  ModelConfig cfg;
  cfg.input_shape = {1, n_mels, n_frames};
  for (int ch : {16, 32}) {
    cfg.conv_blocks.push_back({ch, 3, std::min(32, ch)});
  }
  cfg.n_classes = n_classes;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

ModelParameters init_parameters(const ModelConfig& cfg) {
  cfg.validate();
  Prng rng(cfg.seed);
  auto kaiming_uniform = [&rng](Tensor& t, int fan_in) {
    const double bound = std::sqrt(6.0 / fan_in);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      t.data[i] = (2.0 * rng.next_double() - 1.0) * bound;
    }
  };

  ModelParameters params;
  int c_in = cfg.input_shape[0];
  for (std::size_t b = 0; b < cfg.conv_blocks.size(); ++b) {
    const auto& blk = cfg.conv_blocks[b];
    const std::string prefix = "blocks." + std::to_string(b) + ".";
    Tensor w({blk.out_channels, c_in, blk.kernel, blk.kernel});
    kaiming_uniform(w, c_in * blk.kernel * blk.kernel);
    params.entries.push_back({prefix + "conv.weight", std::move(w)});
    Tensor gamma({blk.out_channels});
    gamma.data.setOnes();
    params.entries.push_back({prefix + "norm.gamma", std::move(gamma)});
    params.entries.push_back({prefix + "norm.beta", Tensor({blk.out_channels})});
    c_in = blk.out_channels;
  }
  Tensor head_w({cfg.n_classes, cfg.feature_count()});
  kaiming_uniform(head_w, cfg.feature_count());
  params.entries.push_back({"head.weight", std::move(head_w)});
  params.entries.push_back({"head.bias", Tensor({cfg.n_classes})});
  return params;
}

Tensor group_norm(const Tensor& x, int groups, const Vec& gamma, const Vec& beta,
                  double eps_n) {
  if (x.shape.size() != 3) throw ParameterError("group_norm expects a [C, H, W] tensor");
  return group_norm_detail(x, groups, gamma, beta, eps_n).y;
}

std::pair<Vec, ForwardCache> model_forward(const ModelParameters& params,
                                           const ModelConfig& cfg, const Tensor& x) {
  cfg.validate();
  if (cfg.norm != NormKind::kGroup) {
    throw ParameterError("this model stack implements group normalization only");
  }
  if (x.shape != cfg.input_shape) throw ParameterError("input shape mismatch");

  ForwardCache cache;
  cache.params_fingerprint = fingerprint(params);

  Tensor cur = x;
  std::size_t p = 0;
  for (const auto& blk : cfg.conv_blocks) {
    BlockCache bc;
    bc.input = cur;
    const int h = cur.dim(1), w = cur.dim(2);
    bc.col = im2col(cur, blk.kernel);

    const Tensor& weight = entry(params, p);
    if (weight.dim(0) != blk.out_channels || weight.size() != blk.out_channels * bc.col.rows()) {
      throw ParameterError("conv weight shape does not match the configuration");
    }
    Tensor conv_out({blk.out_channels, h, w});
    ConstRowMajorMap wmap(weight.data.data(), blk.out_channels, bc.col.rows());
    RowMajorMap(conv_out.data.data(), blk.out_channels, bc.col.cols()) = wmap * bc.col;

    const Tensor& gamma = entry(params, p + 1);
    const Tensor& beta = entry(params, p + 2);
    NormResult norm = group_norm_detail(conv_out, blk.norm_groups, gamma.data, beta.data, 1e-5);
    bc.x_hat = std::move(norm.x_hat);
    bc.inv_std = std::move(norm.inv_std);

    Tensor relu = std::move(norm.y);
    relu.data = relu.data.cwiseMax(0.0);
    bc.relu_out = relu;

    cur = avg_pool2(relu);
    cache.blocks.push_back(std::move(bc));
    p += 3;
  }

  cache.pooled = cur;
  const Eigen::Index spatial = static_cast<Eigen::Index>(cur.dim(1)) * cur.dim(2);
  Vec features(cur.dim(0));
  for (int c = 0; c < cur.dim(0); ++c) {
    features[c] = cur.data.segment(c * spatial, spatial).mean();
  }
  cache.features = features;

  const Tensor& head_w = entry(params, p);
  const Tensor& head_b = entry(params, p + 1);
  ConstRowMajorMap wmap(head_w.data.data(), cfg.n_classes, features.size());
  Vec logits = wmap * features + head_b.data;
  if (!logits.allFinite()) throw NumericError("non-finite logits in forward pass");
  return {std::move(logits), std::move(cache)};
}

LossGrad sigmoid_bce_loss(const Vec& logits, const Vec& target_onehot,
                          const Vec& class_weights) {
  const Eigen::Index n = logits.size();
  if (!logits.allFinite()) throw NumericError("non-finite logits in loss");
  if (target_onehot.size() != n || class_weights.size() != n) {
    throw ParameterError("target/weight size mismatch");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = target_onehot[i];
    if (y != 0.0 && y != 1.0) throw ParameterError("targets must be one-hot");
    sum += y;
    if (!(class_weights[i] > 0.0)) throw ParameterError("class weights must be positive");
  }
  if (sum != 1.0) throw ParameterError("targets must be one-hot");

  LossGrad out;
  out.grad_logits.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = logits[i];
    const double y = target_onehot[i];
    out.loss += class_weights[i] * (y * softplus(-z) + (1.0 - y) * softplus(z));
    out.grad_logits[i] = class_weights[i] * (sigmoid(z) - y);
  }
  out.loss /= static_cast<double>(n);
  out.grad_logits /= static_cast<double>(n);
  return out;
}

LossGrad softmax_ce_loss(const Vec& logits, int label) {
  if (!logits.allFinite()) throw NumericError("non-finite logits in loss");
  if (label < 0 || label >= logits.size()) throw ParameterError("label out of range");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  LossGrad out;
  out.loss = lse - logits[label];
  out.grad_logits = (logits.array() - lse).exp();
  out.grad_logits[label] -= 1.0;
  return out;
}

BackwardResult model_backward(const ModelParameters& params, const ModelConfig& cfg,
                              const ForwardCache& cache, const Vec& grad_logits) {
  cfg.validate();
  if (cache.params_fingerprint != fingerprint(params)) {
    throw ConsistencyError("forward cache does not match these parameters");
  }
  if (cache.blocks.size() != cfg.conv_blocks.size()) {
    throw ConsistencyError("forward cache does not match this configuration");
  }
  if (grad_logits.size() != cfg.n_classes) throw ParameterError("grad_logits size mismatch");

  BackwardResult res;
  res.param_grads = params.zeros_like();
  const std::size_t head_w_idx = params.entries.size() - 2;

  // Linear head.
  const Tensor& head_w = entry(params, head_w_idx);
  ConstRowMajorMap wmap(head_w.data.data(), cfg.n_classes, cache.features.size());
  RowMajorMap dwmap(res.param_grads.entries[head_w_idx].value.data.data(), cfg.n_classes,
                    cache.features.size());
  dwmap = grad_logits * cache.features.transpose();
  res.param_grads.entries[head_w_idx + 1].value.data = grad_logits;
  Vec dfeatures = wmap.transpose() * grad_logits;

  // Global average pooling.
  const Tensor& pooled = cache.pooled;
  const Eigen::Index spatial = static_cast<Eigen::Index>(pooled.dim(1)) * pooled.dim(2);
  Tensor dcur(pooled.shape);
  for (int c = 0; c < pooled.dim(0); ++c) {
    dcur.data.segment(c * spatial, spatial).setConstant(dfeatures[c] /
                                                        static_cast<double>(spatial));
  }

  for (int b = static_cast<int>(cfg.conv_blocks.size()) - 1; b >= 0; --b) {
    const auto& blk = cfg.conv_blocks[static_cast<std::size_t>(b)];
    const auto& bc = cache.blocks[static_cast<std::size_t>(b)];
    const std::size_t p = static_cast<std::size_t>(b) * 3;
    const int h = bc.relu_out.dim(1), w = bc.relu_out.dim(2);

    // Average pool.
    Tensor drelu = avg_pool2_backward(dcur, h, w);

    // ReLU: relu_out > 0 iff the pre-activation was > 0.
    for (Eigen::Index i = 0; i < drelu.size(); ++i) {
      if (bc.relu_out.data[i] <= 0.0) drelu.data[i] = 0.0;
    }

    // Group norm.
    const Vec& gamma = entry(params, p + 1).data;
    const int channels = blk.out_channels;
    const int cpg = channels / blk.norm_groups;
    const Eigen::Index sp = static_cast<Eigen::Index>(h) * w;
    const Eigen::Index group_len = cpg * sp;
    Vec& dgamma = res.param_grads.entries[p + 1].value.data;
    Vec& dbeta = res.param_grads.entries[p + 2].value.data;
    Tensor dconv({channels, h, w});
    for (int c = 0; c < channels; ++c) {
      const auto dz = drelu.data.segment(c * sp, sp);
      dgamma[c] = dz.dot(bc.x_hat.data.segment(c * sp, sp));
      dbeta[c] = dz.sum();
    }
    for (int g = 0; g < blk.norm_groups; ++g) {
      Vec dxhat(group_len);
      for (int c = g * cpg; c < (g + 1) * cpg; ++c) {
        dxhat.segment((c - g * cpg) * sp, sp) = gamma[c] * drelu.data.segment(c * sp, sp);
      }
      const auto xhat = bc.x_hat.data.segment(g * group_len, group_len);
      const double mean_dxhat = dxhat.mean();
      const double mean_dxhat_xhat = dxhat.dot(xhat) / static_cast<double>(group_len);
      dconv.data.segment(g * group_len, group_len) =
          bc.inv_std[g] *
          (dxhat.array() - mean_dxhat - xhat.array() * mean_dxhat_xhat).matrix();
    }

    // Convolution.
    const Tensor& weight = entry(params, p);
    ConstRowMajorMap wm(weight.data.data(), channels, bc.col.rows());
    ConstRowMajorMap dout(dconv.data.data(), channels, bc.col.cols());
    RowMajorMap dw(res.param_grads.entries[p].value.data.data(), channels, bc.col.rows());
    dw = dout * bc.col.transpose();
    Mat dcol = wm.transpose() * dout;
    Tensor dinput(bc.input.shape);
    col2im_add(dcol, bc.input.dim(0), bc.input.dim(1), bc.input.dim(2), blk.kernel, &dinput);
    dcur = std::move(dinput);
  }

  res.input_grad = std::move(dcur);
  if (!res.param_grads.all_finite() || !res.input_grad.data.allFinite()) {
    throw NumericError("non-finite gradients in backward pass");
  }
  return res;
}

std::vector<ModelParameters> per_example_gradients(
    const ModelParameters& params, const ModelConfig& cfg,
    const std::vector<Sample>& batch, const Vec& class_weights,
    std::vector<double>* losses) {
  if (batch.empty()) throw ParameterError("per-example gradients need a non-empty batch");
  std::vector<ModelParameters> grads;
  grads.reserve(batch.size());
  if (losses != nullptr) losses->clear();
  for (const auto& sample : batch) {
    auto [logits, cache] = model_forward(params, cfg, sample.x);
    const LossGrad lg =
        sigmoid_bce_loss(logits, one_hot(sample.label, cfg.n_classes), class_weights);
    grads.push_back(model_backward(params, cfg, cache, lg.grad_logits).param_grads);
    if (losses != nullptr) losses->push_back(lg.loss);
  }
  return grads;
}

Vec inverse_frequency_weights(const std::vector<int>& labels, int n_classes) {
  if (n_classes < 1) throw ParameterError("n_classes must be positive");
  Vec counts = Vec::Zero(n_classes);
  for (int label : labels) {
    if (label < 0 || label >= n_classes) throw ParameterError("label out of range");
    counts[label] += 1.0;
  }
  if (labels.empty()) throw ParameterError("no labels supplied");
  Vec weights(n_classes);
  for (int c = 0; c < n_classes; ++c) {
    weights[c] = static_cast<double>(labels.size()) / std::max(counts[c], 1.0);
  }
  return weights / weights.mean();
}

Vec one_hot(int label, int n_classes) {
  if (label < 0 || label >= n_classes) throw ParameterError("label out of range");
  Vec v = Vec::Zero(n_classes);
  v[label] = 1.0;
  return v;
}

}  // namespace nn
}  // namespace speechdp
