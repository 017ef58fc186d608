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

#ifndef SPEECHDP_TENSOR_HPP_
#define SPEECHDP_TENSOR_HPP_

#include <Eigen/Dense>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "speechdp/error.hpp"

namespace speechdp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowMajorMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Shape-tagged flat value array, row-major.
struct Tensor {
  std::vector<int> shape;
  Vec data;

  Tensor() = default;

  explicit Tensor(std::vector<int> s)
      : shape(std::move(s)), data(Vec::Zero(count(shape))) {}

  Tensor(std::vector<int> s, Vec d) : shape(std::move(s)), data(std::move(d)) {
    if (count(shape) != data.size()) {
      throw ParameterError("tensor data length does not match shape");
    }
  }

  static Eigen::Index count(const std::vector<int>& s) {
    Eigen::Index n = 1;
    for (int d : s) n *= d;
    return n;
  }

  Eigen::Index size() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  // Row-major index for a [C, H, W] tensor.
  Eigen::Index at3(int c, int h, int w) const {
    return (static_cast<Eigen::Index>(c) * dim(1) + h) * dim(2) + w;
  }
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Ordered, named parameter collection. Order and shapes are fully determined
// by the model configuration; all whole-model reductions (norms, optimizer
// updates, clipping) run over the flattened concatenation in entry order.
struct ModelParameters {
  std::vector<NamedTensor> entries;

  Eigen::Index flat_size() const {
    Eigen::Index n = 0;
    for (const auto& e : entries) n += e.value.size();
    return n;
  }

  double squared_l2_norm() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.value.data.squaredNorm();
    return s;
  }

  double l2_norm() const { return std::sqrt(squared_l2_norm()); }

  bool same_shapes(const ModelParameters& other) const {
    if (entries.size() != other.entries.size()) return false;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (!entries[i].value.same_shape(other.entries[i].value)) return false;
    }
    return true;
  }

  ModelParameters zeros_like() const {
    ModelParameters out;
    out.entries.reserve(entries.size());
    for (const auto& e : entries) {
      out.entries.push_back({e.name, Tensor(e.value.shape)});
    }
    return out;
  }

  void scale(double s) {
    for (auto& e : entries) e.value.data *= s;
  }

  // this += s * other. Shapes must match entry-for-entry.
  void axpy(double s, const ModelParameters& other) {
    if (!same_shapes(other)) throw ParameterError("parameter shape mismatch in axpy");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      entries[i].value.data += s * other.entries[i].value.data;
    }
  }

  bool all_finite() const {
    for (const auto& e : entries) {
      if (!e.value.data.allFinite()) return false;
    }
    return true;
  }
};

}  // namespace speechdp

#endif  // SPEECHDP_TENSOR_HPP_
