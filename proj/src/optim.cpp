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

#include "speechdp/optim.hpp"

#include <cmath>

namespace speechdp {
namespace optim {
namespace {

void check_shapes(const ModelParameters& params, const ModelParameters& grads,
                  const AdamState& state) {
  if (!params.same_shapes(grads) || !params.same_shapes(state.m) ||
      !params.same_shapes(state.v)) {
    throw ParameterError("optimizer state/gradient shapes do not match the parameters");
  }
}

}  // namespace

AdamState init_adam_state(const ModelParameters& params) {
  AdamState state;
  state.m = params.zeros_like();
  state.v = params.zeros_like();
  state.step = 0;
  return state;
}

void adam_step(ModelParameters& params, const ModelParameters& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  check_shapes(params, grads, state);
  const long t = ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.entries.size(); ++i) {
    auto& m = state.m.entries[i].value.data;
    auto& v = state.v.entries[i].value.data;
    const auto& g = grads.entries[i].value.data;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v.array().matrix() + (1.0 - beta2) * g.array().square().matrix();
    params.entries[i].value.data.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  }
}

void nadam_step(ModelParameters& params, const ModelParameters& grads, AdamState& state,
                double lr, double beta1, double beta2, double eps) {
  check_shapes(params, grads, state);
  const long t = ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc1_next = 1.0 - std::pow(beta1, static_cast<double>(t + 1));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.entries.size(); ++i) {
    auto& m = state.m.entries[i].value.data;
    auto& v = state.v.entries[i].value.data;
    const auto& g = grads.entries[i].value.data;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v.array().matrix() + (1.0 - beta2) * g.array().square().matrix();
    const auto m_nesterov =
        beta1 * m.array() / bc1_next + (1.0 - beta1) * g.array() / bc1;
    params.entries[i].value.data.array() -=
        lr * m_nesterov / ((v.array() / bc2).sqrt() + eps);
  }
}

}  // namespace optim
}  // namespace speechdp
