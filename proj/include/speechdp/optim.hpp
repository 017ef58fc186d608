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

#ifndef SPEECHDP_OPTIM_HPP_
#define SPEECHDP_OPTIM_HPP_

#include "speechdp/tensor.hpp"

namespace speechdp {
namespace optim {

struct AdamState {
  ModelParameters m;
  ModelParameters v;
  long step = 0;
};

AdamState init_adam_state(const ModelParameters& params);

// Standard Adam with bias correction, updating params/state in place.
void adam_step(ModelParameters& params, const ModelParameters& grads, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Nesterov-Adam: the bias-corrected first moment is blended with the current
// gradient (look-ahead step), second moment as in Adam.
void nadam_step(ModelParameters& params, const ModelParameters& grads, AdamState& state,
                double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

}  // namespace optim
}  // namespace speechdp

#endif  // SPEECHDP_OPTIM_HPP_
