// Copyright 2026 The udgs Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "udgs/ad/adam.hpp"

#include <cmath>

#include "udgs/core/error.hpp"
#include "udgs/simd/kernels.hpp"

namespace udgs::ad {

void adam_step(std::span<Parameter* const> params, AdamState& state) {
  if (state.first_moment.empty() && state.step == 0) {
    for (const Parameter* p : params) {
      state.first_moment.emplace_back(p->value.shape(), 0.0);
      state.second_moment.emplace_back(p->value.shape(), 0.0);
    }
  }
  require(state.first_moment.size() == params.size(), "adam: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i]->grad.same_shape(params[i]->value) &&
                state.first_moment[i].same_shape(params[i]->value),
            "adam: shape mismatch for " + params[i]->name);
  }
  ++state.step;
  const AdamConfig& c = state.config;
  const simd::AdamCoeffs coeffs{c.lr,
                                c.beta1,
                                c.beta2,
                                c.eps,
                                1.0 - std::pow(c.beta1, static_cast<double>(state.step)),
                                1.0 - std::pow(c.beta2, static_cast<double>(state.step))};
  const auto& kern = simd::kernels();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    kern.adam_update(p.value.size(), p.value.data().data(), p.grad.data().data(),
                     state.first_moment[i].data().data(), state.second_moment[i].data().data(),
                     coeffs);
  }
}

}  // namespace udgs::ad
