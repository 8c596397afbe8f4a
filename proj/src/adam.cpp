/* Copyright 2026 The TGP Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
        limitations under the License.
==============================================================================*/

#include "tgp/adam.hpp"

#include <cmath>
#include <string>

#include "tgp/errors.hpp"

namespace tgp {

void adam_step(Vector& params, const Vector& grads, AdamState& state,
               const AdamOptions& options) {
  if (grads.size() != params.size()) throw UsageError("adam: gradient length mismatch");
  for (Eigen::Index i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads(i))) {
      throw NonFiniteValue("adam: non-finite gradient at index " + std::to_string(i),
                           static_cast<int>(i));
    }
  }
  if (state.m.size() != params.size()) {
    state.m = Vector::Zero(params.size());
    state.v = Vector::Zero(params.size());
    state.step = 0;
  }
  ++state.step;
  state.m = options.beta1 * state.m + (1.0 - options.beta1) * grads;
  state.v = options.beta2 * state.v + (1.0 - options.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step));
  params.array() -= options.lr * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + options.eps);
}

}  // namespace tgp
