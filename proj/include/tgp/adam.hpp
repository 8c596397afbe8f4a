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

#pragma once

#include "tgp/numstats.hpp"

namespace tgp {

struct AdamOptions {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vector m;
  Vector v;
  long step = 0;
};

/// One bias-corrected Adam update of `params` toward lower loss. Throws
/// NonFiniteValue on a non-finite gradient entry.
void adam_step(Vector& params, const Vector& grads, AdamState& state,
               const AdamOptions& options = {});

}  // namespace tgp
