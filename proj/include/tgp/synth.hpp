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

#include <cstdint>
#include <string>
#include <vector>

#include "tgp/kernels.hpp"
#include "tgp/numstats.hpp"

namespace tgp {

enum class SynthKind { kTanhWarpedSine, kGpDraw, kLognormalGp, kTwoCluster };

std::string synth_kind_name(SynthKind k);
SynthKind parse_synth_kind(const std::string& s);

struct SynthSpec {
  SynthKind kind = SynthKind::kTanhWarpedSine;
  long n = 150;
  double noise = 0.1;  // std; cluster spread for two-cluster
  std::uint64_t seed = 0;
  double lo = 0.0;
  double hi = 5.0;
  int input_dim = 1;
  double period = 1.0;
  // tanh flow a tanh(b (f + c)) + d applied to the sine
  double tanh_a = 1.0;
  double tanh_b = 2.0;
  double tanh_c = 0.0;
  double tanh_d = 0.0;
  // rbf kernel of the gp-based generators
  double variance = 1.0;
  double lengthscale = 1.0;

  void validate() const;
};

struct SynthData {
  Matrix x;
  Vector y;
  Vector latent;  // noise-free target: warped sine, f, exp(f), or class
};

/// One-dimensional inputs are evenly spaced on [lo, hi]; higher dimensions
/// are uniform on the cube. Deterministic per seed.
SynthData generate(const SynthSpec& spec);

}  // namespace tgp
