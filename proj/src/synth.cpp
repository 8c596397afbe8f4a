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

#include "tgp/synth.hpp"

#include <cmath>
#include <random>

#include "tgp/errors.hpp"

namespace tgp {

std::string synth_kind_name(SynthKind k) {
  switch (k) {
    case SynthKind::kTanhWarpedSine: return "tanh-warped-sine";
    case SynthKind::kGpDraw: return "gp-draw";
    case SynthKind::kLognormalGp: return "lognormal-gp";
    case SynthKind::kTwoCluster: return "two-cluster";
  }
  return "?";
}

SynthKind parse_synth_kind(const std::string& s) {
  if (s == "tanh-warped-sine") return SynthKind::kTanhWarpedSine;
  if (s == "gp-draw") return SynthKind::kGpDraw;
  if (s == "lognormal-gp") return SynthKind::kLognormalGp;
  if (s == "two-cluster") return SynthKind::kTwoCluster;
  throw UsageError("unknown generator '" + s +
                   "' (expected tanh-warped-sine, gp-draw, lognormal-gp or two-cluster)");
}

void SynthSpec::validate() const {
  if (n < 1) throw UsageError("synthetic data needs n >= 1");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw UsageError("noise std must be >= 0");
  if (!(hi > lo)) throw UsageError("synthetic domain must have hi > lo");
  if (input_dim < 1) throw UsageError("input dimension must be positive");
  if (!(period > 0.0)) throw UsageError("period must be positive");
  if (!(variance > 0.0) || !(lengthscale > 0.0)) {
    throw UsageError("kernel variance and lengthscale must be positive");
  }
  if (kind == SynthKind::kTanhWarpedSine && input_dim != 1) {
    throw UsageError("tanh-warped-sine is one-dimensional");
  }
}

namespace {

Matrix inputs(const SynthSpec& spec, std::mt19937_64& rng) {
  Matrix x(spec.n, spec.input_dim);
  if (spec.input_dim == 1) {
    for (long i = 0; i < spec.n; ++i) {
      x(i, 0) = spec.n == 1 ? spec.lo
                            : spec.lo + (spec.hi - spec.lo) * static_cast<double>(i) /
                                            static_cast<double>(spec.n - 1);
    }
    return x;
  }
  std::uniform_real_distribution<double> u(spec.lo, spec.hi);
  for (long i = 0; i < spec.n; ++i)
    for (int d = 0; d < spec.input_dim; ++d) x(i, d) = u(rng);
  return x;
}

Vector gp_draw(const SynthSpec& spec, const Matrix& x, std::mt19937_64& rng) {
  KernelConfig k = KernelConfig::rbf_ard(spec.input_dim);
  KernelInit init;
  init.variance = spec.variance;
  init.lengthscale = spec.lengthscale;
  const Matrix l = cholesky_jittered(kernel_matrix_self(k, kernel_init_raw(k, init), x)).lower;
  std::normal_distribution<double> g;
  Vector e(x.rows());
  for (auto& v : e) v = g(rng);
  return l * e;
}

}  // namespace

SynthData generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> g;
  SynthData d;
  d.x = inputs(spec, rng);
  const long n = spec.n;
  d.latent.resize(n);
  d.y.resize(n);
  switch (spec.kind) {
    case SynthKind::kTanhWarpedSine:
      for (long i = 0; i < n; ++i) {
        const double s = std::sin(2.0 * M_PI * d.x(i, 0) / spec.period);
        d.latent(i) = spec.tanh_a * std::tanh(spec.tanh_b * (s + spec.tanh_c)) + spec.tanh_d;
        d.y(i) = d.latent(i) + spec.noise * g(rng);
      }
      break;
    case SynthKind::kGpDraw:
      d.latent = gp_draw(spec, d.x, rng);
      for (long i = 0; i < n; ++i) d.y(i) = d.latent(i) + spec.noise * g(rng);
      break;
    case SynthKind::kLognormalGp: {
      const Vector f = gp_draw(spec, d.x, rng);
      for (long i = 0; i < n; ++i) {
        d.latent(i) = std::exp(f(i));
        d.y(i) = d.latent(i) * std::exp(spec.noise * g(rng));
      }
      break;
    }
    case SynthKind::kTwoCluster: {
      // Class centres at -1 and +1 along every axis.
      std::bernoulli_distribution coin(0.5);
      for (long i = 0; i < n; ++i) {
        const bool one = coin(rng);
        for (int k = 0; k < spec.input_dim; ++k) {
          d.x(i, k) = (one ? 1.0 : -1.0) + spec.noise * g(rng);
        }
        d.latent(i) = one ? 1.0 : 0.0;
        d.y(i) = d.latent(i);
      }
      break;
    }
  }
  return d;
}

}  // namespace tgp
