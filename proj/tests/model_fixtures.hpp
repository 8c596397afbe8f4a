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
#include <random>
#include <string>

#include "test_util.hpp"
#include "tgp/models.hpp"

namespace tgp::testing {

struct Problem {
  Model model;
  Matrix x;
  Vector y;
};

/// Small randomized instance with non-trivial variational parameters.
inline Problem make_problem(ModelKind kind, FlowMode mode, const std::string& chain, int n, int m,
                            std::uint64_t seed, bool whitened = true, double lengthscale = 0.9) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Problem p;
  p.x.resize(n, 1);
  p.y.resize(n);
  for (int i = 0; i < n; ++i) {
    p.x(i, 0) = u(rng);
    p.y(i) = std::sin(1.5 * p.x(i, 0)) + 0.1 * u(rng);
  }
  ModelSpec spec;
  spec.kind = kind;
  spec.kernel = KernelConfig::rbf_ard(1);
  spec.num_inducing = m;
  spec.whitened = whitened;
  spec.flow_mode = mode;
  spec.chain = FlowChain::parse(chain);
  spec.net.width = 6;
  spec.net.dropout = 0.3;
  spec.net.weight_decay = 1e-3;
  Matrix z(m, 1);
  for (int i = 0; i < m; ++i) z(i, 0) = u(rng);
  p.model = make_model(spec, z);
  Model& md = p.model;
  KernelInit init;
  init.variance = 1.3;
  init.lengthscale = lengthscale;
  md.kernel_raw = kernel_init_raw(spec.kernel, init);
  md.noise_raw = softplus_inverse(0.2);
  md.inducing.m = random_matrix(rng, m, 1, 0.5).col(0);
  Matrix s = (0.3 * random_matrix(rng, m, m)).triangularView<Eigen::Lower>();
  s.diagonal() = s.diagonal().cwiseAbs().array() + 0.2;
  md.inducing.s_factor = s;
  if (md.flow_raw.size()) md.flow_raw += random_matrix(rng, md.flow_raw.size(), 1, 0.2).col(0);
  if (md.net_weights.size()) {
    md.net_weights = random_matrix(rng, md.net_weights.size(), 1, 0.3).col(0);
  }
  return p;
}

// Step 1e-5: the bounds factor near-singular conditionals, and at 1e-6 the
// rounding noise of the objective dominates the central difference.
inline double fd_error(const Model& model, const Matrix& x, const Vector& y, std::uint64_t seed) {
  return elbo_gradient_error(model, x, y, seed, 1e-5);
}

}  // namespace tgp::testing
