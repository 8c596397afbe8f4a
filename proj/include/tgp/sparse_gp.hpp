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
#include <vector>

#include "tgp/autodiff.hpp"
#include "tgp/kernels.hpp"
#include "tgp/numstats.hpp"

namespace tgp {

/// q(u) = N(m, S) with S = factor factor^T. When whitened, u = mu_Z + L v
/// with L = chol(K_ZZ) and v ~ N(m, S).
struct InducingState {
  Matrix z;
  Vector m;
  Matrix s_factor;
  bool whitened = true;

  /// m = 0 and S = 1e-5 I.
  static InducingState initial(const Matrix& z, bool whitened = true);
  int size() const { return static_cast<int>(z.rows()); }
  Matrix s() const { return s_factor * s_factor.transpose(); }
};

/// Lower triangle, column by column.
Vector pack_lower(const Matrix& lower);
Matrix unpack_lower(const Vector& packed, int n);
/// Gather indices turning a packed column into an n x n lower matrix.
std::vector<int> lower_gather_index(int n, int offset = 0);

struct KMeansResult {
  Matrix centroids;
  double wcss = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding; the best of `runs` restarts by
/// within-cluster sum of squares. Deterministic given `seed`.
KMeansResult kmeans(const Matrix& x, int k, int runs, std::uint64_t seed);
Matrix init_inducing_kmeans(const Matrix& x, int m, int runs, std::uint64_t seed);

/// Base GP prior with concrete hyperparameters.
struct GpPrior {
  KernelConfig kernel;
  Vector kernel_raw;
  MeanConfig mean;
  Vector mean_raw;
  JitterSchedule jitter;
};

struct Marginals {
  Vector mean;
  Vector variance;
};

struct JointGaussian {
  Vector mean;
  Matrix cov;
};

Marginals q_f0_marginals(const GpPrior& prior, const InducingState& q, const Matrix& x);
JointGaussian q_f0_joint(const GpPrior& prior, const InducingState& q, const Matrix& x);
double kl_inducing(const GpPrior& prior, const InducingState& q);

// Tape-level building blocks shared by the bounds.

struct PriorVars {
  const KernelConfig* kernel = nullptr;
  ad::Var kernel_raw;
  const MeanConfig* mean = nullptr;
  ad::Var mean_raw;
};

struct InducingVars {
  ad::Var z;
  ad::Var m;
  ad::Var s_factor;  // M x M lower
  bool whitened = true;
};

/// Cholesky factor of K_ZZ (+ jitter) and the prior mean at Z.
struct InducingFactor {
  ad::Var chol;
  ad::Var mean_z;
};

InducingFactor factor_inducing(const PriorVars& prior, const InducingVars& q,
                               ad::JitterState& jitter);

/// Conditional pieces at inputs X: prior mean mu_X, W = L^{-1} K_ZX and the
/// projection P with E[f] = mu_X + P^T shift, where P = W (whitened) or
/// K_ZZ^{-1} K_ZX.
struct Projection {
  ad::Var mean_x;
  ad::Var w;
  ad::Var p;
};

Projection project(const PriorVars& prior, const InducingVars& q, const InducingFactor& f,
                   const ad::Var& x);

struct MarginalVars {
  ad::Var mean;      // N x 1
  ad::Var variance;  // N x 1
};

MarginalVars q_f0_marginals(const PriorVars& prior, const InducingVars& q,
                            const InducingFactor& f, const ad::Var& x);
ad::Var kl_inducing(const InducingVars& q, const InducingFactor& f);

}  // namespace tgp
