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

#include <string>
#include <vector>

#include "tgp/autodiff.hpp"
#include "tgp/numstats.hpp"

namespace tgp {

enum class KernelFamily { kRbfArd, kPeriodic, kWhiteNoise, kSum };

/// Covariance function structure. Hyperparameters live outside, as an
/// unconstrained vector mapped through softplus:
///   rbf-ard:     [variance, lengthscale_1 .. lengthscale_D]
///   periodic:    [variance, lengthscale, period]
///   white-noise: [noise]
///   sum:         concatenation of the parts
struct KernelConfig {
  KernelFamily family = KernelFamily::kRbfArd;
  int input_dim = 1;
  std::vector<KernelConfig> parts;

  static KernelConfig rbf_ard(int input_dim);
  static KernelConfig periodic(int input_dim);
  static KernelConfig white_noise(int input_dim);
  static KernelConfig sum(std::vector<KernelConfig> parts);

  int param_count() const;
  void validate() const;
};

std::string kernel_family_name(KernelFamily family);
KernelFamily parse_kernel_family(const std::string& name);

struct KernelInit {
  double variance = 2.0;
  double lengthscale = 2.0;
  double period = 1.0;
  double noise = 2.0;
};

/// Unconstrained vector whose constrained view equals `init`.
Vector kernel_init_raw(const KernelConfig& config, const KernelInit& init);

Vector constrain(const Vector& raw);
Vector unconstrain(const Vector& constrained);

/// Cross-covariance between two different index sets. White noise adds
/// nothing here.
ad::Var kernel_cross(const KernelConfig& config, const ad::Var& raw,
                     const ad::Var& a, const ad::Var& b);
/// Self-covariance of one index set, including the white-noise nugget.
ad::Var kernel_self(const KernelConfig& config, const ad::Var& raw,
                    const ad::Var& a);
/// Diagonal of kernel_self as a column, in O(N).
ad::Var kernel_diag(const KernelConfig& config, const ad::Var& raw,
                    const ad::Var& a);

Matrix kernel_matrix(const KernelConfig& config, const Vector& raw,
                     const Matrix& a, const Matrix& b);
Matrix kernel_matrix_self(const KernelConfig& config, const Vector& raw,
                          const Matrix& a);

enum class MeanFamily { kZero, kConstant };

struct MeanConfig {
  MeanFamily family = MeanFamily::kZero;

  int param_count() const { return family == MeanFamily::kConstant ? 1 : 0; }
};

/// Prior mean at `rows` inputs as a column. The constant is unconstrained.
ad::Var mean_values(const MeanConfig& config, ad::Tape& tape,
                    const ad::Var& raw, Eigen::Index rows);

}  // namespace tgp
