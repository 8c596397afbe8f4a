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
#include <vector>

#include "tgp/autodiff.hpp"
#include "tgp/numstats.hpp"

namespace tgp {

enum class Activation { kRelu, kTanh };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

/// Dropout MLP producing unconstrained flow parameters per input row.
/// Dropout acts on hidden activations only.
struct NetConfig {
  int input_dim = 1;
  int hidden_layers = 1;
  int width = 25;
  Activation activation = Activation::kRelu;
  double dropout = 0.5;
  int output_dim = 0;
  double weight_decay = 1e-5;

  /// Flat layout per layer: W (in x out, column-major) then b (out).
  int weight_count() const;
  void validate() const;
};

/// One Bernoulli(1 - p) row per hidden layer, shared by every row of the
/// batch: a single draw of the network.
struct DropoutMask {
  std::vector<Matrix> layers;
};

DropoutMask sample_mask(const NetConfig& config, std::mt19937_64& rng);

/// Forward pass on the tape. A null mask selects deterministic mode, which
/// scales hidden activations by (1 - p).
ad::Var net_forward(const NetConfig& config, const ad::Var& weights,
                    const ad::Var& x, const DropoutMask* mask);

enum class NetMode { kDeterministic, kMonteCarlo };

/// Evaluation without a tape. Monte Carlo mode draws one mask from `seed`.
Matrix net_forward(const NetConfig& config, const Vector& weights, const Matrix& x,
                   NetMode mode, std::uint64_t seed = 0);
Matrix net_forward(const NetConfig& config, const Vector& weights, const Matrix& x,
                   const DropoutMask& mask);

/// Glorot-uniform weights, zero biases.
Vector net_init_weights(const NetConfig& config, std::mt19937_64& rng);

double weight_penalty(const Vector& weights, double lambda);
ad::Var weight_penalty(const ad::Var& weights, double lambda);

struct NetFitOptions {
  int epochs = 2000;
  int batch_size = 64;
  double lr = 0.01;
  std::uint64_t seed = 0;
};

struct NetFitResult {
  Vector weights;
  double loss = 0.0;
};

/// Minibatch Adam on the mean squared distance between the deterministic
/// net output and `target` (one row broadcast to every input, or one row per
/// input). `loss` is the final full-data mean squared error per entry.
NetFitResult net_init_match(const NetConfig& config, const Vector& weights0,
                            const Matrix& target, const Matrix& x,
                            const NetFitOptions& options = {});

}  // namespace tgp
