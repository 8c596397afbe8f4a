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

#include "tgp/adam.hpp"
#include "tgp/models.hpp"

namespace tgp {

enum class FreezeSchedule { kNone, kNoiseFraction, kCovarianceEpochs };
enum class FlowInit { kIdentity, kFromData, kRandom };

std::string freeze_name(FreezeSchedule f);
FreezeSchedule parse_freeze(const std::string& s);
std::string flow_init_name(FlowInit f);
FlowInit parse_flow_init(const std::string& s);

struct TrainConfig {
  double lr = 0.01;
  int epochs = 100;
  int batch_size = 256;  // clamped to N
  std::uint64_t seed = 0;
  FreezeSchedule freeze = FreezeSchedule::kNone;
  double freeze_fraction = 0.6;  // of epochs, noise group
  int freeze_epochs = 2000;      // covariance group
  FlowInit flow_init = FlowInit::kIdentity;
  int init_epochs = 2000;
  int kmeans_runs = 10;
  KernelInit kernel_init;
  double noise_init = 0.05;
  bool standardize_targets = true;  // gaussian likelihood only
  bool progress = false;            // per-epoch lines on stderr

  void validate() const;
};

struct EpochRecord {
  double elbo = 0.0;
  double ell = 0.0;
  double kl = 0.0;
  double penalty = 0.0;
  double seconds = 0.0;
  int escalations = 0;  // cumulative
};

/// Per-epoch averages of the minibatch estimates.
struct TrainTrace {
  std::vector<EpochRecord> epochs;
  std::vector<std::string> warnings;
};

/// Adam on -elbo / N with epoch-wise reshuffled minibatches. Holds the
/// parameters of `model` and writes them back after every step.
class Trainer {
 public:
  Trainer(Model& model, const Matrix& x, const Vector& y, const TrainConfig& config);

  /// One Adam step on the given rows. Returns the minibatch ELBO.
  double step(const std::vector<long>& rows, ElboTerms* terms = nullptr);
  EpochRecord run_epoch();
  int epoch() const { return epoch_; }
  const TrainTrace& trace() const { return trace_; }
  const ad::JitterState& jitter() const { return jitter_; }

 private:
  bool frozen(ParamGroup g) const;

  Model& model_;
  const Matrix& x_;
  const Vector& y_;
  TrainConfig config_;
  Vector params_;
  AdamState adam_;
  ad::Tape tape_;
  ad::JitterState jitter_;
  std::mt19937_64 rng_;
  std::vector<long> order_;
  int epoch_ = 0;
  long steps_ = 0;
  TrainTrace trace_;
};

TrainTrace fit(Model& model, const Matrix& x, const Vector& y, const TrainConfig& config);

/// Defaults for kernel, noise and q(u) with Z by k-means, then the flow:
/// fitted to the identity, to the data (identity fit refined by
/// gaussianization) or drawn at random; then the net is matched to it.
Model init_pipeline(const ModelSpec& spec, const Matrix& x, const Vector& y,
                    const TrainConfig& config, std::vector<std::string>* warnings = nullptr);

}  // namespace tgp
