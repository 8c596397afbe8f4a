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

#include "tgp/models.hpp"
#include "tgp/training.hpp"

namespace tgp {

struct FoldMetrics {
  double nll = 0.0;               // original target scale
  double nll_standardized = 0.0;  // on the model's internal scale
  double nll_point_se = 0.0;      // standard error of the per-point NLL
  double rmse = 0.0;
  double cov95 = 0.0;
  double acc = 0.0;  // NaN for regression
  long n_train = 0;
  long n_test = 0;
  bool ok = true;
  std::string error;
};

/// Mean and standard error across successful folds.
struct MetricsReport {
  double nll_mean = 0.0, nll_se = 0.0;
  double nll_standardized_mean = 0.0, nll_standardized_se = 0.0;
  double rmse_mean = 0.0, rmse_se = 0.0;
  double cov95_mean = 0.0, cov95_se = 0.0;
  double acc_mean = 0.0, acc_se = 0.0;
  std::vector<FoldMetrics> folds;
  std::vector<std::string> warnings;
};

/// NLL from the predictive log density, RMSE of the predictive mean,
/// coverage of the predicted [lower, upper] interval and, for
/// bernoulli-probit, accuracy of p > 0.5.
FoldMetrics evaluate(const Model& model, const Matrix& x, const Vector& y,
                     const PredictOptions& options = {});

MetricsReport aggregate(std::vector<FoldMetrics> folds);

struct FoldSpec {
  enum class Kind { kKFold, kRatio } kind = Kind::kKFold;
  int folds = 10;
  double train_fraction = 0.9;  // ratio splits
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<long> train;
  std::vector<long> test;
};

/// k-fold: a random partition into `folds` test blocks. ratio: `folds`
/// independent random splits with ceil(train_fraction N) training rows.
std::vector<Split> make_folds(long n, const FoldSpec& spec);

/// Worker count: TGP_THREADS if set, else the hardware concurrency.
int worker_count();

/// Trains one model per fold from scratch (standardization fitted on the
/// training rows) and aggregates. A failing fold is recorded and skipped.
MetricsReport crossval(const Matrix& x, const Vector& y, const FoldSpec& folds,
                       const ModelSpec& spec, const TrainConfig& config,
                       const PredictOptions& options = {}, int threads = 0);

}  // namespace tgp
