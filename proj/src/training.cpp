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

#include "tgp/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <random>

#include "tgp/errors.hpp"

namespace tgp {

std::string freeze_name(FreezeSchedule f) {
  switch (f) {
    case FreezeSchedule::kNone: return "none";
    case FreezeSchedule::kNoiseFraction: return "noise";
    case FreezeSchedule::kCovarianceEpochs: return "covariance";
  }
  return "?";
}

FreezeSchedule parse_freeze(const std::string& s) {
  if (s == "none") return FreezeSchedule::kNone;
  if (s == "noise") return FreezeSchedule::kNoiseFraction;
  if (s == "covariance") return FreezeSchedule::kCovarianceEpochs;
  throw UsageError("unknown freeze schedule '" + s + "' (expected none, noise or covariance)");
}

std::string flow_init_name(FlowInit f) {
  switch (f) {
    case FlowInit::kIdentity: return "identity";
    case FlowInit::kFromData: return "from-data";
    case FlowInit::kRandom: return "random";
  }
  return "?";
}

FlowInit parse_flow_init(const std::string& s) {
  if (s == "identity") return FlowInit::kIdentity;
  if (s == "from-data") return FlowInit::kFromData;
  if (s == "random") return FlowInit::kRandom;
  throw UsageError("unknown flow init '" + s + "' (expected identity, from-data or random)");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw UsageError("learning rate must be positive");
  if (epochs < 0) throw UsageError("epochs must be non-negative");
  if (batch_size < 1) throw UsageError("batch size must be positive");
  if (!(freeze_fraction >= 0.0 && freeze_fraction <= 1.0)) {
    throw UsageError("freeze fraction must lie in [0, 1]");
  }
  if (freeze_epochs < 0 || init_epochs < 0) throw UsageError("epoch counts must be non-negative");
  if (kmeans_runs < 1) throw UsageError("k-means needs at least one run");
  if (!(noise_init > 0.0)) throw UsageError("initial noise variance must be positive");
}

Trainer::Trainer(Model& model, const Matrix& x, const Vector& y, const TrainConfig& config)
    : model_(model), x_(x), y_(y), config_(config), rng_(config.seed) {
  config_.validate();
  if (x.rows() != y.size() || x.rows() == 0) throw UsageError("training data is empty or ragged");
  params_ = model.pack();
  jitter_.schedule = model.spec.jitter;
  order_.resize(static_cast<std::size_t>(x.rows()));
  std::iota(order_.begin(), order_.end(), 0L);
}

bool Trainer::frozen(ParamGroup g) const {
  switch (config_.freeze) {
    case FreezeSchedule::kNone:
      return false;
    case FreezeSchedule::kNoiseFraction:
      return g == ParamGroup::kNoise &&
             epoch_ < static_cast<int>(std::ceil(config_.freeze_fraction * config_.epochs));
    case FreezeSchedule::kCovarianceEpochs:
      return g == ParamGroup::kCovariance && epoch_ < config_.freeze_epochs;
  }
  return false;
}

double Trainer::step(const std::vector<long>& rows, ElboTerms* terms) {
  const long n = x_.rows();
  Matrix xb(static_cast<Eigen::Index>(rows.size()), x_.cols());
  Vector yb(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    xb.row(static_cast<Eigen::Index>(i)) = x_.row(rows[i]);
    yb(static_cast<Eigen::Index>(i)) = y_(rows[i]);
  }
  const std::uint64_t seed = config_.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(steps_);
  ElboTerms local;
  ad::Objective objective = [&](ad::Tape& t, const ad::Var& p) {
    return elbo(model_, t, p, xb, yb, n, seed, jitter_, &local) * (-1.0 / static_cast<double>(n));
  };
  Vector grad;
  try {
    ad::forward(tape_, objective,
                std::span<const double>(params_.data(), static_cast<std::size_t>(params_.size())));
    grad = ad::backward(tape_);
    const ParamLayout layout = model_.layout();
    Vector kept = params_;
    std::vector<std::pair<int, int>> frozen_ranges;
    for (ParamGroup g : {ParamGroup::kCovariance, ParamGroup::kNoise, ParamGroup::kInducing,
                         ParamGroup::kFlow}) {
      if (!frozen(g)) continue;
      auto [b, e] = layout.group(g);
      grad.segment(b, e - b).setZero();
      frozen_ranges.emplace_back(b, e);
    }
    AdamOptions opts;
    opts.lr = config_.lr;
    adam_step(params_, grad, adam_, opts);
    for (auto [b, e] : frozen_ranges) params_.segment(b, e - b) = kept.segment(b, e - b);
  } catch (const NonFiniteValue& e) {
    throw NonFiniteValue("epoch " + std::to_string(epoch_) + ", step " + std::to_string(steps_) +
                             ": " + e.what(),
                         e.node());
  }
  model_.unpack(params_);
  model_.spec.jitter = jitter_.schedule;
  ++steps_;
  if (terms != nullptr) *terms = local;
  return local.elbo;
}

EpochRecord Trainer::run_epoch() {
  const auto start = std::chrono::steady_clock::now();
  const long n = x_.rows();
  std::vector<std::vector<long>> batches;
  if (model_.spec.kind == ModelKind::kGsp) {
    batches.push_back(order_);
  } else {
    std::shuffle(order_.begin(), order_.end(), rng_);
    const long b = std::min<long>(config_.batch_size, n);
    for (long i = 0; i < n; i += b) {
      batches.emplace_back(order_.begin() + i, order_.begin() + std::min(n, i + b));
    }
  }
  EpochRecord rec;
  for (const auto& rows : batches) {
    ElboTerms t;
    step(rows, &t);
    rec.elbo += t.elbo;
    rec.ell += t.ell + t.jacobian;
    rec.kl += t.kl;
    rec.penalty += t.penalty;
  }
  const double k = static_cast<double>(batches.size());
  rec.elbo /= k;
  rec.ell /= k;
  rec.kl /= k;
  rec.penalty /= k;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  rec.escalations = jitter_.escalations;
  trace_.epochs.push_back(rec);
  if (config_.progress) {
    std::fprintf(stderr, "%d,%.10g,%.10g,%.10g,%.10g,%.6f\n", epoch_, rec.elbo, rec.ell, rec.kl,
                 rec.penalty, rec.seconds);
  }
  ++epoch_;
  return rec;
}

TrainTrace fit(Model& model, const Matrix& x, const Vector& y, const TrainConfig& config) {
  Trainer trainer(model, x, y, config);
  for (int e = 0; e < config.epochs; ++e) trainer.run_epoch();
  return trainer.trace();
}

namespace {

void warn(std::vector<std::string>* sink, const std::string& message) {
  if (sink != nullptr) sink->push_back(message);
  std::cerr << "warning: " << message << "\n";
}

Vector init_flow(const FlowChain& chain, FlowInit mode, const Vector& y, const TrainConfig& config,
                 std::mt19937_64& rng, std::vector<std::string>* warnings) {
  if (chain.slot_count() == 0) return Vector();
  FlowFitOptions opts;
  opts.epochs = config.init_epochs;
  opts.lr = config.lr;
  if (mode == FlowInit::kRandom) return chain.random_params(rng);
  FlowFitResult r = init_identity(chain, chain.default_params(), opts);
  if (r.warning) warn(warnings, r.message);
  if (mode == FlowInit::kIdentity) return r.raw;
  // Starting from the identity fit keeps bounded-range chains such as tanh
  // wide enough to cover the targets.
  FlowFitResult g = init_gaussianize(chain, r.raw, y, opts);
  if (g.warning) warn(warnings, g.message);
  return g.raw;
}

}  // namespace

Model init_pipeline(const ModelSpec& spec, const Matrix& x, const Vector& y,
                    const TrainConfig& config, std::vector<std::string>* warnings) {
  config.validate();
  if (x.rows() != y.size() || x.rows() == 0) throw UsageError("training data is empty or ragged");
  const Matrix z = init_inducing_kmeans(x, spec.num_inducing, config.kmeans_runs, config.seed);
  Model model = make_model(spec, z);
  model.kernel_raw = kernel_init_raw(spec.kernel, config.kernel_init);
  model.noise_raw = softplus_inverse(config.noise_init);
  if (config.standardize_targets && spec.likelihood == LikelihoodKind::kGaussian) {
    model.y_shift = y.mean();
    const double sd = std::sqrt((y.array() - model.y_shift).square().sum() /
                                static_cast<double>(std::max<Eigen::Index>(y.size() - 1, 1)));
    model.y_scale = sd > 0.0 ? sd : 1.0;
  }
  const Vector ys = (y.array() - model.y_shift) / model.y_scale;
  std::mt19937_64 rng(config.seed + 1);

  if (model.spec.has_prior_flow()) {
    // The flow acts on the latent f0, whose marginal is roughly the
    // standardized target scale.
    const Vector theta = init_flow(model.spec.chain, config.flow_init, ys, config, rng, warnings);
    if (model.spec.input_dependent()) {
      NetFitOptions opts;
      opts.epochs = config.init_epochs;
      opts.lr = config.lr;
      opts.seed = config.seed;
      const Vector w0 = net_init_weights(model.spec.net, rng);
      model.net_weights = net_init_match(model.spec.net, w0, theta.transpose(), x, opts).weights;
    } else {
      model.flow_raw = theta;
    }
  }
  if (model.spec.kind == ModelKind::kVwgp) {
    FlowInit mode = config.flow_init;
    if (mode == FlowInit::kFromData && !model.spec.transform_inverse) {
      // Gaussianization fits chain^{-1}(y) ~ N(0, 1); that is T itself only
      // when T is the inverse chain.
      warn(warnings, "from-data init of a forward likelihood transform uses the identity fit");
      mode = FlowInit::kIdentity;
    }
    model.transform_raw = init_flow(model.spec.transform, mode, ys, config, rng, warnings);
  }
  return model;
}

}  // namespace tgp
