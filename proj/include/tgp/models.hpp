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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tgp/autodiff.hpp"
#include "tgp/flow_net.hpp"
#include "tgp/flows.hpp"
#include "tgp/kernels.hpp"
#include "tgp/numstats.hpp"
#include "tgp/sparse_gp.hpp"

namespace tgp {

/// svgp: G = T = I. tgp: prior flow G. vwgp: likelihood transform T.
/// gsp: prior flow with a plain Gaussian variational family, O(N^3).
enum class ModelKind { kSvgp, kTgp, kVwgp, kGsp };
/// Where the prior flow parameters come from: literal (fixed) or a dropout
/// net of the input, evaluated deterministically (pe) or by MC dropout (ba).
enum class FlowMode { kNone, kFixed, kInputPe, kInputBa };
enum class LikelihoodKind { kGaussian, kBernoulliProbit };

std::string model_kind_name(ModelKind k);
ModelKind parse_model_kind(const std::string& s);
std::string flow_mode_name(FlowMode m);
FlowMode parse_flow_mode(const std::string& s);
std::string likelihood_name(LikelihoodKind k);
LikelihoodKind parse_likelihood(const std::string& s);

struct ModelSpec {
  ModelKind kind = ModelKind::kSvgp;
  KernelConfig kernel;
  MeanConfig mean;
  LikelihoodKind likelihood = LikelihoodKind::kGaussian;
  int num_inducing = 10;
  bool whitened = true;
  FlowChain chain;  // prior flow G
  FlowMode flow_mode = FlowMode::kNone;
  NetConfig net;
  FlowChain transform;  // likelihood transform T
  /// Use T = chain^{-1} of `transform`, so that T^{-1} is the forward chain.
  bool transform_inverse = false;
  int train_samples = 1;
  int predict_samples = 100;
  int train_quadrature = 20;
  int predict_quadrature = 100;
  int gsp_samples = 10;
  int gsp_max_points = 2000;
  JitterSchedule jitter;

  bool input_dependent() const {
    return flow_mode == FlowMode::kInputPe || flow_mode == FlowMode::kInputBa;
  }
  bool has_prior_flow() const {
    return (kind == ModelKind::kTgp || kind == ModelKind::kGsp) && flow_mode != FlowMode::kNone;
  }
  void validate() const;
};

enum class ParamGroup { kCovariance, kNoise, kInducing, kFlow };

/// Offsets into the flat parameter vector:
/// [kernel | mean | noise | Z (column-major) | m | S lower | flow | transform].
/// The flow block holds the chain parameters (fixed mode) or the net weights.
struct ParamLayout {
  int kernel = 0, mean = 0, noise = 0, z = 0, m = 0, s = 0, flow = 0, transform = 0, total = 0;
  /// Half-open [begin, end) of a group.
  std::pair<int, int> group(ParamGroup g) const;
};

struct Model {
  ModelSpec spec;
  Vector kernel_raw;
  Vector mean_raw;
  double noise_raw = 0.0;  // softplus -> gaussian noise variance
  InducingState inducing;
  Vector flow_raw;
  Vector net_weights;
  Vector transform_raw;
  // Targets are modelled as (y - y_shift) / y_scale.
  double y_shift = 0.0;
  double y_scale = 1.0;

  ParamLayout layout() const;
  Vector pack() const;
  void unpack(const Vector& params);
  double noise_variance() const;
  GpPrior prior() const;
  int input_dim() const { return spec.kernel.input_dim; }
};

/// Defaults: kernel parameters 2, noise 0.05, q(u) = N(0, 1e-5 I) at `z`,
/// default flow parameters, Glorot net weights from seed 0.
Model make_model(ModelSpec spec, const Matrix& z);

/// E_{N(mu, var)}[log p(y | G(f))] by Gauss-Hermite.
double ell_point(LikelihoodKind lik, double y, double mu, double var, const FlowChain& chain,
                 std::span<const double> raw, double noise_var, const QuadratureRule& rule);

struct ElboTerms {
  double elbo = 0.0;
  double ell = 0.0;       // minibatch-scaled expected log likelihood
  double kl = 0.0;        // inducing KL, or the G-SP MC term with sign flipped
  double penalty = 0.0;   // weight decay
  double jacobian = 0.0;  // V-WGP log |T'(y)|, scaled like the ELL
};

/// Objective on a tape for the flat parameters. `x`, `y` is a minibatch of
/// `n_total` points; y is on the original scale. `seed` fixes dropout masks
/// and G-SP noise. G-SP ignores batching and needs the full data.
ad::Var elbo(const Model& model, ad::Tape& tape, const ad::Var& params, const Matrix& x,
             const Vector& y, long n_total, std::uint64_t seed, ad::JitterState& jitter,
             ElboTerms* terms = nullptr);

double elbo(const Model& model, const Matrix& x, const Vector& y, long n_total,
            std::uint64_t seed = 0, ElboTerms* terms = nullptr);

/// Max relative error of the ELBO gradient against central differences
/// over the full batch at a fixed seed.
double elbo_gradient_error(const Model& model, const Matrix& x, const Vector& y,
                           std::uint64_t seed = 0, double step = 1e-5);

/// Per-sample values of the G-SP Monte Carlo term, and the ELL it is added to.
struct GspEstimate {
  double ell = 0.0;
  Vector samples;
};
GspEstimate gsp_estimate(const Model& model, const Matrix& x, const Vector& y, int samples,
                         std::uint64_t seed);

struct PredictOptions {
  int samples = 0;     // 0: spec.predict_samples
  int quadrature = 0;  // 0: spec.predict_quadrature
  int quantile_samples = 1000;
  double lower_level = 0.025;
  double upper_level = 0.975;
  bool quantiles = true;
  std::uint64_t seed = 0;
};

/// All fields are on the original target scale.
struct Prediction {
  Vector mean;
  Vector variance;
  Vector lower;
  Vector upper;
  Vector latent_mean;  // E[G(f0)], or E[T^{-1}(f)] for V-WGP
  Vector log_density;  // empty unless targets were given
};

Prediction predict(const Model& model, const Matrix& x, const Vector* y = nullptr,
                   const PredictOptions& options = {});

/// Flow parameters per input row for a given draw of the net: one row per
/// input, slot_count columns. Fixed mode returns one broadcast row.
Matrix flow_params_at(const Model& model, const Matrix& x, const DropoutMask* mask);

}  // namespace tgp
