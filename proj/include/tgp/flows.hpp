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

#include <random>
#include <span>
#include <string>
#include <vector>

#include "tgp/autodiff.hpp"
#include "tgp/dual.hpp"
#include "tgp/errors.hpp"
#include "tgp/numstats.hpp"

namespace tgp {

enum class StepKind {
  kLog,
  kExp,
  kSoftplus,
  kSinh,
  kArcsinh,        // a asinh(b (f + c)) + d,  a, b > 0
  kAffine,         // a + b f,  b > 0
  kSinhArcsinh,    // sinh(b asinh(f) - a),  b > 0
  kBoxCox,         // (sgn(f) |f|^l - 1) / l,  l > 0
  kInverseBoxCox,  // sgn(l f + 1) |l f + 1|^(1/l),  l > 0
  kTukey,          // (exp(g f) - 1) / g * exp(h f^2 / 2),  h >= 0, g != 0
  kTanh,           // a tanh(b (f + c)) + d,  a, b > 0
  kArcsinhMixture, // sum_i a_i + b_i asinh((f - c_i) / d_i),  b_i, d_i > 0
};

/// One elementwise, strictly increasing map. Its parameters are
/// unconstrained reals ("slots"); positive ones pass through softplus.
struct FlowStep {
  StepKind kind = StepKind::kAffine;
  int components = 1;  // arcsinh-mixture only

  int slot_count() const;
  std::string token() const;
};

/// Composition G = G_{K-1} o ... o G_0: step 0 is applied first. An empty
/// chain is the identity.
class FlowChain {
 public:
  FlowChain() = default;
  explicit FlowChain(std::vector<FlowStep> steps);

  /// '+'-joined preset or step tokens, e.g. "sal", "sal3+sp", "tanh",
  /// "arcsinh-mixture(3)", "identity".
  static FlowChain parse(const std::string& spec);

  const std::vector<FlowStep>& steps() const { return steps_; }
  int size() const { return static_cast<int>(steps_.size()); }
  bool empty() const { return steps_.empty(); }
  int slot_count() const { return slot_count_; }
  int slot_offset(int step) const { return offsets_[static_cast<std::size_t>(step)]; }
  std::string to_string() const;

  /// Unconstrained parameters for the identity (where one exists) or a mild
  /// default: affine/SAL identity, tanh and arcsinh with a = b = 1.
  Vector default_params() const;
  /// Unconstrained parameters drawn from N(0, 1).
  Vector random_params(std::mt19937_64& rng) const;
  /// True when every step maps onto the whole real line.
  bool unconstrained_range() const;

 private:
  std::vector<FlowStep> steps_;
  std::vector<int> offsets_;
  int slot_count_ = 0;
};

struct NewtonOptions {
  double tolerance = 1e-10;
  int max_iterations = 100;
};

/// Step formula over any numeric type: double, ad::Var, ad::Dual<T>. `F` is
/// the value type and `P` the parameter type; they may differ, e.g. a matrix
/// of values with per-row parameter columns.
template <class F, class P>
F step_apply(const FlowStep& step, int index, const F& f, const P* r) {
  using ad::asinh;
  switch (step.kind) {
    case StepKind::kLog:
      if (ad::lowest(f) <= 0.0) {
        throw DomainError("log flow step " + std::to_string(index) + " needs positive input",
                          index);
      }
      return ad::log(f);
    case StepKind::kExp:
      return ad::exp(f);
    case StepKind::kSoftplus:
      return ad::softplus(f);
    case StepKind::kSinh:
      return ad::sinh(f);
    case StepKind::kArcsinh:
      return ad::softplus(r[0]) * ad::asinh(ad::softplus(r[1]) * (f + r[2])) + r[3];
    case StepKind::kAffine:
      return r[0] + ad::softplus(r[1]) * f;
    case StepKind::kSinhArcsinh:
      return ad::sinh(ad::softplus(r[1]) * ad::asinh(f) - r[0]);
    case StepKind::kBoxCox: {
      P lambda = ad::softplus(r[0]);
      return (ad::signed_pow(f, lambda) - 1.0) / lambda;
    }
    case StepKind::kInverseBoxCox: {
      P lambda = ad::softplus(r[0]);
      return ad::signed_pow(lambda * f + 1.0, 1.0 / lambda);
    }
    case StepKind::kTukey: {
      const P& g = r[0];
      P h = ad::softplus(r[1]);
      return (ad::exp(g * f) - 1.0) / g * ad::exp(h * ad::square(f) * 0.5);
    }
    case StepKind::kTanh:
      return ad::softplus(r[0]) * ad::tanh(ad::softplus(r[1]) * (f + r[2])) + r[3];
    case StepKind::kArcsinhMixture: {
      F total = r[0] + ad::softplus(r[1]) * ad::asinh((f - r[2]) / ad::softplus(r[3]));
      for (int i = 1; i < step.components; ++i) {
        const P* q = r + 4 * i;
        total = total + (q[0] + ad::softplus(q[1]) * ad::asinh((f - q[2]) / ad::softplus(q[3])));
      }
      return total;
    }
  }
  throw UsageError("unknown flow step");
}

template <class F, class P>
F flow_apply(const FlowChain& chain, F f, std::span<const P> raw) {
  if (static_cast<int>(raw.size()) != chain.slot_count()) {
    throw UsageError("flow expects " + std::to_string(chain.slot_count()) +
                     " parameters, got " + std::to_string(raw.size()));
  }
  for (int k = 0; k < chain.size(); ++k) {
    f = step_apply<F, P>(chain.steps()[static_cast<std::size_t>(k)], k, f,
                         raw.data() + chain.slot_offset(k));
  }
  return f;
}

// Scalar evaluation with literal parameters.
double flow_forward(const FlowChain& chain, double f, std::span<const double> raw);
/// dG/df at f by forward-mode differentiation.
double flow_derivative(const FlowChain& chain, double f, std::span<const double> raw);
double flow_inverse(const FlowChain& chain, double y, std::span<const double> raw,
                    const NewtonOptions& options = {});

Vector flow_forward(const FlowChain& chain, const Vector& f0, const Vector& raw);
/// log |dG/df| per element via the reverse-mode tape. Throws SingularJacobian
/// where the derivative is zero.
Vector flow_log_deriv(const FlowChain& chain, const Vector& f0, const Vector& raw);
/// Closed form where available, else bracketed Newton with bisection
/// fallback. Throws RangeError outside the chain's range.
Vector flow_inverse(const FlowChain& chain, const Vector& fk, const Vector& raw,
                    const NewtonOptions& options = {});

/// Split a parameter column into one 1x1 Var per slot.
std::vector<ad::Var> flow_slots(const ad::Var& raw);

/// log |dG/df| on the tape, by forward-mode duals over Var.
ad::Var flow_log_abs_deriv(const FlowChain& chain, const ad::Var& f,
                           std::span<const ad::Var> raw);

/// G^{-1}(y) on the tape. The value comes from the scalar inverse; adjoints
/// follow from the implicit function theorem. `raw` is a slot_count x 1
/// column of literal parameters.
ad::Var flow_inverse(const FlowChain& chain, const ad::Var& y, const ad::Var& raw,
                     const NewtonOptions& options = {});

struct FlowFitOptions {
  int epochs = 2000;
  double lr = 0.01;
  double grid_lo = -3.0;
  double grid_hi = 3.0;
  int grid_points = 200;
  double warn_threshold = 1e-2;
};

struct FlowFitResult {
  Vector raw;
  double loss = 0.0;
  bool warning = false;
  std::string message;
};

/// Fit G to the identity on an even grid by Adam on the mean squared error.
/// `loss` is the final MSE.
FlowFitResult init_identity(const FlowChain& chain, const Vector& raw0,
                            const FlowFitOptions& options = {});

/// Maximize the flow-model log-likelihood of `y` under a standard normal
/// base: sum log phi(G^{-1}(y)) + log |dG^{-1}/dy|. `loss` is the final
/// negative mean log-likelihood.
FlowFitResult init_gaussianize(const FlowChain& chain, const Vector& raw0,
                               const Vector& y, const FlowFitOptions& options = {});

}  // namespace tgp
