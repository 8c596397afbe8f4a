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

#include "tgp/kernels.hpp"

#include <cmath>
#include <string>

#include "tgp/errors.hpp"

namespace tgp {

using ad::Var;

KernelConfig KernelConfig::rbf_ard(int input_dim) {
  return {KernelFamily::kRbfArd, input_dim, {}};
}

KernelConfig KernelConfig::periodic(int input_dim) {
  return {KernelFamily::kPeriodic, input_dim, {}};
}

KernelConfig KernelConfig::white_noise(int input_dim) {
  return {KernelFamily::kWhiteNoise, input_dim, {}};
}

KernelConfig KernelConfig::sum(std::vector<KernelConfig> parts) {
  if (parts.empty()) throw UsageError("sum kernel needs at least one part");
  const int d = parts.front().input_dim;
  return {KernelFamily::kSum, d, std::move(parts)};
}

int KernelConfig::param_count() const {
  switch (family) {
    case KernelFamily::kRbfArd: return 1 + input_dim;
    case KernelFamily::kPeriodic: return 3;
    case KernelFamily::kWhiteNoise: return 1;
    case KernelFamily::kSum: {
      int n = 0;
      for (const auto& p : parts) n += p.param_count();
      return n;
    }
  }
  return 0;
}

void KernelConfig::validate() const {
  if (input_dim < 1) throw UsageError("kernel input dimension must be positive");
  if (family == KernelFamily::kSum) {
    if (parts.empty()) throw UsageError("sum kernel needs at least one part");
    for (const auto& p : parts) {
      if (p.input_dim != input_dim) throw UsageError("sum kernel parts disagree on input dimension");
      p.validate();
    }
  } else if (!parts.empty()) {
    throw UsageError("only sum kernels have parts");
  }
}

std::string kernel_family_name(KernelFamily family) {
  switch (family) {
    case KernelFamily::kRbfArd: return "rbf-ard";
    case KernelFamily::kPeriodic: return "periodic";
    case KernelFamily::kWhiteNoise: return "white-noise";
    case KernelFamily::kSum: return "sum";
  }
  return "unknown";
}

KernelFamily parse_kernel_family(const std::string& name) {
  if (name == "rbf-ard" || name == "rbf") return KernelFamily::kRbfArd;
  if (name == "periodic") return KernelFamily::kPeriodic;
  if (name == "white-noise") return KernelFamily::kWhiteNoise;
  if (name == "sum") return KernelFamily::kSum;
  throw UsageError("unknown kernel family '" + name + "'");
}

Vector kernel_init_raw(const KernelConfig& config, const KernelInit& init) {
  Vector c(config.param_count());
  switch (config.family) {
    case KernelFamily::kRbfArd:
      c(0) = init.variance;
      c.tail(config.input_dim).setConstant(init.lengthscale);
      break;
    case KernelFamily::kPeriodic:
      c << init.variance, init.lengthscale, init.period;
      break;
    case KernelFamily::kWhiteNoise:
      c(0) = init.noise;
      break;
    case KernelFamily::kSum: {
      Eigen::Index off = 0;
      for (const auto& p : config.parts) {
        const Vector r = kernel_init_raw(p, init);
        c.segment(off, r.size()) = constrain(r);
        off += r.size();
      }
      break;
    }
  }
  return unconstrain(c);
}

Vector constrain(const Vector& raw) {
  return raw.unaryExpr([](double v) { return softplus(v); });
}

Vector unconstrain(const Vector& constrained) {
  return constrained.unaryExpr([](double v) { return softplus_inverse(v); });
}

namespace {

void check_dims(const KernelConfig& config, const Var& a) {
  if (a.cols() != config.input_dim) {
    throw UsageError("kernel expects " + std::to_string(config.input_dim) +
                     " input columns, got " + std::to_string(a.cols()));
  }
}

void check_raw(const KernelConfig& config, const Var& raw) {
  if (raw.rows() != config.param_count() || raw.cols() != 1) {
    throw UsageError("kernel hyperparameter vector has the wrong length");
  }
  if (!raw.value().allFinite()) throw UsageError("non-finite kernel hyperparameter");
}

// Stationary part without white noise; `self` only affects white noise.
Var stationary(const KernelConfig& config, const Var& raw, const Var& a,
               const Var& b) {
  Var c = ad::softplus(raw);
  switch (config.family) {
    case KernelFamily::kRbfArd: {
      Var inv_ell = 1.0 / ad::transpose(ad::slice(c, 1, config.input_dim));
      Var d2 = ad::pairwise_sqdist(a * inv_ell, b * inv_ell);
      return ad::slice(c, 0, 1) * ad::exp(-0.5 * d2);
    }
    case KernelFamily::kPeriodic: {
      Var ell = ad::slice(c, 1, 1);
      Var s2 = ad::periodic_sin2(a, b, ad::slice(c, 2, 1));
      return ad::slice(c, 0, 1) * ad::exp(-2.0 * s2 / ad::square(ell));
    }
    default:
      throw UsageError("not a stationary kernel");
  }
}

}  // namespace

Var kernel_cross(const KernelConfig& config, const Var& raw, const Var& a,
                 const Var& b) {
  check_dims(config, a);
  check_dims(config, b);
  check_raw(config, raw);
  ad::Tape& t = *a.tape();
  switch (config.family) {
    case KernelFamily::kWhiteNoise:
      return t.constant(Matrix::Zero(a.rows(), b.rows()));
    case KernelFamily::kSum: {
      Var total;
      int off = 0;
      for (const auto& p : config.parts) {
        const int n = p.param_count();
        if (p.family != KernelFamily::kWhiteNoise) {
          Var k = kernel_cross(p, ad::slice(raw, off, n), a, b);
          total = total.valid() ? total + k : k;
        }
        off += n;
      }
      return total.valid() ? total : t.constant(Matrix::Zero(a.rows(), b.rows()));
    }
    default:
      return stationary(config, raw, a, b);
  }
}

Var kernel_self(const KernelConfig& config, const Var& raw, const Var& a) {
  check_dims(config, a);
  check_raw(config, raw);
  ad::Tape& t = *a.tape();
  switch (config.family) {
    case KernelFamily::kWhiteNoise: {
      Matrix eye = Matrix::Identity(a.rows(), a.rows());
      return ad::softplus(raw) * t.constant(eye);
    }
    case KernelFamily::kSum: {
      Var total;
      int off = 0;
      for (const auto& p : config.parts) {
        const int n = p.param_count();
        Var k = kernel_self(p, ad::slice(raw, off, n), a);
        total = total.valid() ? total + k : k;
        off += n;
      }
      return total;
    }
    default:
      return stationary(config, raw, a, a);
  }
}

Var kernel_diag(const KernelConfig& config, const Var& raw, const Var& a) {
  check_dims(config, a);
  check_raw(config, raw);
  ad::Tape& t = *a.tape();
  Var ones = t.constant(Matrix::Ones(a.rows(), 1));
  switch (config.family) {
    case KernelFamily::kRbfArd:
    case KernelFamily::kPeriodic:
    case KernelFamily::kWhiteNoise:
      return ad::softplus(ad::slice(raw, 0, 1)) * ones;
    case KernelFamily::kSum: {
      Var total;
      int off = 0;
      for (const auto& p : config.parts) {
        const int n = p.param_count();
        Var k = kernel_diag(p, ad::slice(raw, off, n), a);
        total = total.valid() ? total + k : k;
        off += n;
      }
      return total;
    }
  }
  throw UsageError("unknown kernel family");
}

namespace {

void check_raw_values(const Vector& raw) {
  if (!raw.allFinite()) throw UsageError("non-finite kernel hyperparameter");
}

}  // namespace

Matrix kernel_matrix(const KernelConfig& config, const Vector& raw,
                     const Matrix& a, const Matrix& b) {
  check_raw_values(raw);
  ad::Tape t;
  Var r = t.constant(Matrix(raw));
  return kernel_cross(config, r, t.constant(a), t.constant(b)).value();
}

Matrix kernel_matrix_self(const KernelConfig& config, const Vector& raw,
                          const Matrix& a) {
  check_raw_values(raw);
  ad::Tape t;
  Var r = t.constant(Matrix(raw));
  return kernel_self(config, r, t.constant(a)).value();
}

Var mean_values(const MeanConfig& config, ad::Tape& tape, const Var& raw,
                Eigen::Index rows) {
  if (config.family == MeanFamily::kZero) return tape.constant(Matrix::Zero(rows, 1));
  return ad::slice(raw, 0, 1) * tape.constant(Matrix::Ones(rows, 1));
}

}  // namespace tgp
