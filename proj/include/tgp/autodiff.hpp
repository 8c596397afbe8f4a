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

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "tgp/numstats.hpp"

namespace tgp::ad {

enum class OpKind {
  kConstant,
  kParameter,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kMatmul,
  kTranspose,
  kCholesky,
  kTriangularSolve,
  kSum,
  kMean,
  kExp,
  kLog,
  kSoftplus,
  kSinh,
  kArcsinh,
  kTanh,
  kErf,
  kLogNormalCdf,
  kSquare,
  kSqrt,
  kAbs,
  kPower,
  kBroadcast,
  kGather,
  kLogSumExp,
  kDiagonal,
  kClampMin,
  kConcat,
  kPairwiseSqDist,
  kPeriodicSin2,
  kCustom,
};

std::string_view op_name(OpKind op);

class Tape;

/// Handle to a node on a Tape. Every value is a dense matrix; scalars are
/// 1x1.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  double scalar() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Tracks the jitter applied by the Cholesky op. Escalation is sticky: once a
/// larger level was needed, later factorizations start from it.
struct JitterState {
  JitterSchedule schedule;
  int escalations = 0;
};

/// Define-by-run reverse-mode tape. Nodes are appended in evaluation order,
/// so insertion order is a topological order.
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var constant(double value);
  /// The flat parameter vector as a column leaf. One per tape.
  Var parameters(std::span<const double> values);

  /// Append a node. Throws NonFiniteValue if `value` has a NaN or infinity.
  Var push(OpKind op, Matrix value, std::vector<int> parents, Backward backward);

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  /// Adjoint accumulator of a node, zero-initialized on first access.
  Matrix& adjoint(int id);
  OpKind op(int id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }

  void set_loss(const Var& loss);
  /// Gradient of the loss with respect to the parameter leaf.
  Vector backward();
  void clear();

 private:
  struct Node {
    OpKind op;
    std::vector<int> parents;
    Matrix value;
    Matrix adjoint;
    Backward backward;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  int parameters_ = -1;
  int loss_ = -1;
  bool evaluated_ = false;
};

/// Builds the loss on a tape from the parameter leaf.
using Objective = std::function<Var(Tape&, const Var& params)>;

/// Rebuild the tape from `objective` at `params` and return the loss.
double forward(Tape& tape, const Objective& objective,
               std::span<const double> params);
/// Gradient of the last forward pass. Throws UsageError if none ran.
Vector backward(Tape& tape);

/// Max over parameters of |analytic - central| / max(1, |central|).
double finite_diff_check(const Objective& objective,
                         std::span<const double> params, double step = 1e-6);

// Arithmetic with numpy-style broadcasting: equal shapes, or a dimension of
// size 1 stretched to match.
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator+(const Var& a, double b);
Var operator+(double a, const Var& b);
Var operator-(const Var& a, double b);
Var operator-(double a, const Var& b);
Var operator*(const Var& a, double b);
Var operator*(double a, const Var& b);
Var operator/(const Var& a, double b);
Var operator/(double a, const Var& b);

Var exp(const Var& x);
Var log(const Var& x);
Var softplus(const Var& x);
Var sinh(const Var& x);
Var asinh(const Var& x);
Var tanh(const Var& x);
Var erf(const Var& x);
Var log_normal_cdf(const Var& x);
Var square(const Var& x);
Var sqrt(const Var& x);
Var abs(const Var& x);
Var relu(const Var& x);
Var clamp_min(const Var& x, double lo);
/// x^p for a constant exponent.
Var pow(const Var& x, double p);
/// sgn(x) |x|^p with a differentiable exponent.
Var signed_pow(const Var& x, const Var& p);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
/// Lower factor of A + jitter I; A is read as symmetric.
Var cholesky(const Var& a, JitterState& jitter);
/// L^{-1} B, or L^{-T} B when `transpose_lower` is set.
Var solve_lower(const Var& lower, const Var& b, bool transpose_lower = false);

Var sum(const Var& x);
/// axis 0 sums each column (result 1 x c); axis 1 sums each row (r x 1).
Var sum(const Var& x, int axis);
Var mean(const Var& x);
Var logsumexp(const Var& x);
Var logsumexp(const Var& x, int axis);
Var broadcast(const Var& x, Eigen::Index rows, Eigen::Index cols);
/// out(i, j) = flat(x)[index[i + j * rows]] in column-major order, or 0 where
/// the index is negative.
Var gather(const Var& x, std::vector<int> index, Eigen::Index rows,
           Eigen::Index cols);
/// Contiguous block of a column vector reshaped column-major.
Var slice(const Var& x, int offset, Eigen::Index rows, Eigen::Index cols = 1);
Var diagonal(const Var& x);
/// Stack vertically (axis 0) or horizontally (axis 1).
Var concat(const Var& a, const Var& b, int axis);

/// out(i, j) = sum_d (a(i, d) - b(j, d))^2.
Var pairwise_sqdist(const Var& a, const Var& b);
/// out(i, j) = sum_d sin^2(pi (a(i, d) - b(j, d)) / period).
Var periodic_sin2(const Var& a, const Var& b, const Var& period);

}  // namespace tgp::ad
