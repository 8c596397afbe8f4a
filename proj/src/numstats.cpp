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

#include "tgp/numstats.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "tgp/errors.hpp"

namespace tgp {

double JitterSchedule::level(int attempt) const {
  if (attempt == 0) return initial;
  return escalated * std::pow(10.0, attempt - 1);
}

void JitterSchedule::validate() const {
  if (!(initial > 0.0) || !(escalated > 0.0) || initial > escalated ||
      max_attempts < 1) {
    throw UsageError("jitter schedule needs 0 < initial <= escalated and at "
                     "least one attempt");
  }
}

JitteredCholesky cholesky_jittered(const Matrix& a,
                                   const JitterSchedule& schedule) {
  schedule.validate();
  if (a.rows() != a.cols()) {
    throw UsageError("cholesky_jittered: matrix is " +
                     std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
  if (!a.allFinite()) throw NonFiniteValue("cholesky_jittered: non-finite input");
  const Eigen::Index n = a.rows();
  for (int attempt = 0; attempt < schedule.max_attempts; ++attempt) {
    const double jitter = schedule.level(attempt);
    Matrix shifted = a;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() != Eigen::Success) continue;
    Matrix lower = llt.matrixL();
    bool ok = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(lower(i, i) > 0.0) || !std::isfinite(lower(i, i))) ok = false;
    }
    if (ok) return {std::move(lower), jitter};
  }
  throw NotPositiveDefinite("matrix is not positive definite after " +
                            std::to_string(schedule.max_attempts) +
                            " jitter levels");
}

namespace {

QuadratureRule golub_welsch(int order) {
  // Jacobi matrix of the Hermite recurrence: off-diagonals sqrt(k / 2).
  Matrix jacobi = Matrix::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double beta = std::sqrt(0.5 * k);
    jacobi(k, k - 1) = beta;
    jacobi(k - 1, k) = beta;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(jacobi);
  if (eig.info() != Eigen::Success) {
    throw ConvergenceError("Golub-Welsch eigen-solve failed");
  }
  QuadratureRule rule;
  rule.nodes = eig.eigenvalues();
  rule.weights = kSqrtPi * eig.eigenvectors().row(0).transpose().array().square();
  // Enforce exact symmetry about zero.
  for (int i = 0; i < order / 2; ++i) {
    const int j = order - 1 - i;
    const double x = 0.5 * (rule.nodes(j) - rule.nodes(i));
    const double w = 0.5 * (rule.weights(i) + rule.weights(j));
    rule.nodes(i) = -x;
    rule.nodes(j) = x;
    rule.weights(i) = w;
    rule.weights(j) = w;
  }
  if (order % 2 == 1) rule.nodes(order / 2) = 0.0;
  rule.weights *= kSqrtPi / rule.weights.sum();
  return rule;
}

}  // namespace

const QuadratureRule& gh_nodes(int order) {
  if (order < 2) throw UsageError("Gauss-Hermite order must be >= 2");
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<QuadratureRule>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[order];
  if (!slot) slot = std::make_unique<QuadratureRule>(golub_welsch(order));
  return *slot;
}

double expect_gh(const std::function<double(double)>& h, double mean,
                 double variance, const QuadratureRule& rule) {
  if (variance < 0.0) throw UsageError("expect_gh: negative variance");
  const double scale = std::sqrt(2.0 * variance);
  double total = 0.0;
  for (int q = 0; q < rule.order(); ++q) {
    total += rule.weights(q) / kSqrtPi * h(mean + scale * rule.nodes(q));
  }
  return total;
}

double kl_gaussians(const Vector& m1, const Matrix& s1, const Vector& m2,
                    const Matrix& s2) {
  const Eigen::Index k = m1.size();
  if (m2.size() != k || s1.rows() != k || s1.cols() != k || s2.rows() != k ||
      s2.cols() != k) {
    throw UsageError("kl_gaussians: dimension mismatch");
  }
  const Matrix l1 = cholesky_jittered(s1).lower;
  const Matrix l2 = cholesky_jittered(s2).lower;
  const auto l2v = l2.triangularView<Eigen::Lower>();
  const Matrix trace_term = l2v.solve(l1);
  const Vector diff = l2v.solve(m2 - m1);
  const double logdet1 = 2.0 * l1.diagonal().array().log().sum();
  const double logdet2 = 2.0 * l2.diagonal().array().log().sum();
  return 0.5 * (trace_term.squaredNorm() + diff.squaredNorm() -
                static_cast<double>(k) + logdet2 - logdet1);
}

double logsumexp(std::span<const double> values) {
  if (values.empty()) throw UsageError("logsumexp of an empty list");
  const double top = *std::max_element(values.begin(), values.end());
  if (std::isinf(top)) return top;
  double total = 0.0;
  for (double v : values) total += std::exp(v - top);
  return top + std::log(total);
}

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw RangeError("softplus inverse needs a positive value");
  return y + std::log(-std::expm1(-y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

namespace {

// 1 - 1/x^2 + 3/x^4 - 15/x^6 + 105/x^8: Mills-ratio series for x << 0.
double mills_series(double x) {
  const double r = 1.0 / (x * x);
  return 1.0 + r * (-1.0 + r * (3.0 + r * (-15.0 + r * 105.0)));
}

constexpr double kTailCut = -20.0;

}  // namespace

double log_normal_cdf(double x) {
  if (x > 0.0) return std::log1p(-0.5 * std::erfc(x / std::sqrt(2.0)));
  if (x > kTailCut) return std::log(0.5 * std::erfc(-x / std::sqrt(2.0)));
  return -0.5 * x * x - std::log(-x) - 0.5 * kLogTwoPi +
         std::log(mills_series(x));
}

double normal_hazard_ratio(double x) {
  if (x > kTailCut) {
    return std::exp(-0.5 * x * x - 0.5 * kLogTwoPi - log_normal_cdf(x));
  }
  return -x / mills_series(x);
}

double normal_log_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (kLogTwoPi + std::log(variance) + d * d / variance);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw UsageError("normal_quantile needs 0 < p < 1");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

}  // namespace tgp
