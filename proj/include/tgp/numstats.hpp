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

#include <functional>
#include <span>

namespace tgp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Diagonal jitter levels tried, in order, when a Cholesky factorization
/// fails: initial, escalated, then escalated * 10^k for the remaining
/// attempts.
struct JitterSchedule {
  double initial = 1e-8;
  double escalated = 1e-6;
  int max_attempts = 2;

  double level(int attempt) const;
  void validate() const;
};

struct JitteredCholesky {
  Matrix lower;
  double jitter = 0.0;
};

/// Factor A + jitter * I with the smallest schedule jitter that succeeds.
/// Only the lower triangle of A is read.
JitteredCholesky cholesky_jittered(const Matrix& a,
                                   const JitterSchedule& schedule = {});

/// Physicists' Gauss-Hermite rule for the weight exp(-x^2).
struct QuadratureRule {
  Vector nodes;
  Vector weights;

  int order() const { return static_cast<int>(nodes.size()); }
};

/// Nodes and weights by Golub-Welsch, cached per order. Thread safe.
const QuadratureRule& gh_nodes(int order);

/// E_{N(mean, variance)}[h] by Gauss-Hermite quadrature.
double expect_gh(const std::function<double(double)>& h, double mean,
                 double variance, const QuadratureRule& rule);

/// KL[N(m1, s1) || N(m2, s2)] from Cholesky log-determinants.
double kl_gaussians(const Vector& m1, const Matrix& s1, const Vector& m2,
                    const Matrix& s2);

double logsumexp(std::span<const double> values);

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
inline constexpr double kSqrtPi = 1.7724538509055160272981674833411;

double softplus(double x);
/// Inverse of softplus on (0, inf).
double softplus_inverse(double y);
double sigmoid(double x);
double normal_cdf(double x);
/// log Phi(x), accurate far into the lower tail.
double log_normal_cdf(double x);
/// phi(x) / Phi(x) without overflow.
double normal_hazard_ratio(double x);
double normal_log_pdf(double x, double mean, double variance);
double normal_quantile(double p);

}  // namespace tgp
