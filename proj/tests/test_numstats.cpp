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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "test_util.hpp"
#include "tgp/autodiff.hpp"
#include "tgp/errors.hpp"

namespace tgp {
namespace {

using testing::random_matrix;
using testing::random_spd;

TEST(CholeskyJittered, IdentityUsesInitialJitter) {
  JitteredCholesky c = cholesky_jittered(Matrix::Identity(3, 3));
  EXPECT_DOUBLE_EQ(c.jitter, 1e-8);
  EXPECT_LT((c.lower - std::sqrt(1.0 + 1e-8) * Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(),
            1e-15);
}

TEST(CholeskyJittered, NearSingularReconstructs) {
  Matrix a(2, 2);
  a << 4.0, 2.0, 2.0, 1.0000001;
  JitteredCholesky c = cholesky_jittered(a);
  Matrix r = c.lower * c.lower.transpose() - a - c.jitter * Matrix::Identity(2, 2);
  EXPECT_LT(r.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CholeskyJittered, IndefiniteThrows) {
  Matrix a(2, 2);
  a << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(cholesky_jittered(a), NotPositiveDefinite);
}

TEST(CholeskyJittered, ResidualBoundOnRandomSpd) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 2 + rep % 9;
    Matrix a = random_spd(rng, n) * std::exp(rep % 5 - 2.0);
    JitteredCholesky c = cholesky_jittered(a);
    Matrix r = c.lower * c.lower.transpose() - a - c.jitter * Matrix::Identity(n, n);
    EXPECT_LE(r.cwiseAbs().maxCoeff(), 1e-10 * a.cwiseAbs().maxCoeff());
  }
}

TEST(JitterSchedule, InvalidRejected) {
  JitterSchedule s;
  s.initial = 1e-4;
  s.escalated = 1e-6;
  EXPECT_THROW(s.validate(), UsageError);
  s.initial = 0.0;
  EXPECT_THROW(s.validate(), UsageError);
}

TEST(GaussHermite, OrderTwoClosedForm) {
  const QuadratureRule& r = gh_nodes(2);
  ASSERT_EQ(r.order(), 2);
  EXPECT_NEAR(std::abs(r.nodes(0)), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(r.nodes(0), -r.nodes(1), 1e-15);
  EXPECT_NEAR(r.weights(0), kSqrtPi / 2.0, 1e-15);
  EXPECT_NEAR(r.weights(1), kSqrtPi / 2.0, 1e-15);
}

TEST(GaussHermite, FourthMoment) {
  const QuadratureRule& r = gh_nodes(5);
  double m4 = 0.0;
  for (int q = 0; q < 5; ++q) m4 += r.weights(q) * std::pow(r.nodes(q), 4);
  EXPECT_NEAR(m4 / kSqrtPi, 0.75, 1e-14);
}

TEST(GaussHermite, WeightsSumAndSymmetry) {
  for (int q : {2, 3, 7, 20, 51, 100}) {
    const QuadratureRule& r = gh_nodes(q);
    EXPECT_NEAR(r.weights.sum(), kSqrtPi, 1e-12) << q;
    for (int i = 0; i < q; ++i) {
      EXPECT_NEAR(r.nodes(i), -r.nodes(q - 1 - i), 1e-12) << q;
    }
  }
}

TEST(GaussHermite, PolynomialExactness) {
  // Moments of N(0, 1/2): E[x^{2k}] = (2k-1)!! / 2^k.
  for (int q : {3, 10, 20}) {
    const QuadratureRule& r = gh_nodes(q);
    double dfact = 1.0;
    for (int k = 1; 2 * k <= 2 * q - 1; ++k) {
      dfact *= (2 * k - 1);
      double m = 0.0;
      for (int i = 0; i < q; ++i) m += r.weights(i) * std::pow(r.nodes(i), 2 * k);
      const double expect = dfact / std::pow(2.0, k);
      EXPECT_NEAR(m / kSqrtPi, expect, 1e-9 * expect) << q << " " << k;
    }
  }
}

TEST(GaussHermite, OrderBelowTwoRejected) {
  EXPECT_THROW(gh_nodes(1), UsageError);
}

TEST(ExpectGh, IdentityAndSquare) {
  const QuadratureRule& r = gh_nodes(2);
  EXPECT_NEAR(expect_gh([](double x) { return x; }, 1.3, 0.7, r), 1.3, 1e-14);
  EXPECT_NEAR(expect_gh([](double x) { return x * x; }, 0.0, 1.0, r), 1.0, 1e-14);
  EXPECT_THROW(expect_gh([](double x) { return x; }, 0.0, -1.0, r), UsageError);
}

TEST(ExpectGh, SoftplusAgainstDenseTrapezoid) {
  const double got = expect_gh([](double x) { return softplus(x); }, 0.0, 1.0, gh_nodes(100));
  const int n = 1000000;
  const double lo = -10.0;
  const double h = 20.0 / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double f = softplus(x) * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    acc += (i == 0 || i == n) ? 0.5 * f : f;
  }
  EXPECT_NEAR(got, acc * h, 1e-8);
}

TEST(ExpectGh, InvariantToNodeOrder) {
  QuadratureRule r = gh_nodes(20);
  auto h = [](double x) { return std::sin(x) + x * x * std::exp(-x * x / 5.0); };
  const double base = expect_gh(h, 0.4, 1.7, r);
  std::mt19937_64 rng(5);
  std::vector<int> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  QuadratureRule shuffled = r;
  for (int i = 0; i < 20; ++i) {
    shuffled.nodes(i) = r.nodes(perm[i]);
    shuffled.weights(i) = r.weights(perm[i]);
  }
  EXPECT_NEAR(expect_gh(h, 0.4, 1.7, shuffled), base, 1e-14);
}

TEST(KlGaussians, IdenticalIsZero) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 1 + rep % 6;
    Matrix s = random_spd(rng, n);
    Vector m = random_matrix(rng, n, 1);
    EXPECT_NEAR(kl_gaussians(m, s, m, s), 0.0, 1e-10);
  }
}

TEST(KlGaussians, OneDimensionalShift) {
  Vector m1(1), m2(1);
  m1 << 1.0;
  m2 << 0.0;
  Matrix s = Matrix::Identity(1, 1);
  EXPECT_NEAR(kl_gaussians(m1, s, m2, s), 0.5, 1e-8);
}

TEST(KlGaussians, MonteCarloOracle) {
  // KL[N(0, I2) || N(0, 2 I2)] by averaging log q - log p over samples of q.
  Vector z = Vector::Zero(2);
  Matrix s1 = Matrix::Identity(2, 2);
  Matrix s2 = 2.0 * Matrix::Identity(2, 2);
  const double exact = kl_gaussians(z, s1, z, s2);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  testing::RunningStats st;
  for (int i = 0; i < 10000000; ++i) {
    const double a = n01(rng);
    const double b = n01(rng);
    const double r2 = a * a + b * b;
    // log N(x;0,I) - log N(x;0,2I) = -r2/2 + r2/4 + log 2
    st.add(-0.25 * r2 + std::log(2.0));
  }
  EXPECT_NEAR(exact, st.mean(), 3.0 * st.std_error());
  EXPECT_NEAR(exact, std::log(2.0) - 0.5, 1e-8);
}

TEST(KlGaussians, DimensionMismatch) {
  EXPECT_THROW(kl_gaussians(Vector::Zero(2), Matrix::Identity(2, 2), Vector::Zero(3),
                            Matrix::Identity(3, 3)),
               UsageError);
}

TEST(KlGaussians, NonNegativeAndDifferentiable) {
  std::mt19937_64 rng(10);
  for (int rep = 0; rep < 20; ++rep) {
    Matrix s1 = random_spd(rng, 3);
    Matrix s2 = random_spd(rng, 3);
    Vector m1 = random_matrix(rng, 3, 1);
    Vector m2 = random_matrix(rng, 3, 1);
    EXPECT_GE(kl_gaussians(m1, s1, m2, s2), -1e-10);
  }
  // The same closed form on the tape passes the finite-difference oracle.
  Matrix s1 = random_spd(rng, 3);
  Matrix s2 = random_spd(rng, 3);
  std::vector<double> p(s1.data(), s1.data() + 9);
  p.insert(p.end(), s2.data(), s2.data() + 9);
  for (int i = 0; i < 6; ++i) p.push_back(0.3 * (i - 2));
  ad::Objective obj = [](ad::Tape&, const ad::Var& v) {
    using namespace ad;
    JitterState j;
    Var a = slice(v, 0, 3, 3);
    Var b = slice(v, 9, 3, 3);
    Var l1 = cholesky(0.5 * (a + transpose(a)), j);
    Var l2 = cholesky(0.5 * (b + transpose(b)), j);
    Var d = slice(v, 18, 3) - slice(v, 21, 3);
    Var tr = sum(square(solve_lower(l2, l1)));
    Var quad = sum(square(solve_lower(l2, d)));
    Var logdet = 2.0 * (sum(log(diagonal(l2))) - sum(log(diagonal(l1))));
    return 0.5 * (tr + quad - 3.0 + logdet);
  };
  Matrix a = s1;
  Matrix b = s2;
  ad::Tape t;
  const double tape_kl = ad::forward(t, obj, p);
  EXPECT_NEAR(tape_kl,
              kl_gaussians(Vector(Eigen::Map<Vector>(p.data() + 18, 3)), a,
                           Vector(Eigen::Map<Vector>(p.data() + 21, 3)), b),
              1e-6);
  EXPECT_LT(ad::finite_diff_check(obj, p), 1e-6);
}

TEST(LogSumExp, Basics) {
  std::vector<double> z = {0.0, 0.0};
  EXPECT_NEAR(logsumexp(z), std::log(2.0), 1e-15);
  std::vector<double> big = {1000.0, 1000.0};
  EXPECT_NEAR(logsumexp(big), 1000.0 + std::log(2.0), 1e-12);
  EXPECT_THROW(logsumexp(std::vector<double>{}), UsageError);
}

TEST(LogSumExp, MatchesNaive) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n01;
  std::vector<double> v(100);
  double naive = 0.0;
  for (double& x : v) {
    x = n01(rng);
    naive += std::exp(x);
  }
  EXPECT_NEAR(logsumexp(v), std::log(naive), 1e-12);
}

TEST(Scalars, SoftplusRoundTrip) {
  for (double y : {1e-8, 0.05, 0.6931, 2.0, 40.0, 1e3}) {
    EXPECT_NEAR(softplus(softplus_inverse(y)), y, 1e-12 * std::max(1.0, y));
  }
  EXPECT_GT(softplus(-40.0), 0.0);
  EXPECT_THROW(softplus_inverse(0.0), RangeError);
}

TEST(Scalars, NormalFunctions) {
  EXPECT_NEAR(normal_cdf(0.0), 0.5, 1e-16);
  EXPECT_NEAR(log_normal_cdf(-40.0), std::log(normal_cdf(-10.0)) * 0 - 804.608442013754, 1e-6);
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(normal_quantile(normal_cdf(-3.3)), -3.3, 1e-10);
  EXPECT_NEAR(normal_log_pdf(0.0, 0.0, 1.0), -0.5 * kLogTwoPi, 1e-15);
  for (double x : {-30.0, -5.0, 0.0, 3.0}) {
    const double h = 1e-5;
    const double fd = (log_normal_cdf(x + h) - log_normal_cdf(x - h)) / (2 * h);
    EXPECT_NEAR(normal_hazard_ratio(x), fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

}  // namespace
}  // namespace tgp
