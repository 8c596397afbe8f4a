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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"
#include "tgp/errors.hpp"

namespace tgp {
namespace {

using testing::random_matrix;

Vector raw_of(std::initializer_list<double> constrained) {
  Vector c(static_cast<Eigen::Index>(constrained.size()));
  int i = 0;
  for (double v : constrained) c(i++) = v;
  return unconstrain(c);
}

TEST(Rbf, UnitDiagonal) {
  std::mt19937_64 rng(1);
  Matrix x = random_matrix(rng, 6, 2);
  Matrix k = kernel_matrix_self(KernelConfig::rbf_ard(2), raw_of({1.0, 0.3, 4.0}), x);
  for (int i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(k(i, i), 1.0);
}

TEST(Rbf, PlugIn) {
  Matrix a(1, 1), b(1, 1);
  a << 0.0;
  b << std::sqrt(2.0);
  Matrix k = kernel_matrix(KernelConfig::rbf_ard(1), raw_of({1.0, 1.0}), a, b);
  EXPECT_NEAR(k(0, 0), std::exp(-1.0), 1e-12);
}

TEST(Periodic, OnePeriodApart) {
  Matrix a(1, 1), b(1, 1);
  a << 0.3;
  b << 0.3 + 0.7;
  Matrix k = kernel_matrix(KernelConfig::periodic(1), raw_of({1.7, 0.4, 0.7}), a, b);
  EXPECT_NEAR(k(0, 0), 1.7, 1e-12);
}

TEST(Periodic, MatchesClosedForm) {
  Matrix a(1, 1), b(1, 1);
  a << 0.1;
  b << 0.45;
  Matrix k = kernel_matrix(KernelConfig::periodic(1), raw_of({1.3, 0.5, 0.9}), a, b);
  const double s = std::sin(M_PI * 0.35 / 0.9);
  EXPECT_NEAR(k(0, 0), 1.3 * std::exp(-2.0 * s * s / 0.25), 1e-12);
}

TEST(WhiteNoise, OnlyOnSelfCovariance) {
  KernelConfig sum = KernelConfig::sum({KernelConfig::rbf_ard(1), KernelConfig::white_noise(1)});
  Vector raw = raw_of({1.0, 1.0, 0.25});
  Matrix x(3, 1);
  x << 0.0, 0.0, 1.0;  // two equal coordinates with different indices
  Matrix self = kernel_matrix_self(sum, raw, x);
  EXPECT_NEAR(self(0, 0), 1.25, 1e-12);
  EXPECT_NEAR(self(0, 1), 1.0, 1e-12);
  Matrix cross = kernel_matrix(sum, raw, x, x);
  EXPECT_NEAR(cross(0, 0), 1.0, 1e-12);
  ad::Tape t;
  ad::Var d = kernel_diag(sum, t.constant(Matrix(raw)), t.constant(x));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(d.value()(i, 0), self(i, i), 1e-15);
}

TEST(Constrain, RoundTrip) {
  Vector z = Vector::Zero(1);
  EXPECT_NEAR(constrain(z)(0), std::log(2.0), 1e-15);
  Vector two = Vector::Constant(1, 2.0);
  EXPECT_NEAR(constrain(unconstrain(two))(0), 2.0, 1e-12);
  Vector neg = Vector::Constant(1, -40.0);
  EXPECT_GT(constrain(neg)(0), 0.0);
  std::mt19937_64 rng(2);
  Vector v = random_matrix(rng, 20, 1, 3.0);
  EXPECT_LT((unconstrain(constrain(v)) - v).cwiseAbs().maxCoeff(), 1e-9);
  Vector c = v.cwiseAbs().array() + 0.01;
  EXPECT_LT((constrain(unconstrain(c)) - c).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Kernels, SymmetricAndPsd) {
  std::mt19937_64 rng(3);
  std::vector<KernelConfig> configs = {
      KernelConfig::rbf_ard(2), KernelConfig::periodic(2),
      KernelConfig::sum({KernelConfig::rbf_ard(2), KernelConfig::periodic(2),
                         KernelConfig::white_noise(2)})};
  for (const auto& cfg : configs) {
    for (int rep = 0; rep < 50; ++rep) {
      const int n = 1 + rep % 20;
      Matrix x = random_matrix(rng, n, 2);
      Vector raw = random_matrix(rng, cfg.param_count(), 1);
      Matrix k = kernel_matrix_self(cfg, raw, x);
      EXPECT_LT((k - k.transpose()).cwiseAbs().maxCoeff(), 1e-12);
      Eigen::SelfAdjointEigenSolver<Matrix> es(k);
      EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
    }
  }
}

TEST(Rbf, ArdWithEqualLengthscalesIsIsotropic) {
  std::mt19937_64 rng(4);
  Matrix a = random_matrix(rng, 5, 3);
  Matrix b = random_matrix(rng, 4, 3);
  Matrix k = kernel_matrix(KernelConfig::rbf_ard(3), raw_of({1.5, 0.8, 0.8, 0.8}), a, b);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j)
      EXPECT_NEAR(k(i, j), 1.5 * std::exp(-0.5 * (a.row(i) - b.row(j)).squaredNorm() / 0.64),
                  1e-12);
}

TEST(Kernels, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  KernelConfig cfg = KernelConfig::sum({KernelConfig::rbf_ard(2), KernelConfig::periodic(2),
                                        KernelConfig::white_noise(2)});
  Matrix x = random_matrix(rng, 4, 2);
  Matrix w = random_matrix(rng, 4, 3);
  Vector p(cfg.param_count() + 6);
  p << random_matrix(rng, cfg.param_count(), 1), random_matrix(rng, 6, 1);
  ad::Objective obj = [&](ad::Tape& t, const ad::Var& v) {
    ad::Var raw = ad::slice(v, 0, cfg.param_count());
    ad::Var z = ad::slice(v, cfg.param_count(), 3, 2);
    ad::Var xs = t.constant(x);
    return ad::sum(kernel_cross(cfg, raw, xs, z) * t.constant(w)) +
           ad::sum(kernel_self(cfg, raw, z)) + ad::sum(kernel_diag(cfg, raw, xs));
  };
  EXPECT_LE(ad::finite_diff_check(obj, testing::to_std(p)), 1e-6);
}

TEST(Kernels, Errors) {
  Matrix x = Matrix::Zero(2, 2);
  EXPECT_THROW(kernel_matrix_self(KernelConfig::rbf_ard(1), raw_of({1.0, 1.0}), x), UsageError);
  Vector bad = raw_of({1.0, 1.0, 1.0});
  bad(1) = std::nan("");
  EXPECT_THROW(kernel_matrix_self(KernelConfig::rbf_ard(2), bad, x), UsageError);
}

TEST(Mean, Constant) {
  ad::Tape t;
  Matrix c(1, 1);
  c << -0.7;
  ad::Var m = mean_values(MeanConfig{MeanFamily::kConstant}, t, t.constant(c), 3);
  EXPECT_EQ(m.rows(), 3);
  EXPECT_DOUBLE_EQ(m.value()(2, 0), -0.7);
  ad::Var z = mean_values(MeanConfig{}, t, ad::Var(), 2);
  EXPECT_DOUBLE_EQ(z.value().sum(), 0.0);
}

}  // namespace
}  // namespace tgp
