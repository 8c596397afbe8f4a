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

#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"
#include "tgp/errors.hpp"
#include "tgp/sparse_gp.hpp"

namespace tgp {
namespace {

using testing::random_matrix;
using testing::RunningStats;

GpPrior rbf_prior(int dim, double variance, double lengthscale) {
  GpPrior p;
  p.kernel = KernelConfig::rbf_ard(dim);
  KernelInit init;
  init.variance = variance;
  init.lengthscale = lengthscale;
  p.kernel_raw = kernel_init_raw(p.kernel, init);
  return p;
}

Matrix kzz_of(const GpPrior& p, const Matrix& z) {
  return kernel_matrix_self(p.kernel, p.kernel_raw, z);
}

TEST(KMeans, EachPointOwnCentroidWhenMEqualsN) {
  std::mt19937_64 rng(1);
  Matrix x = random_matrix(rng, 12, 2);
  KMeansResult r = kmeans(x, 12, 3, 7);
  EXPECT_NEAR(r.wcss, 0.0, 1e-24);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    EXPECT_NEAR((r.centroids.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(), 0.0,
                1e-24);
  }
}

TEST(KMeans, SeparatedClustersRecoverMeans) {
  std::mt19937_64 rng(2);
  Matrix x(100, 2);
  x.topRows(50) = random_matrix(rng, 50, 2, 0.3);
  x.bottomRows(50) = random_matrix(rng, 50, 2, 0.3).rowwise() + Eigen::RowVector2d(20.0, -15.0);
  Eigen::RowVectorXd m1 = x.topRows(50).colwise().mean();
  Eigen::RowVectorXd m2 = x.bottomRows(50).colwise().mean();
  Matrix c = init_inducing_kmeans(x, 2, 10, 3);
  const double d1 = std::min((c.row(0) - m1).norm(), (c.row(1) - m1).norm());
  const double d2 = std::min((c.row(0) - m2).norm(), (c.row(1) - m2).norm());
  EXPECT_LT(d1, 1e-6);
  EXPECT_LT(d2, 1e-6);
}

TEST(KMeans, MoreRunsNeverWorse) {
  std::mt19937_64 rng(3);
  Matrix x = random_matrix(rng, 200, 3);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_LE(kmeans(x, 8, 10, seed).wcss, kmeans(x, 8, 1, seed).wcss + 1e-12);
  }
}

TEST(KMeans, DeterministicGivenSeed) {
  std::mt19937_64 rng(4);
  Matrix x = random_matrix(rng, 60, 2);
  EXPECT_EQ(init_inducing_kmeans(x, 5, 4, 11), init_inducing_kmeans(x, 5, 4, 11));
}

TEST(KMeans, TooManyCentroidsRejected) {
  Matrix x = Matrix::Zero(3, 1);
  EXPECT_THROW(init_inducing_kmeans(x, 4, 1, 0), UsageError);
  EXPECT_THROW(init_inducing_kmeans(x, 2, 0, 0), UsageError);
}

TEST(InducingState, InitialIsSmallIsotropic) {
  Matrix z = Matrix::Zero(3, 2);
  InducingState s = InducingState::initial(z);
  EXPECT_TRUE(s.whitened);
  EXPECT_EQ(s.m, Vector::Zero(3));
  EXPECT_TRUE(s.s().isApprox(1e-5 * Matrix::Identity(3, 3), 1e-14));
  EXPECT_THROW(InducingState::initial(Matrix(0, 2)), UsageError);
}

TEST(InducingState, PackUnpackRoundTrip) {
  std::mt19937_64 rng(5);
  Matrix l = random_matrix(rng, 4, 4).triangularView<Eigen::Lower>();
  EXPECT_EQ(unpack_lower(pack_lower(l), 4), l);
  std::vector<int> idx = lower_gather_index(3, 2);
  EXPECT_EQ(idx, (std::vector<int>{2, 3, 4, -1, 5, 6, -1, -1, 7}));
}

TEST(QF0, PriorRecoveryUnwhitened) {
  std::mt19937_64 rng(6);
  GpPrior p = rbf_prior(2, 1.7, 0.9);
  Matrix z = random_matrix(rng, 5, 2);
  Matrix x = random_matrix(rng, 7, 2);
  InducingState q = InducingState::initial(z, false);
  q.s_factor = cholesky_jittered(kzz_of(p, z), p.jitter).lower;
  Marginals mg = q_f0_marginals(p, q, x);
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    EXPECT_NEAR(mg.mean(n), 0.0, 1e-12);
    EXPECT_NEAR(mg.variance(n), 1.7, 1e-7);
  }
  JointGaussian j = q_f0_joint(p, q, x);
  EXPECT_LT((j.cov - kernel_matrix_self(p.kernel, p.kernel_raw, x)).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_NEAR(kl_inducing(p, q), 0.0, 1e-10);
}

TEST(QF0, PriorRecoveryWhitened) {
  std::mt19937_64 rng(7);
  GpPrior p = rbf_prior(1, 0.8, 1.3);
  Matrix z = random_matrix(rng, 4, 1);
  Matrix x = random_matrix(rng, 6, 1);
  InducingState q = InducingState::initial(z, true);
  q.s_factor.setIdentity();
  Marginals mg = q_f0_marginals(p, q, x);
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    EXPECT_NEAR(mg.mean(n), 0.0, 1e-12);
    EXPECT_NEAR(mg.variance(n), 0.8, 1e-7);
  }
  EXPECT_NEAR(kl_inducing(p, q), 0.0, 1e-10);
}

TEST(QF0, SelfConditioning) {
  GpPrior p = rbf_prior(1, 1.0, 1.0);
  InducingState q = InducingState::initial(Matrix::Zero(1, 1), false);
  q.m(0) = 0.5;
  q.s_factor(0, 0) = 0.1;
  Marginals mg = q_f0_marginals(p, q, Matrix::Zero(1, 1));
  EXPECT_NEAR(mg.mean(0), 0.5, 1e-7);
  EXPECT_NEAR(mg.variance(0), 0.01, 1e-7);
}

// Oracle: form the joint prior over (f, u), condition f on u by a dense
// solve, then mix over q(u) by Monte Carlo.
TEST(QF0, MatchesBruteForceConditioning) {
  std::mt19937_64 rng(8);
  GpPrior p = rbf_prior(2, 1.2, 1.1);
  const int m = 4;
  const int n = 6;
  Matrix z = random_matrix(rng, m, 2);
  Matrix x = random_matrix(rng, n, 2);
  InducingState q = InducingState::initial(z, false);
  q.m = random_matrix(rng, m, 1).col(0);
  q.s_factor = (0.5 * random_matrix(rng, m, m)).triangularView<Eigen::Lower>();
  q.s_factor.diagonal() = q.s_factor.diagonal().cwiseAbs().array() + 0.1;

  Matrix xz(n + m, 2);
  xz << x, z;
  Matrix joint = kernel_matrix_self(p.kernel, p.kernel_raw, xz);
  joint.bottomRightCorner(m, m).diagonal().array() += 1e-8;
  Matrix kuu = joint.bottomRightCorner(m, m);
  Matrix kfu = joint.topRightCorner(n, m);
  Matrix gain = kuu.fullPivLu().solve(kfu.transpose()).transpose();
  Matrix cond = joint.topLeftCorner(n, n) - gain * kfu.transpose();

  Marginals mg = q_f0_marginals(p, q, x);
  std::normal_distribution<double> g;
  const long draws = 1000000;
  std::vector<RunningStats> mean_stats(n), var_stats(n);
  Vector eps(m);
  for (long s = 0; s < draws; ++s) {
    for (int i = 0; i < m; ++i) eps(i) = g(rng);
    Vector u = q.m + q.s_factor * eps;
    Vector fm = gain * u;
    for (int i = 0; i < n; ++i) {
      const double f = fm(i) + std::sqrt(std::max(cond(i, i), 0.0)) * g(rng);
      mean_stats[i].add(f);
      var_stats[i].add((f - mg.mean(i)) * (f - mg.mean(i)));
    }
  }
  for (int i = 0; i < n; ++i) {
    EXPECT_NEAR(mg.mean(i), mean_stats[i].mean(), 3.0 * mean_stats[i].std_error());
    EXPECT_NEAR(mg.variance(i), var_stats[i].mean(), 3.0 * var_stats[i].std_error());
  }
}

TEST(QF0, WhitenedMatchesUnwhitenedReparameterization) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    GpPrior p = rbf_prior(2, 0.5 + trial * 0.3, 0.7 + trial * 0.2);
    const int m = 3 + trial;
    Matrix z = random_matrix(rng, m, 2);
    Matrix x = random_matrix(rng, 5, 2);
    InducingState wh = InducingState::initial(z, true);
    wh.m = random_matrix(rng, m, 1).col(0);
    wh.s_factor = (0.4 * random_matrix(rng, m, m)).triangularView<Eigen::Lower>();
    wh.s_factor.diagonal() = wh.s_factor.diagonal().cwiseAbs().array() + 0.2;
    Matrix l = cholesky_jittered(kzz_of(p, z), p.jitter).lower;
    InducingState un = wh;
    un.whitened = false;
    un.m = l * wh.m;
    un.s_factor = l * wh.s_factor;
    EXPECT_NEAR(kl_inducing(p, wh), kl_inducing(p, un), 1e-10);
    Marginals a = q_f0_marginals(p, wh, x);
    Marginals b = q_f0_marginals(p, un, x);
    EXPECT_LT((a.mean - b.mean).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((a.variance - b.variance).cwiseAbs().maxCoeff(), 1e-9);
    // Closed-form Gaussian KL agrees up to the jitter it adds to S itself.
    const double closed = kl_gaussians(un.m, un.s(), Vector::Zero(m), kzz_of(p, z));
    EXPECT_NEAR(kl_inducing(p, un), closed, 1e-5 * std::abs(closed));
  }
}

TEST(QF0, KlNonNegative) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    GpPrior p = rbf_prior(1, 1.0, 0.5 + 0.05 * trial);
    const int m = 1 + trial % 6;
    InducingState q = InducingState::initial(random_matrix(rng, m, 1), trial % 2 == 0);
    q.m = random_matrix(rng, m, 1, 0.1 * (trial % 3)).col(0);
    q.s_factor = (0.3 * random_matrix(rng, m, m)).triangularView<Eigen::Lower>();
    q.s_factor.diagonal() = q.s_factor.diagonal().cwiseAbs().array() + 1e-3;
    EXPECT_GE(kl_inducing(p, q), -1e-10);
  }
}

TEST(QF0, TightInducingPointAtInputShrinksVariance) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    GpPrior p = rbf_prior(1, 1.0, 0.8);
    const int m = 3;
    Matrix z = random_matrix(rng, m, 1);
    Matrix x = random_matrix(rng, 4, 1);
    InducingState q = InducingState::initial(z, false);
    q.m = random_matrix(rng, m, 1).col(0);
    q.s_factor = (0.5 * random_matrix(rng, m, m)).triangularView<Eigen::Lower>();
    q.s_factor.diagonal() = q.s_factor.diagonal().cwiseAbs().array() + 0.05;
    const Vector before = q_f0_marginals(p, q, x).variance;
    for (int nidx = 0; nidx < x.rows(); ++nidx) {
      InducingState q2 = q;
      q2.z.conservativeResize(m + 1, 1);
      q2.z(m, 0) = x(nidx, 0);
      q2.m.conservativeResize(m + 1);
      q2.m(m) = 0.0;
      q2.s_factor = Matrix::Zero(m + 1, m + 1);
      q2.s_factor.topLeftCorner(m, m) = q.s_factor;
      q2.s_factor(m, m) = 1e-4;
      const double after = q_f0_marginals(p, q2, x).variance(nidx);
      EXPECT_LE(after, before(nidx) + 1e-10);
    }
  }
}

TEST(QF0, IllConditionedKernelRaises) {
  GpPrior p = rbf_prior(1, 1.0, 1.0);
  p.jitter.initial = 1e-300;
  p.jitter.escalated = 1e-300;
  Matrix z = Matrix::Zero(3, 1);
  InducingState q = InducingState::initial(z, true);
  q.s_factor.setIdentity();
  EXPECT_THROW(kl_inducing(p, q), NotPositiveDefinite);
}

}  // namespace
}  // namespace tgp
