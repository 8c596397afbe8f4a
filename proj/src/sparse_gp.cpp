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

#include "tgp/sparse_gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "tgp/errors.hpp"

namespace tgp {

using ad::Var;

InducingState InducingState::initial(const Matrix& z, bool whitened) {
  const auto m = z.rows();
  if (m < 1) throw UsageError("need at least one inducing point");
  return {z, Vector::Zero(m), std::sqrt(1e-5) * Matrix::Identity(m, m), whitened};
}

Vector pack_lower(const Matrix& lower) {
  const auto n = lower.rows();
  Vector out(n * (n + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j; i < n; ++i) out(k++) = lower(i, j);
  return out;
}

Matrix unpack_lower(const Vector& packed, int n) {
  if (packed.size() != static_cast<Eigen::Index>(n) * (n + 1) / 2) {
    throw UsageError("packed lower triangle has the wrong length");
  }
  Matrix out = Matrix::Zero(n, n);
  Eigen::Index k = 0;
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i) out(i, j) = packed(k++);
  return out;
}

std::vector<int> lower_gather_index(int n, int offset) {
  std::vector<int> idx(static_cast<std::size_t>(n) * n, -1);
  int k = offset;
  for (int j = 0; j < n; ++j)
    for (int i = j; i < n; ++i) idx[static_cast<std::size_t>(i + j * n)] = k++;
  return idx;
}

namespace {

KMeansResult lloyd(const Matrix& x, int k, std::mt19937_64& rng) {
  const auto n = x.rows();
  Matrix c(k, x.cols());
  // k-means++ seeding
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  c.row(0) = x.row(pick(rng));
  Vector d2 = (x.rowwise() - c.row(0)).rowwise().squaredNorm();
  for (int j = 1; j < k; ++j) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2(i);
        if (r < 0.0 && d2(i) > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    c.row(j) = x.row(chosen);
    d2 = d2.cwiseMin((x.rowwise() - c.row(j)).rowwise().squaredNorm());
  }
  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best;
      (c.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (assign[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
        assign[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    Matrix sums = Matrix::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        c.row(j) = sums.row(j) / counts[static_cast<std::size_t>(j)];
      } else {
        // Empty cluster: move it to the point farthest from its centroid.
        Eigen::Index far = 0;
        double worst = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double d = (x.row(i) - c.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
          if (d > worst) {
            worst = d;
            far = i;
          }
        }
        c.row(j) = x.row(far);
      }
    }
  }
  double wcss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    wcss += (c.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff();
  }
  return {c, wcss};
}

}  // namespace

KMeansResult kmeans(const Matrix& x, int k, int runs, std::uint64_t seed) {
  if (k < 1) throw UsageError("k-means needs k >= 1");
  if (k > x.rows()) {
    throw UsageError("cannot place " + std::to_string(k) + " inducing points on " +
                     std::to_string(x.rows()) + " inputs");
  }
  if (runs < 1) throw UsageError("k-means needs at least one run");
  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.wcss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < runs; ++r) {
    KMeansResult res = lloyd(x, k, rng);
    if (res.wcss < best.wcss) best = std::move(res);
  }
  return best;
}

Matrix init_inducing_kmeans(const Matrix& x, int m, int runs, std::uint64_t seed) {
  return kmeans(x, m, runs, seed).centroids;
}

InducingFactor factor_inducing(const PriorVars& prior, const InducingVars& q,
                               ad::JitterState& jitter) {
  Var kzz = kernel_self(*prior.kernel, prior.kernel_raw, q.z);
  Var l = ad::cholesky(kzz, jitter);
  Var mz = mean_values(*prior.mean, *q.z.tape(), prior.mean_raw, q.z.rows());
  return {l, mz};
}

Projection project(const PriorVars& prior, const InducingVars& q, const InducingFactor& f,
                   const Var& x) {
  Var kzx = kernel_cross(*prior.kernel, prior.kernel_raw, q.z, x);
  Var w = ad::solve_lower(f.chol, kzx);
  Var p = q.whitened ? w : ad::solve_lower(f.chol, w, true);
  Var mx = mean_values(*prior.mean, *x.tape(), prior.mean_raw, x.rows());
  return {mx, w, p};
}

MarginalVars q_f0_marginals(const PriorVars& prior, const InducingVars& q,
                            const InducingFactor& f, const Var& x) {
  Projection pr = project(prior, q, f, x);
  Var shift = q.whitened ? q.m : q.m - f.mean_z;
  Var mean = pr.mean_x + ad::matmul(ad::transpose(pr.p), shift);
  Var kdiag = kernel_diag(*prior.kernel, prior.kernel_raw, x);
  Var reduced = ad::clamp_min(kdiag - ad::transpose(ad::sum(ad::square(pr.w), 0)), 0.0);
  Var added = ad::transpose(
      ad::sum(ad::square(ad::matmul(ad::transpose(q.s_factor), pr.p)), 0));
  return {mean, reduced + added};
}

Var kl_inducing(const InducingVars& q, const InducingFactor& f) {
  const double m = static_cast<double>(q.m.rows());
  Var logdet_s = 2.0 * ad::sum(ad::log(ad::abs(ad::diagonal(q.s_factor))));
  if (q.whitened) {
    return 0.5 * (ad::sum(ad::square(q.s_factor)) + ad::sum(ad::square(q.m)) - m - logdet_s);
  }
  Var tr = ad::sum(ad::square(ad::solve_lower(f.chol, q.s_factor)));
  Var quad = ad::sum(ad::square(ad::solve_lower(f.chol, q.m - f.mean_z)));
  Var logdet_k = 2.0 * ad::sum(ad::log(ad::diagonal(f.chol)));
  return 0.5 * (tr + quad - m + logdet_k - logdet_s);
}

namespace {

struct Bound {
  ad::Tape tape;
  PriorVars prior;
  InducingVars q;
  ad::JitterState jitter;
};

void bind(Bound& b, const GpPrior& prior, const InducingState& q) {
  if (q.m.size() != q.z.rows() || q.s_factor.rows() != q.z.rows() ||
      q.s_factor.cols() != q.z.rows()) {
    throw UsageError("inducing state shapes disagree");
  }
  ad::Tape& t = b.tape;
  b.prior.kernel = &prior.kernel;
  b.prior.kernel_raw = t.constant(Matrix(prior.kernel_raw));
  b.prior.mean = &prior.mean;
  b.prior.mean_raw = prior.mean_raw.size() ? t.constant(Matrix(prior.mean_raw)) : Var();
  Matrix lower = q.s_factor.triangularView<Eigen::Lower>();
  b.q = {t.constant(q.z), t.constant(Matrix(q.m)), t.constant(lower), q.whitened};
  b.jitter.schedule = prior.jitter;
}

}  // namespace

Marginals q_f0_marginals(const GpPrior& prior, const InducingState& q, const Matrix& x) {
  Bound b;
  bind(b, prior, q);
  InducingFactor f = factor_inducing(b.prior, b.q, b.jitter);
  MarginalVars mv = q_f0_marginals(b.prior, b.q, f, b.tape.constant(x));
  return {mv.mean.value().col(0), mv.variance.value().col(0)};
}

JointGaussian q_f0_joint(const GpPrior& prior, const InducingState& q, const Matrix& x) {
  Bound b;
  bind(b, prior, q);
  InducingFactor f = factor_inducing(b.prior, b.q, b.jitter);
  Var xv = b.tape.constant(x);
  Projection pr = project(b.prior, b.q, f, xv);
  Var shift = q.whitened ? b.q.m : b.q.m - f.mean_z;
  Vector mean = (pr.mean_x + ad::matmul(ad::transpose(pr.p), shift)).value().col(0);
  const Matrix& w = pr.w.value();
  const Matrix sp = b.q.s_factor.value().transpose() * pr.p.value();
  Matrix cov = kernel_self(prior.kernel, b.prior.kernel_raw, xv).value() -
               w.transpose() * w + sp.transpose() * sp;
  cov = 0.5 * (cov + cov.transpose());
  return {mean, cov};
}

double kl_inducing(const GpPrior& prior, const InducingState& q) {
  Bound b;
  bind(b, prior, q);
  InducingFactor f = factor_inducing(b.prior, b.q, b.jitter);
  return kl_inducing(b.q, f).scalar();
}

}  // namespace tgp
