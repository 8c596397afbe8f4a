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

#include "tgp/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "tgp/errors.hpp"

namespace tgp {

FoldMetrics evaluate(const Model& model, const Matrix& x, const Vector& y,
                     const PredictOptions& options) {
  if (x.rows() != y.size() || x.rows() == 0) throw UsageError("evaluate: empty or ragged test set");
  PredictOptions opt = options;
  opt.quantiles = true;
  const Prediction p = predict(model, x, &y, opt);
  const double n = static_cast<double>(y.size());
  FoldMetrics m;
  m.n_test = y.size();
  m.nll = -p.log_density.mean();
  if (y.size() > 1) {
    const double ss = (p.log_density.array() + m.nll).square().sum();
    m.nll_point_se = std::sqrt(ss / (n - 1.0) / n);
  }
  const bool gaussian = model.spec.likelihood == LikelihoodKind::kGaussian;
  m.nll_standardized = gaussian ? m.nll - std::log(model.y_scale) : m.nll;
  m.rmse = std::sqrt((p.mean - y).squaredNorm() / n);
  long inside = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) >= p.lower(i) && y(i) <= p.upper(i)) ++inside;
  }
  m.cov95 = static_cast<double>(inside) / n;
  if (gaussian) {
    m.acc = std::numeric_limits<double>::quiet_NaN();
  } else {
    long hit = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if ((p.mean(i) > 0.5) == (y(i) > 0.5)) ++hit;
    }
    m.acc = static_cast<double>(hit) / n;
  }
  return m;
}

namespace {

void mean_se(const std::vector<double>& v, double& mean, double& se) {
  if (v.empty()) {
    mean = se = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  const double k = static_cast<double>(v.size());
  mean = std::accumulate(v.begin(), v.end(), 0.0) / k;
  if (v.size() < 2) {
    se = 0.0;
    return;
  }
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  se = std::sqrt(ss / (k - 1.0) / k);
}

}  // namespace

MetricsReport aggregate(std::vector<FoldMetrics> folds) {
  MetricsReport r;
  std::vector<double> nll, nlls, rmse, cov, acc;
  for (const FoldMetrics& f : folds) {
    if (!f.ok) {
      r.warnings.push_back("fold failed: " + f.error);
      continue;
    }
    nll.push_back(f.nll);
    nlls.push_back(f.nll_standardized);
    rmse.push_back(f.rmse);
    cov.push_back(f.cov95);
    if (!std::isnan(f.acc)) acc.push_back(f.acc);
  }
  if (nll.size() < folds.size() && !nll.empty()) {
    r.warnings.push_back("aggregated over " + std::to_string(nll.size()) + " of " +
                         std::to_string(folds.size()) + " folds");
  }
  mean_se(nll, r.nll_mean, r.nll_se);
  mean_se(nlls, r.nll_standardized_mean, r.nll_standardized_se);
  mean_se(rmse, r.rmse_mean, r.rmse_se);
  mean_se(cov, r.cov95_mean, r.cov95_se);
  mean_se(acc, r.acc_mean, r.acc_se);
  r.folds = std::move(folds);
  return r;
}

std::vector<Split> make_folds(long n, const FoldSpec& spec) {
  if (spec.folds < 1) throw UsageError("need at least one fold");
  std::mt19937_64 rng(spec.seed);
  std::vector<long> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0L);
  std::vector<Split> out;
  if (spec.kind == FoldSpec::Kind::kKFold) {
    if (spec.folds < 2 || spec.folds > n) {
      throw UsageError("k-fold needs 2 <= k <= N, got k = " + std::to_string(spec.folds));
    }
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int k = 0; k < spec.folds; ++k) {
      const long begin = n * k / spec.folds;
      const long end = n * (k + 1) / spec.folds;
      Split s;
      for (long i = 0; i < n; ++i) {
        (i >= begin && i < end ? s.test : s.train).push_back(perm[static_cast<std::size_t>(i)]);
      }
      out.push_back(std::move(s));
    }
    return out;
  }
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw UsageError("train fraction must lie in (0, 1)");
  }
  const long n_train = static_cast<long>(std::ceil(spec.train_fraction * static_cast<double>(n)));
  if (n_train >= n) throw UsageError("ratio split leaves no test rows");
  for (int k = 0; k < spec.folds; ++k) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Split s;
    s.train.assign(perm.begin(), perm.begin() + n_train);
    s.test.assign(perm.begin() + n_train, perm.end());
    out.push_back(std::move(s));
  }
  return out;
}

int worker_count() {
  if (const char* env = std::getenv("TGP_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

MetricsReport crossval(const Matrix& x, const Vector& y, const FoldSpec& folds,
                       const ModelSpec& spec, const TrainConfig& config,
                       const PredictOptions& options, int threads) {
  if (x.rows() != y.size()) throw UsageError("crossval: ragged data");
  const std::vector<Split> splits = make_folds(x.rows(), folds);
  std::vector<FoldMetrics> results(splits.size());
  auto rows = [](const Matrix& m, const std::vector<long>& idx) {
    Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
    return out;
  };
  auto entries = [](const Vector& v, const std::vector<long>& idx) {
    Vector out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(idx[i]);
    return out;
  };
  auto run = [&](std::size_t k) {
    const Split& s = splits[k];
    FoldMetrics& m = results[k];
    try {
      const Matrix xtr = rows(x, s.train);
      const Vector ytr = entries(y, s.train);
      TrainConfig c = config;
      c.seed = config.seed + k;
      c.batch_size = std::min<int>(c.batch_size, static_cast<int>(s.train.size()));
      Model model = init_pipeline(spec, xtr, ytr, c);
      fit(model, xtr, ytr, c);
      m = evaluate(model, rows(x, s.test), entries(y, s.test), options);
    } catch (const Error& e) {
      m.ok = false;
      m.error = "fold " + std::to_string(k) + ": " + e.what();
    }
    m.n_train = static_cast<long>(s.train.size());
    m.n_test = static_cast<long>(s.test.size());
  };
  const int workers = std::max(1, std::min<int>(threads > 0 ? threads : worker_count(),
                                                static_cast<int>(splits.size())));
  if (workers == 1) {
    for (std::size_t k = 0; k < splits.size(); ++k) run(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < splits.size(); k = next++) run(k);
      });
    }
    for (auto& t : pool) t.join();
  }
  return aggregate(std::move(results));
}

}  // namespace tgp
