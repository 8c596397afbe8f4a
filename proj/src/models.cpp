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

#include "tgp/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "tgp/errors.hpp"

namespace tgp {

using ad::Var;

std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kSvgp: return "svgp";
    case ModelKind::kTgp: return "tgp";
    case ModelKind::kVwgp: return "vwgp";
    case ModelKind::kGsp: return "gsp";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "svgp") return ModelKind::kSvgp;
  if (s == "tgp") return ModelKind::kTgp;
  if (s == "vwgp") return ModelKind::kVwgp;
  if (s == "gsp") return ModelKind::kGsp;
  throw UsageError("unknown model kind '" + s + "' (expected svgp, tgp, vwgp or gsp)");
}

std::string flow_mode_name(FlowMode m) {
  switch (m) {
    case FlowMode::kNone: return "none";
    case FlowMode::kFixed: return "fixed";
    case FlowMode::kInputPe: return "input-pe";
    case FlowMode::kInputBa: return "input-ba";
  }
  return "?";
}

FlowMode parse_flow_mode(const std::string& s) {
  if (s == "none") return FlowMode::kNone;
  if (s == "fixed") return FlowMode::kFixed;
  if (s == "input-pe" || s == "pe") return FlowMode::kInputPe;
  if (s == "input-ba" || s == "ba") return FlowMode::kInputBa;
  throw UsageError("unknown flow mode '" + s + "' (expected none, fixed, input-pe or input-ba)");
}

std::string likelihood_name(LikelihoodKind k) {
  return k == LikelihoodKind::kGaussian ? "gaussian" : "bernoulli-probit";
}

LikelihoodKind parse_likelihood(const std::string& s) {
  if (s == "gaussian") return LikelihoodKind::kGaussian;
  if (s == "bernoulli-probit" || s == "probit") return LikelihoodKind::kBernoulliProbit;
  throw UsageError("unknown likelihood '" + s + "' (expected gaussian or bernoulli-probit)");
}

void ModelSpec::validate() const {
  kernel.validate();
  jitter.validate();
  if (num_inducing < 1) throw UsageError("need at least one inducing point");
  if (train_samples < 1 || predict_samples < 1 || gsp_samples < 1) {
    throw UsageError("sample counts must be positive");
  }
  if (train_quadrature < 1 || predict_quadrature < 1) {
    throw UsageError("quadrature orders must be positive");
  }
  switch (kind) {
    case ModelKind::kSvgp:
      if (flow_mode != FlowMode::kNone) throw UsageError("svgp takes no prior flow");
      break;
    case ModelKind::kTgp:
      break;
    case ModelKind::kVwgp:
      if (flow_mode != FlowMode::kNone) throw UsageError("vwgp takes no prior flow");
      if (likelihood != LikelihoodKind::kGaussian) {
        throw UsageError("vwgp needs a gaussian likelihood");
      }
      break;
    case ModelKind::kGsp:
      if (flow_mode != FlowMode::kNone && flow_mode != FlowMode::kFixed) {
        throw UsageError("gsp supports only a fixed prior flow");
      }
      if (gsp_max_points < 1) throw UsageError("gsp point cap must be positive");
      break;
  }
  if (input_dependent()) {
    if (chain.empty()) {
      throw UsageError("flow mode " + flow_mode_name(flow_mode) + " needs a non-empty chain");
    }
    net.validate();
    if (net.output_dim != chain.slot_count()) {
      throw UsageError("flow net must output one value per flow parameter");
    }
    if (net.input_dim != kernel.input_dim) {
      throw UsageError("flow net input width differs from the kernel input width");
    }
  }
}

std::pair<int, int> ParamLayout::group(ParamGroup g) const {
  switch (g) {
    case ParamGroup::kCovariance: return {kernel, noise};
    case ParamGroup::kNoise: return {noise, z};
    case ParamGroup::kInducing: return {z, flow};
    case ParamGroup::kFlow: return {flow, total};
  }
  return {0, 0};
}

ParamLayout Model::layout() const {
  ParamLayout l;
  const int m = inducing.size();
  const int d = static_cast<int>(inducing.z.cols());
  l.kernel = 0;
  l.mean = l.kernel + static_cast<int>(kernel_raw.size());
  l.noise = l.mean + static_cast<int>(mean_raw.size());
  l.z = l.noise + 1;
  l.m = l.z + m * d;
  l.s = l.m + m;
  l.flow = l.s + m * (m + 1) / 2;
  l.transform = l.flow + static_cast<int>(spec.input_dependent() ? net_weights.size()
                                                                  : flow_raw.size());
  l.total = l.transform + static_cast<int>(transform_raw.size());
  return l;
}

Vector Model::pack() const {
  const ParamLayout l = layout();
  Vector p(l.total);
  p.segment(l.kernel, kernel_raw.size()) = kernel_raw;
  p.segment(l.mean, mean_raw.size()) = mean_raw;
  p(l.noise) = noise_raw;
  p.segment(l.z, l.m - l.z) = Eigen::Map<const Vector>(inducing.z.data(), inducing.z.size());
  p.segment(l.m, l.s - l.m) = inducing.m;
  p.segment(l.s, l.flow - l.s) = pack_lower(inducing.s_factor);
  p.segment(l.flow, l.transform - l.flow) = spec.input_dependent() ? net_weights : flow_raw;
  p.segment(l.transform, l.total - l.transform) = transform_raw;
  return p;
}

void Model::unpack(const Vector& p) {
  const ParamLayout l = layout();
  if (p.size() != l.total) {
    throw UsageError("parameter vector has " + std::to_string(p.size()) + " entries, expected " +
                     std::to_string(l.total));
  }
  kernel_raw = p.segment(l.kernel, kernel_raw.size());
  mean_raw = p.segment(l.mean, mean_raw.size());
  noise_raw = p(l.noise);
  Eigen::Map<Vector>(inducing.z.data(), inducing.z.size()) = p.segment(l.z, l.m - l.z);
  inducing.m = p.segment(l.m, l.s - l.m);
  inducing.s_factor = unpack_lower(p.segment(l.s, l.flow - l.s), inducing.size());
  if (spec.input_dependent()) {
    net_weights = p.segment(l.flow, l.transform - l.flow);
  } else {
    flow_raw = p.segment(l.flow, l.transform - l.flow);
  }
  transform_raw = p.segment(l.transform, l.total - l.transform);
}

double Model::noise_variance() const { return softplus(noise_raw); }

GpPrior Model::prior() const {
  return {spec.kernel, kernel_raw, spec.mean, mean_raw, spec.jitter};
}

Model make_model(ModelSpec spec, const Matrix& z) {
  if (spec.input_dependent()) {
    spec.net.output_dim = spec.chain.slot_count();
    spec.net.input_dim = spec.kernel.input_dim;
  }
  spec.validate();
  if (z.rows() != spec.num_inducing || z.cols() != spec.kernel.input_dim) {
    throw UsageError("inducing inputs must be num_inducing x input_dim");
  }
  Model m;
  m.spec = spec;
  m.kernel_raw = kernel_init_raw(spec.kernel, KernelInit{});
  m.mean_raw = Vector::Zero(spec.mean.param_count());
  m.noise_raw = softplus_inverse(0.05);
  m.inducing = InducingState::initial(z, spec.whitened);
  if (spec.flow_mode == FlowMode::kFixed) m.flow_raw = spec.chain.default_params();
  if (spec.input_dependent()) {
    std::mt19937_64 rng(0);
    m.net_weights = net_init_weights(spec.net, rng);
  }
  if (spec.kind == ModelKind::kVwgp) m.transform_raw = spec.transform.default_params();
  return m;
}

namespace {

/// Parameter column, or an empty one when the block has no entries.
Var column_or_empty(ad::Tape& t, const Var& v) { return v.valid() ? v : t.constant(Matrix(0, 1)); }

std::vector<Var> slots_of(const Var& v) { return v.valid() ? flow_slots(v) : std::vector<Var>{}; }

struct Bound {
  PriorVars prior;
  InducingVars q;
  Var noise;  // variance, 1x1
  Var flow;
  Var transform;
};

Bound bind(const Model& model, const Var& p) {
  const ParamLayout l = model.layout();
  const int m = model.inducing.size();
  const int d = static_cast<int>(model.inducing.z.cols());
  Bound b;
  b.prior.kernel = &model.spec.kernel;
  b.prior.kernel_raw = ad::slice(p, l.kernel, l.mean - l.kernel);
  b.prior.mean = &model.spec.mean;
  if (l.noise > l.mean) b.prior.mean_raw = ad::slice(p, l.mean, l.noise - l.mean);
  b.noise = ad::softplus(ad::slice(p, l.noise, 1));
  b.q.z = ad::slice(p, l.z, m, d);
  b.q.m = ad::slice(p, l.m, m);
  b.q.s_factor = ad::gather(p, lower_gather_index(m, l.s), m, m);
  b.q.whitened = model.inducing.whitened;
  if (l.transform > l.flow) b.flow = ad::slice(p, l.flow, l.transform - l.flow);
  if (l.total > l.transform) b.transform = ad::slice(p, l.transform, l.total - l.transform);
  return b;
}

Vector standardize(const Model& model, const Vector& y) {
  if (model.spec.likelihood == LikelihoodKind::kBernoulliProbit) return y;
  return (y.array() - model.y_shift) / model.y_scale;
}

Var log_likelihood(LikelihoodKind lik, const Var& y, const Var& f, const Var& noise) {
  if (lik == LikelihoodKind::kGaussian) {
    return -0.5 * ad::log(noise * (2.0 * M_PI)) - ad::square(y - f) / (2.0 * noise);
  }
  return ad::log_normal_cdf((2.0 * y - 1.0) * f);
}

/// Per-row E_{N(mu, var)}[log p(y | G(f))] by Gauss-Hermite; B x 1.
Var ell_rows(LikelihoodKind lik, const Var& y, const Var& mu, const Var& var,
             const FlowChain* chain, std::span<const Var> slots, const Var& noise,
             const QuadratureRule& rule) {
  ad::Tape& t = *mu.tape();
  Var f = mu + ad::sqrt(2.0 * var) * t.constant(Matrix(rule.nodes.transpose()));
  if (chain != nullptr && !chain->empty()) f = flow_apply<Var, Var>(*chain, f, slots);
  Var lp = log_likelihood(lik, y, f, noise);
  return ad::matmul(lp, t.constant(Matrix(rule.weights / kSqrtPi)));
}

/// Closed-form gaussian ELL without a flow; B x 1.
Var ell_gaussian_closed(const Var& y, const Var& mu, const Var& var, const Var& noise) {
  return -0.5 * ad::log(noise * (2.0 * M_PI)) - (ad::square(y - mu) + var) / (2.0 * noise);
}

std::vector<Var> prior_flow_slots(const Model& model, const Bound& b, const Var& x,
                                  const DropoutMask* mask) {
  if (!model.spec.input_dependent()) return slots_of(b.flow);
  Var out = net_forward(model.spec.net, b.flow, x, mask);
  const Eigen::Index rows = out.rows();
  std::vector<Var> slots;
  for (Eigen::Index k = 0; k < out.cols(); ++k) {
    slots.push_back(ad::slice(out, static_cast<int>(k * rows), rows, 1));
  }
  return slots;
}

template <class Fn>
auto attribute(const char* term, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const NonFiniteValue& e) {
    throw NonFiniteValue(std::string(term) + ": " + e.what(), e.node());
  }
}

Var gsp_bound(const Model& model, ad::Tape& t, const Var& params, const Matrix& x,
              const Vector& y, std::uint64_t seed, int samples, ad::JitterState& jitter,
              ElboTerms* terms, Vector* per_sample) {
  const ModelSpec& spec = model.spec;
  const bool has_flow = spec.flow_mode == FlowMode::kFixed && !spec.chain.empty();
  if (has_flow && !spec.chain.unconstrained_range()) {
    throw FlowNotUnconstrained("gsp needs a prior flow onto the whole real line, got '" +
                               spec.chain.to_string() + "'");
  }
  if (x.rows() > spec.gsp_max_points) {
    throw UsageError("gsp is cubic in N; " + std::to_string(x.rows()) +
                     " points exceed the cap of " + std::to_string(spec.gsp_max_points));
  }
  const Eigen::Index n = x.rows();
  const Eigen::Index m = model.inducing.size();
  Bound b = bind(model, params);
  Var xb = t.constant(x);
  Var yb = t.constant(Matrix(standardize(model, y)));
  InducingFactor fac = factor_inducing(b.prior, b.q, jitter);
  MarginalVars mv = q_f0_marginals(b.prior, b.q, fac, xb);

  Var ell = attribute("ELL", [&] {
    if (spec.likelihood == LikelihoodKind::kGaussian) {
      return ad::sum(ell_gaussian_closed(yb, mv.mean, mv.variance, b.noise));
    }
    return ad::sum(ell_rows(spec.likelihood, yb, mv.mean, mv.variance, nullptr, {}, b.noise,
                            gh_nodes(spec.train_quadrature)));
  });

  Var mc = attribute("KL", [&] {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Matrix eu(m, samples), ef(n, samples);
    for (Eigen::Index j = 0; j < samples; ++j) {
      for (Eigen::Index i = 0; i < m; ++i) eu(i, j) = g(rng);
      for (Eigen::Index i = 0; i < n; ++i) ef(i, j) = g(rng);
    }
    Var eu_v = t.constant(eu);
    Var ef_v = t.constant(ef);
    Projection pr = project(b.prior, b.q, fac, xb);
    Var v = b.q.m + ad::matmul(b.q.s_factor, eu_v);
    Var u = b.q.whitened ? fac.mean_z + ad::matmul(fac.chol, v) : v;
    Var shift = b.q.whitened ? v : v - fac.mean_z;
    Var cond = kernel_self(spec.kernel, b.prior.kernel_raw, xb) -
               ad::matmul(ad::transpose(pr.w), pr.w);
    Var lc = ad::cholesky(cond, jitter);
    Var f = pr.mean_x + ad::matmul(ad::transpose(pr.p), shift) + ad::matmul(lc, ef_v);

    const double dim = static_cast<double>(n + m);
    Var log_q = -0.5 * (ad::sum(ad::square(eu_v), 0) + ad::sum(ad::square(ef_v), 0)) -
                ad::sum(ad::log(ad::abs(ad::diagonal(b.q.s_factor)))) -
                ad::sum(ad::log(ad::diagonal(lc))) - 0.5 * dim * kLogTwoPi;
    if (b.q.whitened) log_q = log_q - ad::sum(ad::log(ad::diagonal(fac.chol)));

    Var h = ad::concat(f, u, 0);
    Var h0 = h;
    Var log_jac;
    if (has_flow) {
      try {
        h0 = flow_inverse(spec.chain, h, column_or_empty(t, b.flow));
      } catch (const RangeError& e) {
        throw FlowNotUnconstrained(std::string("gsp inverse flow failed: ") + e.what());
      }
      std::vector<Var> slots = slots_of(b.flow);
      log_jac = ad::sum(flow_log_abs_deriv(spec.chain, h0, slots), 0);
    }
    Var xz = ad::concat(xb, b.q.z, 0);
    Var lj = ad::cholesky(kernel_self(spec.kernel, b.prior.kernel_raw, xz), jitter);
    Var mj = mean_values(spec.mean, t, b.prior.mean_raw, n + m);
    Var r = ad::solve_lower(lj, h0 - mj);
    Var log_p = -0.5 * ad::sum(ad::square(r), 0) - ad::sum(ad::log(ad::diagonal(lj))) -
                0.5 * dim * kLogTwoPi;
    if (has_flow) log_p = log_p - log_jac;
    Var diff = log_p - log_q;
    if (per_sample != nullptr) *per_sample = diff.value().row(0).transpose();
    return ad::mean(diff);
  });

  Var total = ell + mc;
  if (terms != nullptr) {
    terms->ell = ell.scalar();
    terms->kl = -mc.scalar();
    terms->penalty = 0.0;
    terms->jacobian = 0.0;
    terms->elbo = total.scalar();
  }
  return total;
}

}  // namespace

double ell_point(LikelihoodKind lik, double y, double mu, double var, const FlowChain& chain,
                 std::span<const double> raw, double noise_var, const QuadratureRule& rule) {
  if (var < 0.0) throw UsageError("ell_point: negative variance");
  ad::Tape t;
  Vector theta = Eigen::Map<const Vector>(raw.data(), static_cast<Eigen::Index>(raw.size()));
  std::vector<Var> slots = chain.slot_count() ? flow_slots(t.constant(Matrix(theta)))
                                              : std::vector<Var>{};
  if (static_cast<int>(slots.size()) != chain.slot_count()) {
    throw UsageError("ell_point: wrong number of flow parameters");
  }
  return ell_rows(lik, t.constant(y), t.constant(mu), t.constant(var), &chain, slots,
                  t.constant(noise_var), rule)
      .scalar();
}

Var elbo(const Model& model, ad::Tape& t, const Var& params, const Matrix& x, const Vector& y,
         long n_total, std::uint64_t seed, ad::JitterState& jitter, ElboTerms* terms) {
  const ModelSpec& spec = model.spec;
  if (x.rows() != y.size() || x.rows() == 0) throw UsageError("elbo: empty or ragged batch");
  if (x.cols() != spec.kernel.input_dim) throw UsageError("elbo: input width mismatch");
  if (spec.kind == ModelKind::kGsp) {
    return gsp_bound(model, t, params, x, y, seed, spec.gsp_samples, jitter, terms, nullptr);
  }
  const double scale = static_cast<double>(n_total) / static_cast<double>(x.rows());
  Bound b = bind(model, params);
  Var xb = t.constant(x);
  Vector ys = standardize(model, y);

  InducingFactor fac;
  Var kl = attribute("KL", [&] {
    fac = factor_inducing(b.prior, b.q, jitter);
    return kl_inducing(b.q, fac);
  });

  Var jac = t.constant(0.0);
  Var yb = t.constant(Matrix(ys));
  if (spec.kind == ModelKind::kVwgp && !spec.transform.empty()) {
    std::vector<Var> slots = slots_of(b.transform);
    jac = attribute("Jacobian", [&] {
      Var z;
      Var log_d;
      if (spec.transform_inverse) {
        z = flow_inverse(spec.transform, yb, column_or_empty(t, b.transform));
        log_d = -flow_log_abs_deriv(spec.transform, z, slots);
      } else {
        z = flow_apply<Var, Var>(spec.transform, yb, std::span<const Var>(slots));
        log_d = flow_log_abs_deriv(spec.transform, yb, slots);
      }
      yb = z;
      return ad::sum(log_d);
    });
  }

  Var ell = attribute("ELL", [&] {
    MarginalVars mv = q_f0_marginals(b.prior, b.q, fac, xb);
    const bool flow = spec.has_prior_flow();
    if (!flow && spec.likelihood == LikelihoodKind::kGaussian &&
        spec.kind != ModelKind::kTgp) {
      return ad::sum(ell_gaussian_closed(yb, mv.mean, mv.variance, b.noise));
    }
    const QuadratureRule& rule = gh_nodes(spec.train_quadrature);
    if (!flow) {
      return ad::sum(ell_rows(spec.likelihood, yb, mv.mean, mv.variance, nullptr, {}, b.noise,
                              rule));
    }
    if (spec.flow_mode != FlowMode::kInputBa) {
      std::vector<Var> slots = prior_flow_slots(model, b, xb, nullptr);
      return ad::sum(ell_rows(spec.likelihood, yb, mv.mean, mv.variance, &spec.chain, slots,
                              b.noise, rule));
    }
    std::mt19937_64 rng(seed);
    Var acc;
    for (int s = 0; s < spec.train_samples; ++s) {
      DropoutMask mask = sample_mask(spec.net, rng);
      std::vector<Var> slots = prior_flow_slots(model, b, xb, &mask);
      Var e = ad::sum(ell_rows(spec.likelihood, yb, mv.mean, mv.variance, &spec.chain, slots,
                               b.noise, rule));
      acc = acc.valid() ? acc + e : e;
    }
    return acc / static_cast<double>(spec.train_samples);
  });

  Var penalty = t.constant(0.0);
  if (spec.input_dependent()) {
    penalty = attribute("penalty", [&] { return weight_penalty(b.flow, spec.net.weight_decay); });
  }

  Var total = scale * ell + scale * jac - kl - penalty;
  if (terms != nullptr) {
    terms->ell = scale * ell.scalar();
    terms->kl = kl.scalar();
    terms->penalty = penalty.scalar();
    terms->jacobian = scale * jac.scalar();
    terms->elbo = total.scalar();
  }
  return total;
}

double elbo(const Model& model, const Matrix& x, const Vector& y, long n_total,
            std::uint64_t seed, ElboTerms* terms) {
  ad::Tape t;
  const Vector p = model.pack();
  ad::JitterState jitter{model.spec.jitter, 0};
  Var params = t.parameters(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
  return elbo(model, t, params, x, y, n_total, seed, jitter, terms).scalar();
}

double elbo_gradient_error(const Model& model, const Matrix& x, const Vector& y,
                           std::uint64_t seed, double step) {
  const Vector p = model.pack();
  ad::Objective obj = [&](ad::Tape& t, const Var& params) {
    ad::JitterState jitter{model.spec.jitter, 0};
    return elbo(model, t, params, x, y, x.rows(), seed, jitter);
  };
  return ad::finite_diff_check(obj, std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
                               step);
}

GspEstimate gsp_estimate(const Model& model, const Matrix& x, const Vector& y, int samples,
                         std::uint64_t seed) {
  if (model.spec.kind != ModelKind::kGsp) throw UsageError("gsp_estimate needs a gsp model");
  if (samples < 1) throw UsageError("gsp_estimate needs at least one sample");
  ad::Tape t;
  const Vector p = model.pack();
  ad::JitterState jitter{model.spec.jitter, 0};
  Var params = t.parameters(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
  GspEstimate out;
  ElboTerms terms;
  gsp_bound(model, t, params, x, y, seed, samples, jitter, &terms, &out.samples);
  out.ell = terms.ell;
  return out;
}

Matrix flow_params_at(const Model& model, const Matrix& x, const DropoutMask* mask) {
  if (model.spec.input_dependent()) {
    if (mask == nullptr) {
      return net_forward(model.spec.net, model.net_weights, x, NetMode::kDeterministic);
    }
    return net_forward(model.spec.net, model.net_weights, x, *mask);
  }
  return model.flow_raw.transpose();
}

namespace {

double quantile_sorted(const std::vector<double>& v, double level) {
  const double pos = level * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

double inverse_transform(const Model& model, double z) {
  const FlowChain& t = model.spec.transform;
  std::span<const double> raw(model.transform_raw.data(),
                              static_cast<std::size_t>(model.transform_raw.size()));
  if (model.spec.transform_inverse) return flow_forward(t, z, raw);
  try {
    return flow_inverse(t, z, raw);
  } catch (const RangeError& e) {
    throw ConvergenceError(std::string("cannot invert the likelihood transform: ") + e.what());
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(std::string("cannot invert the likelihood transform: ") + e.what());
  }
}

/// log N(T(y); mu, var) + log |T'(y)|, or -inf outside the support of T.
double vwgp_log_density(const Model& model, double y, double mu, double var) {
  const FlowChain& t = model.spec.transform;
  std::span<const double> raw(model.transform_raw.data(),
                              static_cast<std::size_t>(model.transform_raw.size()));
  try {
    double z;
    double log_d;
    if (model.spec.transform_inverse) {
      z = flow_inverse(t, y, raw);
      log_d = -std::log(std::abs(flow_derivative(t, z, raw)));
    } else {
      z = flow_forward(t, y, raw);
      log_d = std::log(std::abs(flow_derivative(t, y, raw)));
    }
    return normal_log_pdf(z, mu, var) + log_d;
  } catch (const RangeError&) {
    return -std::numeric_limits<double>::infinity();
  } catch (const DomainError&) {
    return -std::numeric_limits<double>::infinity();
  }
}

Prediction predict_vwgp(const Model& model, const Marginals& mg, const Vector* y,
                        const PredictOptions& opt, int q) {
  const Eigen::Index n = mg.mean.size();
  const QuadratureRule& rule = gh_nodes(q);
  const double noise = model.noise_variance();
  const double zlo = normal_quantile(opt.lower_level);
  const double zhi = normal_quantile(opt.upper_level);
  Prediction out;
  out.mean.resize(n);
  out.variance.resize(n);
  out.lower.resize(n);
  out.upper.resize(n);
  out.latent_mean.resize(n);
  if (y != nullptr) out.log_density.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = mg.mean(i);
    const double var = std::max(mg.variance(i), 0.0) + noise;
    const double sd = std::sqrt(var);
    double m1 = 0.0, m2 = 0.0, lat = 0.0;
    for (Eigen::Index k = 0; k < rule.nodes.size(); ++k) {
      const double w = rule.weights(k) / kSqrtPi;
      const double g = inverse_transform(model, mu + std::sqrt(2.0) * sd * rule.nodes(k));
      m1 += w * g;
      m2 += w * g * g;
      lat += w * inverse_transform(
                     model, mu + std::sqrt(2.0 * std::max(mg.variance(i), 0.0)) * rule.nodes(k));
    }
    out.mean(i) = model.y_shift + model.y_scale * m1;
    out.variance(i) = model.y_scale * model.y_scale * std::max(m2 - m1 * m1, 0.0);
    out.latent_mean(i) = model.y_shift + model.y_scale * lat;
    out.lower(i) = model.y_shift + model.y_scale * inverse_transform(model, mu + sd * zlo);
    out.upper(i) = model.y_shift + model.y_scale * inverse_transform(model, mu + sd * zhi);
    if (y != nullptr) {
      const double ys = ((*y)(i) - model.y_shift) / model.y_scale;
      out.log_density(i) = vwgp_log_density(model, ys, mu, var) - std::log(model.y_scale);
    }
  }
  return out;
}

}  // namespace

Prediction predict(const Model& model, const Matrix& x, const Vector* y,
                   const PredictOptions& opt) {
  const ModelSpec& spec = model.spec;
  if (x.cols() != spec.kernel.input_dim) throw UsageError("predict: input width mismatch");
  if (y != nullptr && y->size() != x.rows()) throw UsageError("predict: target length mismatch");
  const int samples = opt.samples > 0 ? opt.samples : spec.predict_samples;
  const int q = opt.quadrature > 0 ? opt.quadrature : spec.predict_quadrature;
  if (opt.quantile_samples < 1 && opt.quantiles) {
    throw UsageError("predict: need at least one quantile sample");
  }
  const Marginals mg = q_f0_marginals(model.prior(), model.inducing, x);
  if (spec.kind == ModelKind::kVwgp) return predict_vwgp(model, mg, y, opt, q);

  const Eigen::Index n = x.rows();
  const bool flow = spec.kind == ModelKind::kTgp && spec.has_prior_flow();
  const bool gaussian = spec.likelihood == LikelihoodKind::kGaussian;
  std::mt19937_64 rng(opt.seed);
  std::vector<Matrix> draws;
  if (flow && spec.flow_mode == FlowMode::kInputBa) {
    for (int s = 0; s < samples; ++s) {
      DropoutMask mask = sample_mask(spec.net, rng);
      draws.push_back(flow_params_at(model, x, &mask));
    }
  } else if (flow) {
    draws.push_back(flow_params_at(model, x, nullptr));
  } else {
    draws.emplace_back(1, 0);
  }
  const FlowChain identity;
  const FlowChain& chain = flow ? spec.chain : identity;
  const QuadratureRule& rule = gh_nodes(q);
  const double noise = model.noise_variance();
  const double nd = static_cast<double>(draws.size());
  const double log_scale = gaussian ? std::log(model.y_scale) : 0.0;
  const double shift = gaussian ? model.y_shift : 0.0;
  const double yscale = gaussian ? model.y_scale : 1.0;

  Prediction out;
  out.mean.resize(n);
  out.variance.resize(n);
  out.latent_mean.resize(n);
  if (opt.quantiles) {
    out.lower.resize(n);
    out.upper.resize(n);
  }
  if (y != nullptr) out.log_density.resize(n);
  std::vector<double> logs;
  std::vector<double> pool(static_cast<std::size_t>(std::max(opt.quantile_samples, 1)));
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<std::size_t> pick(0, draws.size() - 1);
  std::uniform_real_distribution<double> unif;
  Vector theta(chain.slot_count());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = mg.mean(i);
    const double var = std::max(mg.variance(i), 0.0);
    const double ys = y != nullptr ? ((*y)(i) - shift) / yscale : 0.0;
    double mean_acc = 0.0, second_acc = 0.0;
    logs.clear();
    for (const Matrix& d : draws) {
      if (theta.size() > 0) theta = d.row(d.rows() == 1 ? 0 : i).transpose();
      std::span<const double> raw(theta.data(), static_cast<std::size_t>(theta.size()));
      double m1 = 0.0, m2 = 0.0;
      for (Eigen::Index k = 0; k < rule.nodes.size(); ++k) {
        const double w = rule.weights(k) / kSqrtPi;
        const double f = mu + std::sqrt(2.0 * var) * rule.nodes(k);
        const double g = flow ? flow_forward(chain, f, raw) : f;
        if (gaussian) {
          m1 += w * g;
          m2 += w * g * g;
          if (y != nullptr) logs.push_back(std::log(w) + normal_log_pdf(ys, g, noise));
        } else {
          m1 += w * normal_cdf(g);
          m2 += w * g;
          if (y != nullptr) {
            logs.push_back(std::log(w) + log_normal_cdf((2.0 * ys - 1.0) * g));
          }
        }
      }
      mean_acc += m1;
      second_acc += gaussian ? m2 + noise : m2;
    }
    const double mean = mean_acc / nd;
    if (gaussian) {
      out.mean(i) = shift + yscale * mean;
      out.latent_mean(i) = out.mean(i);
      out.variance(i) = yscale * yscale * std::max(second_acc / nd - mean * mean, 0.0);
    } else {
      out.mean(i) = mean;
      out.variance(i) = mean * (1.0 - mean);
      out.latent_mean(i) = second_acc / nd;
    }
    if (y != nullptr) {
      out.log_density(i) = logsumexp(logs) - std::log(nd) - log_scale;
    }
    if (opt.quantiles) {
      const double sd = std::sqrt(var);
      for (double& v : pool) {
        const Matrix& d = draws[pick(rng)];
        if (theta.size() > 0) theta = d.row(d.rows() == 1 ? 0 : i).transpose();
        std::span<const double> raw(theta.data(), static_cast<std::size_t>(theta.size()));
        const double f = mu + sd * normal(rng);
        const double g = flow ? flow_forward(chain, f, raw) : f;
        if (gaussian) {
          v = g + std::sqrt(noise) * normal(rng);
        } else {
          v = unif(rng) < normal_cdf(g) ? 1.0 : 0.0;
        }
      }
      std::sort(pool.begin(), pool.end());
      out.lower(i) = shift + yscale * quantile_sorted(pool, opt.lower_level);
      out.upper(i) = shift + yscale * quantile_sorted(pool, opt.upper_level);
    }
  }
  return out;
}

}  // namespace tgp
