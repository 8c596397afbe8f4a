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

#include "tgp/flows.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <string>

#include "tgp/adam.hpp"

namespace tgp {

using ad::Dual;
using ad::Var;

namespace {

const double kRawOne = softplus_inverse(1.0);

}  // namespace

int FlowStep::slot_count() const {
  switch (kind) {
    case StepKind::kLog:
    case StepKind::kExp:
    case StepKind::kSoftplus:
    case StepKind::kSinh:
      return 0;
    case StepKind::kBoxCox:
    case StepKind::kInverseBoxCox:
      return 1;
    case StepKind::kAffine:
    case StepKind::kSinhArcsinh:
    case StepKind::kTukey:
      return 2;
    case StepKind::kArcsinh:
    case StepKind::kTanh:
      return 4;
    case StepKind::kArcsinhMixture:
      return 4 * components;
  }
  return 0;
}

std::string FlowStep::token() const {
  switch (kind) {
    case StepKind::kLog: return "log";
    case StepKind::kExp: return "exp";
    case StepKind::kSoftplus: return "softplus";
    case StepKind::kSinh: return "sinh";
    case StepKind::kArcsinh: return "arcsinh";
    case StepKind::kAffine: return "affine";
    case StepKind::kSinhArcsinh: return "sinh-arcsinh";
    case StepKind::kBoxCox: return "boxcox";
    case StepKind::kInverseBoxCox: return "inverse-boxcox";
    case StepKind::kTukey: return "tukey";
    case StepKind::kTanh: return "tanh";
    case StepKind::kArcsinhMixture:
      return "arcsinh-mixture(" + std::to_string(components) + ")";
  }
  return "unknown";
}

FlowChain::FlowChain(std::vector<FlowStep> steps) : steps_(std::move(steps)) {
  for (const auto& s : steps_) {
    if (s.kind == StepKind::kArcsinhMixture && s.components < 1) {
      throw UsageError("arcsinh-mixture needs at least one component");
    }
    offsets_.push_back(slot_count_);
    slot_count_ += s.slot_count();
  }
}

namespace {

void append_token(std::vector<FlowStep>& out, std::string tok) {
  std::transform(tok.begin(), tok.end(), tok.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  auto add = [&](StepKind k, int comps = 1) { out.push_back({k, comps}); };
  if (tok == "identity" || tok == "none") return;
  if (tok == "log") return add(StepKind::kLog);
  if (tok == "exp") return add(StepKind::kExp);
  if (tok == "sp" || tok == "softplus") return add(StepKind::kSoftplus);
  if (tok == "sinh") return add(StepKind::kSinh);
  if (tok == "arcsinh") return add(StepKind::kArcsinh);
  if (tok == "affine" || tok == "l") return add(StepKind::kAffine);
  if (tok == "sinh-arcsinh" || tok == "sa") return add(StepKind::kSinhArcsinh);
  if (tok == "boxcox") return add(StepKind::kBoxCox);
  if (tok == "inverse-boxcox") return add(StepKind::kInverseBoxCox);
  if (tok == "tukey") return add(StepKind::kTukey);
  if (tok == "tanh") return add(StepKind::kTanh);
  if (tok.rfind("sal", 0) == 0) {
    int k = 1;
    if (tok.size() > 3) {
      const std::string digits = tok.substr(3);
      if (!std::all_of(digits.begin(), digits.end(), ::isdigit)) {
        throw UsageError("unknown flow token '" + tok + "'");
      }
      k = std::stoi(digits);
      if (k < 1) throw UsageError("sal repeat count must be positive");
    }
    for (int i = 0; i < k; ++i) {
      add(StepKind::kSinhArcsinh);
      add(StepKind::kAffine);
    }
    return;
  }
  const std::string mix = "arcsinh-mixture";
  if (tok.rfind(mix, 0) == 0) {
    int comps = 2;
    if (tok.size() > mix.size()) {
      if (tok[mix.size()] != '(' || tok.back() != ')') {
        throw UsageError("malformed flow token '" + tok + "'");
      }
      const std::string inner = tok.substr(mix.size() + 1, tok.size() - mix.size() - 2);
      if (inner.empty() || !std::all_of(inner.begin(), inner.end(), ::isdigit)) {
        throw UsageError("malformed flow token '" + tok + "'");
      }
      comps = std::stoi(inner);
    }
    return add(StepKind::kArcsinhMixture, comps);
  }
  throw UsageError("unknown flow token '" + tok + "'");
}

}  // namespace

FlowChain FlowChain::parse(const std::string& spec) {
  std::vector<FlowStep> steps;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const std::size_t end = std::min(spec.find('+', start), spec.size());
    std::string tok = spec.substr(start, end - start);
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (tok.empty()) {
      if (!spec.empty()) throw UsageError("empty token in flow spec '" + spec + "'");
    } else {
      append_token(steps, tok);
    }
    start = end + 1;
  }
  return FlowChain(std::move(steps));
}

std::string FlowChain::to_string() const {
  if (steps_.empty()) return "identity";
  std::string out;
  for (const auto& s : steps_) {
    if (!out.empty()) out += "+";
    out += s.token();
  }
  return out;
}

Vector FlowChain::default_params() const {
  Vector raw = Vector::Zero(slot_count_);
  for (int k = 0; k < size(); ++k) {
    const FlowStep& s = steps_[static_cast<std::size_t>(k)];
    double* r = raw.data() + offsets_[static_cast<std::size_t>(k)];
    switch (s.kind) {
      case StepKind::kArcsinh:
      case StepKind::kTanh:
        r[0] = kRawOne;
        r[1] = kRawOne;
        break;
      case StepKind::kAffine:
      case StepKind::kSinhArcsinh:
        r[1] = kRawOne;
        break;
      case StepKind::kBoxCox:
      case StepKind::kInverseBoxCox:
        r[0] = kRawOne;
        break;
      case StepKind::kTukey:
        r[0] = 0.1;
        r[1] = softplus_inverse(0.01);
        break;
      case StepKind::kArcsinhMixture:
        for (int i = 0; i < s.components; ++i) {
          r[4 * i + 1] = softplus_inverse(1.0 / s.components);
          r[4 * i + 2] = s.components == 1 ? 0.0 : -1.0 + 2.0 * i / (s.components - 1);
          r[4 * i + 3] = kRawOne;
        }
        break;
      default:
        break;
    }
  }
  return raw;
}

Vector FlowChain::random_params(std::mt19937_64& rng) const {
  std::normal_distribution<double> n01;
  Vector raw(slot_count_);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw(i) = n01(rng);
  return raw;
}

bool FlowChain::unconstrained_range() const {
  for (const auto& s : steps_) {
    switch (s.kind) {
      case StepKind::kLog:
      case StepKind::kExp:
      case StepKind::kSoftplus:
      case StepKind::kTanh:
        return false;
      default:
        break;
    }
  }
  return true;
}

double flow_forward(const FlowChain& chain, double f, std::span<const double> raw) {
  return flow_apply<double, double>(chain, f, raw);
}

double flow_derivative(const FlowChain& chain, double f, std::span<const double> raw) {
  return flow_apply<Dual<double>, double>(chain, Dual<double>{f, 1.0}, raw).d;
}

namespace {

double step_derivative(const FlowStep& step, int index, double f, const double* r) {
  return step_apply<Dual<double>, double>(step, index, Dual<double>{f, 1.0}, r).d;
}

// Monotone root finding for an increasing step with no closed-form inverse.
double newton_inverse(const FlowStep& step, int index, double y, const double* r,
                      const NewtonOptions& options) {
  auto g = [&](double x) {
    const double v = step_apply<double, double>(step, index, x, r);
    return std::isnan(v) ? (x > 0 ? std::numeric_limits<double>::infinity()
                                  : -std::numeric_limits<double>::infinity())
                         : v;
  };
  double x = std::isfinite(y) ? std::clamp(y, -1e6, 1e6) : 0.0;
  double lo = x - 1.0;
  double hi = x + 1.0;
  double width = 1.0;
  int expand = 0;
  while (g(lo) > y) {
    width *= 2.0;
    lo = x - width;
    if (++expand > 200) throw RangeError("value outside the range of flow step " + step.token());
  }
  width = 1.0;
  expand = 0;
  while (g(hi) < y) {
    width *= 2.0;
    hi = x + width;
    if (++expand > 200) throw RangeError("value outside the range of flow step " + step.token());
  }
  x = 0.5 * (lo + hi);
  for (int it = 0; it < options.max_iterations; ++it) {
    const double gx = g(x);
    const double res = gx - y;
    if (res == 0.0) return x;
    if (res > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    const double d = step_derivative(step, index, x, r);
    double next = (d > 0.0 && std::isfinite(d)) ? x - res / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double delta = std::abs(next - x);
    x = next;
    if (delta <= options.tolerance || hi - lo <= options.tolerance) return x;
  }
  throw ConvergenceError("Newton inversion of flow step " + step.token() +
                         " did not converge in " + std::to_string(options.max_iterations) +
                         " iterations");
}

double checked(double x, const FlowStep& step) {
  if (!std::isfinite(x)) {
    throw RangeError("inverse of flow step " + step.token() + " is not representable");
  }
  return x;
}

double step_inverse(const FlowStep& step, int index, double y, const double* r,
                    const NewtonOptions& options) {
  switch (step.kind) {
    case StepKind::kLog:
      return checked(std::exp(y), step);
    case StepKind::kExp:
      if (!(y > 0.0)) throw RangeError("exp flow range is (0, inf)");
      return std::log(y);
    case StepKind::kSoftplus:
      if (!(y > 0.0)) throw RangeError("softplus flow range is (0, inf)");
      return checked(softplus_inverse(y), step);
    case StepKind::kSinh:
      return std::asinh(y);
    case StepKind::kArcsinh:
      return checked(std::sinh((y - r[3]) / softplus(r[0])) / softplus(r[1]) - r[2], step);
    case StepKind::kAffine:
      return (y - r[0]) / softplus(r[1]);
    case StepKind::kSinhArcsinh:
      return checked(std::sinh((std::asinh(y) + r[0]) / softplus(r[1])), step);
    case StepKind::kBoxCox: {
      const double l = softplus(r[0]);
      return checked(ad::signed_pow(l * y + 1.0, 1.0 / l), step);
    }
    case StepKind::kInverseBoxCox: {
      const double l = softplus(r[0]);
      return checked((ad::signed_pow(y, l) - 1.0) / l, step);
    }
    case StepKind::kTanh: {
      const double u = (y - r[3]) / softplus(r[0]);
      if (!(std::abs(u) < 1.0)) {
        throw RangeError("value " + std::to_string(y) + " outside the tanh flow range");
      }
      return checked(std::atanh(u) / softplus(r[1]) - r[2], step);
    }
    case StepKind::kTukey:
    case StepKind::kArcsinhMixture:
      return newton_inverse(step, index, y, r, options);
  }
  throw UsageError("unknown flow step");
}

}  // namespace

double flow_inverse(const FlowChain& chain, double y, std::span<const double> raw,
                    const NewtonOptions& options) {
  if (static_cast<int>(raw.size()) != chain.slot_count()) {
    throw UsageError("flow parameter count mismatch");
  }
  for (int k = chain.size() - 1; k >= 0; --k) {
    y = step_inverse(chain.steps()[static_cast<std::size_t>(k)], k, y,
                     raw.data() + chain.slot_offset(k), options);
  }
  return y;
}

namespace {

std::span<const double> span_of(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace

Vector flow_forward(const FlowChain& chain, const Vector& f0, const Vector& raw) {
  Vector out(f0.size());
  for (Eigen::Index i = 0; i < f0.size(); ++i) out(i) = flow_forward(chain, f0(i), span_of(raw));
  return out;
}

Vector flow_log_deriv(const FlowChain& chain, const Vector& f0, const Vector& raw) {
  ad::Tape tape;
  ad::Objective obj = [&](ad::Tape& t, const Var& f) {
    std::vector<Var> slots = flow_slots(t.constant(Matrix(raw)));
    return ad::sum(flow_apply<Var, Var>(chain, f, slots));
  };
  ad::forward(tape, obj, span_of(f0));
  const Vector d = ad::backward(tape);
  Vector out(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d(i) == 0.0) {
      throw SingularJacobian("flow derivative vanishes at element " + std::to_string(i));
    }
    out(i) = std::log(std::abs(d(i)));
  }
  return out;
}

Vector flow_inverse(const FlowChain& chain, const Vector& fk, const Vector& raw,
                    const NewtonOptions& options) {
  Vector out(fk.size());
  for (Eigen::Index i = 0; i < fk.size(); ++i) {
    out(i) = flow_inverse(chain, fk(i), span_of(raw), options);
  }
  return out;
}

std::vector<Var> flow_slots(const Var& raw) {
  std::vector<Var> slots;
  slots.reserve(static_cast<std::size_t>(raw.rows()));
  for (Eigen::Index k = 0; k < raw.rows(); ++k) slots.push_back(ad::slice(raw, static_cast<int>(k), 1));
  return slots;
}

Var flow_log_abs_deriv(const FlowChain& chain, const Var& f, std::span<const Var> raw) {
  ad::Tape& t = *f.tape();
  Dual<Var> seed{f, t.constant(Matrix::Ones(f.rows(), f.cols()))};
  Dual<Var> out = flow_apply<Dual<Var>, Var>(chain, seed, raw);
  return ad::log(ad::abs(out.d));
}

Var flow_inverse(const FlowChain& chain, const Var& y, const Var& raw,
                 const NewtonOptions& options) {
  if (raw.rows() != chain.slot_count() || raw.cols() != 1) {
    throw UsageError("flow parameter column has the wrong length");
  }
  ad::Tape& t = *y.tape();
  const Vector theta = raw.value().col(0);
  const Matrix& yv = y.value();
  Matrix x(yv.rows(), yv.cols());
  for (Eigen::Index i = 0; i < yv.size(); ++i) {
    x.data()[i] = flow_inverse(chain, yv.data()[i], span_of(theta), options);
  }
  const int iy = y.id();
  const int ir = raw.id();
  FlowChain copy = chain;
  return t.push(ad::OpKind::kCustom, std::move(x), {iy, ir},
                [copy, iy, ir](ad::Tape& t, int self) {
                  const Matrix& g = t.adjoint(self);
                  const Matrix& xv = t.value(self);
                  const Vector theta = t.value(ir).col(0);
                  const bool gy = t.needs_grad(iy);
                  const bool gr = t.needs_grad(ir);
                  const int k = copy.slot_count();
                  std::vector<Dual<double>> seeded(static_cast<std::size_t>(k));
                  for (int j = 0; j < k; ++j) seeded[static_cast<std::size_t>(j)] = {theta(j), 0.0};
                  Matrix dy = gy ? Matrix::Zero(xv.rows(), xv.cols()) : Matrix();
                  Vector dr = Vector::Zero(k);
                  for (Eigen::Index i = 0; i < xv.size(); ++i) {
                    const double gi = g.data()[i];
                    if (gi == 0.0) continue;
                    const double xi = xv.data()[i];
                    const double d = flow_derivative(copy, xi, span_of(theta));
                    if (d == 0.0) throw SingularJacobian("flow derivative vanishes in inverse");
                    if (gy) dy.data()[i] = gi / d;
                    if (gr) {
                      for (int j = 0; j < k; ++j) {
                        seeded[static_cast<std::size_t>(j)].d = 1.0;
                        const double dtheta =
                            flow_apply<Dual<double>, Dual<double>>(
                                copy, Dual<double>{xi, 0.0},
                                std::span<const Dual<double>>(seeded))
                                .d;
                        seeded[static_cast<std::size_t>(j)].d = 0.0;
                        dr(j) -= gi * dtheta / d;
                      }
                    }
                  }
                  if (gy) t.adjoint(iy) += dy;
                  if (gr) t.adjoint(ir).col(0) += dr;
                });
}

namespace {

template <class Loss>
FlowFitResult fit_adam(const Vector& raw0, const FlowFitOptions& options, Loss loss) {
  FlowFitResult result;
  result.raw = raw0;
  if (raw0.size() == 0) {
    ad::Tape t;
    result.loss = ad::forward(t, loss, std::span<const double>());
    return result;
  }
  AdamState state;
  AdamOptions adam;
  adam.lr = options.lr;
  ad::Tape tape;
  Vector best = raw0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch <= options.epochs; ++epoch) {
    double value;
    try {
      value = ad::forward(tape, loss, span_of(result.raw));
    } catch (const Error& e) {
      // Left the feasible region (e.g. the data fell outside the range):
      // keep the last good parameters.
      if (epoch == 0) throw;
      result.warning = true;
      result.message = std::string("stopped early: ") + e.what();
      break;
    }
    if (value < best_loss) {
      best_loss = value;
      best = result.raw;
    }
    if (epoch == options.epochs) break;
    Vector grad = ad::backward(tape);
    adam_step(result.raw, grad, state, adam);
  }
  result.raw = best;
  result.loss = best_loss;
  return result;
}

}  // namespace

FlowFitResult init_identity(const FlowChain& chain, const Vector& raw0,
                            const FlowFitOptions& options) {
  if (raw0.size() != chain.slot_count()) throw UsageError("flow parameter count mismatch");
  if (options.grid_points < 2) throw UsageError("identity grid needs at least two points");
  Matrix grid(options.grid_points, 1);
  for (int i = 0; i < options.grid_points; ++i) {
    grid(i, 0) = options.grid_lo +
                 (options.grid_hi - options.grid_lo) * i / (options.grid_points - 1);
  }
  auto loss = [&](ad::Tape& t, const Var& p) {
    Var x = t.constant(grid);
    std::vector<Var> slots;
    if (chain.slot_count() > 0) slots = flow_slots(p);
    Var g = flow_apply<Var, Var>(chain, x, slots);
    return ad::mean(ad::square(g - x));
  };
  FlowFitResult r = fit_adam(raw0, options, loss);
  if (r.loss > options.warn_threshold) {
    r.warning = true;
    r.message = "flow cannot approximate the identity on the grid (mse " +
                std::to_string(r.loss) + ")";
  }
  return r;
}

FlowFitResult init_gaussianize(const FlowChain& chain, const Vector& raw0, const Vector& y,
                               const FlowFitOptions& options) {
  if (raw0.size() != chain.slot_count()) throw UsageError("flow parameter count mismatch");
  if (y.size() == 0) throw UsageError("gaussianization needs data");
  const Matrix ym = y;
  auto loss = [&](ad::Tape& t, const Var& p) {
    Var yv = t.constant(ym);
    if (chain.slot_count() == 0) {
      Matrix x = flow_inverse(chain, Vector(y), Vector());
      Var xv = t.constant(x);
      Var lp = -0.5 * ad::square(xv) - 0.5 * kLogTwoPi - flow_log_abs_deriv(chain, xv, {});
      return -ad::mean(lp);
    }
    Var x = flow_inverse(chain, yv, p);
    std::vector<Var> slots = flow_slots(p);
    Var lp = -0.5 * ad::square(x) - 0.5 * kLogTwoPi - flow_log_abs_deriv(chain, x, slots);
    return -ad::mean(lp);
  };
  FlowFitResult r = fit_adam(raw0, options, loss);
  if (y.size() < 2) {
    r.warning = true;
    r.message = "gaussianization from a single value is degenerate";
  }
  return r;
}

}  // namespace tgp
