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

#include "tgp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "tgp/errors.hpp"

namespace tgp::ad {

using Eigen::Index;

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kNeg: return "neg";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kCholesky: return "cholesky";
    case OpKind::kTriangularSolve: return "triangular-solve";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kSinh: return "sinh";
    case OpKind::kArcsinh: return "arcsinh";
    case OpKind::kTanh: return "tanh";
    case OpKind::kErf: return "erf";
    case OpKind::kLogNormalCdf: return "log-normal-cdf";
    case OpKind::kSquare: return "square";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kAbs: return "abs";
    case OpKind::kPower: return "power";
    case OpKind::kBroadcast: return "broadcast";
    case OpKind::kGather: return "gather";
    case OpKind::kLogSumExp: return "logsumexp";
    case OpKind::kDiagonal: return "diagonal";
    case OpKind::kClampMin: return "clamp-min";
    case OpKind::kConcat: return "concat";
    case OpKind::kPairwiseSqDist: return "pairwise-sqdist";
    case OpKind::kPeriodicSin2: return "periodic-sin2";
    case OpKind::kCustom: return "custom";
  }
  return "unknown";
}

const Matrix& Var::value() const {
  if (!tape_) throw UsageError("value() on an unbound Var");
  return tape_->value(id_);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) {
    throw UsageError("scalar() on a " + std::to_string(v.rows()) + "x" +
                     std::to_string(v.cols()) + " value");
  }
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  return push(OpKind::kConstant, std::move(value), {}, nullptr);
}

Var Tape::constant(double value) {
  return constant(Matrix::Constant(1, 1, value));
}

Var Tape::parameters(std::span<const double> values) {
  if (parameters_ >= 0) throw UsageError("tape already has a parameter leaf");
  Matrix v(static_cast<Index>(values.size()), 1);
  std::copy(values.begin(), values.end(), v.data());
  Var leaf = push(OpKind::kParameter, std::move(v), {}, nullptr);
  nodes_[leaf.id_].needs_grad = true;
  parameters_ = leaf.id_;
  return leaf;
}

Var Tape::push(OpKind op, Matrix value, std::vector<int> parents,
               Backward backward) {
  const int id = static_cast<int>(nodes_.size());
  if (!value.allFinite()) {
    throw NonFiniteValue(std::string(op_name(op)) +
                             " produced a non-finite value at node " +
                             std::to_string(id),
                         id);
  }
  bool grad = false;
  for (int p : parents) grad = grad || nodes_[p].needs_grad;
  Node node{op, std::move(parents), std::move(value), Matrix(),
            grad ? std::move(backward) : Backward(), grad};
  nodes_.push_back(std::move(node));
  return Var(this, id);
}

Matrix& Tape::adjoint(int id) {
  Node& n = nodes_[id];
  if (n.adjoint.size() == 0) n.adjoint = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.adjoint;
}

void Tape::set_loss(const Var& loss) {
  if (loss.tape_ != this) throw UsageError("loss belongs to another tape");
  if (loss.value().size() != 1) throw UsageError("loss must be a scalar");
  loss_ = loss.id_;
  evaluated_ = true;
}

Vector Tape::backward() {
  if (!evaluated_ || loss_ < 0) {
    throw UsageError("backward called before forward");
  }
  for (auto& n : nodes_) n.adjoint.resize(0, 0);
  adjoint(loss_)(0, 0) = 1.0;
  for (int id = loss_; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || !n.backward || n.adjoint.size() == 0) continue;
    n.backward(*this, id);
  }
  if (parameters_ < 0) return Vector();
  return adjoint(parameters_).col(0);
}

void Tape::clear() {
  nodes_.clear();
  parameters_ = -1;
  loss_ = -1;
  evaluated_ = false;
}

double forward(Tape& tape, const Objective& objective,
               std::span<const double> params) {
  tape.clear();
  Var p = tape.parameters(params);
  Var loss = objective(tape, p);
  tape.set_loss(loss);
  return loss.scalar();
}

Vector backward(Tape& tape) { return tape.backward(); }

double finite_diff_check(const Objective& objective,
                         std::span<const double> params, double step) {
  Tape tape;
  forward(tape, objective, params);
  const Vector analytic = backward(tape);
  std::vector<double> x(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = forward(tape, objective, x);
    x[i] = saved - step;
    const double down = forward(tape, objective, x);
    x[i] = saved;
    const double central = (up - down) / (2.0 * step);
    if (!std::isfinite(central)) {
      throw NonFiniteValue("finite difference is not finite for parameter " +
                           std::to_string(i));
    }
    const double err = std::abs(analytic(static_cast<Index>(i)) - central) /
                       std::max(1.0, std::abs(central));
    worst = std::max(worst, err);
  }
  return worst;
}

namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw UsageError("operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw UsageError("operands live on different tapes");
  return t;
}

Index broadcast_dim(Index x, Index y, OpKind op) {
  if (x == y) return x;
  if (x == 1) return y;
  if (y == 1) return x;
  throw UsageError(std::string(op_name(op)) + ": shapes do not broadcast");
}

Matrix expand(const Matrix& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Matrix r = g;
  if (rows == 1 && r.rows() != 1) r = r.colwise().sum().eval();
  if (cols == 1 && r.cols() != 1) r = r.rowwise().sum().eval();
  return r;
}

void accumulate(Tape& t, int id, const Matrix& g) {
  if (!t.needs_grad(id)) return;
  const Matrix& v = t.value(id);
  t.adjoint(id) += reduce_to(g, v.rows(), v.cols());
}

enum class Bin { kAdd, kSub, kMul, kDiv };

Var binary(Bin kind, const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  static constexpr OpKind kinds[] = {OpKind::kAdd, OpKind::kSub, OpKind::kMul,
                                     OpKind::kDiv};
  const OpKind op = kinds[static_cast<int>(kind)];
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const Index r = broadcast_dim(av.rows(), bv.rows(), op);
  const Index c = broadcast_dim(av.cols(), bv.cols(), op);
  Matrix value;
  {
    const Matrix ae = expand(av, r, c);
    const Matrix be = expand(bv, r, c);
    switch (kind) {
      case Bin::kAdd: value = ae + be; break;
      case Bin::kSub: value = ae - be; break;
      case Bin::kMul: value = ae.cwiseProduct(be); break;
      case Bin::kDiv: value = ae.cwiseQuotient(be); break;
    }
  }
  const int ia = a.id();
  const int ib = b.id();
  return t.push(op, std::move(value), {ia, ib},
                [kind, ia, ib, r, c](Tape& t, int self) {
                  const Matrix& g = t.adjoint(self);
                  switch (kind) {
                    case Bin::kAdd:
                      accumulate(t, ia, g);
                      accumulate(t, ib, g);
                      break;
                    case Bin::kSub:
                      accumulate(t, ia, g);
                      accumulate(t, ib, -g);
                      break;
                    case Bin::kMul:
                      if (t.needs_grad(ia))
                        accumulate(t, ia, g.cwiseProduct(expand(t.value(ib), r, c)));
                      if (t.needs_grad(ib))
                        accumulate(t, ib, g.cwiseProduct(expand(t.value(ia), r, c)));
                      break;
                    case Bin::kDiv: {
                      const Matrix be = expand(t.value(ib), r, c);
                      if (t.needs_grad(ia)) accumulate(t, ia, g.cwiseQuotient(be));
                      if (t.needs_grad(ib)) {
                        const Matrix& y = t.value(self);
                        accumulate(t, ib, -g.cwiseProduct(y).cwiseQuotient(be));
                      }
                      break;
                    }
                  }
                });
}

// Elementwise map with derivative dy/dx computed from (x, y) on demand.
template <class Deriv>
Var unary(OpKind op, const Var& x, Matrix value, Deriv deriv) {
  Tape& t = tape_of(x);
  const int ix = x.id();
  return t.push(op, std::move(value), {ix}, [ix, deriv](Tape& t, int self) {
    const Matrix& g = t.adjoint(self);
    t.adjoint(ix) += g.cwiseProduct(deriv(t.value(ix), t.value(self)));
  });
}

Matrix map(const Matrix& x, double (*f)(double)) {
  return x.unaryExpr(f);
}

}  // namespace

Var operator+(const Var& a, const Var& b) { return binary(Bin::kAdd, a, b); }
Var operator-(const Var& a, const Var& b) { return binary(Bin::kSub, a, b); }
Var operator*(const Var& a, const Var& b) { return binary(Bin::kMul, a, b); }
Var operator/(const Var& a, const Var& b) { return binary(Bin::kDiv, a, b); }

Var operator-(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push(OpKind::kNeg, -a.value(), {ia}, [ia](Tape& t, int self) {
    t.adjoint(ia) -= t.adjoint(self);
  });
}

Var operator+(const Var& a, double b) {
  return unary(OpKind::kAdd, a, (a.value().array() + b).matrix(),
               [](const Matrix& x, const Matrix&) {
                 return Matrix::Ones(x.rows(), x.cols());
               });
}
Var operator+(double a, const Var& b) { return b + a; }
Var operator-(const Var& a, double b) { return a + (-b); }
Var operator-(double a, const Var& b) { return (-b) + a; }

Var operator*(const Var& a, double b) {
  return unary(OpKind::kMul, a, a.value() * b,
               [b](const Matrix& x, const Matrix&) {
                 return Matrix::Constant(x.rows(), x.cols(), b);
               });
}
Var operator*(double a, const Var& b) { return b * a; }
Var operator/(const Var& a, double b) { return a * (1.0 / b); }

Var operator/(double a, const Var& b) {
  return unary(OpKind::kDiv, b, (a / b.value().array()).matrix(),
               [](const Matrix& x, const Matrix& y) {
                 return (-y.array() / x.array()).matrix();
               });
}

Var exp(const Var& x) {
  return unary(OpKind::kExp, x, x.value().array().exp().matrix(),
               [](const Matrix&, const Matrix& y) { return y; });
}

Var log(const Var& x) {
  return unary(OpKind::kLog, x, x.value().array().log().matrix(),
               [](const Matrix& x, const Matrix&) {
                 return x.array().inverse().matrix();
               });
}

Var softplus(const Var& x) {
  return unary(OpKind::kSoftplus, x, map(x.value(), tgp::softplus),
               [](const Matrix& x, const Matrix&) { return map(x, tgp::sigmoid); });
}

Var sinh(const Var& x) {
  return unary(OpKind::kSinh, x, x.value().array().sinh().matrix(),
               [](const Matrix& x, const Matrix&) {
                 return x.array().cosh().matrix();
               });
}

Var asinh(const Var& x) {
  return unary(OpKind::kArcsinh, x,
               x.value().unaryExpr([](double v) { return std::asinh(v); }),
               [](const Matrix& x, const Matrix&) {
                 return (x.array().square() + 1.0).rsqrt().matrix();
               });
}

Var tanh(const Var& x) {
  return unary(OpKind::kTanh, x, x.value().array().tanh().matrix(),
               [](const Matrix&, const Matrix& y) {
                 return (1.0 - y.array().square()).matrix();
               });
}

Var erf(const Var& x) {
  return unary(OpKind::kErf, x,
               x.value().unaryExpr([](double v) { return std::erf(v); }),
               [](const Matrix& x, const Matrix&) {
                 return (2.0 / std::sqrt(std::numbers::pi) *
                         (-x.array().square()).exp())
                     .matrix();
               });
}

Var log_normal_cdf(const Var& x) {
  return unary(OpKind::kLogNormalCdf, x, map(x.value(), tgp::log_normal_cdf),
               [](const Matrix& x, const Matrix&) {
                 return map(x, tgp::normal_hazard_ratio);
               });
}

Var square(const Var& x) {
  return unary(OpKind::kSquare, x, x.value().array().square().matrix(),
               [](const Matrix& x, const Matrix&) { return (2.0 * x).eval(); });
}

Var sqrt(const Var& x) {
  // The derivative at exactly zero is taken as zero (one-sided subgradient).
  return unary(OpKind::kSqrt, x, x.value().array().sqrt().matrix(),
               [](const Matrix&, const Matrix& y) {
                 return y.unaryExpr([](double v) { return v > 0.0 ? 0.5 / v : 0.0; });
               });
}

Var abs(const Var& x) {
  return unary(OpKind::kAbs, x, x.value().cwiseAbs(),
               [](const Matrix& x, const Matrix&) {
                 return x.unaryExpr([](double v) {
                   return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
                 });
               });
}

Var clamp_min(const Var& x, double lo) {
  return unary(OpKind::kClampMin, x, x.value().cwiseMax(lo),
               [lo](const Matrix& x, const Matrix&) {
                 return x.unaryExpr([lo](double v) { return v > lo ? 1.0 : 0.0; });
               });
}

Var relu(const Var& x) { return clamp_min(x, 0.0); }

Var pow(const Var& x, double p) {
  return unary(OpKind::kPower, x, x.value().array().pow(p).matrix(),
               [p](const Matrix& x, const Matrix&) {
                 return (p * x.array().pow(p - 1.0)).matrix();
               });
}

namespace {

double signed_pow_value(double x, double p) {
  if (x == 0.0) return 0.0;
  const double m = std::pow(std::abs(x), p);
  return x > 0.0 ? m : -m;
}

}  // namespace

Var signed_pow(const Var& x, const Var& p) {
  Tape& t = tape_of(x, p);
  const Index r = broadcast_dim(x.rows(), p.rows(), OpKind::kPower);
  const Index c = broadcast_dim(x.cols(), p.cols(), OpKind::kPower);
  const Matrix xe = expand(x.value(), r, c);
  const Matrix pe = expand(p.value(), r, c);
  Matrix value = xe.binaryExpr(pe, [](double a, double b) {
    return signed_pow_value(a, b);
  });
  const int ix = x.id();
  const int ip = p.id();
  return t.push(OpKind::kPower, std::move(value), {ix, ip},
                [ix, ip, r, c](Tape& t, int self) {
                  const Matrix& g = t.adjoint(self);
                  const Matrix xe = expand(t.value(ix), r, c);
                  const Matrix pe = expand(t.value(ip), r, c);
                  if (t.needs_grad(ix)) {
                    Matrix d = xe.binaryExpr(pe, [](double a, double b) {
                      return b * std::pow(std::abs(a), b - 1.0);
                    });
                    accumulate(t, ix, g.cwiseProduct(d));
                  }
                  if (t.needs_grad(ip)) {
                    const Matrix& y = t.value(self);
                    Matrix d = y.binaryExpr(xe, [](double yv, double a) {
                      return a == 0.0 ? 0.0 : yv * std::log(std::abs(a));
                    });
                    accumulate(t, ip, g.cwiseProduct(d));
                  }
                });
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) throw UsageError("matmul: inner dimensions differ");
  const int ia = a.id();
  const int ib = b.id();
  Matrix value = a.value() * b.value();
  return t.push(OpKind::kMatmul, std::move(value), {ia, ib},
                [ia, ib](Tape& t, int self) {
                  const Matrix& g = t.adjoint(self);
                  if (t.needs_grad(ia)) t.adjoint(ia).noalias() += g * t.value(ib).transpose();
                  if (t.needs_grad(ib)) t.adjoint(ib).noalias() += t.value(ia).transpose() * g;
                });
}

Var transpose(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.push(OpKind::kTranspose, a.value().transpose(), {ia},
                [ia](Tape& t, int self) {
                  t.adjoint(ia) += t.adjoint(self).transpose();
                });
}

Var cholesky(const Var& a, JitterState& jitter) {
  Tape& t = tape_of(a);
  JitteredCholesky chol = cholesky_jittered(a.value(), jitter.schedule);
  if (chol.jitter > jitter.schedule.initial) {
    jitter.schedule.initial = chol.jitter;
    jitter.schedule.escalated = std::max(jitter.schedule.escalated, chol.jitter);
    ++jitter.escalations;
  }
  const int ia = a.id();
  return t.push(OpKind::kCholesky, std::move(chol.lower), {ia},
                [ia](Tape& t, int self) {
                  const Matrix& l = t.value(self);
                  const Matrix& lbar = t.adjoint(self);
                  // Phi(L^T Lbar): lower triangle with the diagonal halved.
                  Matrix p = (l.transpose() * lbar).triangularView<Eigen::Lower>();
                  p.diagonal() *= 0.5;
                  const auto lt = l.transpose().triangularView<Eigen::Upper>();
                  Matrix x = lt.solve(p);                        // L^{-T} P
                  Matrix abar = lt.solve(x.transpose().eval()).transpose();  // X L^{-1}
                  t.adjoint(ia) += 0.5 * (abar + abar.transpose());
                });
}

Var solve_lower(const Var& lower, const Var& b, bool transpose_lower) {
  Tape& t = tape_of(lower, b);
  const Matrix& l = lower.value();
  if (l.rows() != l.cols() || l.rows() != b.rows()) {
    throw UsageError("solve_lower: shape mismatch");
  }
  Matrix value = transpose_lower
                     ? Matrix(l.transpose().triangularView<Eigen::Upper>().solve(b.value()))
                     : Matrix(l.triangularView<Eigen::Lower>().solve(b.value()));
  const int il = lower.id();
  const int ib = b.id();
  return t.push(OpKind::kTriangularSolve, std::move(value), {il, ib},
                [il, ib, transpose_lower](Tape& t, int self) {
                  const Matrix& l = t.value(il);
                  const Matrix& x = t.value(self);
                  const Matrix& g = t.adjoint(self);
                  Matrix bbar = transpose_lower
                                    ? Matrix(l.triangularView<Eigen::Lower>().solve(g))
                                    : Matrix(l.transpose().triangularView<Eigen::Upper>().solve(g));
                  if (t.needs_grad(il)) {
                    Matrix lbar = transpose_lower ? Matrix(-x * bbar.transpose())
                                                  : Matrix(-bbar * x.transpose());
                    t.adjoint(il) += lbar.triangularView<Eigen::Lower>().toDenseMatrix();
                  }
                  if (t.needs_grad(ib)) t.adjoint(ib) += bbar;
                });
}

Var sum(const Var& x) {
  Tape& t = tape_of(x);
  const int ix = x.id();
  return t.push(OpKind::kSum, Matrix::Constant(1, 1, x.value().sum()), {ix},
                [ix](Tape& t, int self) {
                  t.adjoint(ix).array() += t.adjoint(self)(0, 0);
                });
}

Var sum(const Var& x, int axis) {
  Tape& t = tape_of(x);
  const int ix = x.id();
  if (axis != 0 && axis != 1) throw UsageError("sum: axis must be 0 or 1");
  Matrix value = axis == 0 ? Matrix(x.value().colwise().sum())
                           : Matrix(x.value().rowwise().sum());
  return t.push(OpKind::kSum, std::move(value), {ix}, [ix](Tape& t, int self) {
    const Matrix& v = t.value(ix);
    t.adjoint(ix) += expand(t.adjoint(self), v.rows(), v.cols());
  });
}

Var mean(const Var& x) {
  return sum(x) * (1.0 / static_cast<double>(x.value().size()));
}

Var logsumexp(const Var& x) {
  Tape& t = tape_of(x);
  const Matrix& v = x.value();
  if (v.size() == 0) throw UsageError("logsumexp of an empty value");
  const double top = v.maxCoeff();
  const double value = top + std::log((v.array() - top).exp().sum());
  const int ix = x.id();
  return t.push(OpKind::kLogSumExp, Matrix::Constant(1, 1, value), {ix},
                [ix](Tape& t, int self) {
                  const double y = t.value(self)(0, 0);
                  const double g = t.adjoint(self)(0, 0);
                  t.adjoint(ix) += (g * (t.value(ix).array() - y).exp()).matrix();
                });
}

Var logsumexp(const Var& x, int axis) {
  Tape& t = tape_of(x);
  if (axis != 0 && axis != 1) throw UsageError("logsumexp: axis must be 0 or 1");
  const Matrix& v = x.value();
  Matrix value;
  if (axis == 0) {
    value.resize(1, v.cols());
    for (Index j = 0; j < v.cols(); ++j) {
      const double top = v.col(j).maxCoeff();
      value(0, j) = top + std::log((v.col(j).array() - top).exp().sum());
    }
  } else {
    value.resize(v.rows(), 1);
    for (Index i = 0; i < v.rows(); ++i) {
      const double top = v.row(i).maxCoeff();
      value(i, 0) = top + std::log((v.row(i).array() - top).exp().sum());
    }
  }
  const int ix = x.id();
  return t.push(OpKind::kLogSumExp, std::move(value), {ix},
                [ix](Tape& t, int self) {
                  const Matrix& v = t.value(ix);
                  const Matrix y = expand(t.value(self), v.rows(), v.cols());
                  const Matrix g = expand(t.adjoint(self), v.rows(), v.cols());
                  t.adjoint(ix) += g.cwiseProduct((v - y).array().exp().matrix());
                });
}

Var broadcast(const Var& x, Index rows, Index cols) {
  Tape& t = tape_of(x);
  broadcast_dim(x.rows(), rows, OpKind::kBroadcast);
  broadcast_dim(x.cols(), cols, OpKind::kBroadcast);
  if (x.rows() != 1 && x.rows() != rows) throw UsageError("broadcast: bad rows");
  if (x.cols() != 1 && x.cols() != cols) throw UsageError("broadcast: bad cols");
  const int ix = x.id();
  return t.push(OpKind::kBroadcast, expand(x.value(), rows, cols), {ix},
                [ix](Tape& t, int self) { accumulate(t, ix, t.adjoint(self)); });
}

Var gather(const Var& x, std::vector<int> index, Index rows, Index cols) {
  Tape& t = tape_of(x);
  if (static_cast<Index>(index.size()) != rows * cols) {
    throw UsageError("gather: index size does not match output shape");
  }
  const Matrix& v = x.value();
  Matrix value = Matrix::Zero(rows, cols);
  for (Index k = 0; k < rows * cols; ++k) {
    const int src = index[static_cast<std::size_t>(k)];
    if (src >= v.size()) throw UsageError("gather: index out of range");
    if (src >= 0) value.data()[k] = v.data()[src];
  }
  const int ix = x.id();
  return t.push(OpKind::kGather, std::move(value), {ix},
                [ix, index = std::move(index)](Tape& t, int self) {
                  const Matrix& g = t.adjoint(self);
                  Matrix& a = t.adjoint(ix);
                  for (std::size_t k = 0; k < index.size(); ++k) {
                    if (index[k] >= 0) a.data()[index[k]] += g.data()[k];
                  }
                });
}

Var slice(const Var& x, int offset, Index rows, Index cols) {
  Tape& t = tape_of(x);
  const Matrix& v = x.value();
  if (offset < 0 || offset + rows * cols > v.size()) {
    throw UsageError("slice: out of range");
  }
  Matrix value = Eigen::Map<const Matrix>(v.data() + offset, rows, cols);
  const int ix = x.id();
  return t.push(OpKind::kGather, std::move(value), {ix},
                [ix, offset, rows, cols](Tape& t, int self) {
                  Matrix& a = t.adjoint(ix);
                  Eigen::Map<Matrix>(a.data() + offset, rows, cols) += t.adjoint(self);
                });
}

Var diagonal(const Var& x) {
  Tape& t = tape_of(x);
  const int ix = x.id();
  return t.push(OpKind::kDiagonal, Matrix(x.value().diagonal()), {ix},
                [ix](Tape& t, int self) {
                  t.adjoint(ix).diagonal() += t.adjoint(self).col(0);
                });
}

Var concat(const Var& a, const Var& b, int axis) {
  Tape& t = tape_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix value;
  if (axis == 0) {
    if (av.cols() != bv.cols()) throw UsageError("concat: column counts differ");
    value.resize(av.rows() + bv.rows(), av.cols());
    value << av, bv;
  } else if (axis == 1) {
    if (av.rows() != bv.rows()) throw UsageError("concat: row counts differ");
    value.resize(av.rows(), av.cols() + bv.cols());
    value << av, bv;
  } else {
    throw UsageError("concat: axis must be 0 or 1");
  }
  const int ia = a.id();
  const int ib = b.id();
  const Index ar = av.rows();
  const Index ac = av.cols();
  return t.push(OpKind::kConcat, std::move(value), {ia, ib},
                [ia, ib, ar, ac, axis](Tape& t, int self) {
                  const Matrix& g = t.adjoint(self);
                  if (axis == 0) {
                    if (t.needs_grad(ia)) t.adjoint(ia) += g.topRows(ar);
                    if (t.needs_grad(ib)) t.adjoint(ib) += g.bottomRows(g.rows() - ar);
                  } else {
                    if (t.needs_grad(ia)) t.adjoint(ia) += g.leftCols(ac);
                    if (t.needs_grad(ib)) t.adjoint(ib) += g.rightCols(g.cols() - ac);
                  }
                });
}

Var pairwise_sqdist(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) throw UsageError("pairwise_sqdist: dims differ");
  Matrix value(av.rows(), bv.rows());
  for (Index j = 0; j < bv.rows(); ++j) {
    for (Index i = 0; i < av.rows(); ++i) {
      value(i, j) = (av.row(i) - bv.row(j)).squaredNorm();
    }
  }
  const int ia = a.id();
  const int ib = b.id();
  return t.push(OpKind::kPairwiseSqDist, std::move(value), {ia, ib},
                [ia, ib](Tape& t, int self) {
                  const Matrix& g = t.adjoint(self);
                  const Matrix& av = t.value(ia);
                  const Matrix& bv = t.value(ib);
                  if (t.needs_grad(ia)) {
                    Matrix d = 2.0 * (g.rowwise().sum().asDiagonal() * av - g * bv);
                    t.adjoint(ia) += d;
                  }
                  if (t.needs_grad(ib)) {
                    Matrix d = 2.0 * (g.colwise().sum().transpose().asDiagonal() * bv -
                                      g.transpose() * av);
                    t.adjoint(ib) += d;
                  }
                });
}

Var periodic_sin2(const Var& a, const Var& b, const Var& period) {
  Tape& t = tape_of(a, b);
  if (period.tape() != &t) throw UsageError("operands live on different tapes");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) throw UsageError("periodic_sin2: dims differ");
  const double p = period.scalar();
  const double k = std::numbers::pi / p;
  Matrix value = Matrix::Zero(av.rows(), bv.rows());
  for (Index j = 0; j < bv.rows(); ++j) {
    for (Index i = 0; i < av.rows(); ++i) {
      double s = 0.0;
      for (Index d = 0; d < av.cols(); ++d) {
        const double v = std::sin(k * (av(i, d) - bv(j, d)));
        s += v * v;
      }
      value(i, j) = s;
    }
  }
  const int ia = a.id();
  const int ib = b.id();
  const int ip = period.id();
  return t.push(
      OpKind::kPeriodicSin2, std::move(value), {ia, ib, ip},
      [ia, ib, ip](Tape& t, int self) {
        const Matrix& g = t.adjoint(self);
        const Matrix& av = t.value(ia);
        const Matrix& bv = t.value(ib);
        const double p = t.value(ip)(0, 0);
        const double k = std::numbers::pi / p;
        const bool ga = t.needs_grad(ia);
        const bool gb = t.needs_grad(ib);
        const bool gp = t.needs_grad(ip);
        Matrix da = ga ? Matrix::Zero(av.rows(), av.cols()) : Matrix();
        Matrix db = gb ? Matrix::Zero(bv.rows(), bv.cols()) : Matrix();
        double dp = 0.0;
        for (Index j = 0; j < bv.rows(); ++j) {
          for (Index i = 0; i < av.rows(); ++i) {
            const double gij = g(i, j);
            if (gij == 0.0) continue;
            for (Index d = 0; d < av.cols(); ++d) {
              const double theta = k * (av(i, d) - bv(j, d));
              const double s2 = std::sin(2.0 * theta);
              if (ga) da(i, d) += gij * s2 * k;
              if (gb) db(j, d) -= gij * s2 * k;
              if (gp) dp -= gij * s2 * theta / p;
            }
          }
        }
        if (ga) t.adjoint(ia) += da;
        if (gb) t.adjoint(ib) += db;
        if (gp) t.adjoint(ip)(0, 0) += dp;
      });
}

}  // namespace tgp::ad
