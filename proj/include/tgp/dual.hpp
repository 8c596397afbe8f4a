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

#include <cmath>
#include <concepts>
#include <type_traits>

#include "tgp/autodiff.hpp"
#include "tgp/numstats.hpp"

// Scalar overloads in tgp::ad so that templated formulas can call ad::exp and
// friends uniformly on double, Var and Dual<T>.
namespace tgp::ad {

inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }
inline double softplus(double x) { return tgp::softplus(x); }
inline double sinh(double x) { return std::sinh(x); }
inline double cosh(double x) { return std::cosh(x); }
inline double asinh(double x) { return std::asinh(x); }
inline double tanh(double x) { return std::tanh(x); }
inline double sqrt(double x) { return std::sqrt(x); }
inline double square(double x) { return x * x; }
inline double abs(double x) { return std::abs(x); }
inline double sigmoid(double x) { return tgp::sigmoid(x); }

inline double signed_pow(double x, double p) {
  if (x == 0.0) return 0.0;
  const double m = std::pow(std::abs(x), p);
  return x > 0.0 ? m : -m;
}

inline Var signed_pow(const Var& x, double p) {
  return signed_pow(x, x.tape()->constant(p));
}
inline Var sigmoid(const Var& x) { return exp(x - softplus(x)); }
inline Var cosh(const Var& x) { return sqrt(1.0 + square(sinh(x))); }

/// Smallest element, for domain checks.
inline double lowest(double x) { return x; }
inline double lowest(const Var& x) { return x.value().minCoeff(); }

/// Forward-mode number: value and directional derivative.
template <class T>
struct Dual {
  T v;
  T d;
};

template <class>
inline constexpr bool is_dual_v = false;
template <class T>
inline constexpr bool is_dual_v<Dual<T>> = true;

// Scalars that may be mixed with Dual<T>: T itself or a plain double.
template <class S, class T>
concept DualScalar = !is_dual_v<S> && (std::same_as<S, T> || std::same_as<S, double>);

template <class T>
double lowest(const Dual<T>& x) {
  return lowest(x.v);
}

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return {a.v + b.v, a.d + b.d};
}
template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  return {a.v - b.v, a.d - b.d};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  T v = a.v / b.v;
  return {v, (a.d - v * b.d) / b.v};
}
template <class T>
Dual<T> operator-(const Dual<T>& a) {
  return {-a.v, -a.d};
}

template <class T, class S>
  requires DualScalar<S, T>
Dual<T> operator+(const Dual<T>& a, const S& s) {
  return {a.v + s, a.d};
}
template <class T, class S>
  requires DualScalar<S, T>
Dual<T> operator+(const S& s, const Dual<T>& a) {
  return {s + a.v, a.d};
}
template <class T, class S>
  requires DualScalar<S, T>
Dual<T> operator-(const Dual<T>& a, const S& s) {
  return {a.v - s, a.d};
}
template <class T, class S>
  requires DualScalar<S, T>
Dual<T> operator-(const S& s, const Dual<T>& a) {
  return {s - a.v, -a.d};
}
template <class T, class S>
  requires DualScalar<S, T>
Dual<T> operator*(const Dual<T>& a, const S& s) {
  return {a.v * s, a.d * s};
}
template <class T, class S>
  requires DualScalar<S, T>
Dual<T> operator*(const S& s, const Dual<T>& a) {
  return {s * a.v, s * a.d};
}
template <class T, class S>
  requires DualScalar<S, T>
Dual<T> operator/(const Dual<T>& a, const S& s) {
  return {a.v / s, a.d / s};
}
template <class T, class S>
  requires DualScalar<S, T>
Dual<T> operator/(const S& s, const Dual<T>& a) {
  T v = s / a.v;
  return {v, -(v * a.d) / a.v};
}

template <class T>
Dual<T> exp(const Dual<T>& x) {
  T e = ad::exp(x.v);
  return {e, x.d * e};
}
template <class T>
Dual<T> log(const Dual<T>& x) {
  return {ad::log(x.v), x.d / x.v};
}
template <class T>
Dual<T> softplus(const Dual<T>& x) {
  return {ad::softplus(x.v), x.d * ad::sigmoid(x.v)};
}
template <class T>
Dual<T> sinh(const Dual<T>& x) {
  return {ad::sinh(x.v), x.d * ad::cosh(x.v)};
}
template <class T>
Dual<T> asinh(const Dual<T>& x) {
  return {ad::asinh(x.v), x.d / ad::sqrt(1.0 + ad::square(x.v))};
}
template <class T>
Dual<T> tanh(const Dual<T>& x) {
  T t = ad::tanh(x.v);
  return {t, x.d * (1.0 - ad::square(t))};
}
template <class T>
Dual<T> sqrt(const Dual<T>& x) {
  T s = ad::sqrt(x.v);
  return {s, x.d * (0.5 / s)};
}
template <class T>
Dual<T> square(const Dual<T>& x) {
  return {ad::square(x.v), x.d * (2.0 * x.v)};
}

/// sgn(x)|x|^p for a fixed exponent.
template <class T, class S>
  requires DualScalar<S, T>
Dual<T> signed_pow(const Dual<T>& x, const S& p) {
  return {ad::signed_pow(x.v, p), x.d * (p * ad::signed_pow(ad::abs(x.v), p - 1.0))};
}

/// Both base and exponent carry a derivative.
inline Dual<double> signed_pow(const Dual<double>& x, const Dual<double>& p) {
  const double y = signed_pow(x.v, p.v);
  double d = 0.0;
  if (x.v != 0.0) {
    d = x.d * p.v * std::pow(std::abs(x.v), p.v - 1.0) +
        p.d * y * std::log(std::abs(x.v));
  }
  return {y, d};
}

template <class T>
Dual<T> seed(const T& value, const T& direction) {
  return {value, direction};
}

}  // namespace tgp::ad
