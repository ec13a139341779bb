#pragma once

// Forward-mode dual numbers, nestable (Dual<Dual<double>>) so that a
// directional derivative can be pushed through code that is itself
// computing first derivatives. Branches (relu, abs) dispatch on the value
// part, which fixes the subgradient selection at kinks.

#include <cmath>

namespace speclab {

template <class T>
struct Dual {
  T v{};  // value
  T d{};  // derivative along the seeded direction

  Dual() = default;
  Dual(double x) : v(x), d(0.0) {}  // NOLINT: implicit promotion intended
  Dual(T value, T deriv) : v(value), d(deriv) {}
};

inline double value_of(double x) { return x; }
template <class T>
double value_of(const Dual<T>& x) {
  return value_of(x.v);
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
Dual<T> operator-(const Dual<T>& a) {
  return {-a.v, -a.d};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  const T q = a.v / b.v;
  return {q, (a.d - q * b.d) / b.v};
}

template <class T>
Dual<T> operator+(const Dual<T>& a, double b) {
  return {a.v + T(b), a.d};
}
template <class T>
Dual<T> operator+(double a, const Dual<T>& b) {
  return b + a;
}
template <class T>
Dual<T> operator-(const Dual<T>& a, double b) {
  return {a.v - T(b), a.d};
}
template <class T>
Dual<T> operator-(double a, const Dual<T>& b) {
  return {T(a) - b.v, -b.d};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, double b) {
  return {a.v * T(b), a.d * T(b)};
}
template <class T>
Dual<T> operator*(double a, const Dual<T>& b) {
  return b * a;
}
template <class T>
Dual<T> operator/(const Dual<T>& a, double b) {
  return {a.v / T(b), a.d / T(b)};
}
template <class T>
Dual<T> operator/(double a, const Dual<T>& b) {
  return Dual<T>(a) / b;
}

template <class T>
Dual<T>& operator+=(Dual<T>& a, const Dual<T>& b) {
  a = a + b;
  return a;
}
template <class T>
Dual<T>& operator-=(Dual<T>& a, const Dual<T>& b) {
  a = a - b;
  return a;
}
template <class T>
Dual<T>& operator*=(Dual<T>& a, const Dual<T>& b) {
  a = a * b;
  return a;
}

template <class T>
bool operator<(const Dual<T>& a, double b) {
  return value_of(a) < b;
}
template <class T>
bool operator>(const Dual<T>& a, double b) {
  return value_of(a) > b;
}

using std::exp;
using std::log1p;
using std::sqrt;
using std::tanh;

template <class T>
Dual<T> exp(const Dual<T>& a) {
  const T e = exp(a.v);
  return {e, a.d * e};
}

template <class T>
Dual<T> tanh(const Dual<T>& a) {
  const T t = tanh(a.v);
  return {t, a.d * (1.0 - t * t)};
}

template <class T>
Dual<T> log1p(const Dual<T>& a) {
  return {log1p(a.v), a.d / (1.0 + a.v)};
}

template <class T>
Dual<T> sqrt(const Dual<T>& a) {
  const T s = sqrt(a.v);
  return {s, a.d / (2.0 * s)};
}

inline double erf_value(double x) { return std::erf(x); }

template <class T>
T erf_t(const T& x);

template <>
inline double erf_t<double>(const double& x) {
  return std::erf(x);
}

template <class T>
Dual<T> erf_t(const Dual<T>& a) {
  constexpr double two_over_sqrt_pi = 1.1283791670955126;
  return {erf_t(a.v), a.d * (two_over_sqrt_pi * exp(-(a.v * a.v)))};
}

using D1 = Dual<double>;
using D2 = Dual<Dual<double>>;

}  // namespace speclab
