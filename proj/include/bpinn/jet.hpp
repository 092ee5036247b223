#pragma once

#include <cmath>

namespace bpinn {

/// Value plus first and second derivative with respect to the scalar
/// network input. Carries u, u_x, u_xx through the forward pass.
template <class Scalar>
struct Jet {
  Scalar v{};   // u
  Scalar d1{};  // du/dx
  Scalar d2{};  // d2u/dx2

  static constexpr Jet constant(Scalar c) { return {c, Scalar(0), Scalar(0)}; }
  static constexpr Jet seed(Scalar x) { return {x, Scalar(1), Scalar(0)}; }

  friend constexpr Jet operator+(const Jet& a, const Jet& b) {
    return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2};
  }
  friend constexpr Jet operator-(const Jet& a, const Jet& b) {
    return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2};
  }
  friend constexpr Jet operator*(Scalar c, const Jet& a) {
    return {c * a.v, c * a.d1, c * a.d2};
  }
};

/// tanh derivatives expressed through f = tanh(s):
///   f' = 1 - f^2,  f'' = -2 f f',  f''' = 2 (3 f^2 - 1) f'.
template <class Scalar>
constexpr Scalar tanh_d1(Scalar f) {
  return Scalar(1) - f * f;
}
template <class Scalar>
constexpr Scalar tanh_d2(Scalar f) {
  return Scalar(-2) * f * tanh_d1(f);
}
template <class Scalar>
constexpr Scalar tanh_d3(Scalar f) {
  return Scalar(2) * (Scalar(3) * f * f - Scalar(1)) * tanh_d1(f);
}

/// Elementwise tanh of a jet; chain rule through f' and f''.
template <class Scalar>
Jet<Scalar> jet_tanh(const Jet<Scalar>& s) {
  const Scalar f = std::tanh(s.v);
  const Scalar fp = tanh_d1(f);
  const Scalar fpp = tanh_d2(f);
  return {f, fp * s.d1, fpp * s.d1 * s.d1 + fp * s.d2};
}

}  // namespace bpinn
