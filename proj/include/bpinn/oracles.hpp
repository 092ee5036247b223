#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "bpinn/errors.hpp"
#include "bpinn/field.hpp"

namespace bpinn::oracle {

inline constexpr double kPi = std::numbers::pi_v<double>;

// ---- problem 1: closed form -------------------------------------------------

inline double problem1_u0(double x, double nu) {
  if (x == 0.0 || x == 1.0) return 0.0;  // sin(pi x) vanishes exactly
  return 2.0 * nu * kPi * std::sin(kPi * x) / (2.0 + std::cos(kPi * x));
}

/// u(t,x) = 2 nu pi e^{-nu pi^2 t} sin(pi x) / (2 + e^{-nu pi^2 t} cos(pi x));
/// the denominator never drops below 1.
inline double problem1_u(double t, double x, double nu) {
  if (x == 0.0 || x == 1.0) return 0.0;
  const double decay = std::exp(-nu * kPi * kPi * t);
  return 2.0 * nu * kPi * decay * std::sin(kPi * x) / (2.0 + decay * std::cos(kPi * x));
}

/// PDE defect u_t + u u_x - nu u_xx of the closed form, via fourth-order
/// central differences. Bounded by truncation error, well under 1e-6 at
/// delta = 1e-4.
inline double problem1_residual_check(double t, double x, double nu, double delta = 1e-4) {
  const auto u = [&](double tt, double xx) { return problem1_u(tt, xx, nu); };
  // f'(0) ~ (-f(2d) + 8 f(d) - 8 f(-d) + f(-2d)) / (12 d)
  const double ut = (-u(t + 2 * delta, x) + 8 * u(t + delta, x) - 8 * u(t - delta, x) +
                     u(t - 2 * delta, x)) /
                    (12 * delta);
  const double ux = (-u(t, x + 2 * delta) + 8 * u(t, x + delta) - 8 * u(t, x - delta) +
                     u(t, x - 2 * delta)) /
                    (12 * delta);
  // f''(0) ~ (-f(2d) + 16 f(d) - 30 f(0) + 16 f(-d) - f(-2d)) / (12 d^2)
  const double uxx = (-u(t, x + 2 * delta) + 16 * u(t, x + delta) - 30 * u(t, x) +
                      16 * u(t, x - delta) - u(t, x - 2 * delta)) /
                     (12 * delta * delta);
  return ut + u(t, x) * ux - nu * uxx;
}

// ---- problem 2: Cole-Hopf quadrature ---------------------------------------

inline double problem2_u0(double x) { return -std::sin(kPi * x); }

struct QuadratureSettings {
  std::size_t nodes = 512;   // total Gauss-Legendre nodes (16 per panel)
  double radius = 10.0;      // integration half-width in units of sqrt(4 nu t)
  double rel_tol = 1e-6;     // node-doubling convergence tolerance
  double abs_tol = 1e-9;

  void validate() const {
    if (nodes < 64) throw ConfigError("quadrature: need at least 64 nodes");
    if (radius <= 0) throw ConfigError("quadrature: radius must be positive");
  }
};

namespace detail {

// 16-point Gauss-Legendre abscissae/weights on [-1, 1], positive half.
inline constexpr double kGl16X[8] = {
    0.09501250983763744019, 0.28160355077925891323, 0.45801677765722738634,
    0.61787624440264374845, 0.75540440835500303390, 0.86563120238783174388,
    0.94457502307323257608, 0.98940093499164993260};
inline constexpr double kGl16W[8] = {
    0.18945061045506849629, 0.18260341504492358887, 0.16915651939500253819,
    0.14959598881657673208, 0.12462897125553387205, 0.09515851168249278481,
    0.06225352393864789286, 0.02715245941175409485};

/// Ratio of the two eta-integrals with the shared exponent
///   g(eta) = -eta^2/(4 nu t) - cos(pi (x - eta)) / (2 pi nu)
/// evaluated in log-stabilized form: the maximum of g is subtracted before
/// exponentiation and cancels in the ratio.
inline double problem2_ratio(double t, double x, double nu, std::size_t panels, double half_width) {
  const std::size_t n = panels * 16;
  static thread_local std::vector<double> g, s;
  g.resize(n);
  s.resize(n);
  const double panel_w = 2.0 * half_width / double(panels);
  double gmax = -std::numeric_limits<double>::infinity();
  std::size_t idx = 0;
  for (std::size_t p = 0; p < panels; ++p) {
    const double center = -half_width + (double(p) + 0.5) * panel_w;
    for (int i = 0; i < 16; ++i) {
      const double xi = (i < 8) ? -kGl16X[7 - i] : kGl16X[i - 8];
      const double eta = center + 0.5 * panel_w * xi;
      const double y = x - eta;
      g[idx] = -eta * eta / (4.0 * nu * t) - std::cos(kPi * y) / (2.0 * kPi * nu);
      s[idx] = std::sin(kPi * y);
      gmax = std::max(gmax, g[idx]);
      ++idx;
    }
  }
  double num = 0.0, den = 0.0;
  idx = 0;
  for (std::size_t p = 0; p < panels; ++p) {
    for (int i = 0; i < 16; ++i) {
      const double w = (i < 8) ? kGl16W[7 - i] : kGl16W[i - 8];
      const double e = std::exp(g[idx] - gmax);
      num += w * s[idx] * e;
      den += w * e;
      ++idx;
    }
  }
  return -num / den;
}

}  // namespace detail

/// Analytical Problem-2 solution as the ratio of two Gaussian-weighted
/// integrals; returns the initial condition at t = 0 where the integral
/// formula degenerates. Throws QuadratureError when node doubling still
/// moves the result beyond tolerance.
inline double problem2_u(double t, double x, double nu, const QuadratureSettings& q = {}) {
  q.validate();
  if (t < 0) throw ConfigError("problem2_u: negative time");
  if (t == 0.0) return problem2_u0(x);
  const double half_width = q.radius * std::sqrt(4.0 * nu * t);
  const std::size_t panels = (q.nodes + 15) / 16;
  const double coarse = detail::problem2_ratio(t, x, nu, panels, half_width);
  const double fine = detail::problem2_ratio(t, x, nu, 2 * panels, half_width);
  if (std::abs(fine - coarse) > q.abs_tol + q.rel_tol * std::abs(fine))
    throw QuadratureError("problem2_u: quadrature not converged at t=" + std::to_string(t) +
                          " x=" + std::to_string(x) + " (coarse=" + std::to_string(coarse) +
                          ", fine=" + std::to_string(fine) + ")");
  return fine;
}

// ---- finite-difference implicit Euler reference ------------------------------

struct FdSettings {
  std::size_t nodes = 1001;      // odd, so the grid contains x = 0.5
  double newton_tol = 1e-12;     // max-norm of the Newton update
  std::size_t max_newton = 50;

  void validate() const {
    if (nodes < 101 || nodes % 2 == 0)
      throw ConfigError("fd: node count must be odd and at least 101");
    if (newton_tol <= 0) throw ConfigError("fd: newton tolerance must be positive");
  }
};

namespace detail {

/// Thomas algorithm for a tridiagonal system; diagonals are overwritten.
inline void solve_tridiagonal(std::vector<double>& lower, std::vector<double>& diag,
                              std::vector<double>& upper, std::vector<double>& rhs) {
  const std::size_t n = diag.size();
  for (std::size_t i = 1; i < n; ++i) {
    const double m = lower[i] / diag[i - 1];
    diag[i] -= m * upper[i - 1];
    rhs[i] -= m * rhs[i - 1];
  }
  rhs[n - 1] /= diag[n - 1];
  for (std::size_t i = n - 1; i-- > 0;)
    rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace detail

/// Implicit Euler in time, second-order central differences in space,
/// damped Newton per step on the nonlinear system, homogeneous Dirichlet
/// rows pinned. Returns grid solutions at the requested step indices
/// (sorted; index 0 is the initial condition).
template <class U0>
std::vector<SolutionField> fd_solve(double nu, double ht, std::size_t nt, U0&& u0,
                                    const FdSettings& fd = {},
                                    std::span<const std::size_t> capture_steps = {}) {
  fd.validate();
  if (!(ht > 0) || nt < 1) throw ConfigError("fd: invalid time stepping");
  const std::size_t n = fd.nodes;
  const double hx = 1.0 / double(n - 1);

  std::vector<double> x(n), u(n), up(n), trial(n);
  for (std::size_t j = 0; j < n; ++j) {
    x[j] = double(j) * hx;
    u[j] = u0(x[j]);
  }
  u.front() = 0.0;
  u.back() = 0.0;

  std::vector<std::size_t> capture(capture_steps.begin(), capture_steps.end());
  if (capture.empty()) {
    capture.resize(nt + 1);
    for (std::size_t k = 0; k <= nt; ++k) capture[k] = k;
  }
  std::sort(capture.begin(), capture.end());

  std::vector<SolutionField> out;
  auto maybe_capture = [&](std::size_t k) {
    if (std::binary_search(capture.begin(), capture.end(), k))
      out.push_back(SolutionField{x, u});
  };
  maybe_capture(0);

  const double rx = ht * nu / (hx * hx);
  const double cx = ht / (2.0 * hx);
  const std::size_t m = n - 2;  // interior unknowns
  std::vector<double> F(m), lower(m), diag(m), upper(m), rhs(m);

  auto residual = [&](const std::vector<double>& v, std::vector<double>& out_F) {
    for (std::size_t j = 1; j + 1 < n; ++j) {
      const double lap = v[j + 1] - 2.0 * v[j] + v[j - 1];
      const double grad = v[j + 1] - v[j - 1];
      out_F[j - 1] = v[j] - up[j] - rx * lap + cx * v[j] * grad;
    }
  };

  for (std::size_t k = 1; k <= nt; ++k) {
    up = u;  // previous level; also the initial Newton iterate
    residual(u, F);
    double fnorm = detail::max_abs(F);
    std::size_t it = 0;
    for (;; ++it) {
      if (it >= fd.max_newton)
        throw NewtonError("fd_solve: Newton did not converge at step " + std::to_string(k) +
                              " (|F| = " + std::to_string(fnorm) + ")",
                          k, fnorm);
      for (std::size_t j = 1; j + 1 < n; ++j) {
        const std::size_t i = j - 1;
        const double grad = u[j + 1] - u[j - 1];
        lower[i] = -rx - cx * u[j];
        diag[i] = 1.0 + 2.0 * rx + cx * grad;
        upper[i] = -rx + cx * u[j];
        rhs[i] = -F[i];
      }
      detail::solve_tridiagonal(lower, diag, upper, rhs);  // rhs becomes delta
      const double step_norm = detail::max_abs(rhs);

      // Damp by halving until the residual stops increasing.
      double lambda = 1.0;
      double new_norm = 0.0;
      for (;;) {
        trial = u;
        for (std::size_t i = 0; i < m; ++i) trial[i + 1] += lambda * rhs[i];
        residual(trial, F);
        new_norm = detail::max_abs(F);
        if (new_norm <= fnorm || lambda < 1e-6) break;
        lambda *= 0.5;
      }
      if (new_norm > fnorm && lambda < 1e-6)
        throw NewtonError("fd_solve: damped Newton stalled at step " + std::to_string(k) +
                              " (|F| = " + std::to_string(new_norm) + ")",
                          k, new_norm);
      u.swap(trial);
      fnorm = new_norm;
      if (step_norm * lambda < fd.newton_tol) break;
    }
    maybe_capture(k);
  }
  return out;
}

}  // namespace bpinn::oracle
