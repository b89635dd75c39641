#pragma once

// Matrix-free preconditioned Krylov iterations on complex coefficient vectors.
//
// `apply(x, y)` writes y = A x, `precondition(r, z)` writes z = P r with P an
// approximation of A^{-1}. Convergence is measured in the norm induced by P,
// ||r||_P = sqrt(<r, P r>), relative to ||b||_P.

#include <cmath>
#include <complex>
#include <span>
#include <vector>

namespace homlab {

struct KrylovReport {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

namespace detail {

inline std::complex<double> dot(std::span<const std::complex<double>> a,
                                std::span<const std::complex<double>> b) {
  std::complex<double> s{};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

}  // namespace detail

// Conjugate gradients for Hermitian positive (semi)definite A and P.
template <class Apply, class Precondition>
KrylovReport conjugate_gradient(Apply&& apply, Precondition&& precondition,
                                std::span<const std::complex<double>> b,
                                std::span<std::complex<double>> x, double tolerance,
                                int max_iterations) {
  using C = std::complex<double>;
  const std::size_t n = b.size();
  std::vector<C> r(n), z(n), p(n), q(n);

  precondition(b, std::span<C>(z));
  const double b_norm = std::sqrt(std::abs(detail::dot(b, z)));
  KrylovReport report;
  if (b_norm == 0.0) {
    std::fill(x.begin(), x.end(), C{});
    report.converged = true;
    return report;
  }

  apply(std::span<const C>(x.data(), n), std::span<C>(q));
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - q[i];
  precondition(std::span<const C>(r), std::span<C>(z));
  double rho = std::abs(detail::dot(r, z));
  p = z;
  report.relative_residual = std::sqrt(rho) / b_norm;

  while (report.relative_residual > tolerance && report.iterations < max_iterations) {
    apply(std::span<const C>(p), std::span<C>(q));
    const C pq = detail::dot(p, q);
    if (pq.real() <= 0.0) break;
    const double alpha = rho / pq.real();
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
    }
    precondition(std::span<const C>(r), std::span<C>(z));
    const double rho_next = std::abs(detail::dot(r, z));
    const double beta = rho_next / rho;
    rho = rho_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    ++report.iterations;
    report.relative_residual = std::sqrt(rho) / b_norm;
  }

  // Recompute from scratch to avoid reporting a drifted recursive residual.
  apply(std::span<const C>(x.data(), n), std::span<C>(q));
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - q[i];
  precondition(std::span<const C>(r), std::span<C>(z));
  report.relative_residual = std::sqrt(std::abs(detail::dot(r, z))) / b_norm;
  report.converged = report.relative_residual <= tolerance;
  return report;
}

// Right-preconditioned BiCGStab for general (non-Hermitian) A.
template <class Apply, class Precondition>
KrylovReport bicgstab(Apply&& apply, Precondition&& precondition,
                      std::span<const std::complex<double>> b,
                      std::span<std::complex<double>> x, double tolerance,
                      int max_iterations) {
  using C = std::complex<double>;
  const std::size_t n = b.size();
  std::vector<C> r(n), r0(n), p(n), v(n), s(n), t(n), ph(n), sh(n), z(n);

  auto pnorm = [&](std::span<const C> w) {
    precondition(w, std::span<C>(z));
    return std::sqrt(std::abs(detail::dot(w, z)));
  };

  const double b_norm = pnorm(b);
  KrylovReport report;
  if (b_norm == 0.0) {
    std::fill(x.begin(), x.end(), C{});
    report.converged = true;
    return report;
  }
  apply(std::span<const C>(x.data(), n), std::span<C>(t));
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - t[i];
  r0 = r;
  report.relative_residual = pnorm(r) / b_norm;

  C rho{1.0}, alpha{1.0}, omega{1.0};
  std::fill(p.begin(), p.end(), C{});
  std::fill(v.begin(), v.end(), C{});

  while (report.relative_residual > tolerance && report.iterations < max_iterations) {
    const C rho_next = detail::dot(r0, r);
    if (std::abs(rho_next) == 0.0) break;
    const C beta = (rho_next / rho) * (alpha / omega);
    rho = rho_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
    precondition(std::span<const C>(p), std::span<C>(ph));
    apply(std::span<const C>(ph), std::span<C>(v));
    const C r0v = detail::dot(r0, v);
    if (std::abs(r0v) == 0.0) break;
    alpha = rho / r0v;
    for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
    precondition(std::span<const C>(s), std::span<C>(sh));
    apply(std::span<const C>(sh), std::span<C>(t));
    const C tt = detail::dot(t, t);
    omega = std::abs(tt) == 0.0 ? C{} : detail::dot(t, s) / tt;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * ph[i] + omega * sh[i];
      r[i] = s[i] - omega * t[i];
    }
    ++report.iterations;
    report.relative_residual = pnorm(r) / b_norm;
    if (std::abs(omega) == 0.0) break;
  }

  apply(std::span<const C>(x.data(), n), std::span<C>(t));
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - t[i];
  report.relative_residual = pnorm(r) / b_norm;
  report.converged = report.relative_residual <= tolerance;
  return report;
}

}  // namespace homlab
