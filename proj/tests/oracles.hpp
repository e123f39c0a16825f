// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

// Naive reference implementations used as test oracles. They share no code
// with the library beyond Matrix storage and deliberately take different
// routes (sample-space Grams, explicit centering matrices, full sorts).

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "resora/numerics.hpp"

namespace oracle {

using resora::Matrix;

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline double euclidean(const std::vector<Matrix>& h, double beta) {
  const std::size_t n = h[0].cols(), d = h[0].rows();
  long double total = 0;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < h.size(); ++i)
      for (std::size_t j = i + 1; j < h.size(); ++j) {
        long double dist = 0;
        for (std::size_t k = 0; k < d; ++k) {
          const long double e = h[i](k, s) - h[j](k, s);
          dist += e * e;
        }
        total += std::exp(-static_cast<long double>(beta) * dist);
      }
  return static_cast<double>(total / n);
}

// Sum of |pair term|; the scale that rounding in a signed cosine sum is relative to.
inline double cosine_abs(const std::vector<Matrix>& h, double eps) {
  const std::size_t n = h[0].cols(), d = h[0].rows();
  long double total = 0;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < h.size(); ++i)
      for (std::size_t j = i + 1; j < h.size(); ++j) {
        long double uv = 0, uu = 0, vv = 0;
        for (std::size_t k = 0; k < d; ++k) {
          uv += static_cast<long double>(h[i](k, s)) * h[j](k, s);
          uu += static_cast<long double>(h[i](k, s)) * h[i](k, s);
          vv += static_cast<long double>(h[j](k, s)) * h[j](k, s);
        }
        total += std::abs(uv) / (std::sqrt(uu) * std::sqrt(vv) + eps);
      }
  return static_cast<double>(total / n);
}

inline double cosine(const std::vector<Matrix>& h, double eps) {
  const std::size_t n = h[0].cols(), d = h[0].rows();
  long double total = 0;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < h.size(); ++i)
      for (std::size_t j = i + 1; j < h.size(); ++j) {
        long double uv = 0, uu = 0, vv = 0;
        for (std::size_t k = 0; k < d; ++k) {
          uv += static_cast<long double>(h[i](k, s)) * h[j](k, s);
          uu += static_cast<long double>(h[i](k, s)) * h[i](k, s);
          vv += static_cast<long double>(h[j](k, s)) * h[j](k, s);
        }
        total += uv / (std::sqrt(uu) * std::sqrt(vv) + eps);
      }
  return static_cast<double>(total / n);
}

// Sample-space route: |H_i H_j^T|_F^2 = tr(K_i K_j) with K = H^T H.
inline double linear_pair(const Matrix& hi, const Matrix& hj, double eps) {
  const Matrix ki = oracle::matmul(oracle::transpose(hi), hi);
  const Matrix kj = oracle::matmul(oracle::transpose(hj), hj);
  auto trace_prod = [](const Matrix& a, const Matrix& b) {
    long double s = 0;
    for (std::size_t p = 0; p < a.rows(); ++p)
      for (std::size_t q = 0; q < a.cols(); ++q) s += static_cast<long double>(a(p, q)) * b(q, p);
    return static_cast<double>(s);
  };
  return trace_prod(ki, kj) /
         (std::sqrt(trace_prod(ki, ki)) * std::sqrt(trace_prod(kj, kj)) + eps);
}

inline double linear(const std::vector<Matrix>& h, double eps) {
  double total = 0;
  for (std::size_t i = 0; i < h.size(); ++i)
    for (std::size_t j = i + 1; j < h.size(); ++j) total += linear_pair(h[i], h[j], eps);
  return total;
}

inline double median_distance(const Matrix& h) {
  std::vector<double> d;
  for (std::size_t p = 0; p < h.cols(); ++p)
    for (std::size_t q = p + 1; q < h.cols(); ++q) {
      long double s = 0;
      for (std::size_t k = 0; k < h.rows(); ++k) {
        const long double e = h(k, p) - h(k, q);
        s += e * e;
      }
      d.push_back(static_cast<double>(std::sqrt(s)));
    }
  std::sort(d.begin(), d.end());
  const std::size_t m = d.size();
  return m % 2 == 1 ? d[m / 2] : 0.5 * (d[m / 2 - 1] + d[m / 2]);
}

inline double bandwidth(const Matrix& h, double fraction, double floor) {
  if (h.cols() < 2) return floor;
  return std::max(fraction * median_distance(h), floor);
}

// M K M with M = I - (1/N) 1 1^T built explicitly.
inline Matrix centered_kernel(const Matrix& h, double sigma) {
  const std::size_t n = h.cols();
  Matrix k(n, n), m(n, n);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = 0; q < n; ++q) {
      long double s = 0;
      for (std::size_t c = 0; c < h.rows(); ++c) {
        const long double e = h(c, p) - h(c, q);
        s += e * e;
      }
      k(p, q) = static_cast<double>(std::exp(-s / (2.0L * sigma * sigma)));
      m(p, q) = (p == q ? 1.0 : 0.0) - 1.0 / static_cast<double>(n);
    }
  return oracle::matmul(oracle::matmul(m, k), m);
}

inline double nonlinear(const std::vector<Matrix>& h, double fraction, double eps, double floor) {
  std::vector<Matrix> kc;
  for (const auto& f : h) kc.push_back(centered_kernel(f, bandwidth(f, fraction, floor)));
  auto inner = [](const Matrix& a, const Matrix& b) {
    long double s = 0;
    for (std::size_t p = 0; p < a.rows(); ++p)
      for (std::size_t q = 0; q < a.cols(); ++q) s += static_cast<long double>(a(p, q)) * b(p, q);
    return static_cast<double>(s);
  };
  double total = 0;
  for (std::size_t i = 0; i < kc.size(); ++i)
    for (std::size_t j = i + 1; j < kc.size(); ++j)
      total += inner(kc[i], kc[j]) /
               (std::sqrt(inner(kc[i], kc[i])) * std::sqrt(inner(kc[j], kc[j])) + eps);
  return total;
}

// i-th rank-1 component of b a, built entry by entry.
inline Matrix component(const Matrix& b, const Matrix& a, std::size_t i) {
  Matrix w(b.rows(), a.cols());
  for (std::size_t o = 0; o < b.rows(); ++o)
    for (std::size_t c = 0; c < a.cols(); ++c) w(o, c) = b(o, i) * a(i, c);
  return w;
}

// Solves A z = y for square A by Gaussian elimination with partial pivoting.
inline std::vector<double> solve(Matrix a, std::vector<double> y) {
  const std::size_t n = a.rows();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    for (std::size_t k = 0; k < n; ++k) std::swap(a(c, k), a(piv, k));
    std::swap(y[c], y[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      for (std::size_t k = c; k < n; ++k) a(r, k) -= f * a(c, k);
      y[r] -= f * y[c];
    }
  }
  std::vector<double> z(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = y[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= a(r, k) * z[k];
    z[r] = s / a(r, r);
  }
  return z;
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
inline std::vector<double> symmetric_eigenvalues(Matrix a) {
  const std::size_t n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (std::size_t k = 0; k < n; ++k) ev[k] = a(k, k);
  return ev;
}

inline double rel_diff(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

}  // namespace oracle
