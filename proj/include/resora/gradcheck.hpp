// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include "resora/adapter.hpp"
#include "resora/regularizers.hpp"

namespace resora {

inline constexpr double kDefaultFdStep = 1e-6;
inline constexpr double kDefaultGradTol = 1e-5;
// Relative-error denominators never drop below this.
inline constexpr double kRelErrFloor = 1e-8;
// Rounding noise of a difference quotient is bounded by
// kNoiseUlps * machine_eps * max(1, |f|) / step; discrepancies up to that
// bound carry no information and are discounted.
inline constexpr double kNoiseUlps = 8.0;

class FiniteDiffError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ObjectiveFn = std::function<double(const LowRankAdapter&, const Matrix&)>;

enum class DiffScheme { central, forward };

struct FactorGradients {
  Matrix grad_b;
  Matrix grad_a;
};

// Coordinate-wise difference quotients of f over the entries of b and a.
// Central: (f(t + h e) - f(t - h e)) / 2h. Forward: (f(t + h e) - f(t)) / h.
// Throws FiniteDiffError naming the coordinate if f is not finite there.
FactorGradients finite_diff(const ObjectiveFn& f, const LowRankAdapter& at, const Matrix& x_batch,
                            double step = kDefaultFdStep, DiffScheme scheme = DiffScheme::central);

struct GradReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::string worst_matrix;  // "b" or "a"
  std::size_t worst_row = 0;
  std::size_t worst_col = 0;
  bool passed = true;
  double tolerance = kDefaultGradTol;
  double step = kDefaultFdStep;
  double value = 0.0;  // objective at the base point
};

// Compares analytic gradients against difference quotients. Per coordinate
//   rel = max(0, |g - n| - noise) / max(|g|, |n|, kRelErrFloor)
// and the report passes iff the largest rel is within tol.
GradReport compare_gradients(const Matrix& grad_b, const Matrix& grad_a,
                             const FactorGradients& numeric, double value, double step,
                             double tol);

// Certifies regularize() for `spec` at (adapter, x_batch). For the nonlinear
// measure the bandwidths are computed once at the base point and held fixed.
GradReport check(const RegularizerSpec& spec, const LowRankAdapter& adapter,
                 const Matrix& x_batch, double step = kDefaultFdStep,
                 double tol = kDefaultGradTol);

struct GradInstance {
  LowRankAdapter adapter;
  Matrix x;
};

// Random test point: w0 ~ N(0, 1/d_in), b ~ N(0, 1), a ~ N(0, 1/d_in), x ~ N(0, 1)
// with x of shape d_in x n. b is dense so every term of the gradient is exercised.
GradInstance random_instance(std::uint64_t seed, std::size_t r, std::size_t d_in,
                             std::size_t d_out, std::size_t n);

}  // namespace resora
