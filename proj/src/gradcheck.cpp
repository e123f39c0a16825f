// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

#include "resora/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace resora {

namespace {

double eval_checked(const ObjectiveFn& f, const LowRankAdapter& at, const Matrix& x,
                    const char* matrix, std::size_t row, std::size_t col, double sign) {
  const double v = f(at, x);
  if (!std::isfinite(v)) {
    throw FiniteDiffError(std::string("objective is not finite when perturbing ") + matrix + "(" +
                          std::to_string(row) + ", " + std::to_string(col) + ") by " +
                          (sign > 0 ? "+" : "-") + "step");
  }
  return v;
}

void diff_matrix(const ObjectiveFn& f, LowRankAdapter& work, const Matrix& x, Matrix& target,
                 Matrix& out, const char* name, double step, DiffScheme scheme, double f0) {
  for (std::size_t i = 0; i < target.rows(); ++i) {
    for (std::size_t j = 0; j < target.cols(); ++j) {
      const double saved = target(i, j);
      target(i, j) = saved + step;
      const double plus = eval_checked(f, work, x, name, i, j, +1.0);
      if (scheme == DiffScheme::central) {
        target(i, j) = saved - step;
        const double minus = eval_checked(f, work, x, name, i, j, -1.0);
        out(i, j) = (plus - minus) / (2.0 * step);
      } else {
        out(i, j) = (plus - f0) / step;
      }
      target(i, j) = saved;
    }
  }
}

}  // namespace

FactorGradients finite_diff(const ObjectiveFn& f, const LowRankAdapter& at, const Matrix& x_batch,
                            double step, DiffScheme scheme) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff: step must be positive");
  LowRankAdapter work = at;
  FactorGradients g{Matrix(at.b.rows(), at.b.cols()), Matrix(at.a.rows(), at.a.cols())};
  double f0 = 0.0;
  if (scheme == DiffScheme::forward) {
    f0 = f(work, x_batch);
    if (!std::isfinite(f0)) throw FiniteDiffError("objective is not finite at the base point");
  }
  diff_matrix(f, work, x_batch, work.b, g.grad_b, "b", step, scheme, f0);
  diff_matrix(f, work, x_batch, work.a, g.grad_a, "a", step, scheme, f0);
  return g;
}

GradReport compare_gradients(const Matrix& grad_b, const Matrix& grad_a,
                             const FactorGradients& numeric, double value, double step,
                             double tol) {
  if (grad_b.rows() != numeric.grad_b.rows() || grad_b.cols() != numeric.grad_b.cols() ||
      grad_a.rows() != numeric.grad_a.rows() || grad_a.cols() != numeric.grad_a.cols()) {
    throw DimensionError("compare_gradients: analytic and numeric gradient shapes differ");
  }
  GradReport report;
  report.tolerance = tol;
  report.step = step;
  report.value = value;
  report.worst_matrix = "b";
  const double noise = kNoiseUlps * std::numeric_limits<double>::epsilon() *
                       std::max(1.0, std::abs(value)) / step;

  auto scan = [&](const Matrix& analytic, const Matrix& approx, const char* name) {
    for (std::size_t i = 0; i < analytic.rows(); ++i) {
      for (std::size_t j = 0; j < analytic.cols(); ++j) {
        const double g = analytic(i, j), n = approx(i, j);
        const double abs_err = std::abs(g - n);
        const double denom = std::max({std::abs(g), std::abs(n), kRelErrFloor});
        const double rel = std::max(0.0, abs_err - noise) / denom;
        report.max_abs_err = std::max(report.max_abs_err, abs_err);
        if (rel > report.max_rel_err || std::isnan(rel)) {
          report.max_rel_err = std::isnan(rel) ? std::numeric_limits<double>::infinity() : rel;
          report.worst_matrix = name;
          report.worst_row = i;
          report.worst_col = j;
        }
      }
    }
  };
  scan(grad_b, numeric.grad_b, "b");
  scan(grad_a, numeric.grad_a, "a");
  report.passed = report.max_rel_err <= tol;
  return report;
}

GradReport check(const RegularizerSpec& spec, const LowRankAdapter& adapter,
                 const Matrix& x_batch, double step, double tol) {
  const RegularizerValue base = regularize(adapter, x_batch, spec);
  const std::vector<double> frozen = base.sigmas;
  const ObjectiveFn objective = [&spec, &frozen](const LowRankAdapter& a, const Matrix& x) {
    return regularize(a, x, spec, frozen).value;
  };
  const FactorGradients numeric = finite_diff(objective, adapter, x_batch, step);
  return compare_gradients(base.grad_b, base.grad_a, numeric, base.value, step, tol);
}

GradInstance random_instance(std::uint64_t seed, std::size_t r, std::size_t d_in,
                             std::size_t d_out, std::size_t n) {
  if (r < 1 || r > std::min(d_in, d_out)) {
    throw std::invalid_argument("random_instance: rank " + std::to_string(r) +
                                " outside [1, min(d_in, d_out)]");
  }
  if (n < 1) throw std::invalid_argument("random_instance: need at least one sample");
  Rng rng(seed);
  const double in_std = 1.0 / std::sqrt(static_cast<double>(d_in));
  GradInstance inst;
  inst.adapter.w0 = randn(rng, d_out, d_in, in_std);
  inst.adapter.b = randn(rng, d_out, r, 1.0);
  inst.adapter.a = randn(rng, r, d_in, in_std);
  inst.x = randn(rng, d_in, n, 1.0);
  return inst;
}

}  // namespace resora
