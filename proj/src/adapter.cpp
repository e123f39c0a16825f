// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

#include "resora/adapter.hpp"

#include <algorithm>
#include <cmath>

namespace resora {

void LowRankAdapter::validate() const {
  const std::size_t r = a.rows();
  if (b.rows() != w0.rows() || a.cols() != w0.cols() || b.cols() != r) {
    throw DimensionError("adapter shape mismatch: w0 " + shape_str(w0) + ", b " + shape_str(b) +
                         ", a " + shape_str(a));
  }
  if (r < 1 || r > std::min(w0.rows(), w0.cols())) {
    throw DimensionError("adapter rank " + std::to_string(r) + " outside [1, " +
                         std::to_string(std::min(w0.rows(), w0.cols())) + "]");
  }
}

LowRankAdapter init_adapter(Rng& rng, Matrix w0, std::size_t r, double init_std) {
  const std::size_t d_out = w0.rows(), d_in = w0.cols();
  if (r < 1 || r > std::min(d_in, d_out)) {
    throw std::invalid_argument("init_adapter: rank " + std::to_string(r) + " outside [1, " +
                                std::to_string(std::min(d_in, d_out)) + "]");
  }
  LowRankAdapter adapter{std::move(w0), Matrix(d_out, r), randn(rng, r, d_in, init_std)};
  return adapter;
}

LowRankAdapter init_adapter(Rng& rng, std::size_t d_in, std::size_t d_out, std::size_t r,
                            double init_std) {
  if (r < 1 || r > std::min(d_in, d_out)) {
    throw std::invalid_argument("init_adapter: rank " + std::to_string(r) + " outside [1, " +
                                std::to_string(std::min(d_in, d_out)) + "]");
  }
  Matrix w0 = randn(rng, d_out, d_in, 1.0 / std::sqrt(static_cast<double>(d_in)));
  return init_adapter(rng, std::move(w0), r, init_std);
}

std::vector<Matrix> decompose(const LowRankAdapter& adapter) {
  adapter.validate();
  const std::size_t r = adapter.rank(), d_out = adapter.d_out(), d_in = adapter.d_in();
  std::vector<Matrix> pieces;
  pieces.reserve(r);
  for (std::size_t i = 0; i < r; ++i) {
    Matrix w(d_out, d_in);
    for (std::size_t o = 0; o < d_out; ++o) {
      const double bo = adapter.b(o, i);
      for (std::size_t k = 0; k < d_in; ++k) w(o, k) = bo * adapter.a(i, k);
    }
    pieces.push_back(std::move(w));
  }
  return pieces;
}

SubspaceFeatureSet subspace_forward(const LowRankAdapter& adapter, const Matrix& x_batch,
                                    bool with_base) {
  adapter.validate();
  if (x_batch.rows() != adapter.d_in()) {
    throw DimensionError("subspace_forward: batch has " + std::to_string(x_batch.rows()) +
                         " rows, adapter expects d_in = " + std::to_string(adapter.d_in()));
  }
  const std::size_t r = adapter.rank(), d_out = adapter.d_out(), n = x_batch.cols();
  const Matrix s = matmul(adapter.a, x_batch);  // r x N, row i is a_i^T X

  SubspaceFeatureSet out;
  out.per_subspace.reserve(r);
  out.total = Matrix(d_out, n);
  for (std::size_t i = 0; i < r; ++i) {
    Matrix h(d_out, n);
    const auto si = s.row(i);
    for (std::size_t o = 0; o < d_out; ++o) {
      const double bo = adapter.b(o, i);
      auto hrow = h.row(o);
      for (std::size_t p = 0; p < n; ++p) hrow[p] = bo * si[p];
    }
    out.total += h;
    out.per_subspace.push_back(std::move(h));
  }
  if (with_base) out.base = matmul(adapter.w0, x_batch);
  return out;
}

Matrix merge(const LowRankAdapter& adapter) {
  adapter.validate();
  return adapter.w0 + matmul(adapter.b, adapter.a);
}

}  // namespace resora
