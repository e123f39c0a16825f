// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

#pragma once

#include <optional>
#include <vector>

#include "resora/numerics.hpp"

namespace resora {

// Frozen base weight plus a trainable rank-r update, column-vector convention:
//   h = (w0 + b * a) x,   w0: d_out x d_in,  b: d_out x r,  a: r x d_in.
// Training code only ever writes b and a.
struct LowRankAdapter {
  Matrix w0;
  Matrix b;
  Matrix a;

  std::size_t rank() const noexcept { return a.rows(); }
  std::size_t d_in() const noexcept { return w0.cols(); }
  std::size_t d_out() const noexcept { return w0.rows(); }

  // Throws DimensionError if the three matrices disagree on shape or the
  // rank is outside [1, min(d_in, d_out)].
  void validate() const;

  bool operator==(const LowRankAdapter&) const = default;
};

// Per-subspace outputs of the update branch for a batch of N inputs.
// per_subspace[i] is the d_out x N matrix of b_i (a_i^T x) over the batch and
// total is their sum.
struct SubspaceFeatureSet {
  std::vector<Matrix> per_subspace;
  Matrix total;
  std::optional<Matrix> base;  // w0 * x, only when requested

  std::size_t rank() const noexcept { return per_subspace.size(); }
  std::size_t samples() const noexcept { return total.cols(); }
};

inline constexpr double kDefaultInitStd = 0.02;

// a ~ N(0, init_std^2), b = 0, so the initial update is exactly zero.
LowRankAdapter init_adapter(Rng& rng, Matrix w0, std::size_t r,
                            double init_std = kDefaultInitStd);
// Convenience overload that also draws w0 ~ N(0, 1/d_in).
LowRankAdapter init_adapter(Rng& rng, std::size_t d_in, std::size_t d_out, std::size_t r,
                            double init_std = kDefaultInitStd);

// Rank-1 pieces W_i = b_i a_i^T; they sum to b * a.
std::vector<Matrix> decompose(const LowRankAdapter& adapter);

SubspaceFeatureSet subspace_forward(const LowRankAdapter& adapter, const Matrix& x_batch,
                                    bool with_base = false);

// w0 + b * a
Matrix merge(const LowRankAdapter& adapter);

}  // namespace resora
