// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "resora/numerics.hpp"
#include "resora/regularizers.hpp"

namespace resora {

// r x r pairwise redundancy between subspaces. Off-diagonal entries are the
// single-pair score of the measure (pairwise measures averaged over the
// batch); the diagonal is 1, the self-similarity of every measure.
struct RedundancyMatrix {
  Matrix scores;
  Measure measure = Measure::linear;
  std::string subject;
};

struct RedundancySummary {
  double mean_offdiag = 0.0;
  double max_offdiag = 0.0;
  Measure measure = Measure::linear;
};

// Uses spec.measure plus its beta / sigma / eps / center parameters.
RedundancyMatrix redundancy_matrix(std::span<const Matrix> features, const RegularizerSpec& spec,
                                   std::string subject = {});

// Mean and max over the strict upper triangle. Throws for r < 2.
RedundancySummary summarize(const RedundancyMatrix& m);

// Standalone SVG 1.1 heatmap. Colors scale linearly over [0, 1]; cosine cells
// are colored by |score| while the printed value keeps its sign.
std::string render_heatmap(const RedundancyMatrix& m);
void write_heatmap(const RedundancyMatrix& m, const std::filesystem::path& path);

// "i,j,score" header followed by all r * r entries, row-major, 0-based.
std::string redundancy_csv(const RedundancyMatrix& m);

}  // namespace resora
