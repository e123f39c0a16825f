// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

#include "resora/redundancy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace resora {

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

RedundancyMatrix redundancy_matrix(std::span<const Matrix> features, const RegularizerSpec& spec,
                                   std::string subject) {
  const std::size_t r = features.size();
  if (r < 1) throw std::invalid_argument("redundancy_matrix: no subspaces");
  RedundancyMatrix out{Matrix::identity(r), spec.measure, std::move(subject)};

  if (spec.measure == Measure::linear) {
    // Reuse each subspace's self-Gram norm across its r - 1 pairs.
    std::vector<Matrix> hs;
    std::vector<double> self_norm;
    for (const auto& f : features) {
      Matrix h = f;
      if (spec.center) {
        for (std::size_t o = 0; o < h.rows(); ++o) {
          auto row = h.row(o);
          double mean = 0.0;
          for (double v : row) mean += v;
          mean /= static_cast<double>(h.cols());
          for (double& v : row) v -= mean;
        }
      }
      self_norm.push_back(frobenius_norm(matmul_nt(h, h)));
      hs.push_back(std::move(h));
    }
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = i + 1; j < r; ++j) {
        const Matrix cross = matmul_nt(hs[i], hs[j]);
        const double s = frobenius_dot(cross, cross) / (self_norm[i] * self_norm[j] + spec.eps);
        out.scores(i, j) = s;
        out.scores(j, i) = s;
      }
    return out;
  }

  if (spec.measure == Measure::nonlinear) {
    if (features[0].cols() < 2) {
      throw std::invalid_argument("redundancy_matrix: nonlinear measure needs at least 2 samples");
    }
    std::vector<Matrix> kernels;
    std::vector<double> knorm;
    for (const auto& f : features) {
      const Matrix sq = pairwise_sq_dists(f);
      kernels.push_back(centered_rbf_kernel_from_sq(
          sq, median_bandwidth_from_sq(sq, spec.sigma_fraction, spec.sigma_floor)));
      knorm.push_back(frobenius_norm(kernels.back()));
    }
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = i + 1; j < r; ++j) {
        const double s =
            frobenius_dot(kernels[i], kernels[j]) / (knorm[i] * knorm[j] + spec.eps);
        out.scores(i, j) = s;
        out.scores(j, i) = s;
      }
    return out;
  }

  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = i + 1; j < r; ++j) {
      double s = 0.0;
      switch (spec.measure) {
        case Measure::euclidean: s = euclidean_pair(features[i], features[j], spec.beta); break;
        case Measure::cosine: s = cosine_pair(features[i], features[j], spec.eps); break;
        default: break;  // set-to-set measures handled above
      }
      out.scores(i, j) = s;
      out.scores(j, i) = s;
    }
  }
  return out;
}

RedundancySummary summarize(const RedundancyMatrix& m) {
  const std::size_t r = m.scores.rows();
  if (r < 2) throw std::invalid_argument("summarize: need at least 2 subspaces");
  RedundancySummary s{0.0, -std::numeric_limits<double>::infinity(), m.measure};
  std::size_t count = 0;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = i + 1; j < r; ++j) {
      s.mean_offdiag += m.scores(i, j);
      s.max_offdiag = std::max(s.max_offdiag, m.scores(i, j));
      ++count;
    }
  s.mean_offdiag /= static_cast<double>(count);
  return s;
}

std::string render_heatmap(const RedundancyMatrix& m) {
  constexpr int cell = 48, margin = 40, title_h = 32;
  const std::size_t r = m.scores.rows();
  const int grid = cell * static_cast<int>(r);
  const int width = grid + 2 * margin;
  const int height = grid + 2 * margin + title_h;

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
         std::to_string(width) + "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " +
         std::to_string(width) + " " + std::to_string(height) + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) + "\" height=\"" +
         std::to_string(height) + "\" fill=\"#ffffff\"/>\n";
  std::string title = std::string(to_string(m.measure)) + " redundancy";
  if (!m.subject.empty()) title += ": " + m.subject;
  svg += "<text x=\"" + std::to_string(width / 2) + "\" y=\"" + std::to_string(margin / 2 + 8) +
         "\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">" +
         xml_escape(title) + "</text>\n";

  const bool absolute = m.measure == Measure::cosine;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      const double v = m.scores(i, j);
      const double t = std::clamp(absolute ? std::abs(v) : v, 0.0, 1.0);
      // Linear ramp from #f7fbff (t = 0) to #08306b (t = 1).
      const int red = static_cast<int>(std::lround(247 + t * (8 - 247)));
      const int green = static_cast<int>(std::lround(251 + t * (48 - 251)));
      const int blue = static_cast<int>(std::lround(255 + t * (107 - 255)));
      char color[8];
      std::snprintf(color, sizeof color, "#%02x%02x%02x", red, green, blue);
      const int x = margin + cell * static_cast<int>(j);
      const int y = margin + title_h + cell * static_cast<int>(i);
      svg += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
             std::to_string(cell) + "\" height=\"" + std::to_string(cell) + "\" fill=\"" + color +
             "\" stroke=\"#808080\" stroke-width=\"0.5\"/>\n";
      svg += "<text x=\"" + std::to_string(x + cell / 2) + "\" y=\"" +
             std::to_string(y + cell / 2 + 4) +
             "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\" fill=\"" +
             (t > 0.5 ? "#ffffff" : "#000000") + "\">" + fmt("%.3f", v) + "</text>\n";
    }
  }
  // Axis labels.
  for (std::size_t i = 0; i < r; ++i) {
    const int c = margin + cell * static_cast<int>(i) + cell / 2;
    svg += "<text x=\"" + std::to_string(c) + "\" y=\"" + std::to_string(margin + title_h - 6) +
           "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" +
           std::to_string(i + 1) + "</text>\n";
    svg += "<text x=\"" + std::to_string(margin - 6) + "\" y=\"" +
           std::to_string(margin + title_h + cell * static_cast<int>(i) + cell / 2 + 4) +
           "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" +
           std::to_string(i + 1) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void write_heatmap(const RedundancyMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << render_heatmap(m);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string redundancy_csv(const RedundancyMatrix& m) {
  std::string csv = "i,j,score\n";
  for (std::size_t i = 0; i < m.scores.rows(); ++i)
    for (std::size_t j = 0; j < m.scores.cols(); ++j)
      csv += std::to_string(i) + "," + std::to_string(j) + "," + fmt("%.17g", m.scores(i, j)) +
             "\n";
  return csv;
}

}  // namespace resora
