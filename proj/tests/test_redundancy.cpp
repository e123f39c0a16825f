// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "resora/redundancy.hpp"

using namespace resora;

namespace {

RegularizerSpec spec_for(Measure m) {
  RegularizerSpec s;
  s.measure = m;
  return s;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + needle.size()))
    ++n;
  return n;
}

// Minimal well-formedness check: every element is self-closed or closed, and
// the document has a single svg root.
void check_well_formed(const std::string& svg) {
  CHECK(svg.rfind("<?xml version=\"1.0\"", 0) == 0);
  CHECK(count(svg, "<svg ") == 1);
  CHECK(svg.find("</svg>\n") == svg.size() - 7);
  CHECK(count(svg, "<text") == count(svg, "</text>"));
  CHECK(count(svg, "<rect") == count(svg, "\"/>\n"));
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Golden files carry a license comment the renderer does not emit.
std::string read_golden(const std::filesystem::path& p) {
  std::string s = read_file(p);
  const std::string tag = "<!-- SPDX-License-Identifier: Apache-2.0 -->\n";
  if (const auto at = s.find(tag); at != std::string::npos) s.erase(at, tag.size());
  return s;
}

// Fixed matrix behind the golden heatmaps.
RedundancyMatrix golden_matrix(Measure m) {
  Rng rng(2026);
  std::vector<Matrix> f;
  for (int i = 0; i < 4; ++i) f.push_back(randn(rng, 5, 12));
  f[2] = f[0] + 0.3 * f[2];
  return redundancy_matrix(f, spec_for(m), "golden");
}

}  // namespace

TEST_CASE("identical subspaces are fully redundant under the linear measure") {
  Rng rng(1);
  const Matrix h = randn(rng, 4, 6);
  const std::vector<Matrix> f{h, h, h};
  const RedundancyMatrix m = redundancy_matrix(f, spec_for(Measure::linear));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(m.scores(i, j) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("disjoint sample supports score zero") {
  std::vector<Matrix> f;
  for (std::size_t i = 0; i < 3; ++i) {
    Matrix h(3, 6);
    for (std::size_t o = 0; o < 3; ++o)
      for (std::size_t n = 2 * i; n < 2 * i + 2; ++n) h(o, n) = 1.0 + static_cast<double>(n * (o + 1));
    f.push_back(h);
  }
  const RedundancyMatrix m = redundancy_matrix(f, spec_for(Measure::linear));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(m.scores(i, j) == (i == j ? 1.0 : 0.0));
}

TEST_CASE("entries match per-pair oracles and are symmetric") {
  Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    std::vector<Matrix> f;
    for (int i = 0; i < 4; ++i) f.push_back(randn(rng, 3, 7));
    for (Measure m : kAllMeasures) {
      const RedundancyMatrix rm = redundancy_matrix(f, spec_for(m));
      CHECK(rm.measure == m);
      for (std::size_t i = 0; i < 4; ++i) {
        CHECK(rm.scores(i, i) == 1.0);
        for (std::size_t j = 0; j < 4; ++j) {
          CHECK(std::abs(rm.scores(i, j) - rm.scores(j, i)) <= 1e-12);
          if (i == j) continue;
          const std::vector<Matrix> pair{f[i], f[j]};
          double expect = 0.0;
          switch (m) {
            case Measure::euclidean: expect = oracle::euclidean(pair, kDefaultBeta); break;
            case Measure::cosine: expect = oracle::cosine(pair, kDefaultEps); break;
            case Measure::linear: expect = oracle::linear_pair(f[i], f[j], kDefaultEps); break;
            case Measure::nonlinear:
              expect = oracle::nonlinear(pair, kDefaultSigmaFraction, kDefaultEps, kDefaultSigmaFloor);
              break;
          }
          CHECK(std::abs(rm.scores(i, j) - expect) <= 1e-12);
        }
      }
    }
  }
}

TEST_CASE("nonlinear matrix needs two samples") {
  const std::vector<Matrix> f{Matrix{{1}}, Matrix{{2}}};
  CHECK_THROWS_AS(redundancy_matrix(f, spec_for(Measure::nonlinear)), std::invalid_argument);
  CHECK_NOTHROW(redundancy_matrix(f, spec_for(Measure::cosine)));
}

TEST_CASE("summarize") {
  RedundancyMatrix m{Matrix(3, 3, 1.0), Measure::linear, ""};
  RedundancySummary s = summarize(m);
  CHECK(s.mean_offdiag == 1.0);
  CHECK(s.max_offdiag == 1.0);

  m.scores = Matrix::identity(3);
  s = summarize(m);
  CHECK(s.mean_offdiag == 0.0);
  CHECK(s.max_offdiag == 0.0);

  m.scores = Matrix{{1, 0.2, 0.4}, {0.2, 1, 0.6}, {0.4, 0.6, 1}};
  s = summarize(m);
  CHECK(s.mean_offdiag == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(s.max_offdiag == 0.6);
  CHECK(s.max_offdiag >= s.mean_offdiag);

  m.scores = Matrix{{1}};
  CHECK_THROWS_AS(summarize(m), std::invalid_argument);
}

TEST_CASE("heatmap of a single cell is a well-formed document") {
  const RedundancyMatrix m{Matrix{{1}}, Measure::linear, "solo"};
  const std::string svg = render_heatmap(m);
  check_well_formed(svg);
  CHECK(count(svg, "stroke=\"#808080\"") == 1);
  CHECK(svg.find("linear redundancy: solo") != std::string::npos);
}

TEST_CASE("identity heatmap spans the color scale") {
  const RedundancyMatrix m{Matrix::identity(4), Measure::nonlinear, "eye"};
  const std::string svg = render_heatmap(m);
  check_well_formed(svg);
  CHECK(count(svg, "fill=\"#08306b\" stroke") == 4);
  CHECK(count(svg, "fill=\"#f7fbff\" stroke") == 12);
  CHECK(count(svg, ">1.000<") == 4);
  CHECK(count(svg, ">0.000<") == 12);
}

TEST_CASE("cosine cells are colored by magnitude but print their sign") {
  const RedundancyMatrix m{Matrix{{1, -1}, {-1, 1}}, Measure::cosine, "signs"};
  const std::string svg = render_heatmap(m);
  CHECK(count(svg, "fill=\"#08306b\" stroke") == 4);
  CHECK(count(svg, ">-1.000<") == 2);
}

TEST_CASE("subjects are escaped") {
  const RedundancyMatrix m{Matrix::identity(2), Measure::linear, "a<b & c"};
  CHECK(render_heatmap(m).find("a&lt;b &amp; c") != std::string::npos);
}

TEST_CASE("heatmaps match the frozen golden files") {
  for (Measure m : kAllMeasures) {
    const std::filesystem::path golden =
        std::filesystem::path(RESORA_GOLDEN_DIR) / ("heatmap_" + std::string(to_string(m)) + ".svg");
    CAPTURE(golden.string());
    REQUIRE(std::filesystem::exists(golden));
    CHECK(render_heatmap(golden_matrix(m)) == read_golden(golden));
  }
}

TEST_CASE("write_heatmap writes the rendered document and reports bad paths") {
  const auto dir = std::filesystem::temp_directory_path() / "resora_redundancy_test";
  std::filesystem::create_directories(dir);
  const RedundancyMatrix m = golden_matrix(Measure::linear);
  write_heatmap(m, dir / "h.svg");
  CHECK(read_file(dir / "h.svg") == render_heatmap(m));
  CHECK_THROWS_AS(write_heatmap(m, dir / "missing" / "deeper" / "h.svg"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("csv export") {
  const RedundancyMatrix m{Matrix{{1, 0.25}, {0.25, 1}}, Measure::linear, ""};
  CHECK(redundancy_csv(m) == "i,j,score\n0,0,1\n0,1,0.25\n1,0,0.25\n1,1,1\n");
  const RedundancyMatrix g = golden_matrix(Measure::cosine);
  const std::string csv = redundancy_csv(g);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "i,j,score");
  const std::regex row(R"((\d+),(\d+),(\S+))");
  int rows = 0;
  while (std::getline(in, line)) {
    std::smatch mt;
    REQUIRE(std::regex_match(line, mt, row));
    const auto i = std::stoul(mt[1]), j = std::stoul(mt[2]);
    CHECK(std::stod(mt[3]) == g.scores(i, j));
    ++rows;
  }
  CHECK(rows == 16);
}
