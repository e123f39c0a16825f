// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "cli_runner.hpp"
#include "oracles.hpp"
#include "resora/adapter.hpp"
#include "resora/gradcheck.hpp"
#include "resora/regularizers.hpp"
#include "resora/trainer.hpp"
#include "resora/weight_codec.hpp"

using namespace resora;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool passed = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

int failures = 0;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void report(int id, const char* name, double budget_s, const std::function<Verdict()>& body) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  std::string timing = fmt("%.2f s", secs);
  if (budget_s > 0) {
    timing += " of " + std::to_string(static_cast<int>(budget_s)) + " s";
    if (secs >= budget_s) {
      v.passed = false;
      v.detail += "; over time budget";
    }
  }
  if (!v.passed) ++failures;
  std::printf("criterion %d: %s  %s (%s; %s)\n", id, v.passed ? "PASS" : "FAIL", name,
              v.detail.c_str(), timing.c_str());
  std::fflush(stdout);
}

RegularizerSpec spec_for(Measure m, Level l = Level::feature) {
  RegularizerSpec s;
  s.measure = m;
  s.level = l;
  return s;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    worst = std::max(worst, std::abs(a.data()[k] - b.data()[k]));
  return worst;
}

double oracle_value(Measure m, const std::vector<Matrix>& h) {
  switch (m) {
    case Measure::euclidean: return oracle::euclidean(h, kDefaultBeta);
    case Measure::cosine: return oracle::cosine(h, kDefaultEps);
    case Measure::linear: return oracle::linear(h, kDefaultEps);
    case Measure::nonlinear: return oracle::nonlinear(h, kDefaultSigmaFraction, kDefaultEps, kDefaultSigmaFloor);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

// ---- 1 ---------------------------------------------------------------------

Verdict gradient_certification() {
  double worst = 0.0, worst_abs = 0.0;
  int failed = 0, total = 0;
  for (Measure m : kAllMeasures)
    for (Level l : {Level::feature, Level::weight})
      for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const GradInstance inst = random_instance(seed, 4, 16, 16, 8);
        const GradReport rep = check(spec_for(m, l), inst.adapter, inst.x, kDefaultFdStep, 1e-5);
        worst = std::max(worst, rep.max_rel_err);
        worst_abs = std::max(worst_abs, rep.max_abs_err);
        failed += rep.passed ? 0 : 1;
        ++total;
      }
  return {failed == 0, std::to_string(total - failed) + "/" + std::to_string(total) +
                           " instances, worst rel err " + fmt("%.2e", worst) +
                           " beyond rounding noise, worst abs err " + fmt("%.2e", worst_abs)};
}

// ---- 2 ---------------------------------------------------------------------

Verdict oracle_equivalence() {
  Rng rng(2002);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t r = 2 + rng.below(5), d_in = r + rng.below(6), d_out = r + rng.below(6);
    const std::size_t n = 2 + rng.below(9);
    const LowRankAdapter ad{randn(rng, d_out, d_in), randn(rng, d_out, r), randn(rng, r, d_in)};
    const Matrix x = randn(rng, d_in, n);
    std::vector<Matrix> h;
    for (std::size_t i = 0; i < r; ++i) h.push_back(oracle::matmul(oracle::component(ad.b, ad.a, i), x));
    for (Measure m : kAllMeasures) {
      const double got = regularize(ad, x, spec_for(m)).value, want = oracle_value(m, h);
      // Cosine terms carry a sign and can cancel; scale by their absolute sum.
      const double scale = std::max({std::abs(got), std::abs(want),
                                     m == Measure::cosine ? oracle::cosine_abs(h, kDefaultEps) : 0.0,
                                     1e-300});
      worst = std::max(worst, std::abs(got - want) / scale);
    }
  }
  return {worst <= 1e-10, "50 instances x 4 measures, worst rel diff " + fmt("%.2e", worst)};
}

// ---- 3 ---------------------------------------------------------------------

Verdict decomposition_and_merge() {
  Rng rng(3003);
  double worst_sum = 0.0, worst_fwd = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t d_in = 1 + rng.below(24), d_out = 1 + rng.below(24);
    const std::size_t r = 1 + rng.below(std::min(d_in, d_out));
    const std::size_t n = 1 + rng.below(16);
    const LowRankAdapter ad{randn(rng, d_out, d_in), randn(rng, d_out, r), randn(rng, r, d_in)};
    const Matrix x = randn(rng, d_in, n);
    Matrix sum(d_out, d_in);
    for (const Matrix& w : decompose(ad)) sum += w;
    worst_sum = std::max(worst_sum, max_abs_diff(sum, matmul(ad.b, ad.a)));
    const SubspaceFeatureSet fs = subspace_forward(ad, x, true);
    const Matrix two_path = *fs.base + fs.total;
    worst_fwd = std::max(worst_fwd, max_abs_diff(matmul(merge(ad), x), two_path));
  }
  return {worst_sum <= 1e-12 && worst_fwd <= 1e-10,
          "100 instances, decomposition " + fmt("%.2e", worst_sum) + ", merge " + fmt("%.2e", worst_fwd)};
}

// ---- 4 ---------------------------------------------------------------------

Verdict invariances() {
  Rng rng(4004);
  double lin_drift = 0.0, rbf_drift = 0.0;
  bool relabel_exact = true;
  for (int t = 0; t < 20; ++t) {
    const std::size_t r = 4, d = 6, n = 10;
    std::vector<Matrix> h;
    for (std::size_t i = 0; i < r; ++i) h.push_back(randn(rng, d, n));

    const double lin = evaluate_measure(h, spec_for(Measure::linear)).value;
    std::vector<Matrix> scaled = h, rotated = h, shifted = h;
    for (std::size_t i = 0; i < r; ++i) {
      double c = 0.0;
      while (std::abs(c) < 1e-2) c = (rng.uniform() - 0.5) * 20.0;
      scaled[i] *= c;
      rotated[i] = matmul(random_orthogonal(rng, d), h[i]);
      const Matrix shift = randn(rng, d, 1, 5.0);
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t o = 0; o < d; ++o) shifted[i](o, s) += shift(o, 0);
    }
    lin_drift = std::max({lin_drift, std::abs(evaluate_measure(scaled, spec_for(Measure::linear)).value - lin),
                          std::abs(evaluate_measure(rotated, spec_for(Measure::linear)).value - lin)});
    const double rbf = evaluate_measure(h, spec_for(Measure::nonlinear)).value;
    rbf_drift = std::max(rbf_drift, std::abs(evaluate_measure(shifted, spec_for(Measure::nonlinear)).value - rbf));

    // Relabeling, both on feature sets and on the adapter factors.
    std::vector<std::size_t> perm(r);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t k = r - 1; k > 0; --k) std::swap(perm[k], perm[rng.below(k + 1)]);
    std::vector<Matrix> relabeled;
    for (std::size_t i : perm) relabeled.push_back(h[i]);
    const GradInstance inst = random_instance(100 + static_cast<std::uint64_t>(t), r, 8, 7, n);
    LowRankAdapter swapped = inst.adapter;
    for (std::size_t k = 0; k < r; ++k) {
      for (std::size_t o = 0; o < swapped.b.rows(); ++o) swapped.b(o, k) = inst.adapter.b(o, perm[k]);
      for (std::size_t c = 0; c < swapped.a.cols(); ++c) swapped.a(k, c) = inst.adapter.a(perm[k], c);
    }
    for (Measure m : kAllMeasures) {
      relabel_exact &= evaluate_measure(h, spec_for(m)).value == evaluate_measure(relabeled, spec_for(m)).value;
      for (Level l : {Level::feature, Level::weight})
        relabel_exact &= regularize(inst.adapter, inst.x, spec_for(m, l)).value ==
                         regularize(swapped, inst.x, spec_for(m, l)).value;
    }
  }
  return {lin_drift <= 1e-10 && rbf_drift <= 1e-10 && relabel_exact,
          "20 seeds, linear drift " + fmt("%.2e", lin_drift) + ", nonlinear translation drift " +
              fmt("%.2e", rbf_drift) + ", relabeling " + (relabel_exact ? "exact" : "NOT exact")};
}

// ---- 5 ---------------------------------------------------------------------

Verdict cosine_descent() {
  int tested = 0, decreased = 0;
  for (std::uint64_t seed = 1; tested < 20 && seed < 1000; ++seed) {
    GradInstance inst = random_instance(seed, 4, 16, 16, 8);
    const RegularizerSpec spec = spec_for(Measure::cosine);
    const RegularizerValue v0 = regularize(inst.adapter, inst.x, spec);
    if (v0.value <= 0.1) continue;
    ++tested;
    inst.adapter.b -= 1e-3 * v0.grad_b;
    inst.adapter.a -= 1e-3 * v0.grad_a;
    decreased += regularize(inst.adapter, inst.x, spec).value < v0.value ? 1 : 0;
  }

  // Perfectly aligned unit pairs.
  Rng rng(5005);
  double worst_grad = 0.0;
  for (int t = 0; t < 20; ++t) {
    Matrix u = randn(rng, 8, 6);
    for (std::size_t s = 0; s < u.cols(); ++s) {
      double norm = 0.0;
      for (std::size_t o = 0; o < u.rows(); ++o) norm += u(o, s) * u(o, s);
      norm = std::sqrt(norm);
      for (std::size_t o = 0; o < u.rows(); ++o) u(o, s) /= norm;
    }
    const std::vector<Matrix> pair{u, u};
    for (const Matrix& g : reg_cosine(pair).grads)
      for (double v : g.data()) worst_grad = std::max(worst_grad, std::abs(v));
  }
  return {tested == 20 && decreased == 20 && worst_grad <= 1e-12,
          std::to_string(decreased) + "/" + std::to_string(tested) +
              " instances decreased, aligned-pair gradient " + fmt("%.2e", worst_grad)};
}

// ---- 6 and 7 ---------------------------------------------------------------

struct RunStats {
  double m1 = 0.0, m2 = 0.0;      // end-of-stage linear mean off-diagonal
  double loss1 = 0.0, loss2 = 0.0;  // end-of-stage test task loss
};

RunStats desk_run(std::uint64_t seed, double lambda) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.lambda = lambda;
  cfg.spec.measure = Measure::linear;
  cfg.trace_measures = {Measure::linear};
  const TrainResult res = train_two_stage(cfg);
  const EpochRecord& s1 = res.trace.records[cfg.stage1_epochs - 1];
  const EpochRecord& s2 = res.trace.records.back();
  return {res.trace.mean_offdiag(s1, Measure::linear), res.trace.mean_offdiag(s2, Measure::linear),
          s1.task_loss_test, s2.task_loss_test};
}

Verdict mechanism() {
  int lower = 0;
  double worst_degradation = -std::numeric_limits<double>::infinity();
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const RunStats s = desk_run(seed, 0.1);
    lower += s.m2 < s.m1 ? 1 : 0;
    const double degradation = (s.loss2 - s.loss1) / s.loss1;
    worst_degradation = std::max(worst_degradation, degradation);
    per_seed += (seed > 1 ? ", " : "") + fmt("%.4f", s.m1) + "->" + fmt("%.4f", s.m2);
  }
  return {lower >= 4 && worst_degradation <= 0.05,
          std::to_string(lower) + "/5 seeds lower [" + per_seed + "], worst test-loss change " +
              fmt("%+.2f%%", 100.0 * worst_degradation)};
}

Verdict stability() {
  std::vector<double> m1, delta;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const RunStats s = desk_run(seed, 0.0);
    m1.push_back(s.m1);
    delta.push_back(s.m2 - s.m1);
  }
  const double n = static_cast<double>(m1.size());
  const double mean_delta = std::accumulate(delta.begin(), delta.end(), 0.0) / n;
  const double mean_m1 = std::accumulate(m1.begin(), m1.end(), 0.0) / n;
  double var = 0.0;
  for (double v : m1) var += (v - mean_m1) * (v - mean_m1);
  const double sd = std::sqrt(var / (n - 1.0));
  return {std::abs(mean_delta) <= sd,
          "mean change " + fmt("%+.4f", mean_delta) + ", across-seed sd " + fmt("%.4f", sd)};
}

// ---- 8 ---------------------------------------------------------------------

bool same_bits(const TensorMap& a, const TensorMap& b) {
  if (a.size() != b.size()) return false;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.dims != ib->second.dims) return false;
    const auto& da = ia->second.data;
    const auto& db = ib->second.data;
    if (da.size() != db.size()) return false;
    if (!da.empty() && std::memcmp(da.data(), db.data(), da.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

Verdict codec() {
  Rng rng(8008);
  std::vector<TensorMap> maps;
  maps.push_back({});
  maps.push_back({{"one", Tensor{{1, 1}, {rng.normal()}}}});
  maps.push_back({{"zero", Tensor{{4, 0}, {}}}, {"z2", Tensor{{0}, {}}}});
  while (maps.size() < 100) {
    TensorMap m;
    const std::size_t count = rng.below(6);
    for (std::size_t t = 0; t < count; ++t) {
      Tensor tensor;
      const std::size_t ndim = rng.below(4);
      for (std::size_t k = 0; k < ndim; ++k) tensor.dims.push_back(rng.below(6));
      tensor.data.resize(tensor.element_count());
      for (double& v : tensor.data) {
        const double u = rng.uniform();
        v = u < 0.05 ? -0.0 : u < 0.1 ? std::numeric_limits<double>::infinity()
                                      : rng.normal() * std::exp(20.0 * rng.normal());
      }
      m["tensor_" + std::to_string(t)] = std::move(tensor);
    }
    maps.push_back(std::move(m));
  }
  const fs::path dir = fs::temp_directory_path() / "resora_acceptance_codec";
  fs::create_directories(dir);
  int identical = 0;
  for (std::size_t k = 0; k < maps.size(); ++k) {
    const fs::path p = dir / ("m" + std::to_string(k) + ".rsad");
    write_tensors(maps[k], p);
    const TensorMap back = read_tensors(p);
    identical += same_bits(maps[k], back) && encode_tensors(back) == encode_tensors(maps[k]) ? 1 : 0;
  }

  // Corrupt headers must be refused with a diagnostic naming an offset.
  const std::vector<std::uint8_t> good = encode_tensors(maps[1]);
  std::vector<std::vector<std::uint8_t>> bad;
  for (std::size_t pos : {0u, 3u, 4u, 5u}) {
    auto b = good;
    b[pos] = 0xEE;
    bad.push_back(std::move(b));
  }
  for (std::size_t cut : {0u, 3u, 7u, 11u}) bad.emplace_back(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut));
  {
    auto b = good;
    b[8] = 0x7F;  // tensor count far beyond the payload
    bad.push_back(std::move(b));
  }
  int rejected = 0;
  for (const auto& b : bad) {
    try {
      decode_tensors(b);
    } catch (const CodecError& e) {
      rejected += std::strstr(e.what(), "offset") != nullptr ? 1 : 0;
    }
  }
  fs::remove_all(dir);
  return {identical == 100 && rejected == static_cast<int>(bad.size()),
          std::to_string(identical) + "/100 maps bit-identical, " + std::to_string(rejected) + "/" +
              std::to_string(bad.size()) + " corrupt files rejected"};
}

// ---- 9 ---------------------------------------------------------------------

Verdict determinism() {
  using cli_runner::run;
  using cli_runner::snapshot;
  const fs::path root = fs::temp_directory_path() / "resora_acceptance_cli";
  fs::remove_all(root);
  fs::create_directories(root);
  cli_runner::write_file(root / "config.json", R"({
    "task": {"d_in": 12, "d_out": 10, "n_train": 64, "n_test": 32},
    "adapter": {"rank": 4},
    "schedule": {"stage1_epochs": 20, "stage2_epochs": 20},
    "regularizer": {"measure": "nonlinear"},
    "seeds": [1, 2], "lambdas": [0, 0.1]
  })");
  const std::string cfg = (root / "config.json").string();

  std::vector<std::string> mismatched;
  int compared = 0;
  auto compare = [&](const std::string& label, const cli_runner::Outcome& a, const cli_runner::Outcome& b,
                     const fs::path& da, const fs::path& db) {
    ++compared;
    bool same = a.exit_code == 0 && b.exit_code == 0 && a.out == b.out;
    if (!da.empty()) {
      const auto sa = snapshot(da), sb = snapshot(db);
      same = same && !sa.empty() && sa == sb;
    }
    if (!same) mismatched.push_back(label);
  };

  for (int k = 0; k < 2; ++k) {
    const fs::path d = root / ("train" + std::to_string(k));
    if (run({"train", "--config", cfg, "--out", d.string()}).exit_code != 0) return {false, "train failed"};
  }
  compare("train", {0, "", ""}, {0, "", ""}, root / "train0", root / "train1");

  const std::string weights = (root / "train0" / "final.rsad").string();
  const std::string inputs = (root / "train0" / "inputs.rsad").string();
  compare("grad-check", run({"grad-check", "--measure", "nonlinear", "--level", "feature"}),
          run({"grad-check", "--measure", "nonlinear", "--level", "feature"}), {}, {});
  compare("reg-eval",
          run({"reg-eval", "--weights", weights, "--inputs", inputs, "--out", (root / "re0" / "r.json").string()}),
          run({"reg-eval", "--weights", weights, "--inputs", inputs, "--out", (root / "re1" / "r.json").string()}),
          root / "re0", root / "re1");
  std::vector<std::string> analyze{"analyze", "--weights", weights, "--inputs", inputs, "--measure", "linear",
                                   "--measure", "nonlinear", "--measure", "cosine", "--measure", "euclidean"};
  auto an0 = analyze, an1 = analyze;
  an0.insert(an0.end(), {"--out", (root / "an0").string()});
  an1.insert(an1.end(), {"--out", (root / "an1").string()});
  compare("analyze", run(an0), run(an1), root / "an0", root / "an1");
  const auto sw0 = run({"sweep", "--config", cfg, "--out", (root / "sw0").string()});
  const auto sw1 = run({"sweep", "--config", cfg, "--out", (root / "sw1").string()});
  compare("sweep", {sw0.exit_code, "", ""}, {sw1.exit_code, "", ""}, root / "sw0", root / "sw1");

  fs::remove_all(root);
  std::string detail = std::to_string(compared - static_cast<int>(mismatched.size())) + "/" +
                       std::to_string(compared) + " subcommands byte-identical";
  for (const auto& m : mismatched) detail += "; differs: " + m;
  return {mismatched.empty(), detail};
}

}  // namespace

int main() {
  report(1, "gradient certification", 30, gradient_certification);
  report(2, "oracle equivalence", 10, oracle_equivalence);
  report(3, "decomposition and merge identities", 5, decomposition_and_merge);
  report(4, "measure invariances", 0, invariances);
  report(5, "cosine descent", 0, cosine_descent);
  report(6, "redundancy drops in stage two", 120, mechanism);
  report(7, "two-stage stability without the regularizer", 120, stability);
  report(8, "weight codec", 0, codec);
  report(9, "CLI determinism", 0, determinism);
  std::printf("%d of 9 criteria passed\n", 9 - failures);
  return failures;
}
