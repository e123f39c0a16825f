// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

#include "resora/regularizers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace resora {

std::string_view to_string(Measure m) {
  switch (m) {
    case Measure::euclidean: return "euclidean";
    case Measure::cosine: return "cosine";
    case Measure::linear: return "linear";
    case Measure::nonlinear: return "nonlinear";
  }
  return "unknown";
}

std::string_view to_string(Level l) { return l == Level::feature ? "feature" : "weight"; }

std::optional<Measure> parse_measure(std::string_view name) {
  for (Measure m : kAllMeasures)
    if (to_string(m) == name) return m;
  return std::nullopt;
}

std::optional<Level> parse_level(std::string_view name) {
  if (name == "feature") return Level::feature;
  if (name == "weight") return Level::weight;
  return std::nullopt;
}

bool is_pairwise(Measure m) { return m == Measure::euclidean || m == Measure::cosine; }

void RegularizerSpec::validate() const {
  auto positive = [](double v, const char* field) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string(field) + " must be a finite positive number, got " +
                                  std::to_string(v));
    }
  };
  positive(beta, "beta");
  positive(sigma_fraction, "sigma_fraction");
  positive(sigma_floor, "sigma_floor");
  positive(eps, "eps");
}

namespace {

void require_uniform_shapes(std::span<const Matrix> features, const char* op) {
  for (const auto& f : features) {
    if (f.rows() != features[0].rows() || f.cols() != features[0].cols()) {
      throw DimensionError(std::string(op) + ": subspace features differ in shape (" +
                           shape_str(features[0]) + " vs " + shape_str(f) + ")");
    }
  }
}

FeatureGradient zero_gradient(std::span<const Matrix> features) {
  FeatureGradient fg;
  for (const auto& f : features) fg.grads.emplace_back(f.rows(), f.cols());
  return fg;
}

Matrix center_rows(const Matrix& h) {
  Matrix out = h;
  const double n = static_cast<double>(h.cols());
  for (std::size_t o = 0; o < h.rows(); ++o) {
    auto row = out.row(o);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= n;
    for (double& v : row) v -= mean;
  }
  return out;
}

// M K M for the centering matrix M = I - 11^T / N.
Matrix double_center(const Matrix& k) {
  const std::size_t n = k.rows();
  std::vector<double> row_mean(n, 0.0), col_mean(n, 0.0);
  double grand = 0.0;
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = 0; q < n; ++q) {
      row_mean[p] += k(p, q);
      col_mean[q] += k(p, q);
    }
  for (std::size_t p = 0; p < n; ++p) {
    grand += row_mean[p];
    row_mean[p] /= static_cast<double>(n);
    col_mean[p] /= static_cast<double>(n);
  }
  grand /= static_cast<double>(n * n);
  Matrix out(n, n);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = 0; q < n; ++q) out(p, q) = k(p, q) - row_mean[p] - col_mean[q] + grand;
  return out;
}

// Median of the square roots of `values` (sqrt is monotone, so select first).
double median_sqrt(std::vector<double> values) {
  const std::size_t n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (n % 2 == 1) return std::sqrt(*mid);
  const double upper = std::sqrt(*mid);
  const double lower = std::sqrt(*std::max_element(values.begin(), mid));
  return 0.5 * (lower + upper);
}

// Sum of per-pair terms taken in sorted order, so relabeling subspaces
// reproduces the value bit for bit.
double sum_pairs(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  double total = 0.0;
  for (double t : terms) total += t;
  return total;
}

// |C|_F^2 visiting (a, b) and (b, a) together, so |C^T|_F^2 rounds identically.
double transpose_stable_sq_norm(const Matrix& c) {
  double total = 0.0;
  for (std::size_t a = 0; a < c.rows(); ++a) {
    total += c(a, a) * c(a, a);
    for (std::size_t b = 0; b < a; ++b) total += c(a, b) * c(a, b) + c(b, a) * c(b, a);
  }
  return total;
}

}  // namespace

FeatureGradient reg_euclidean(std::span<const Matrix> features, double beta) {
  FeatureGradient fg = zero_gradient(features);
  const std::size_t r = features.size();
  if (r < 2) return fg;
  require_uniform_shapes(features, "reg_euclidean");
  const std::size_t d = features[0].rows(), n = features[0].cols();
  if (n == 0) throw DimensionError("reg_euclidean: empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<double> diff(d), terms;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = i + 1; j < r; ++j) {
      const Matrix& hi = features[i];
      const Matrix& hj = features[j];
      double pair = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        double sq = 0.0;
        for (std::size_t o = 0; o < d; ++o) {
          diff[o] = hi(o, s) - hj(o, s);
          sq += diff[o] * diff[o];
        }
        const double e = std::exp(-beta * sq) * inv_n;
        pair += e;
        const double coeff = -2.0 * beta * e;
        for (std::size_t o = 0; o < d; ++o) {
          fg.grads[i](o, s) += coeff * diff[o];
          fg.grads[j](o, s) -= coeff * diff[o];
        }
      }
      terms.push_back(pair);
    }
  }
  fg.value = sum_pairs(std::move(terms));
  return fg;
}

FeatureGradient reg_cosine(std::span<const Matrix> features, double eps) {
  FeatureGradient fg = zero_gradient(features);
  const std::size_t r = features.size();
  if (r < 2) return fg;
  require_uniform_shapes(features, "reg_cosine");
  const std::size_t d = features[0].rows(), n = features[0].cols();
  if (n == 0) throw DimensionError("reg_cosine: empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);

  // norms[i][s] = |h_i^s|
  std::vector<std::vector<double>> norms(r, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t s = 0; s < n; ++s) {
      double sq = 0.0;
      for (std::size_t o = 0; o < d; ++o) sq += features[i](o, s) * features[i](o, s);
      norms[i][s] = std::sqrt(sq);
    }

  std::vector<double> terms;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = i + 1; j < r; ++j) {
      const Matrix& hi = features[i];
      const Matrix& hj = features[j];
      double pair = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        double p = 0.0;
        for (std::size_t o = 0; o < d; ++o) p += hi(o, s) * hj(o, s);
        const double ni = norms[i][s], nj = norms[j][s];
        const double denom = ni * nj + eps;
        pair += p / denom * inv_n;
        // d/du [u.v / (|u||v| + eps)] = v / D - (u.v) |v| u / (|u| D^2)
        const double self_i = ni > 0.0 ? p * nj / (ni * denom * denom) : 0.0;
        const double self_j = nj > 0.0 ? p * ni / (nj * denom * denom) : 0.0;
        for (std::size_t o = 0; o < d; ++o) {
          fg.grads[i](o, s) += inv_n * (hj(o, s) / denom - self_i * hi(o, s));
          fg.grads[j](o, s) += inv_n * (hi(o, s) / denom - self_j * hj(o, s));
        }
      }
      terms.push_back(pair);
    }
  }
  fg.value = sum_pairs(std::move(terms));
  return fg;
}

FeatureGradient reg_linear(std::span<const Matrix> features, double eps, bool center) {
  FeatureGradient fg = zero_gradient(features);
  const std::size_t r = features.size();
  if (r < 2) return fg;
  require_uniform_shapes(features, "reg_linear");
  if (features[0].cols() == 0) throw DimensionError("reg_linear: empty batch");

  std::vector<Matrix> h;
  h.reserve(r);
  for (const auto& f : features) h.push_back(center ? center_rows(f) : f);

  // self_dir[i] = (H_i H_i^T) H_i / |H_i H_i^T|_F, the direction of d|S_i|_F/dH_i.
  std::vector<double> self_norm(r);
  std::vector<Matrix> self_dir;
  self_dir.reserve(r);
  for (std::size_t i = 0; i < r; ++i) {
    const Matrix s = matmul_nt(h[i], h[i]);
    self_norm[i] = frobenius_norm(s);
    Matrix dir = matmul(s, h[i]);
    dir *= self_norm[i] > 0.0 ? 1.0 / self_norm[i] : 0.0;
    self_dir.push_back(std::move(dir));
  }

  std::vector<double> self_coeff(r, 0.0), terms;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = i + 1; j < r; ++j) {
      const Matrix cross = matmul_nt(h[i], h[j]);  // H_i H_j^T
      const double num = transpose_stable_sq_norm(cross);
      const double denom = self_norm[i] * self_norm[j] + eps;
      terms.push_back(num / denom);
      // d num / dH_i = 2 C H_j,  d num / dH_j = 2 C^T H_i
      Matrix gi = matmul(cross, h[j]);
      gi *= 2.0 / denom;
      fg.grads[i] += gi;
      Matrix gj = matmul_tn(cross, h[i]);
      gj *= 2.0 / denom;
      fg.grads[j] += gj;
      // d denom / dH_i = |S_j| * 2 S_i H_i / |S_i|
      const double w = num / (denom * denom);
      self_coeff[i] -= 2.0 * w * self_norm[j];
      self_coeff[j] -= 2.0 * w * self_norm[i];
    }
  }
  fg.value = sum_pairs(std::move(terms));
  for (std::size_t i = 0; i < r; ++i) {
    Matrix g = self_dir[i];
    g *= self_coeff[i];
    fg.grads[i] += g;
    if (center) fg.grads[i] = center_rows(fg.grads[i]);
  }
  return fg;
}

double median_bandwidth(const Matrix& features, double sigma_fraction, double sigma_floor) {
  const std::size_t n = features.cols();
  if (n == 0) throw DimensionError("median_bandwidth: empty batch");
  if (n == 1) return sigma_floor;
  return median_bandwidth_from_sq(pairwise_sq_dists(features), sigma_fraction, sigma_floor);
}

double median_bandwidth_from_sq(const Matrix& sq_dists, double sigma_fraction,
                                double sigma_floor) {
  const std::size_t n = sq_dists.rows();
  if (n < 2) return sigma_floor;
  std::vector<double> sq;
  sq.reserve(n * (n - 1) / 2);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = p + 1; q < n; ++q) sq.push_back(sq_dists(p, q));
  return std::max(sigma_fraction * median_sqrt(std::move(sq)), sigma_floor);
}

FeatureGradient reg_nonlinear(std::span<const Matrix> features, double sigma_fraction,
                              double eps, double sigma_floor,
                              std::span<const double> frozen_sigmas) {
  FeatureGradient fg = zero_gradient(features);
  const std::size_t r = features.size();
  if (r < 2) return fg;
  require_uniform_shapes(features, "reg_nonlinear");
  const std::size_t n = features[0].cols();
  if (n < 2) throw std::invalid_argument("reg_nonlinear: needs at least 2 samples, got " +
                                         std::to_string(n));
  if (!frozen_sigmas.empty() && frozen_sigmas.size() != r) {
    throw std::invalid_argument("reg_nonlinear: expected " + std::to_string(r) +
                                " frozen bandwidths, got " + std::to_string(frozen_sigmas.size()));
  }

  std::vector<Matrix> kernels, centered;
  std::vector<double> cnorm(r);
  fg.sigmas.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    const Matrix sq = pairwise_sq_dists(features[i]);
    fg.sigmas[i] = frozen_sigmas.empty() ? median_bandwidth_from_sq(sq, sigma_fraction, sigma_floor)
                                         : frozen_sigmas[i];
    kernels.push_back(rbf_kernel(sq, fg.sigmas[i]));
    centered.push_back(double_center(kernels.back()));
    cnorm[i] = frobenius_norm(centered.back());
  }

  // Gradient with respect to each kernel matrix. Since M is idempotent,
  // tr(K_i M K_j M) = <M K_i M, M K_j M> and its K_i-gradient is M K_j M.
  std::vector<Matrix> kgrad(r, Matrix(n, n));
  std::vector<double> self_coeff(r, 0.0), terms;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = i + 1; j < r; ++j) {
      const double num = frobenius_dot(centered[i], centered[j]);
      const double denom = cnorm[i] * cnorm[j] + eps;
      terms.push_back(num / denom);
      kgrad[i] += (1.0 / denom) * centered[j];
      kgrad[j] += (1.0 / denom) * centered[i];
      const double w = num / (denom * denom);
      if (cnorm[i] > 0.0) self_coeff[i] -= w * cnorm[j] / cnorm[i];
      if (cnorm[j] > 0.0) self_coeff[j] -= w * cnorm[i] / cnorm[j];
    }
  }
  fg.value = sum_pairs(std::move(terms));

  for (std::size_t i = 0; i < r; ++i) {
    kgrad[i] += self_coeff[i] * centered[i];
    // dK_pq / dD_pq = -K_pq / (2 sigma^2), D_pq = |h_p - h_q|^2
    const double scale = -1.0 / (2.0 * fg.sigmas[i] * fg.sigmas[i]);
    Matrix sym(n, n);
    std::vector<double> rowsum(n, 0.0);
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = 0; q < n; ++q) {
        const double gpq = kgrad[i](p, q) * kernels[i](p, q) * scale;
        const double gqp = kgrad[i](q, p) * kernels[i](q, p) * scale;
        sym(p, q) = gpq + gqp;
        rowsum[p] += gpq + gqp;
      }
    // dR/dh_p = 2 sum_q sym_pq (h_p - h_q)  =>  dR/dH = 2 (H diag(rowsum) - H sym)
    const Matrix& h = features[i];
    Matrix g = matmul(h, sym);
    for (std::size_t o = 0; o < h.rows(); ++o)
      for (std::size_t p = 0; p < n; ++p) g(o, p) = 2.0 * (h(o, p) * rowsum[p] - g(o, p));
    fg.grads[i] = std::move(g);
  }
  return fg;
}

double euclidean_pair(const Matrix& hi, const Matrix& hj, double beta) {
  const Matrix pair[] = {hi, hj};
  return reg_euclidean(pair, beta).value;
}

double cosine_pair(const Matrix& hi, const Matrix& hj, double eps) {
  const Matrix pair[] = {hi, hj};
  return reg_cosine(pair, eps).value;
}

double linear_pair(const Matrix& hi, const Matrix& hj, double eps, bool center) {
  const Matrix a = center ? center_rows(hi) : hi;
  const Matrix b = center ? center_rows(hj) : hj;
  const Matrix cross = matmul_nt(a, b);
  const double num = frobenius_dot(cross, cross);
  return num / (frobenius_norm(matmul_nt(a, a)) * frobenius_norm(matmul_nt(b, b)) + eps);
}

Matrix rbf_kernel(const Matrix& sq_dists, double sigma) {
  const std::size_t n = sq_dists.rows();
  Matrix k(n, n);
  const double scale = -1.0 / (2.0 * sigma * sigma);
  for (std::size_t p = 0; p < n; ++p) {
    k(p, p) = std::exp(scale * sq_dists(p, p));
    for (std::size_t q = p + 1; q < n; ++q) {
      const double v = std::exp(scale * sq_dists(p, q));
      k(p, q) = v;
      k(q, p) = v;
    }
  }
  return k;
}

Matrix centered_rbf_kernel(const Matrix& h, double sigma) {
  return double_center(rbf_kernel(pairwise_sq_dists(h), sigma));
}

Matrix centered_rbf_kernel_from_sq(const Matrix& sq_dists, double sigma) {
  return double_center(rbf_kernel(sq_dists, sigma));
}

double nonlinear_pair(const Matrix& hi, const Matrix& hj, double sigma_i, double sigma_j,
                      double eps) {
  if (hi.cols() < 2) throw std::invalid_argument("nonlinear_pair: needs at least 2 samples");
  const Matrix ki = centered_rbf_kernel(hi, sigma_i);
  const Matrix kj = centered_rbf_kernel(hj, sigma_j);
  return frobenius_dot(ki, kj) / (frobenius_norm(ki) * frobenius_norm(kj) + eps);
}

std::vector<Matrix> weight_level_features(const LowRankAdapter& adapter, Measure measure) {
  std::vector<Matrix> pieces = decompose(adapter);
  if (is_pairwise(measure)) {
    for (auto& w : pieces) {
      const std::size_t len = w.size();
      std::vector<double> flat(w.data().begin(), w.data().end());
      w = Matrix(len, 1, std::move(flat));
    }
  }
  return pieces;
}

std::vector<Matrix> measure_inputs(const LowRankAdapter& adapter, const Matrix& x_batch,
                                   const RegularizerSpec& spec) {
  if (spec.level == Level::weight) return weight_level_features(adapter, spec.measure);
  return subspace_forward(adapter, x_batch).per_subspace;
}

FeatureGradient evaluate_measure(std::span<const Matrix> features, const RegularizerSpec& spec,
                                 std::span<const double> frozen_sigmas) {
  switch (spec.measure) {
    case Measure::euclidean: return reg_euclidean(features, spec.beta);
    case Measure::cosine: return reg_cosine(features, spec.eps);
    case Measure::linear: return reg_linear(features, spec.eps, spec.center);
    case Measure::nonlinear:
      return reg_nonlinear(features, spec.sigma_fraction, spec.eps, spec.sigma_floor,
                           frozen_sigmas);
  }
  throw std::logic_error("unhandled measure");
}

RegularizerValue backprop_to_factors(const LowRankAdapter& adapter, const Matrix* x_batch,
                                     const FeatureGradient& fg) {
  const std::size_t r = adapter.rank(), d_out = adapter.d_out(), d_in = adapter.d_in();
  RegularizerValue out{fg.value, Matrix(d_out, r), Matrix(r, d_in), fg.sigmas};
  if (fg.grads.size() != r) {
    throw DimensionError("backprop_to_factors: got " + std::to_string(fg.grads.size()) +
                         " subspace gradients for rank " + std::to_string(r));
  }
  // Feature level: H_i = b_i s_i^T with s_i = X^T a_i. Weight level: X = I.
  const Matrix s = x_batch ? matmul(adapter.a, *x_batch) : adapter.a;
  const std::size_t n = s.cols();
  for (std::size_t i = 0; i < r; ++i) {
    const Matrix& g = fg.grads[i];
    if (g.size() != d_out * n) {
      throw DimensionError("backprop_to_factors: subspace gradient " + shape_str(g) +
                           " does not match features of " + std::to_string(d_out) + "x" +
                           std::to_string(n));
    }
    // Weight-level pairwise gradients arrive flattened; the row-major data is
    // already laid out as d_out x n.
    const double* gp = g.data().data();
    const auto si = s.row(i);
    std::vector<double> t(n, 0.0);  // G_i^T b_i
    for (std::size_t o = 0; o < d_out; ++o) {
      const double* grow = gp + o * n;
      out.grad_b(o, i) = dot({grow, n}, si);
      const double bo = adapter.b(o, i);
      for (std::size_t p = 0; p < n; ++p) t[p] += grow[p] * bo;
    }
    if (x_batch) {
      for (std::size_t k = 0; k < d_in; ++k) out.grad_a(i, k) = dot(x_batch->row(k), t);
    } else {
      for (std::size_t k = 0; k < d_in; ++k) out.grad_a(i, k) = t[k];
    }
  }
  return out;
}

RegularizerValue regularize(const LowRankAdapter& adapter, const Matrix& x_batch,
                            const RegularizerSpec& spec, std::span<const double> frozen_sigmas) {
  spec.validate();
  adapter.validate();
  const std::size_t r = adapter.rank();
  if (r < 2) {
    return {0.0, Matrix(adapter.d_out(), r), Matrix(r, adapter.d_in()), {}};
  }
  const std::vector<Matrix> inputs = measure_inputs(adapter, x_batch, spec);
  const FeatureGradient fg = evaluate_measure(inputs, spec, frozen_sigmas);
  return backprop_to_factors(adapter, spec.level == Level::feature ? &x_batch : nullptr, fg);
}

}  // namespace resora
