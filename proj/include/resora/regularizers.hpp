// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "resora/adapter.hpp"
#include "resora/numerics.hpp"

namespace resora {

// Redundancy measures between the feature sets of rank-1 subspaces.
//
// Pairwise measures compare the i-th and j-th subspace outputs sample by
// sample (euclidean, cosine). Set-to-set measures compare whole d x N feature
// matrices (linear Gram alignment, centered RBF-kernel alignment). Every
// measure sums over unordered pairs i < j; values are not normalized by the
// pair count.
enum class Measure { euclidean, cosine, linear, nonlinear };
enum class Level { feature, weight };

inline constexpr Measure kAllMeasures[] = {Measure::euclidean, Measure::cosine, Measure::linear,
                                           Measure::nonlinear};

std::string_view to_string(Measure m);
std::string_view to_string(Level l);
std::optional<Measure> parse_measure(std::string_view name);
std::optional<Level> parse_level(std::string_view name);
bool is_pairwise(Measure m);

inline constexpr double kDefaultBeta = 1.0;
inline constexpr double kDefaultSigmaFraction = 1.0;
inline constexpr double kDefaultSigmaFloor = 1e-6;
inline constexpr double kDefaultEps = 1e-12;

struct RegularizerSpec {
  Measure measure = Measure::linear;
  double beta = kDefaultBeta;                      // euclidean: exp(-beta * d^2)
  double sigma_fraction = kDefaultSigmaFraction;   // nonlinear: sigma = fraction * median
  double sigma_floor = kDefaultSigmaFloor;
  double eps = kDefaultEps;                        // added to every norm denominator
  Level level = Level::feature;
  bool center = false;                             // linear only: center features first

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
  bool operator==(const RegularizerSpec&) const = default;
};

// Regularizer value with the gradient with respect to each subspace's
// feature matrix (same shapes as the inputs).
struct FeatureGradient {
  double value = 0.0;
  std::vector<Matrix> grads;
  std::vector<double> sigmas;  // nonlinear only: bandwidth used per subspace
};

struct RegularizerValue {
  double value = 0.0;
  Matrix grad_b;  // d_out x r
  Matrix grad_a;  // r x d_in
  std::vector<double> sigmas;
};

// (1/N) sum_n sum_{i<j} exp(-beta * |h_i^n - h_j^n|^2)
FeatureGradient reg_euclidean(std::span<const Matrix> features, double beta = kDefaultBeta);

// (1/N) sum_n sum_{i<j} <h_i^n, h_j^n> / (|h_i^n| |h_j^n| + eps)
FeatureGradient reg_cosine(std::span<const Matrix> features, double eps = kDefaultEps);

// sum_{i<j} |H_i H_j^T|_F^2 / (|H_i H_i^T|_F |H_j H_j^T|_F + eps)
FeatureGradient reg_linear(std::span<const Matrix> features, double eps = kDefaultEps,
                           bool center = false);

// sigma_fraction times the median pairwise Euclidean distance between the
// columns of `features`, floored at sigma_floor. With an even number of
// distances the two middle values are averaged.
double median_bandwidth(const Matrix& features, double sigma_fraction = kDefaultSigmaFraction,
                        double sigma_floor = kDefaultSigmaFloor);
// Same, from a precomputed matrix of squared pairwise distances.
double median_bandwidth_from_sq(const Matrix& sq_dists,
                                double sigma_fraction = kDefaultSigmaFraction,
                                double sigma_floor = kDefaultSigmaFloor);

// sum_{i<j} tr(K_i M K_j M) / (sqrt(tr((K_i M)^2) tr((K_j M)^2)) + eps), with
// K_i(p, q) = exp(-|h_i^p - h_i^q|^2 / (2 sigma_i^2)) and M the centering matrix.
// The bandwidths are constants for differentiation. Pass frozen_sigmas to
// reuse bandwidths computed elsewhere; otherwise each is the median heuristic.
// Throws std::invalid_argument when there are fewer than two samples.
FeatureGradient reg_nonlinear(std::span<const Matrix> features,
                              double sigma_fraction = kDefaultSigmaFraction,
                              double eps = kDefaultEps,
                              double sigma_floor = kDefaultSigmaFloor,
                              std::span<const double> frozen_sigmas = {});

// Single-pair scores, used by the redundancy analysis. Pairwise measures are
// averaged over samples.
double euclidean_pair(const Matrix& hi, const Matrix& hj, double beta = kDefaultBeta);
double cosine_pair(const Matrix& hi, const Matrix& hj, double eps = kDefaultEps);
double linear_pair(const Matrix& hi, const Matrix& hj, double eps = kDefaultEps,
                   bool center = false);
double nonlinear_pair(const Matrix& hi, const Matrix& hj, double sigma_i, double sigma_j,
                      double eps = kDefaultEps);

// K(p, q) = exp(-sq_dists(p, q) / (2 sigma^2)).
Matrix rbf_kernel(const Matrix& sq_dists, double sigma);

// M K M for the RBF kernel of the columns of h at bandwidth sigma.
Matrix centered_rbf_kernel(const Matrix& h, double sigma);
Matrix centered_rbf_kernel_from_sq(const Matrix& sq_dists, double sigma);

// Weight-level view of the adapter. Pairwise measures get vec(W_i) as one
// (d_out * d_in) x 1 sample; set-to-set measures get W_i itself, i.e. d_in
// samples of dimension d_out (the same as feeding an identity batch).
std::vector<Matrix> weight_level_features(const LowRankAdapter& adapter, Measure measure);

// The per-subspace matrices the measure in `spec` sees.
std::vector<Matrix> measure_inputs(const LowRankAdapter& adapter, const Matrix& x_batch,
                                   const RegularizerSpec& spec);

// Evaluates the measure on raw feature matrices.
FeatureGradient evaluate_measure(std::span<const Matrix> features, const RegularizerSpec& spec,
                                 std::span<const double> frozen_sigmas = {});

// Chain rule from per-subspace feature gradients to (b, a). x_batch == nullptr
// means the features were the weight-level view.
RegularizerValue backprop_to_factors(const LowRankAdapter& adapter, const Matrix* x_batch,
                                     const FeatureGradient& fg);

// R(B, A, X) for the spec's measure and level, with exact gradients. Adapters
// of rank 1 have no pairs and yield zero value and zero gradients.
RegularizerValue regularize(const LowRankAdapter& adapter, const Matrix& x_batch,
                            const RegularizerSpec& spec,
                            std::span<const double> frozen_sigmas = {});

}  // namespace resora
