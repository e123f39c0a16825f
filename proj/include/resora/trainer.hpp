// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "resora/adapter.hpp"
#include "resora/regularizers.hpp"

namespace resora {

enum class TaskKind { regression, classification };
enum class OptimizerKind { momentum, adam };

std::string_view to_string(TaskKind k);
std::string_view to_string(OptimizerKind k);

struct TaskConfig {
  TaskKind kind = TaskKind::regression;
  std::size_t d_in = 32;
  std::size_t d_out = 32;
  std::size_t true_rank = 2;
  std::size_t n_train = 512;
  std::size_t n_test = 512;
  double noise_std = 0.1;
  std::size_t num_classes = 4;  // classification only

  bool operator==(const TaskConfig&) const = default;
};

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::momentum;
  double step_size = 0.5;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // momentum: added to the gradient as weight_decay * theta.
  // adam: decoupled, theta -= step_size * weight_decay * theta.
  double weight_decay = 0.0;

  bool operator==(const OptimizerConfig&) const = default;
};

struct TrainConfig {
  TaskConfig task;
  std::size_t rank = 8;
  double init_std = kDefaultInitStd;
  OptimizerConfig optimizer;
  std::size_t stage1_epochs = 200;
  std::size_t stage2_epochs = 200;
  std::size_t batch_size = 0;  // 0 means full batch
  RegularizerSpec spec;
  double lambda = 0.1;
  std::uint64_t seed = 1;
  // Redundancy measures recorded in the trace every epoch (feature level).
  std::vector<Measure> trace_measures{std::begin(kAllMeasures), std::end(kAllMeasures)};

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Desk-scale regression (or classification) task with a hidden low-rank shift
// of the frozen base weight.
struct SyntheticTask {
  TaskKind kind = TaskKind::regression;
  Matrix w0;
  Matrix delta_star;  // d_out x d_in, rank true_rank
  Matrix x_train, y_train;
  Matrix x_test, y_test;
  // Classification: frozen readout head (num_classes x d_out) and labels.
  Matrix head;
  std::vector<std::size_t> labels_train, labels_test;
};

SyntheticTask make_task(const TrainConfig& cfg);

struct Batch {
  Matrix x;                          // d_in x N
  Matrix y;                          // regression targets, d_out x N
  std::vector<std::size_t> labels;   // classification targets
};

// How adapter outputs become a scalar loss. Regression: mean squared error
// (1 / (N d_out)) |(w0 + b a) X - Y|_F^2. Classification: mean softmax
// cross-entropy of head * (w0 + b a) X.
struct TaskLoss {
  TaskKind kind = TaskKind::regression;
  Matrix head;
};

Batch train_batch(const SyntheticTask& task);
Batch test_batch(const SyntheticTask& task);
TaskLoss task_loss_of(const SyntheticTask& task);

double loss(const LowRankAdapter& adapter, const Batch& batch, const TaskLoss& objective = {});

struct LossGradient {
  double value = 0.0;
  Matrix grad_b;
  Matrix grad_a;
};
LossGradient loss_gradient(const LowRankAdapter& adapter, const Batch& batch,
                           const TaskLoss& objective = {});

struct OptimizerState {
  Matrix first_b, first_a;    // momentum buffers / Adam first moments
  Matrix second_b, second_a;  // Adam second moments
  std::size_t steps = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepInfo {
  double task_loss = 0.0;  // before the update
  double reg_value = 0.0;  // 0 when lambda == 0
};

// One update of b and a against task_loss + lambda * R. w0 is never written.
// Throws TrainingError if the combined gradient is not finite.
StepInfo step(LowRankAdapter& adapter, const Batch& batch, const TaskLoss& objective,
              const RegularizerSpec& spec, double lambda, const OptimizerConfig& optimizer,
              OptimizerState& state);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based, counted across both stages
  int stage = 1;
  double task_loss_train = 0.0;
  double task_loss_test = 0.0;
  double reg_value = 0.0;
  std::vector<double> mean_offdiag;  // aligned with TrainTrace::measures

  bool operator==(const EpochRecord&) const = default;
};

struct TrainTrace {
  std::vector<Measure> measures;
  std::vector<EpochRecord> records;

  // NaN if the measure was not traced.
  double mean_offdiag(const EpochRecord& rec, Measure m) const;
  std::string to_csv() const;
  std::string to_json() const;

  bool operator==(const TrainTrace&) const = default;
};

struct TrainResult {
  SyntheticTask task;
  LowRankAdapter stage1;  // snapshot at the end of stage one
  LowRankAdapter adapter;
  TrainTrace trace;
};

// Mean off-diagonal feature-level redundancy on x under `measure` with the
// parameters from `params`; 0 for rank-1 adapters.
double mean_redundancy(const LowRankAdapter& adapter, const Matrix& x, Measure measure,
                       const RegularizerSpec& params);

// Stage one trains with lambda = 0, stage two adds cfg.lambda * R. Optimizer
// state carries over between stages. Deterministic for a given config.
TrainResult train_two_stage(const TrainConfig& cfg);

}  // namespace resora
