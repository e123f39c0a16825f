// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

#include "resora/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "json.hpp"

#include "resora/redundancy.hpp"

namespace resora {

namespace {

// Stream ids for Rng::split.
constexpr std::uint64_t kTaskStream = 0;
constexpr std::uint64_t kAdapterStream = 1;
constexpr std::uint64_t kShuffleStream = 2;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

Matrix select_columns(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(m.rows(), idx.size());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < idx.size(); ++c) out(r, c) = m(r, idx[c]);
  return out;
}

std::vector<std::size_t> argmax_columns(const Matrix& logits) {
  std::vector<std::size_t> out(logits.cols(), 0);
  for (std::size_t n = 0; n < logits.cols(); ++n)
    for (std::size_t c = 1; c < logits.rows(); ++c)
      if (logits(c, n) > logits(out[n], n)) out[n] = c;
  return out;
}

// Loss value and its gradient with respect to the adapted layer output.
double output_loss(const Matrix& out, const Batch& batch, const TaskLoss& objective,
                   Matrix* grad_out) {
  const std::size_t n = out.cols();
  if (objective.kind == TaskKind::regression) {
    if (batch.y.rows() != out.rows() || batch.y.cols() != n) {
      throw DimensionError("loss: targets " + shape_str(batch.y) + " vs outputs " +
                           shape_str(out));
    }
    const double scale = 1.0 / static_cast<double>(n * out.rows());
    Matrix resid = out - batch.y;
    const double value = frobenius_dot(resid, resid) * scale;
    if (grad_out) {
      resid *= 2.0 * scale;
      *grad_out = std::move(resid);
    }
    return value;
  }
  if (batch.labels.size() != n) throw DimensionError("loss: label count differs from batch size");
  const Matrix logits = matmul(objective.head, out);
  const std::size_t classes = logits.rows();
  Matrix dlogits(classes, n);
  double value = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) mx = std::max(mx, logits(c, s));
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(logits(c, s) - mx);
    const double log_z = mx + std::log(z);
    value += log_z - logits(batch.labels[s], s);
    for (std::size_t c = 0; c < classes; ++c) dlogits(c, s) = std::exp(logits(c, s) - log_z);
    dlogits(batch.labels[s], s) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  if (grad_out) {
    dlogits *= inv_n;
    *grad_out = matmul_tn(objective.head, dlogits);
  }
  return value * inv_n;
}

}  // namespace

std::string_view to_string(TaskKind k) {
  return k == TaskKind::regression ? "regression" : "classification";
}

std::string_view to_string(OptimizerKind k) {
  return k == OptimizerKind::momentum ? "momentum" : "adam";
}

void TrainConfig::validate() const {
  require(task.d_in >= 1 && task.d_out >= 1, "task.d_in and task.d_out must be at least 1");
  require(task.true_rank >= 1 && task.true_rank <= std::min(task.d_in, task.d_out),
          "task.true_rank must lie in [1, min(d_in, d_out)]");
  require(task.n_train >= 1, "task.n_train must be at least 1");
  require(task.n_test >= 1, "task.n_test must be at least 1");
  require(task.noise_std >= 0.0 && std::isfinite(task.noise_std),
          "task.noise_std must be finite and non-negative");
  require(task.kind == TaskKind::regression || task.num_classes >= 2,
          "task.num_classes must be at least 2");
  require(rank >= 1 && rank <= std::min(task.d_in, task.d_out),
          "rank must lie in [1, min(d_in, d_out)]");
  require(init_std >= 0.0 && std::isfinite(init_std), "init_std must be non-negative");
  require(optimizer.step_size >= 0.0 && std::isfinite(optimizer.step_size),
          "optimizer.step_size must be non-negative");
  require(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0,
          "optimizer.momentum must lie in [0, 1)");
  require(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0, "optimizer.beta1 must lie in [0, 1)");
  require(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0, "optimizer.beta2 must lie in [0, 1)");
  require(optimizer.adam_eps > 0.0, "optimizer.adam_eps must be positive");
  require(optimizer.weight_decay >= 0.0, "optimizer.weight_decay must be non-negative");
  require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be finite and non-negative");
  spec.validate();
  const std::size_t effective_batch = batch_size == 0 ? task.n_train : batch_size;
  if (spec.measure == Measure::nonlinear && spec.level == Level::feature) {
    require(effective_batch >= 2 && task.n_train >= 2,
            "nonlinear measure needs batches of at least 2 samples");
  }
  if (std::find(trace_measures.begin(), trace_measures.end(), Measure::nonlinear) !=
      trace_measures.end()) {
    require(task.n_train >= 2, "tracing the nonlinear measure needs n_train >= 2");
  }
}

SyntheticTask make_task(const TrainConfig& cfg) {
  cfg.validate();
  const TaskConfig& t = cfg.task;
  Rng rng = Rng(cfg.seed).split(kTaskStream);
  SyntheticTask task;
  task.kind = t.kind;
  const double in_scale = 1.0 / std::sqrt(static_cast<double>(t.d_in));
  task.w0 = randn(rng, t.d_out, t.d_in, in_scale);
  // Product of true_rank rank-1 factors: u_k ~ N(0, 1), v_k ~ N(0, 1/d_in).
  const Matrix u = randn(rng, t.d_out, t.true_rank, 1.0);
  const Matrix v = randn(rng, t.true_rank, t.d_in, in_scale);
  task.delta_star = matmul(u, v);
  const Matrix w_true = task.w0 + task.delta_star;

  task.x_train = randn(rng, t.d_in, t.n_train, 1.0);
  task.x_test = randn(rng, t.d_in, t.n_test, 1.0);
  task.y_train = matmul(w_true, task.x_train) + randn(rng, t.d_out, t.n_train, t.noise_std);
  task.y_test = matmul(w_true, task.x_test) + randn(rng, t.d_out, t.n_test, t.noise_std);

  if (t.kind == TaskKind::classification) {
    task.head = randn(rng, t.num_classes, t.d_out,
                      1.0 / std::sqrt(static_cast<double>(t.d_out)));
    task.labels_train = argmax_columns(matmul(task.head, task.y_train));
    task.labels_test = argmax_columns(matmul(task.head, task.y_test));
  }
  return task;
}

Batch train_batch(const SyntheticTask& task) {
  return {task.x_train, task.y_train, task.labels_train};
}

Batch test_batch(const SyntheticTask& task) { return {task.x_test, task.y_test, task.labels_test}; }

TaskLoss task_loss_of(const SyntheticTask& task) { return {task.kind, task.head}; }

double loss(const LowRankAdapter& adapter, const Batch& batch, const TaskLoss& objective) {
  const Matrix out = matmul(merge(adapter), batch.x);
  return output_loss(out, batch, objective, nullptr);
}

LossGradient loss_gradient(const LowRankAdapter& adapter, const Batch& batch,
                           const TaskLoss& objective) {
  adapter.validate();
  if (batch.x.rows() != adapter.d_in()) {
    throw DimensionError("loss_gradient: batch rows " + std::to_string(batch.x.rows()) +
                         " != d_in " + std::to_string(adapter.d_in()));
  }
  const Matrix s = matmul(adapter.a, batch.x);  // r x N
  const Matrix out = matmul(adapter.w0, batch.x) + matmul(adapter.b, s);
  Matrix g;
  LossGradient lg;
  lg.value = output_loss(out, batch, objective, &g);
  // out = w0 X + B (A X):  dB = G (A X)^T,  dA = B^T G X^T
  lg.grad_b = matmul_nt(g, s);
  lg.grad_a = matmul_nt(matmul_tn(adapter.b, g), batch.x);
  return lg;
}

StepInfo step(LowRankAdapter& adapter, const Batch& batch, const TaskLoss& objective,
              const RegularizerSpec& spec, double lambda, const OptimizerConfig& optimizer,
              OptimizerState& state) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("step: lambda must be non-negative");
  LossGradient lg = loss_gradient(adapter, batch, objective);
  StepInfo info{lg.value, 0.0};
  if (lambda > 0.0) {
    const RegularizerValue reg = regularize(adapter, batch.x, spec);
    info.reg_value = reg.value;
    lg.grad_b += lambda * reg.grad_b;
    lg.grad_a += lambda * reg.grad_a;
  }
  if (!all_finite(lg.grad_b) || !all_finite(lg.grad_a)) {
    throw TrainingError("non-finite gradient at optimizer step " + std::to_string(state.steps + 1) +
                        " (task loss " + fmt17(info.task_loss) + ", regularizer " +
                        fmt17(info.reg_value) + ", lambda " + fmt17(lambda) + ", |b| " +
                        fmt17(frobenius_norm(adapter.b)) + ", |a| " +
                        fmt17(frobenius_norm(adapter.a)) + ")");
  }

  if (state.first_b.rows() != adapter.b.rows() || state.first_b.cols() != adapter.b.cols()) {
    state.first_b = Matrix(adapter.b.rows(), adapter.b.cols());
    state.second_b = state.first_b;
    state.first_a = Matrix(adapter.a.rows(), adapter.a.cols());
    state.second_a = state.first_a;
  }
  ++state.steps;
  const double lr = optimizer.step_size;

  auto update = [&](Matrix& param, const Matrix& grad, Matrix& first, Matrix& second) {
    auto p = param.data();
    auto g = grad.data();
    auto m = first.data();
    auto v = second.data();
    if (optimizer.kind == OptimizerKind::momentum) {
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = optimizer.momentum * m[k] + g[k] + optimizer.weight_decay * p[k];
        p[k] -= lr * m[k];
      }
      return;
    }
    const double t = static_cast<double>(state.steps);
    const double c1 = 1.0 - std::pow(optimizer.beta1, t);
    const double c2 = 1.0 - std::pow(optimizer.beta2, t);
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = optimizer.beta1 * m[k] + (1.0 - optimizer.beta1) * g[k];
      v[k] = optimizer.beta2 * v[k] + (1.0 - optimizer.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= lr * (mhat / (std::sqrt(vhat) + optimizer.adam_eps) + optimizer.weight_decay * p[k]);
    }
  };
  update(adapter.b, lg.grad_b, state.first_b, state.second_b);
  update(adapter.a, lg.grad_a, state.first_a, state.second_a);
  return info;
}

double TrainTrace::mean_offdiag(const EpochRecord& rec, Measure m) const {
  for (std::size_t k = 0; k < measures.size(); ++k)
    if (measures[k] == m) return rec.mean_offdiag.at(k);
  return std::numeric_limits<double>::quiet_NaN();
}

std::string TrainTrace::to_csv() const {
  std::string csv = "epoch,stage,task_loss_train,task_loss_test,reg_value";
  for (Measure m : measures) csv += ",mean_offdiag_" + std::string(to_string(m));
  csv += "\n";
  for (const auto& r : records) {
    csv += std::to_string(r.epoch) + "," + std::to_string(r.stage) + "," +
           fmt17(r.task_loss_train) + "," + fmt17(r.task_loss_test) + "," + fmt17(r.reg_value);
    for (double v : r.mean_offdiag) csv += "," + fmt17(v);
    csv += "\n";
  }
  return csv;
}

std::string TrainTrace::to_json() const {
  nlohmann::ordered_json doc;
  doc["measures"] = nlohmann::ordered_json::array();
  for (Measure m : measures) doc["measures"].push_back(std::string(to_string(m)));
  auto& recs = doc["records"] = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["stage"] = r.stage;
    j["task_loss_train"] = r.task_loss_train;
    j["task_loss_test"] = r.task_loss_test;
    j["reg_value"] = r.reg_value;
    nlohmann::ordered_json red;
    for (std::size_t k = 0; k < measures.size(); ++k)
      red[std::string(to_string(measures[k]))] = r.mean_offdiag[k];
    j["mean_offdiag"] = red;
    recs.push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

double mean_redundancy(const LowRankAdapter& adapter, const Matrix& x, Measure measure,
                       const RegularizerSpec& params) {
  if (adapter.rank() < 2) return 0.0;
  RegularizerSpec spec = params;
  spec.measure = measure;
  spec.level = Level::feature;
  const auto features = subspace_forward(adapter, x).per_subspace;
  return summarize(redundancy_matrix(features, spec)).mean_offdiag;
}

namespace {

double regularizer_value(const LowRankAdapter& adapter, const Matrix& x,
                         const RegularizerSpec& spec) {
  if (adapter.rank() < 2) return 0.0;
  const auto inputs = measure_inputs(adapter, x, spec);
  const RedundancyMatrix m = redundancy_matrix(inputs, spec);
  // Each measure's value is the sum of its pair scores.
  double total = 0.0;
  for (std::size_t i = 0; i < m.scores.rows(); ++i)
    for (std::size_t j = i + 1; j < m.scores.cols(); ++j) total += m.scores(i, j);
  return total;
}

}  // namespace

TrainResult train_two_stage(const TrainConfig& cfg) {
  cfg.validate();
  TrainResult result;
  result.task = make_task(cfg);
  const SyntheticTask& task = result.task;

  Rng adapter_rng = Rng(cfg.seed).split(kAdapterStream);
  Rng shuffle_rng = Rng(cfg.seed).split(kShuffleStream);
  LowRankAdapter adapter = init_adapter(adapter_rng, task.w0, cfg.rank, cfg.init_std);

  const TaskLoss objective = task_loss_of(task);
  const Batch full_train = train_batch(task);
  const Batch full_test = test_batch(task);
  const std::size_t n = task.x_train.cols();
  const std::size_t bs = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
  const bool needs_pairs = cfg.spec.measure == Measure::nonlinear;

  if (cfg.stage1_epochs == 0) result.stage1 = adapter;

  OptimizerState state;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  result.trace.measures = cfg.trace_measures;

  const std::size_t total_epochs = cfg.stage1_epochs + cfg.stage2_epochs;
  for (std::size_t epoch = 0; epoch < total_epochs; ++epoch) {
    const int stage = epoch < cfg.stage1_epochs ? 1 : 2;
    const double lambda = stage == 1 ? 0.0 : cfg.lambda;
    if (bs == n) {
      step(adapter, full_train, objective, cfg.spec, lambda, cfg.optimizer, state);
    } else {
      for (std::size_t k = n - 1; k > 0; --k) std::swap(order[k], order[shuffle_rng.below(k + 1)]);
      for (std::size_t start = 0; start < n; start += bs) {
        const std::size_t stop = std::min(start + bs, n);
        if (needs_pairs && stop - start < 2) break;
        const std::span<const std::size_t> idx(order.data() + start, stop - start);
        Batch mb{select_columns(task.x_train, idx), select_columns(task.y_train, idx), {}};
        if (!task.labels_train.empty())
          for (std::size_t i : idx) mb.labels.push_back(task.labels_train[i]);
        step(adapter, mb, objective, cfg.spec, lambda, cfg.optimizer, state);
      }
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.stage = stage;
    rec.task_loss_train = loss(adapter, full_train, objective);
    rec.task_loss_test = loss(adapter, full_test, objective);
    rec.reg_value = regularizer_value(adapter, task.x_train, cfg.spec);
    for (Measure m : cfg.trace_measures)
      rec.mean_offdiag.push_back(mean_redundancy(adapter, task.x_train, m, cfg.spec));
    result.trace.records.push_back(std::move(rec));

    if (epoch + 1 == cfg.stage1_epochs) result.stage1 = adapter;
  }
  result.adapter = std::move(adapter);
  return result;
}

}  // namespace resora
