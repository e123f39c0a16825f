// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "resora/trainer.hpp"

namespace resora {

// Rejected configuration. path() is a JSON path such as "$.regularizer.measure".
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::invalid_argument(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// JSON document:
//   task        {kind, d_in, d_out, true_rank, n_train, n_test, noise_std, num_classes}
//   adapter     {rank, init_std}
//   optimizer   {kind, step_size, momentum, beta1, beta2, eps, weight_decay}
//   schedule    {stage1_epochs, stage2_epochs, batch_size}
//   regularizer {measure, level, beta, sigma_fraction, sigma_floor, eps, center}
//   lambda, seed, seeds, lambdas, trace_measures, output_dir
// Every key is optional; unknown keys are errors.
struct ExperimentConfig {
  TrainConfig train;
  std::vector<std::uint64_t> seeds;  // empty: just train.seed
  std::vector<double> lambdas;       // empty: just train.lambda
  std::string output_dir;            // empty: chosen by the caller

  std::vector<std::uint64_t> effective_seeds() const;
  std::vector<double> effective_lambdas() const;
  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_config_text(const std::string& text);
// Throws ConfigError (path "$") if the file cannot be read.
ExperimentConfig parse_config(const std::filesystem::path& path);

// Fully resolved document with every default spelled out.
std::string echo_config(const ExperimentConfig& cfg);

}  // namespace resora
