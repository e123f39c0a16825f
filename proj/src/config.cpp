// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

#include "resora/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"

namespace resora {

namespace {

using json = nlohmann::ordered_json;

std::string child(const std::string& path, const std::string& key) { return path + "." + key; }

std::string type_name(const json& j) { return j.type_name(); }

// Walks one JSON object, checking each key against the handlers and rejecting
// anything unknown.
void walk_object(const json& obj, const std::string& path,
                 const std::map<std::string, std::function<void(const json&, const std::string&)>>&
                     handlers) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object, got " + type_name(obj));
  for (const auto& [key, value] : obj.items()) {
    const auto it = handlers.find(key);
    if (it == handlers.end()) throw ConfigError(child(path, key), "unknown key");
    it->second(value, child(path, key));
  }
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number, got " + type_name(j));
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
  return v;
}

std::uint64_t get_unsigned(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) throw ConfigError(path, "must be non-negative");
  throw ConfigError(path, "expected a non-negative integer, got " + type_name(j));
}

std::size_t get_size(const json& j, const std::string& path, std::size_t min = 0) {
  const std::uint64_t v = get_unsigned(j, path);
  if (v < min) throw ConfigError(path, "must be at least " + std::to_string(min));
  return static_cast<std::size_t>(v);
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string, got " + type_name(j));
  return j.get<std::string>();
}

bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path, "expected a boolean, got " + type_name(j));
  return j.get<bool>();
}

double nonneg(double v, const std::string& path) {
  if (v < 0.0) throw ConfigError(path, "must be non-negative");
  return v;
}

double positive(double v, const std::string& path) {
  if (!(v > 0.0)) throw ConfigError(path, "must be positive");
  return v;
}

double unit_open(double v, const std::string& path) {
  if (!(v >= 0.0 && v < 1.0)) throw ConfigError(path, "must lie in [0, 1)");
  return v;
}

Measure get_measure(const json& j, const std::string& path) {
  const std::string s = get_string(j, path);
  if (auto m = parse_measure(s)) return *m;
  throw ConfigError(path, "unknown measure '" + s +
                              "' (expected euclidean, cosine, linear or nonlinear)");
}

ExperimentConfig from_json(const json& doc) {
  ExperimentConfig cfg;
  TrainConfig& t = cfg.train;
  const std::string root = "$";

  walk_object(doc, root, {
    {"task", [&](const json& j, const std::string& p) {
      walk_object(j, p, {
        {"kind", [&](const json& v, const std::string& q) {
          const std::string s = get_string(v, q);
          if (s == "regression") t.task.kind = TaskKind::regression;
          else if (s == "classification") t.task.kind = TaskKind::classification;
          else throw ConfigError(q, "unknown task kind '" + s + "' (expected regression or classification)");
        }},
        {"d_in", [&](const json& v, const std::string& q) { t.task.d_in = get_size(v, q, 1); }},
        {"d_out", [&](const json& v, const std::string& q) { t.task.d_out = get_size(v, q, 1); }},
        {"true_rank", [&](const json& v, const std::string& q) { t.task.true_rank = get_size(v, q, 1); }},
        {"n_train", [&](const json& v, const std::string& q) { t.task.n_train = get_size(v, q, 1); }},
        {"n_test", [&](const json& v, const std::string& q) { t.task.n_test = get_size(v, q, 1); }},
        {"noise_std", [&](const json& v, const std::string& q) { t.task.noise_std = nonneg(get_number(v, q), q); }},
        {"num_classes", [&](const json& v, const std::string& q) { t.task.num_classes = get_size(v, q, 2); }},
      });
    }},
    {"adapter", [&](const json& j, const std::string& p) {
      walk_object(j, p, {
        {"rank", [&](const json& v, const std::string& q) { t.rank = get_size(v, q, 1); }},
        {"init_std", [&](const json& v, const std::string& q) { t.init_std = nonneg(get_number(v, q), q); }},
      });
    }},
    {"optimizer", [&](const json& j, const std::string& p) {
      walk_object(j, p, {
        {"kind", [&](const json& v, const std::string& q) {
          const std::string s = get_string(v, q);
          if (s == "momentum") t.optimizer.kind = OptimizerKind::momentum;
          else if (s == "adam") t.optimizer.kind = OptimizerKind::adam;
          else throw ConfigError(q, "unknown optimizer '" + s + "' (expected momentum or adam)");
        }},
        {"step_size", [&](const json& v, const std::string& q) { t.optimizer.step_size = nonneg(get_number(v, q), q); }},
        {"momentum", [&](const json& v, const std::string& q) { t.optimizer.momentum = unit_open(get_number(v, q), q); }},
        {"beta1", [&](const json& v, const std::string& q) { t.optimizer.beta1 = unit_open(get_number(v, q), q); }},
        {"beta2", [&](const json& v, const std::string& q) { t.optimizer.beta2 = unit_open(get_number(v, q), q); }},
        {"eps", [&](const json& v, const std::string& q) { t.optimizer.adam_eps = positive(get_number(v, q), q); }},
        {"weight_decay", [&](const json& v, const std::string& q) { t.optimizer.weight_decay = nonneg(get_number(v, q), q); }},
      });
    }},
    {"schedule", [&](const json& j, const std::string& p) {
      walk_object(j, p, {
        {"stage1_epochs", [&](const json& v, const std::string& q) { t.stage1_epochs = get_size(v, q); }},
        {"stage2_epochs", [&](const json& v, const std::string& q) { t.stage2_epochs = get_size(v, q); }},
        {"batch_size", [&](const json& v, const std::string& q) { t.batch_size = get_size(v, q); }},
      });
    }},
    {"regularizer", [&](const json& j, const std::string& p) {
      walk_object(j, p, {
        {"measure", [&](const json& v, const std::string& q) { t.spec.measure = get_measure(v, q); }},
        {"level", [&](const json& v, const std::string& q) {
          const std::string s = get_string(v, q);
          if (auto l = parse_level(s)) t.spec.level = *l;
          else throw ConfigError(q, "unknown level '" + s + "' (expected feature or weight)");
        }},
        {"beta", [&](const json& v, const std::string& q) { t.spec.beta = positive(get_number(v, q), q); }},
        {"sigma_fraction", [&](const json& v, const std::string& q) { t.spec.sigma_fraction = positive(get_number(v, q), q); }},
        {"sigma_floor", [&](const json& v, const std::string& q) { t.spec.sigma_floor = positive(get_number(v, q), q); }},
        {"eps", [&](const json& v, const std::string& q) { t.spec.eps = positive(get_number(v, q), q); }},
        {"center", [&](const json& v, const std::string& q) { t.spec.center = get_bool(v, q); }},
      });
    }},
    {"lambda", [&](const json& v, const std::string& q) { t.lambda = nonneg(get_number(v, q), q); }},
    {"seed", [&](const json& v, const std::string& q) { t.seed = get_unsigned(v, q); }},
    {"seeds", [&](const json& v, const std::string& q) {
      if (!v.is_array()) throw ConfigError(q, "expected an array, got " + type_name(v));
      for (std::size_t k = 0; k < v.size(); ++k)
        cfg.seeds.push_back(get_unsigned(v[k], q + "[" + std::to_string(k) + "]"));
    }},
    {"lambdas", [&](const json& v, const std::string& q) {
      if (!v.is_array()) throw ConfigError(q, "expected an array, got " + type_name(v));
      for (std::size_t k = 0; k < v.size(); ++k) {
        const std::string e = q + "[" + std::to_string(k) + "]";
        cfg.lambdas.push_back(nonneg(get_number(v[k], e), e));
      }
    }},
    {"trace_measures", [&](const json& v, const std::string& q) {
      if (!v.is_array()) throw ConfigError(q, "expected an array, got " + type_name(v));
      t.trace_measures.clear();
      for (std::size_t k = 0; k < v.size(); ++k) {
        const std::string e = q + "[" + std::to_string(k) + "]";
        const Measure m = get_measure(v[k], e);
        for (Measure seen : t.trace_measures)
          if (seen == m) throw ConfigError(e, "duplicate measure");
        t.trace_measures.push_back(m);
      }
    }},
    {"output_dir", [&](const json& v, const std::string& q) { cfg.output_dir = get_string(v, q); }},
  });

  // Cross-field constraints.
  if (t.task.true_rank > std::min(t.task.d_in, t.task.d_out))
    throw ConfigError("$.task.true_rank", "must not exceed min(d_in, d_out)");
  if (t.rank > std::min(t.task.d_in, t.task.d_out))
    throw ConfigError("$.adapter.rank", "must not exceed min(d_in, d_out)");
  if (t.spec.measure == Measure::nonlinear && t.spec.level == Level::feature) {
    const std::size_t batch = t.batch_size == 0 ? t.task.n_train : t.batch_size;
    if (batch < 2) throw ConfigError("$.schedule.batch_size", "nonlinear measure needs at least 2 samples per batch");
  }
  for (Measure m : t.trace_measures)
    if (m == Measure::nonlinear && t.task.n_train < 2)
      throw ConfigError("$.task.n_train", "tracing the nonlinear measure needs at least 2 samples");
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("$", e.what());
  }
  return cfg;
}

}  // namespace

std::vector<std::uint64_t> ExperimentConfig::effective_seeds() const {
  return seeds.empty() ? std::vector<std::uint64_t>{train.seed} : seeds;
}

std::vector<double> ExperimentConfig::effective_lambdas() const {
  return lambdas.empty() ? std::vector<double>{train.lambda} : lambdas;
}

ExperimentConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("$", std::string("invalid JSON: ") + e.what());
  }
  return from_json(doc);
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("$", "cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

std::string echo_config(const ExperimentConfig& cfg) {
  const TrainConfig& t = cfg.train;
  json doc;
  doc["task"] = {
      {"kind", std::string(to_string(t.task.kind))},
      {"d_in", t.task.d_in},
      {"d_out", t.task.d_out},
      {"true_rank", t.task.true_rank},
      {"n_train", t.task.n_train},
      {"n_test", t.task.n_test},
      {"noise_std", t.task.noise_std},
      {"num_classes", t.task.num_classes},
  };
  doc["adapter"] = {{"rank", t.rank}, {"init_std", t.init_std}};
  doc["optimizer"] = {
      {"kind", std::string(to_string(t.optimizer.kind))},
      {"step_size", t.optimizer.step_size},
      {"momentum", t.optimizer.momentum},
      {"beta1", t.optimizer.beta1},
      {"beta2", t.optimizer.beta2},
      {"eps", t.optimizer.adam_eps},
      {"weight_decay", t.optimizer.weight_decay},
  };
  doc["schedule"] = {{"stage1_epochs", t.stage1_epochs},
                     {"stage2_epochs", t.stage2_epochs},
                     {"batch_size", t.batch_size}};
  doc["regularizer"] = {
      {"measure", std::string(to_string(t.spec.measure))},
      {"level", std::string(to_string(t.spec.level))},
      {"beta", t.spec.beta},
      {"sigma_fraction", t.spec.sigma_fraction},
      {"sigma_floor", t.spec.sigma_floor},
      {"eps", t.spec.eps},
      {"center", t.spec.center},
  };
  doc["lambda"] = t.lambda;
  doc["seed"] = t.seed;
  doc["seeds"] = cfg.seeds;
  doc["lambdas"] = cfg.lambdas;
  json traced = json::array();
  for (Measure m : t.trace_measures) traced.push_back(std::string(to_string(m)));
  doc["trace_measures"] = traced;
  doc["output_dir"] = cfg.output_dir;
  return doc.dump(2) + "\n";
}

}  // namespace resora
