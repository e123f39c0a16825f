// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

#include "resora/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "resora/config.hpp"
#include "resora/gradcheck.hpp"
#include "resora/redundancy.hpp"
#include "resora/trainer.hpp"
#include "resora/weight_codec.hpp"

namespace resora {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Usage or validation problem detected by the CLI itself.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Measure measure_arg(const std::string& name) {
  if (auto m = parse_measure(name)) return *m;
  throw UsageError("unknown measure '" + name + "' (expected euclidean, cosine, linear or nonlinear)");
}

Level level_arg(const std::string& name) {
  if (auto l = parse_level(name)) return *l;
  throw UsageError("unknown level '" + name + "' (expected feature or weight)");
}

std::vector<Measure> measures_arg(const std::vector<std::string>& names) {
  std::vector<Measure> out;
  if (names.empty()) return {std::begin(kAllMeasures), std::end(kAllMeasures)};
  for (const auto& n : names) out.push_back(measure_arg(n));
  return out;
}

// Measure parameters shared by grad-check, reg-eval and analyze.
struct SpecFlags {
  std::string level = "feature";
  double beta = kDefaultBeta;
  double sigma_fraction = kDefaultSigmaFraction;
  double sigma_floor = kDefaultSigmaFloor;
  double eps = kDefaultEps;
  bool center = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--level", level, "feature or weight")->capture_default_str();
    cmd->add_option("--beta", beta, "Euclidean kernel scale")->capture_default_str();
    cmd->add_option("--sigma-fraction", sigma_fraction, "RBF bandwidth as a fraction of the median distance")
        ->capture_default_str();
    cmd->add_option("--sigma-floor", sigma_floor, "lower bound on the RBF bandwidth")->capture_default_str();
    cmd->add_option("--eps", eps, "denominator guard")->capture_default_str();
    cmd->add_flag("--center", center, "center features before the linear measure");
  }

  RegularizerSpec spec(Measure m) const {
    RegularizerSpec s;
    s.measure = m;
    s.level = level_arg(level);
    s.beta = beta;
    s.sigma_fraction = sigma_fraction;
    s.sigma_floor = sigma_floor;
    s.eps = eps;
    s.center = center;
    try {
      s.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return s;
  }
};

Matrix load_inputs(const std::string& path, const LowRankAdapter& adapter) {
  const Matrix x = require_matrix(read_tensors(path), "x");
  if (x.rows() != adapter.d_in()) {
    throw UsageError("inputs " + shape_str(x) + " do not match adapter d_in " +
                     std::to_string(adapter.d_in()));
  }
  return x;
}

json summary_json(const RedundancyMatrix& m) {
  if (m.scores.rows() < 2) return json(nullptr);
  const RedundancySummary s = summarize(m);
  return {{"mean_offdiag", s.mean_offdiag}, {"max_offdiag", s.max_offdiag}};
}

// ---- grad-check ------------------------------------------------------------

struct GradCheckArgs {
  std::string measure = "linear";
  std::size_t r = 4, din = 16, dout = 16, n = 8;
  std::uint64_t seed = 1;
  double step = kDefaultFdStep;
  double tol = kDefaultGradTol;
  SpecFlags flags;
};

int cmd_grad_check(const GradCheckArgs& args, std::ostream& out) {
  const RegularizerSpec spec = args.flags.spec(measure_arg(args.measure));
  if (args.r < 1 || args.r > std::min(args.din, args.dout))
    throw UsageError("--r must lie in [1, min(--din, --dout)]");
  if (args.n < 1) throw UsageError("--n must be at least 1");
  if (spec.measure == Measure::nonlinear && spec.level == Level::feature && args.n < 2)
    throw UsageError("--n must be at least 2 for the nonlinear measure");
  if (!(args.step > 0.0)) throw UsageError("--step must be positive");
  if (!(args.tol > 0.0)) throw UsageError("--tol must be positive");

  const GradInstance inst = random_instance(args.seed, args.r, args.din, args.dout, args.n);
  const GradReport rep = check(spec, inst.adapter, inst.x, args.step, args.tol);
  json doc;
  doc["measure"] = std::string(to_string(spec.measure));
  doc["level"] = std::string(to_string(spec.level));
  doc["r"] = args.r;
  doc["d_in"] = args.din;
  doc["d_out"] = args.dout;
  doc["n"] = args.n;
  doc["seed"] = args.seed;
  doc["passed"] = rep.passed;
  doc["max_rel_err"] = rep.max_rel_err;
  doc["max_abs_err"] = rep.max_abs_err;
  doc["worst"] = {{"matrix", rep.worst_matrix}, {"row", rep.worst_row}, {"col", rep.worst_col}};
  doc["tolerance"] = rep.tolerance;
  doc["step"] = rep.step;
  doc["value"] = rep.value;
  out << doc.dump(2) << "\n";
  return rep.passed ? kExitOk : kExitFailure;
}

// ---- reg-eval --------------------------------------------------------------

struct RegEvalArgs {
  std::string weights, inputs, out;
  std::vector<std::string> measures;
  SpecFlags flags;
};

int cmd_reg_eval(const RegEvalArgs& args, std::ostream& out) {
  const std::vector<Measure> measures = measures_arg(args.measures);
  const LowRankAdapter adapter = decode_weights(args.weights);
  const bool weight_level = level_arg(args.flags.level) == Level::weight;
  Matrix x;
  if (!args.inputs.empty()) {
    x = load_inputs(args.inputs, adapter);
  } else if (!weight_level) {
    throw UsageError("--inputs is required for feature-level evaluation");
  }

  json doc;
  doc["weights"] = fs::path(args.weights).filename().string();
  doc["rank"] = adapter.rank();
  doc["level"] = args.flags.level;
  json results = json::array();
  for (Measure m : measures) {
    const RegularizerSpec spec = args.flags.spec(m);
    if (m == Measure::nonlinear && !weight_level && x.cols() < 2)
      throw UsageError("the nonlinear measure needs at least 2 input samples");
    const RegularizerValue rv = regularize(adapter, x, spec);
    json entry;
    entry["measure"] = std::string(to_string(m));
    entry["value"] = rv.value;
    entry["grad_norm_b"] = frobenius_norm(rv.grad_b);
    entry["grad_norm_a"] = frobenius_norm(rv.grad_a);
    const auto inputs = measure_inputs(adapter, x, spec);
    entry["summary"] = summary_json(redundancy_matrix(inputs, spec));
    results.push_back(std::move(entry));
  }
  doc["results"] = std::move(results);
  const std::string text = doc.dump(2) + "\n";
  if (!args.out.empty()) {
    const fs::path path(args.out);
    if (path.has_parent_path()) make_dirs(path.parent_path());
    write_text(path, text);
  }
  out << text;
  return kExitOk;
}

// ---- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
  std::string weights, inputs, out, name;
  std::vector<std::string> measures;
  SpecFlags flags;
};

int cmd_analyze(const AnalyzeArgs& args, std::ostream& out) {
  const std::vector<Measure> measures =
      args.measures.empty() ? std::vector<Measure>{Measure::linear} : measures_arg(args.measures);
  const LowRankAdapter adapter = decode_weights(args.weights);
  const bool weight_level = level_arg(args.flags.level) == Level::weight;
  Matrix x;
  if (!args.inputs.empty()) {
    x = load_inputs(args.inputs, adapter);
  } else if (!weight_level) {
    throw UsageError("--inputs is required for feature-level analysis");
  }
  const std::string subject =
      args.name.empty() ? fs::path(args.weights).stem().string() : args.name;
  const fs::path dir = resolve_output_dir(args.out, "", "analyze");
  make_dirs(dir);

  json doc;
  doc["subject"] = subject;
  doc["level"] = args.flags.level;
  json results = json::array();
  for (Measure m : measures) {
    const RegularizerSpec spec = args.flags.spec(m);
    if (m == Measure::nonlinear && !weight_level && x.cols() < 2)
      throw UsageError("the nonlinear measure needs at least 2 input samples");
    const RedundancyMatrix rm = redundancy_matrix(measure_inputs(adapter, x, spec), spec, subject);
    const std::string stem = "redundancy_" + std::string(to_string(m));
    write_text(dir / (stem + ".csv"), redundancy_csv(rm));
    write_heatmap(rm, dir / (stem + ".svg"));
    json entry;
    entry["measure"] = std::string(to_string(m));
    entry["summary"] = summary_json(rm);
    entry["csv"] = stem + ".csv";
    entry["svg"] = stem + ".svg";
    results.push_back(std::move(entry));
  }
  doc["results"] = std::move(results);
  const std::string text = doc.dump(2) + "\n";
  write_text(dir / "analysis.json", text);
  out << text;
  return kExitOk;
}

// ---- train / sweep ---------------------------------------------------------

struct RunSummary {
  double stage1_test = 0.0, final_test = 0.0;
  std::vector<double> stage1_red, final_red;  // aligned with trace measures
};

RunSummary run_training(const ExperimentConfig& cfg, const fs::path& dir) {
  make_dirs(dir);
  write_text(dir / "config.resolved.json", echo_config(cfg));
  const TrainConfig& tc = cfg.train;
  const TrainResult res = train_two_stage(tc);

  write_text(dir / "trace.csv", res.trace.to_csv());
  write_text(dir / "trace.json", res.trace.to_json());
  encode_weights(res.stage1, dir / "stage1.rsad");
  encode_weights(res.adapter, dir / "final.rsad");
  write_tensors({{"x", to_tensor(res.task.x_train)}, {"x_test", to_tensor(res.task.x_test)}},
                dir / "inputs.rsad");

  const TaskLoss objective = task_loss_of(res.task);
  const Batch test = test_batch(res.task);
  RunSummary s;
  s.stage1_test = loss(res.stage1, test, objective);
  s.final_test = loss(res.adapter, test, objective);

  json doc;
  doc["seed"] = tc.seed;
  doc["lambda"] = tc.lambda;
  doc["measure"] = std::string(to_string(tc.spec.measure));
  doc["level"] = std::string(to_string(tc.spec.level));
  doc["stage1"] = {{"task_loss_test", s.stage1_test}};
  doc["final"] = {{"task_loss_test", s.final_test}};
  for (Measure m : tc.trace_measures) {
    RegularizerSpec spec = tc.spec;
    spec.measure = m;
    spec.level = Level::feature;
    const std::string name(to_string(m));
    for (const auto& [label, adapter] :
         {std::pair<const char*, const LowRankAdapter*>{"stage1", &res.stage1},
          std::pair<const char*, const LowRankAdapter*>{"final", &res.adapter}}) {
      const RedundancyMatrix rm = redundancy_matrix(
          subspace_forward(*adapter, res.task.x_train).per_subspace, spec, label);
      write_heatmap(rm, dir / ("heatmap_" + name + "_" + label + ".svg"));
      const double mean = rm.scores.rows() < 2 ? 0.0 : summarize(rm).mean_offdiag;
      doc[label]["mean_offdiag"][name] = mean;
      (std::string(label) == "stage1" ? s.stage1_red : s.final_red).push_back(mean);
    }
  }
  write_text(dir / "summary.json", doc.dump(2) + "\n");
  return s;
}

struct TrainArgs {
  std::string config, out;
};

int cmd_train(const TrainArgs& args, std::ostream& out) {
  const ExperimentConfig cfg = parse_config(args.config);
  const fs::path dir = resolve_output_dir(args.out, cfg.output_dir, "train");
  const RunSummary s = run_training(cfg, dir);
  out << "wrote " << dir.string() << " (test loss " << fmt_g(s.stage1_test) << " -> "
      << fmt_g(s.final_test) << ")\n";
  return kExitOk;
}

int cmd_sweep(const TrainArgs& args, std::ostream& out) {
  const ExperimentConfig cfg = parse_config(args.config);
  const fs::path dir = resolve_output_dir(args.out, cfg.output_dir, "sweep");
  make_dirs(dir);
  write_text(dir / "config.resolved.json", echo_config(cfg));

  std::string csv = "seed,lambda,stage1_task_loss_test,final_task_loss_test";
  for (Measure m : cfg.train.trace_measures) csv += ",stage1_mean_offdiag_" + std::string(to_string(m));
  for (Measure m : cfg.train.trace_measures) csv += ",final_mean_offdiag_" + std::string(to_string(m));
  csv += "\n";
  std::size_t runs = 0;
  for (std::uint64_t seed : cfg.effective_seeds()) {
    for (double lambda : cfg.effective_lambdas()) {
      ExperimentConfig entry = cfg;
      entry.train.seed = seed;
      entry.train.lambda = lambda;
      entry.seeds.clear();
      entry.lambdas.clear();
      entry.output_dir.clear();
      const std::string name = "seed_" + std::to_string(seed) + "_lambda_" + fmt_g(lambda);
      const RunSummary s = run_training(entry, dir / name);
      csv += std::to_string(seed) + "," + fmt17(lambda) + "," + fmt17(s.stage1_test) + "," +
             fmt17(s.final_test);
      for (double v : s.stage1_red) csv += "," + fmt17(v);
      for (double v : s.final_red) csv += "," + fmt17(v);
      csv += "\n";
      ++runs;
    }
  }
  write_text(dir / "summary.csv", csv);
  out << "wrote " << runs << " runs under " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

fs::path resolve_output_dir(const std::string& explicit_dir, const std::string& config_dir,
                            const std::string& fallback_name) {
  if (!explicit_dir.empty()) return fs::path(explicit_dir);
  const char* env = std::getenv(kOutputRootEnv);
  const fs::path root = env && *env ? fs::path(env) : fs::path(kDefaultOutputRoot);
  if (!config_dir.empty()) {
    const fs::path p(config_dir);
    return p.is_absolute() ? p : root / p;
  }
  return root / fallback_name;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"resora: subspace redundancy regularizers for low-rank adapters", "resora"};
  app.require_subcommand(1);

  GradCheckArgs gc;
  auto* grad = app.add_subcommand("grad-check", "Certify a measure's gradient against finite differences");
  grad->add_option("--measure", gc.measure, "euclidean, cosine, linear or nonlinear")->capture_default_str();
  grad->add_option("--r", gc.r, "adapter rank")->capture_default_str();
  grad->add_option("--din", gc.din, "input dimension")->capture_default_str();
  grad->add_option("--dout", gc.dout, "output dimension")->capture_default_str();
  grad->add_option("--n", gc.n, "batch size")->capture_default_str();
  grad->add_option("--seed", gc.seed, "instance seed")->capture_default_str();
  grad->add_option("--step", gc.step, "finite-difference step")->capture_default_str();
  grad->add_option("--tol", gc.tol, "relative error tolerance")->capture_default_str();
  gc.flags.attach(grad);

  RegEvalArgs re;
  auto* reg = app.add_subcommand("reg-eval", "Evaluate regularizers on a weight file and input batch");
  reg->add_option("--weights", re.weights, "adapter weight file (w0, b, a)")->required();
  reg->add_option("--inputs", re.inputs, "tensor file holding the batch as 'x' (d_in x N)");
  reg->add_option("--measure", re.measures, "measure to evaluate (repeatable; default all)");
  reg->add_option("--out", re.out, "also write the JSON report here");
  re.flags.attach(reg);

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Run two-stage training from a JSON config");
  train->add_option("--config", tr.config, "experiment config (JSON)")->required();
  train->add_option("--out", tr.out, "output directory");

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "Redundancy matrices and heatmaps for a weight file");
  analyze->add_option("--weights", an.weights, "adapter weight file (w0, b, a)")->required();
  analyze->add_option("--inputs", an.inputs, "tensor file holding the batch as 'x' (d_in x N)");
  analyze->add_option("--measure", an.measures, "measure to analyze (repeatable; default linear)");
  analyze->add_option("--name", an.name, "subject shown in heatmap titles");
  analyze->add_option("--out", an.out, "output directory");
  an.flags.attach(analyze);

  TrainArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Train every seed x lambda combination of a config");
  sweep->add_option("--config", sw.config, "experiment config (JSON)")->required();
  sweep->add_option("--out", sw.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitUsage;
  }

  try {
    if (*grad) return cmd_grad_check(gc, out);
    if (*reg) return cmd_reg_eval(re, out);
    if (*train) return cmd_train(tr, out);
    if (*analyze) return cmd_analyze(an, out);
    if (*sweep) return cmd_sweep(sw, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CodecError& e) {
    err << "weight file error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace resora
