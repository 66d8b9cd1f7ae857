// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "amlab/cli/app.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "amlab/cli/run_config.hpp"
#include "amlab/format.hpp"
#include "amlab/losses.hpp"
#include "amlab/margin_math.hpp"
#include "amlab/metrics.hpp"
#include "amlab/norm_layer.hpp"
#include "amlab/trainer.hpp"
#include "json.hpp"

namespace amlab::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr double kGradCheckTolerance = 1e-4;
constexpr std::size_t kGradCheckClasses = 5;
constexpr std::size_t kGradCheckDim = 16;
constexpr std::size_t kGradCheckBatch = 8;

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct ExportArgs {
  std::string what;
  std::string checkpoint;
  std::size_t grid = 181;
  double s = 30.0;
  int target_class = 0;
  double norm_min = 1.0;
  double norm_max = 100.0;
  std::size_t norm_count = 201;
};

struct GradCheckArgs {
  std::vector<std::string> variants{"softmax", "normface", "a_softmax", "am_softmax"};
  std::uint64_t seeds = 5;
  double corrupt = 0.0;
};

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << contents;
  if (!out) throw IoError("write failed for " + path.string());
}

fs::path prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

RunConfig resolve_config(const CommonArgs& args) {
  if (args.config.empty()) throw ConfigError("--config is required");
  RunConfig config = load_run_config(args.config);
  if (args.seed) config.seed = *args.seed;
  if (!args.out.empty()) config.out_dir = args.out;
  return config;
}

fs::path checkpoint_path(const std::string& flag, const fs::path& out_dir) {
  return flag.empty() ? out_dir / "checkpoint.bin" : fs::path(flag);
}

std::string metrics_json(const MetricsReport& report) {
  ordered_json doc;
  ordered_json vr = ordered_json::object();
  for (const auto& [far, value] : report.vr_at_far) vr[format_significant(far)] = value;
  doc["vr_at_far"] = vr;
  if (report.dir_at_far) {
    doc["dir_at_far"] = ordered_json{{format_significant(report.dir_at_far->first), report.dir_at_far->second}};
  }
  doc["rank1"] = report.rank1;
  doc["mean_intra_angle_deg"] = report.mean_intra_angle_deg;
  doc["min_inter_center_angle_deg"] = report.min_inter_center_angle_deg;
  return doc.dump(2) + "\n";
}

void check_model_fits(const Model& model, const LabeledDataset& data) {
  if (model.net.input_dim() != data.inputs.cols()) {
    throw ConfigError("checkpoint expects inputs of width " + std::to_string(model.net.input_dim()) +
                      ", dataset has " + std::to_string(data.inputs.cols()));
  }
  if (static_cast<int>(model.head.class_count()) < data.class_count) {
    throw ConfigError("checkpoint head has " + std::to_string(model.head.class_count()) +
                      " classes, dataset has " + std::to_string(data.class_count));
  }
}

EvalSettings seeded_eval(const RunConfig& config) {
  EvalSettings settings = config.eval;
  settings.seed = derive_seeds(config.seed).eval;
  return settings;
}

int cmd_train(const CommonArgs& args, std::ostream& out) {
  const RunConfig config = resolve_config(args);
  const LabeledDataset data = load_train_split(config);
  TrainConfig opt = config.train;
  opt.seed = derive_seeds(config.seed).train;
  const TrainHistory history = train(data, config.mlp_for(data.inputs.cols()), config.loss, opt);

  const fs::path dir = prepare_out_dir(config.out_dir);
  save_checkpoint(history.model, dir / "checkpoint.bin");
  std::ostringstream csv;
  history.write_csv(csv);
  write_file(dir / "history.csv", csv.str());
  const Matrix features = embed(history.model.net, data.inputs);
  write_file(dir / "train_metrics.json", metrics_json(evaluate_embeddings(features, data, seeded_eval(config))));

  out << "trained " << history.loss.size() << " iterations, final loss "
      << format_significant(history.loss.back()) << ", train accuracy "
      << format_significant(history.epoch_accuracy.back()) << "\n";
  return kExitOk;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint, std::ostream& out) {
  const RunConfig config = resolve_config(args);
  const Model model = load_checkpoint(checkpoint_path(checkpoint, config.out_dir));
  const LabeledDataset data = load_eval_split(config);
  check_model_fits(model, data);
  const MetricsReport report = evaluate_embeddings(embed(model.net, data.inputs), data, seeded_eval(config));
  const std::string json = metrics_json(report);
  write_file(prepare_out_dir(config.out_dir) / "metrics.json", json);
  out << json;
  return kExitOk;
}

int cmd_export(const CommonArgs& args, const ExportArgs& ex, std::ostream& out) {
  if (ex.what == "psi_curve") {
    const fs::path dir = prepare_out_dir(args.out.empty() ? fs::path("amlab_out") : fs::path(args.out));
    std::ostringstream csv;
    export_psi_curve(default_psi_roster(), ex.grid).write_csv(csv);
    write_file(dir / "psi_curve.csv", csv.str());
    out << "wrote " << (dir / "psi_curve.csv").string() << "\n";
    return kExitOk;
  }
  if (ex.what == "features") {
    const RunConfig config = resolve_config(args);
    const Model model = load_checkpoint(checkpoint_path(ex.checkpoint, config.out_dir));
    const LabeledDataset data = load_eval_split(config);
    check_model_fits(model, data);
    const fs::path path = prepare_out_dir(config.out_dir) / "features.csv";
    export_features(embed(model.net, data.inputs), data.labels, path);
    out << "wrote " << path.string() << "\n";
    return kExitOk;
  }
  // gradnorm
  const fs::path out_dir = !args.out.empty()       ? fs::path(args.out)
                           : !args.config.empty() ? resolve_config(args).out_dir
                                                  : fs::path("amlab_out");
  const Model model = load_checkpoint(checkpoint_path(ex.checkpoint, out_dir));
  if (ex.target_class < 0 || static_cast<std::size_t>(ex.target_class) >= model.head.class_count()) {
    throw ConfigError("--target-class " + std::to_string(ex.target_class) + " outside the head's " +
                      std::to_string(model.head.class_count()) + " classes");
  }
  if (!(ex.s > 0.0)) throw ConfigError("--s must be positive");
  std::vector<double> norms;
  try {
    norms = log_spaced(ex.norm_min, ex.norm_max, ex.norm_count);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("norm range: ") + e.what());
  }
  const auto direction = default_gradnorm_direction(model.head, ex.target_class);
  const GradNormCurve curve = gradnorm_curve(model.head, direction, norms, ex.s, ex.target_class);
  const fs::path path = prepare_out_dir(out_dir) / "gradnorm.csv";
  std::ostringstream csv;
  curve.write_csv(csv);
  write_file(path, csv.str());
  out << "wrote " << path.string();
  if (const auto cross = curve.crossing()) out << ", curves cross at |f| = " << format_significant(*cross);
  out << "\n";
  return kExitOk;
}

LossConfig gradcheck_config(const std::string& name) {
  switch (parse_loss_variant(name)) {
    case LossVariant::softmax: return LossConfig::softmax();
    case LossVariant::normface: return LossConfig::normface(30.0);
    case LossVariant::a_softmax: return LossConfig::a_softmax(4, LambdaSchedule::constant(5.0));
    case LossVariant::am_softmax: return LossConfig::am_softmax(30.0, 0.35);
  }
  throw ConfigError("unknown loss variant " + name);
}

int cmd_gradcheck(const CommonArgs& args, const GradCheckArgs& gc, std::ostream& out) {
  if (gc.seeds == 0) throw ConfigError("--seeds must be positive");
  std::vector<std::pair<std::string, LossConfig>> configs;
  for (const auto& name : gc.variants) {
    try {
      configs.emplace_back(name, gradcheck_config(name));
    } catch (const DomainError& e) {
      throw ConfigError(std::string("--variants: ") + e.what());
    }
  }
  const std::uint64_t first = args.seed.value_or(1);
  GradCheckOptions options;
  options.corrupt_analytic = gc.corrupt;
  bool all_ok = true;
  for (const auto& [name, config] : configs) {
    double worst = 0.0;
    for (std::uint64_t seed = first; seed < first + gc.seeds; ++seed) {
      const GradCheckResult r =
          grad_check(config, kGradCheckClasses, kGradCheckDim, kGradCheckBatch, seed, options);
      worst = std::max(worst, r.max_rel_error());
    }
    const bool ok = worst < kGradCheckTolerance;
    all_ok = all_ok && ok;
    out << name << " max_rel_error " << format_significant(worst, 3) << " seeds " << first << ".."
        << first + gc.seeds - 1 << " " << (ok ? "ok" : "FAIL") << "\n";
  }
  return all_ok ? kExitOk : kExitGradCheck;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required) {
  auto* opt = cmd->add_option("--config", args.config, "Run configuration JSON");
  if (config_required) opt->required();
  cmd->add_option("--seed", args.seed, "Override the configured seed");
  cmd->add_option("--out", args.out, "Override the output directory");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"amlab: margin-based softmax losses on a desk-scale lab"};
  app.name("amlab");
  app.require_subcommand(1);

  CommonArgs common;
  ExportArgs ex;
  GradCheckArgs gc;
  std::string checkpoint;

  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint, history and metrics");
  add_common(train_cmd, common, true);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the evaluation split");
  add_common(eval_cmd, common, true);
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file (default <out>/checkpoint.bin)");

  auto* export_cmd = app.add_subcommand("export", "Write psi curves, embedded features or gradient norms as CSV");
  add_common(export_cmd, common, false);
  export_cmd->add_option("what", ex.what, "psi_curve | features | gradnorm")
      ->required()
      ->check(CLI::IsMember({"psi_curve", "features", "gradnorm"}));
  export_cmd->add_option("--checkpoint", ex.checkpoint, "Checkpoint file (default <out>/checkpoint.bin)");
  export_cmd->add_option("--grid", ex.grid, "psi_curve grid points over [0, 180] degrees")->capture_default_str();
  export_cmd->add_option("--s", ex.s, "gradnorm scale s")->capture_default_str();
  export_cmd->add_option("--target-class", ex.target_class, "gradnorm target class")->capture_default_str();
  export_cmd->add_option("--norm-min", ex.norm_min, "gradnorm smallest feature norm")->capture_default_str();
  export_cmd->add_option("--norm-max", ex.norm_max, "gradnorm largest feature norm")->capture_default_str();
  export_cmd->add_option("--norm-count", ex.norm_count, "gradnorm number of norms")->capture_default_str();

  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every loss gradient");
  add_common(gc_cmd, common, false);
  gc_cmd->add_option("--variants", gc.variants, "Loss variants to check")->delimiter(',');
  gc_cmd->add_option("--seeds", gc.seeds, "Number of seeds, starting at --seed (default 1)")->capture_default_str();
  gc_cmd->add_option("--corrupt-gradient", gc.corrupt, "Offset added to analytic gradients")->group("");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(common, out);
    if (*eval_cmd) return cmd_eval(common, checkpoint, out);
    if (*export_cmd) return cmd_export(common, ex, out);
    return cmd_gradcheck(common, gc, out);
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace amlab::cli
