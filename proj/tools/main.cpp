// horizonlab CLI: dataset generation, training, evaluation, horizon sweeps,
// curricula, and self-checks over the core library.
//
// Exit codes: 0 success, 2 validation error, 3 aborted training.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "horizonlab/configio.hpp"
#include "horizonlab/datasets.hpp"
#include "horizonlab/env.hpp"
#include "horizonlab/harness.hpp"
#include "horizonlab/policy.hpp"
#include "horizonlab/rl.hpp"

namespace fs = std::filesystem;
using namespace horizonlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitAborted = 3;

struct GlobalArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

// Loads the config file (missing --config means all defaults), then applies
// the command-line overrides. Violations print to stderr.
std::optional<configio::RunConfig> load_run_config(const GlobalArgs& args) {
  configio::LoadResult loaded = args.config_path.empty()
                                    ? configio::load_config_text("")
                                    : configio::load_config(args.config_path);
  if (!loaded.report.ok()) {
    std::cerr << "config validation failed:\n";
    for (const auto& v : loaded.report.violations) {
      std::cerr << "  " << v << '\n';
    }
    return std::nullopt;
  }
  configio::RunConfig config = *loaded.config;
  if (args.seed_set) {
    config.seed = args.seed;
    config.trainer.seed = args.seed;
  }
  if (!args.out_dir.empty()) config.out_dir = args.out_dir;
  if (config.out_dir.empty()) config.out_dir = ".";
  return config;
}

fs::path ensure_out_dir(const configio::RunConfig& config) {
  fs::path dir(config.out_dir);
  fs::create_directories(dir);
  return dir;
}

grammar::GrammarSpec grammar_for(const configio::RunConfig& config) {
  switch (config.env) {
    case grammar::EnvTag::sudoku:
      return grammar::sudoku_grammar(config.sudoku_size);
    case grammar::EnvTag::rushhour:
      return grammar::rushhour_grammar();
    case grammar::EnvTag::chain:
      return grammar::chain_grammar(config.chain_branching);
  }
  throw std::logic_error("unreachable environment tag");
}

harness::EvalOptions eval_options(const configio::RunConfig& config,
                                  const std::string& split,
                                  const std::string& checkpoint_digest) {
  harness::EvalOptions options;
  options.bands = config.bands;
  options.split = split;
  options.k = config.eval_k;
  options.temperature = config.eval_temperature;
  options.seed = config.seed;
  options.parse_mode = config.parse_mode;
  options.reward_mode = config.reward_mode;
  options.h_max = config.trainer.h_max;
  options.window = config.trainer.window;
  options.checkpoint_digest = checkpoint_digest;
  return options;
}

// Manifest path: explicit flag > config > error.
std::optional<datasets::Manifest> load_manifest_or_complain(
    const std::string& flag_path, const configio::RunConfig& config) {
  std::string path = !flag_path.empty() ? flag_path : config.manifest_path;
  if (path.empty()) {
    std::cerr << "no manifest: set [data] manifest_path or pass --manifest\n";
    return std::nullopt;
  }
  return datasets::read_manifest(path);
}

policy::SoftmaxSequencePolicy make_policy(const configio::RunConfig& config,
                                          const std::string& checkpoint) {
  if (!checkpoint.empty()) return policy::load_checkpoint(checkpoint);
  return policy::SoftmaxSequencePolicy(grammar_for(config), config.table_size);
}

void write_provenance_for(const configio::RunConfig& config,
                          const fs::path& out_dir,
                          const std::vector<fs::path>& outputs) {
  auto record = configio::stamp_provenance(config, outputs);
  configio::write_provenance(out_dir / "provenance.json", record);
}

void print_report(const harness::EvalReport& report) {
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "band        instances  pass@" << report.k << "   avg@"
            << report.k << "    horizon  step_acc\n";
  for (const auto& row : report.rows) {
    std::printf("%-12s %8d  %7.4f  %7.4f  %7.2f  %7.4f\n", row.band.c_str(),
                row.instances, row.pass_at_k, row.avg_at_k,
                row.mean_effective_horizon, row.step_accuracy);
  }
}

int cmd_generate(const GlobalArgs& args) {
  auto config = load_run_config(args);
  if (!config) return kExitValidation;
  const fs::path out_dir = ensure_out_dir(*config);

  datasets::PipelineConfig pipeline;
  pipeline.env = config->env;
  pipeline.sudoku_size = config->sudoku_size;
  pipeline.bands = configio::parse_bands_spec(config->bands_spec, config->env,
                                              config->sudoku_size);
  pipeline.seed = config->seed;
  pipeline.external_filter = config->external_filter;
  pipeline.retry_factor = config->retry_factor;
  pipeline.rush_vehicles_lo = config->vehicles_lo;
  pipeline.rush_vehicles_hi = config->vehicles_hi;
  pipeline.chain_branching = config->chain_branching;
  pipeline.chain_obs_mode = config->chain_obs_mode;
  pipeline.chain_subgoal_period = config->chain_subgoal_period;

  datasets::PipelineResult result = datasets::run_pipeline(pipeline);
  std::cout << "candidates generated: " << result.candidates_generated
            << ", kept: " << result.candidates_kept << '\n';
  if (!result.manifest.has_value()) {
    std::cerr << "dataset underfilled; no manifest written:\n";
    for (const auto& d : result.deficits) {
      std::cerr << "  band " << d.band << " split " << d.split << ": wanted "
                << d.wanted << ", got " << d.got << '\n';
    }
    return kExitValidation;
  }

  const fs::path manifest_path = config->manifest_path.empty()
                                     ? out_dir / "manifest.jsonl"
                                     : fs::path(config->manifest_path);
  datasets::write_manifest(manifest_path, *result.manifest);
  write_provenance_for(*config, out_dir, {manifest_path});
  std::cout << "manifest: " << manifest_path.string() << '\n';
  for (const auto& bc : datasets::count_by_band(*result.manifest)) {
    std::cout << "  " << bc.band << ": train " << bc.train << ", test "
              << bc.test << '\n';
  }
  return kExitOk;
}

int cmd_train(const GlobalArgs& args, const std::string& manifest_flag,
              const std::string& checkpoint_flag) {
  auto config = load_run_config(args);
  if (!config) return kExitValidation;
  const fs::path out_dir = ensure_out_dir(*config);

  auto manifest = load_manifest_or_complain(manifest_flag, *config);
  if (!manifest) return kExitValidation;
  auto tasks =
      harness::select_tasks(*manifest, config->bands, config->split);
  if (tasks.empty()) {
    std::cerr << "selected bands/split contain no tasks\n";
    return kExitValidation;
  }

  const std::string init_ckpt =
      !checkpoint_flag.empty() ? checkpoint_flag : config->checkpoint;
  policy::SoftmaxSequencePolicy pi = make_policy(*config, init_ckpt);

  std::ofstream jsonl(out_dir / "metrics.jsonl");
  std::ofstream csv(out_dir / "metrics.csv");
  rl::TrainLog log = rl::train(pi, tasks, config->trainer, config->advantage,
                               config->is_config, &jsonl, &csv);

  const fs::path ckpt_path = out_dir / "policy.ckpt";
  policy::save_checkpoint(pi, ckpt_path);

  int best_iter = -1;
  double best_rate = -1.0;
  int rollbacks = 0;
  for (const auto& m : log.iterations) {
    if (m.success_rate > best_rate) {
      best_rate = m.success_rate;
      best_iter = m.iteration;
    }
    if (m.rolled_back) ++rollbacks;
  }
  nlohmann::json summary;
  summary["iterations"] = log.iterations.size();
  summary["final_success_rate"] = log.final_success_rate();
  summary["best_iteration"] = best_iter;
  summary["best_success_rate"] = best_rate;
  summary["rolled_back_iterations"] = rollbacks;
  summary["checkpoint"] = ckpt_path.string();
  {
    std::ofstream os(out_dir / "run.json");
    os << summary.dump(2) << '\n';
  }
  write_provenance_for(*config, out_dir,
                       {out_dir / "metrics.jsonl", out_dir / "metrics.csv",
                        ckpt_path, out_dir / "run.json"});
  std::cout << "trained " << log.iterations.size()
            << " iterations; final success " << log.final_success_rate()
            << "; best " << best_rate << " at iteration " << best_iter << '\n';
  std::cout << "checkpoint: " << ckpt_path.string() << '\n';
  if (rollbacks > 0) {
    std::cerr << rollbacks
              << " iteration(s) hit the non-finite gradient guard and rolled "
                 "back\n";
    return kExitAborted;
  }
  return kExitOk;
}

int cmd_evaluate(const GlobalArgs& args, const std::string& manifest_flag,
                 const std::string& checkpoint_flag, const std::string& split) {
  auto config = load_run_config(args);
  if (!config) return kExitValidation;
  const fs::path out_dir = ensure_out_dir(*config);

  auto manifest = load_manifest_or_complain(manifest_flag, *config);
  if (!manifest) return kExitValidation;

  const std::string ckpt =
      !checkpoint_flag.empty() ? checkpoint_flag : config->checkpoint;
  policy::SoftmaxSequencePolicy pi = make_policy(*config, ckpt);
  const std::string digest = ckpt.empty() ? "" : configio::file_digest(ckpt);

  harness::EvalReport report =
      harness::evaluate(pi, *manifest, eval_options(*config, split, digest));
  harness::write_report_json(out_dir / "report.json", report);
  harness::write_report_csv(out_dir / "report.csv", report);
  write_provenance_for(*config, out_dir,
                       {out_dir / "report.json", out_dir / "report.csv"});
  print_report(report);
  return kExitOk;
}

int cmd_sweep(const GlobalArgs& args, const std::string& manifest_flag,
              const std::string& checkpoint_flag,
              const std::string& baseline_flag, const std::string& split) {
  auto config = load_run_config(args);
  if (!config) return kExitValidation;
  const fs::path out_dir = ensure_out_dir(*config);

  auto manifest = load_manifest_or_complain(manifest_flag, *config);
  if (!manifest) return kExitValidation;

  const std::string ckpt =
      !checkpoint_flag.empty() ? checkpoint_flag : config->checkpoint;
  policy::SoftmaxSequencePolicy primary = make_policy(*config, ckpt);
  const std::string digest = ckpt.empty() ? "" : configio::file_digest(ckpt);
  harness::EvalOptions primary_options = eval_options(*config, split, digest);

  std::optional<policy::SoftmaxSequencePolicy> baseline;
  harness::EvalOptions baseline_options = primary_options;
  if (!baseline_flag.empty()) {
    baseline = policy::load_checkpoint(baseline_flag);
    // The reference row is an atomic-action policy; everything else matches.
    baseline_options.parse_mode = {grammar::MacroMode::atomic, 1};
    baseline_options.checkpoint_digest = configio::file_digest(baseline_flag);
  }

  harness::SweepReport sweep = harness::horizon_sweep(
      primary, primary_options, baseline ? &*baseline : nullptr,
      baseline ? &baseline_options : nullptr, *manifest);

  harness::write_sweep_csv(out_dir / "sweep.csv", sweep);
  harness::write_report_json(out_dir / "report.json", sweep.primary);
  std::vector<fs::path> outputs = {out_dir / "sweep.csv",
                                   out_dir / "report.json"};
  if (sweep.baseline.has_value()) {
    harness::write_report_json(out_dir / "baseline.json", *sweep.baseline);
    outputs.push_back(out_dir / "baseline.json");
  }
  write_provenance_for(*config, out_dir, outputs);

  print_report(sweep.primary);
  if (!sweep.gaps.empty()) {
    std::cout << "gap vs atomic baseline (pass@" << sweep.primary.k << "):\n";
    for (const auto& g : sweep.gaps) {
      std::printf("  %-12s %+.4f\n", g.band.c_str(), g.gap);
    }
  }
  return kExitOk;
}

int cmd_curriculum(const GlobalArgs& args, const std::string& manifest_flag,
                   const std::string& checkpoint_flag) {
  auto config = load_run_config(args);
  if (!config) return kExitValidation;
  const fs::path out_dir = ensure_out_dir(*config);

  auto manifest = load_manifest_or_complain(manifest_flag, *config);
  if (!manifest) return kExitValidation;
  if (config->curriculum_phases.empty()) {
    std::cerr << "no curriculum: set [curriculum] phases, e.g. "
                 "\"S1,S2@100;S3@200\"\n";
    return kExitValidation;
  }

  harness::CurriculumPlan plan;
  plan.phases = harness::parse_curriculum_phases(config->curriculum_phases);
  plan.trainer = config->trainer;
  plan.advantage = config->advantage;
  plan.is_config = config->is_config;
  plan.final_eval = eval_options(*config, "test", "");

  const std::string init_ckpt =
      !checkpoint_flag.empty() ? checkpoint_flag : config->checkpoint;
  policy::SoftmaxSequencePolicy pi = make_policy(*config, init_ckpt);

  std::ofstream jsonl(out_dir / "metrics.jsonl");
  std::ofstream csv(out_dir / "metrics.csv");
  harness::CurriculumResult result =
      harness::run_curriculum(pi, *manifest, plan, &jsonl, &csv);

  const fs::path ckpt_path = out_dir / "policy.ckpt";
  policy::save_checkpoint(pi, ckpt_path);
  std::vector<fs::path> outputs = {out_dir / "metrics.jsonl",
                                   out_dir / "metrics.csv", ckpt_path};

  if (result.aborted) {
    std::cerr << "curriculum aborted in phase " << result.aborted_phase
              << " (non-finite gradient guard); partial logs kept in "
              << out_dir.string() << '\n';
    write_provenance_for(*config, out_dir, outputs);
    return kExitAborted;
  }

  harness::write_report_json(out_dir / "report.json", result.final_report);
  harness::write_report_csv(out_dir / "report.csv", result.final_report);
  outputs.push_back(out_dir / "report.json");
  outputs.push_back(out_dir / "report.csv");
  write_provenance_for(*config, out_dir, outputs);

  for (std::size_t i = 0; i < result.phase_logs.size(); ++i) {
    std::cout << "phase " << i << ": " << result.phase_logs[i].iterations.size()
              << " iterations, final success "
              << result.phase_logs[i].final_success_rate() << '\n';
  }
  print_report(result.final_report);
  std::cout << "checkpoint: " << ckpt_path.string() << '\n';
  return kExitOk;
}

int cmd_selftest() {
  harness::SelftestResult result = harness::selftest();
  for (const auto& line : result.lines) std::cout << line << '\n';
  if (!result.passed) {
    std::cerr << "selftest failed\n";
    return kExitValidation;
  }
  std::cout << "selftest passed\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"goal-distance-calibrated puzzle RL laboratory"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs args;
  app.add_option("--config", args.config_path,
                 "run configuration file (sectioned key=value)");
  auto* seed_opt =
      app.add_option("--seed", args.seed, "seed override (beats config file)");
  app.add_option("--out", args.out_dir, "output directory");

  std::string manifest_flag;
  std::string checkpoint_flag;
  std::string baseline_flag;
  std::string split = "test";

  auto* gen = app.add_subcommand("generate", "build a dataset manifest");
  auto* train = app.add_subcommand("train", "REINFORCE training run");
  train->add_option("--manifest", manifest_flag, "dataset manifest path");
  train->add_option("--checkpoint", checkpoint_flag,
                    "initial policy checkpoint (resume)");
  auto* eval = app.add_subcommand("evaluate", "pass@K / avg@K report");
  eval->add_option("--manifest", manifest_flag, "dataset manifest path");
  eval->add_option("--checkpoint", checkpoint_flag, "policy checkpoint");
  eval->add_option("--split", split, "train | test | all (default test)");
  auto* sweep = app.add_subcommand(
      "sweep", "success vs goal distance across bands");
  sweep->add_option("--manifest", manifest_flag, "dataset manifest path");
  sweep->add_option("--checkpoint", checkpoint_flag, "policy checkpoint");
  sweep->add_option("--baseline", baseline_flag,
                    "atomic-action baseline checkpoint for gap rows");
  sweep->add_option("--split", split, "train | test | all (default test)");
  auto* curriculum =
      app.add_subcommand("curriculum", "phased training plan");
  curriculum->add_option("--manifest", manifest_flag, "dataset manifest path");
  curriculum->add_option("--checkpoint", checkpoint_flag,
                         "initial policy checkpoint");
  auto* selftest = app.add_subcommand("selftest", "fast invariant checks");

  CLI11_PARSE(app, argc, argv);
  args.seed_set = seed_opt->count() > 0;

  try {
    if (gen->parsed()) return cmd_generate(args);
    if (train->parsed()) return cmd_train(args, manifest_flag, checkpoint_flag);
    if (eval->parsed()) {
      return cmd_evaluate(args, manifest_flag, checkpoint_flag, split);
    }
    if (sweep->parsed()) {
      return cmd_sweep(args, manifest_flag, checkpoint_flag, baseline_flag,
                       split);
    }
    if (curriculum->parsed()) {
      return cmd_curriculum(args, manifest_flag, checkpoint_flag);
    }
    if (selftest->parsed()) return cmd_selftest();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}
