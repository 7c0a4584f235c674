// Evaluation metrics (pass@K, avg@K, effective horizon, step accuracy),
// horizon-generalization sweeps, and the curriculum runner.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "horizonlab/datasets.hpp"
#include "horizonlab/env.hpp"
#include "horizonlab/policy.hpp"
#include "horizonlab/rl.hpp"

namespace horizonlab::harness {

struct EvalOptions {
  std::vector<std::string> bands;  // empty = every band in the manifest
  std::string split = "test";     // train | test | all
  int k = 4;
  double temperature = 0.8;
  std::uint64_t seed = 0;
  grammar::ParseMode parse_mode{grammar::MacroMode::atomic, 1};
  env::RewardMode reward_mode = env::RewardMode::sparse;
  int h_max = 0;  // 0 -> environment default
  int window = 0;
  std::string checkpoint_digest;  // recorded verbatim in the report
};

struct BandRow {
  std::string band;
  int instances = 0;
  double pass_at_k = 0.0;
  double avg_at_k = 0.0;
  // Mean turn count of successful rollouts; -1 when none succeeded.
  double mean_effective_horizon = -1.0;
  // Sudoku only (fraction of steps advancing the reference solution);
  // -1 when undefined for the environment.
  double step_accuracy = -1.0;
};

struct EvalReport {
  std::vector<BandRow> rows;  // manifest band order; empty bands omitted
  int k = 1;
  double temperature = 0.8;
  std::uint64_t seed = 0;
  std::string checkpoint_digest;
  std::vector<std::string> warnings;
};

// Band/split filtering shared by train/evaluate/curriculum.
std::vector<datasets::TaskInstance> select_tasks(
    const datasets::Manifest& manifest, const std::vector<std::string>& bands,
    const std::string& split);

// Success estimators over an outcome table: outcomes[i][j] = rollout j of
// instance i succeeded. Every instance must carry the same number of
// rollouts. pass@K counts instances with at least one success; avg@K is the
// mean over all K*N rollouts, so avg@K <= pass@K and they coincide at K=1.
struct Estimates {
  double pass_at_k = 0.0;
  double avg_at_k = 0.0;
};
Estimates estimate_success(const std::vector<std::vector<bool>>& outcomes);

// K independent seeded rollouts per instance. pass@K = share of instances
// with at least one success; avg@K = mean success over all rollouts (always
// <= pass@K). Deterministic in (policy, manifest, options).
EvalReport evaluate(const policy::SoftmaxSequencePolicy& policy,
                    const datasets::Manifest& manifest,
                    const EvalOptions& options);

void write_report_json(const std::filesystem::path& path,
                       const EvalReport& report);
void write_report_csv(const std::filesystem::path& path,
                      const EvalReport& report);

// Success-vs-goal-distance table; with a baseline policy supplied the report
// also carries the per-band pass@K gap (primary - baseline).
struct SweepRow {
  std::string band;
  double primary_pass = 0.0;
  double baseline_pass = 0.0;
  double gap = 0.0;
};

struct SweepReport {
  EvalReport primary;
  std::optional<EvalReport> baseline;
  std::vector<SweepRow> gaps;  // only when baseline present
};

SweepReport horizon_sweep(const policy::SoftmaxSequencePolicy& primary,
                          const EvalOptions& primary_options,
                          const policy::SoftmaxSequencePolicy* baseline,
                          const EvalOptions* baseline_options,
                          const datasets::Manifest& manifest);

void write_sweep_csv(const std::filesystem::path& path,
                     const SweepReport& report);

// Ordered training phases over one policy; each phase continues from the
// previous phase's parameters (checkpoint handoff is the identity on the
// in-memory policy; the CLI additionally saves per-phase checkpoints).
struct CurriculumPhase {
  std::vector<std::string> bands;
  int iterations = 0;  // > 0 overrides the base trainer's schedule
};

struct CurriculumPlan {
  std::vector<CurriculumPhase> phases;
  rl::TrainerConfig trainer;
  rl::AdvantageConfig advantage;
  rl::ISConfig is_config;
  // Final evaluation after the last phase; empty bands default to the last
  // phase's target bands.
  EvalOptions final_eval;
};

// Parses "S1,S2@100;S3@200" (bands@iterations;...). Throws
// std::invalid_argument on malformed input.
std::vector<CurriculumPhase> parse_curriculum_phases(const std::string& text);

struct CurriculumResult {
  std::vector<rl::TrainLog> phase_logs;
  EvalReport final_report;
  bool aborted = false;     // a phase hit the non-finite rollback guard
  int aborted_phase = -1;
};

CurriculumResult run_curriculum(policy::SoftmaxSequencePolicy& policy,
                                const datasets::Manifest& manifest,
                                const CurriculumPlan& plan,
                                std::ostream* jsonl = nullptr,
                                std::ostream* csv = nullptr);

// Fast invariant checks behind the `selftest` CLI subcommand. Each line is
// "ok: <what>" or "FAIL: <what>"; overall pass only when none failed.
struct SelftestResult {
  bool passed = true;
  std::vector<std::string> lines;
};
SelftestResult selftest();

}  // namespace horizonlab::harness
