// Training mathematics: reward decomposition, normalization, advantage
// mixing, masked+truncated importance weights, subgoal segmentation, and the
// staleness-aware REINFORCE loop.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "horizonlab/core.hpp"
#include "horizonlab/datasets.hpp"
#include "horizonlab/env.hpp"
#include "horizonlab/policy.hpp"

namespace horizonlab::rl {

enum class NormMode { batch, group, none };
NormMode norm_mode_from_string(const std::string& s);
std::string to_string(NormMode m);

struct AdvantageConfig {
  double gamma = 0.995;
  double alpha = 0.2;
  NormMode normalization = NormMode::batch;
  // Rollouts per task when group normalization is active; must divide the
  // batch size.
  int group_size = 1;
  double epsilon = 1e-8;
  void validate() const;  // throws std::invalid_argument
};

struct ISConfig {
  double c_low = 0.995;
  double c_high = 1.01;
  double c_trunc = 3.0;
  void validate() const;  // throws std::invalid_argument
};

struct ISWeight {
  double rho_seq = 1.0;  // product of per-token probability ratios
  double rho_geo = 1.0;  // geometric mean per-token ratio
  double weight = 1.0;   // 0 when masked, else min(rho_seq, c_trunc)
  bool masked = false;
  bool truncated = false;
};

// Computed in log space from per-token log-probabilities. Throws
// std::invalid_argument on length mismatch, empty input, or non-finite
// log-probabilities.
ISWeight importance_weight(std::span<const double> train_logprobs,
                           std::span<const double> behavior_logprobs,
                           const ISConfig& config);

// (values - mean) / max(std, epsilon), population std. Group mode pools the
// statistic per distinct group id (group_ids must then match values in
// length); batch mode treats the whole input as one group. none is identity.
std::vector<double> normalize(std::span<const double> values, NormMode mode,
                              double epsilon,
                              std::span<const int> group_ids = {});

// Per-step trajectory/step reward streams. The two components stay separate
// until after normalization.
struct StepRewards {
  std::vector<double> r_traj;  // discounted return of env rewards from t
  std::vector<double> r_step;  // format + validity penalties at t
};
StepRewards decompose_rewards(const core::Trajectory& traj, double gamma,
                              bool segment_subgoals);

// Half-open [begin, end) step ranges, cut after every step that carries a
// subgoal event.
struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
};
std::vector<Segment> segment_by_subgoal(const core::Trajectory& traj);

// Discounted returns computed independently inside each subgoal segment.
// With no events this is exactly the whole-trajectory return.
std::vector<double> segmented_returns(const core::Trajectory& traj,
                                      double gamma);

std::vector<double> mix_advantage(std::span<const double> r_traj_norm,
                                  std::span<const double> r_step_norm,
                                  double alpha);

// One flattened step of a rollout batch with its reward pipeline values.
struct StepRecord {
  std::size_t traj_index = 0;
  std::size_t turn = 0;
  int group_id = 0;
  double r_traj = 0.0;
  double r_step = 0.0;
  double r_traj_norm = 0.0;
  double r_step_norm = 0.0;
  double advantage = 0.0;
};

struct AdvantageBatch {
  std::vector<StepRecord> records;
  std::size_t batch_size = 0;  // number of trajectories
};

// Pure reward -> advantage transform (no importance weights; those depend on
// the moving policy and are computed per update pass).
AdvantageBatch compute_advantages(std::span<const core::Trajectory> trajs,
                                  const AdvantageConfig& config,
                                  bool segment_subgoals,
                                  std::span<const int> traj_group_ids);

struct TrainerConfig {
  // Passes over the task list; used when iterations == 0.
  int epochs = 4;
  // Direct outer-loop count; overrides epochs when > 0.
  int iterations = 0;
  int batch_size = 32;   // trajectories per rollout refresh
  int minibatches = 1;   // updates per refresh; > 1 induces staleness
  double learning_rate = 0.5;
  double temperature = 0.8;  // sampling temperature for rollouts
  int h_max = 0;             // 0 -> environment default budget
  std::uint64_t seed = 0;
  grammar::ParseMode parse_mode{grammar::MacroMode::atomic, 1};
  env::RewardMode reward_mode = env::RewardMode::sparse;
  bool segment_subgoals = false;
  // Past (observation, action) turns rendered into the policy context.
  int window = 0;
  void validate(const AdvantageConfig& adv) const;
};

struct IterationMetrics {
  int iteration = 0;
  double success_rate = 0.0;
  double entropy = 0.0;
  double masked_fraction = 0.0;
  double truncated_fraction = 0.0;
  double mean_abs_advantage = 0.0;
  double mean_return = 0.0;
  double invalid_action_ratio = 0.0;
  double format_error_ratio = 0.0;
  bool rolled_back = false;
};

struct TrainLog {
  std::vector<IterationMetrics> iterations;
  double final_success_rate() const;
};

void write_metrics_jsonl(std::ostream& os, const IterationMetrics& m);
void write_metrics_csv_header(std::ostream& os);
void write_metrics_csv_row(std::ostream& os, const IterationMetrics& m);

// One full episode against env under the frozen policy. Contexts render the
// goal line, up to `window` past turns, and the current observation.
struct RolloutResult {
  core::Trajectory trajectory;
  // Per-turn fraction of atoms matching the reference solution; negative for
  // turns/environments without one.
  std::vector<double> step_correctness;
  int atoms_total = 0;
  int atoms_invalid = 0;
  int format_errors = 0;
};
RolloutResult rollout(env::Env& environment,
                      const policy::SoftmaxSequencePolicy& behavior,
                      const grammar::ParseMode& parse_mode, double temperature,
                      int h_max, int window, std::mt19937_64& rng,
                      const std::string& task_id);

// REINFORCE with masked+truncated importance weighting. Each iteration:
// snapshot parameters, roll out batch_size trajectories, build advantages,
// then apply `minibatches` sharded updates whose importance weights compare
// the moving policy against the frozen behavior log-probabilities. Non-finite
// gradients roll the iteration back. Metrics stream to the optional sinks as
// JSONL / CSV while training runs.
TrainLog train(policy::SoftmaxSequencePolicy& policy,
               std::span<const datasets::TaskInstance> tasks,
               const TrainerConfig& trainer, const AdvantageConfig& advantage,
               const ISConfig& is_config, std::ostream* jsonl = nullptr,
               std::ostream* csv = nullptr);

}  // namespace horizonlab::rl
