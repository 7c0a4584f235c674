// Shared kernel: horizon bookkeeping, trajectory records, discounted returns,
// and the sliding observation window fed to policies.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace horizonlab::core {

// Horizon bookkeeping for one task instance.
//   goal_distance      minimum number of atomic actions to the goal (oracle
//                      certified upstream, never self-reported)
//   interaction_budget hard turn cap H_max for an episode
//   effective_horizon  turns actually used by a successful episode
//
// For atomic-action runs a successful episode satisfies
// goal_distance <= effective_horizon <= interaction_budget. A macro turn can
// cover up to `atoms_per_turn_bound` atomic actions, so the lower bound
// becomes ceil(goal_distance / bound); bound <= 0 means unbounded macros
// where only 1 <= effective_horizon is left of the lower bound.
struct HorizonProfile {
  int goal_distance = 0;
  int interaction_budget = 0;
  std::optional<int> effective_horizon;

  // Throws std::domain_error when the ordering above is violated.
  void validate(int atoms_per_turn_bound = 1) const;
};

enum class Outcome { success, failure, budget_exhausted };

std::string to_string(Outcome o);
Outcome outcome_from_string(const std::string& s);

// One environment turn as the trainer sees it. behavior_logprobs are the
// temperature-scaled per-token log-probabilities recorded at sampling time;
// they are frozen for the lifetime of the trajectory.
struct Step {
  std::string context;
  std::vector<int> action_tokens;
  std::vector<double> behavior_logprobs;
  double env_reward = 0.0;
  double format_penalty = 0.0;
  double validity_penalty = 0.0;
  std::vector<int> subgoal_events;
};

struct Trajectory {
  std::string task_id;
  std::vector<Step> steps;
  Outcome outcome = Outcome::failure;
  std::uint64_t seed = 0;
};

// G_t = sum_{k>=t} gamma^(k-t) r_k, evaluated backward in one pass.
// Preconditions: rewards non-empty, gamma in (0, 1], t < rewards.size().
double discounted_return(std::span<const double> rewards, double gamma,
                         std::size_t t);

// All G_t at once (same contract, minus the index).
std::vector<double> discounted_returns(std::span<const double> rewards,
                                       double gamma);

// Turns used by a successful trajectory. Throws std::domain_error for
// non-success outcomes; the quantity is undefined there.
int effective_horizon(const Trajectory& traj);

// One completed turn as remembered by the agent. reason is the summary slot
// of the structured REASON/ACTION output (empty when the action was bare).
struct TurnRecord {
  std::string observation;
  std::string reason;
  std::string action_text;
};

struct ObservationWindow {
  int window_size = 0;
  std::vector<TurnRecord> entries;  // oldest first, at most window_size
  std::string goal_text;
};

// Keeps only the most recent window_size turns. window_size >= 0; the
// full history is deliberately unavailable downstream.
ObservationWindow build_window(const std::vector<TurnRecord>& history,
                               int window_size, std::string goal_text);

// Canonical flat rendering of goal + window + current observation. This
// string is the whole context a policy conditions on.
std::string render_context(const ObservationWindow& window,
                           std::string_view current_observation);

// Trajectory stream I/O: one JSON object per line, schema fixed by Step /
// Trajectory above. Reading validates presence and types of every field.
void write_trajectories_jsonl(const std::filesystem::path& path,
                              std::span<const Trajectory> trajectories);
std::vector<Trajectory> read_trajectories_jsonl(
    const std::filesystem::path& path);

}  // namespace horizonlab::core
