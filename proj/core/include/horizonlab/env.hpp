// Uniform runtime interface over the three task environments. Rollout code
// talks to this, never to the concrete state types.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "horizonlab/datasets.hpp"
#include "horizonlab/grammar.hpp"

namespace horizonlab::env {

enum class RewardMode { sparse, dense };
RewardMode reward_mode_from_string(const std::string& s);
std::string to_string(RewardMode m);

// Outcome of applying one (macro-)action.
struct StepResult {
  std::vector<bool> atom_valid;   // one flag per atom, in order
  std::vector<int> subgoal_events;
  bool terminal = false;
  bool success = false;
  double reward = 0.0;
  // Fraction of atoms that advanced toward the recorded solution; negative
  // when the environment has no notion of a reference solution.
  double step_correctness = -1.0;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual const grammar::GrammarSpec& gspec() const = 0;
  virtual std::string goal_text() const = 0;
  virtual std::string observe() const = 0;
  virtual StepResult apply_action(const grammar::MacroAction& action) = 0;
  virtual int goal_distance() const = 0;
  // Default interaction budget; macro grammars get tighter budgets where the
  // environment defines them.
  virtual int default_budget(grammar::MacroMode mode) const = 0;
  virtual void reset() = 0;
};

// Builds a fresh environment for a task instance. Dense reward requires the
// environment to emit subgoal events (sudoku always; chain only with
// subgoal_period > 0; rushhour never) and throws std::invalid_argument
// otherwise.
std::unique_ptr<Env> make_env(const datasets::TaskInstance& task,
                              RewardMode mode);

}  // namespace horizonlab::env
