// Synthetic decision chain with exact, known goal distance. Exactly one
// branch per position continues the chain; any other branch drops the
// episode into an absorbing failure region that runs out the budget.
//
// Observations reveal the correct branches of the current 4-position block
// ("box"), so a policy can in principle learn a transcription rule instead
// of memorizing tasks:
//   positional  "n<progress>|<box digits>"  fully observed
//   windowed    "b<box digits>"             position must be inferred from
//                                           the sliding window, which is the
//                                           long-horizon memory constraint
// After a wrong branch the observation is "dead".
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "horizonlab/grammar.hpp"

namespace horizonlab::chain {

constexpr int kBoxSize = 4;

enum class ObsMode { positional, windowed };

std::string to_string(ObsMode m);
ObsMode obs_mode_from_string(const std::string& s);

struct ChainTask {
  int depth = 0;
  int branching = 2;
  std::vector<std::uint8_t> correct_path;  // length == depth, entries < branching
  ObsMode obs_mode = ObsMode::positional;
  // > 0: a subgoal event fires whenever progress crosses a multiple of this
  // period (and at the goal). 0 disables events.
  int subgoal_period = 0;
};

// Deterministic per seed. depth >= 1, branching in 2..10,
// subgoal_period >= 0. Uniform random policies succeed with probability
// branching^(-depth) by construction.
ChainTask generate_chain(int depth, int branching, ObsMode mode,
                         int subgoal_period, std::uint64_t seed);

// Compact record form "<path digits>" plus the scalar fields; used by the
// dataset layer.
std::string serialize_path(const ChainTask& t);
ChainTask task_from_fields(const std::string& path_digits, int branching,
                           ObsMode mode, int subgoal_period);

struct ChainState {
  ChainTask task;
  int progress = 0;
  bool absorbed = false;
};

ChainState make_state(const ChainTask& t);

std::string observe(const ChainState& st);

struct ApplyOutcome {
  std::vector<bool> atom_valid;     // always true: wrong branches are legal
  std::vector<int> subgoal_events;  // 1-based segment indices crossed this turn
  bool terminal = false;            // full correct path walked
};

// Atoms execute in order; a wrong branch absorbs the state (later atoms are
// inert), reaching depth ends the episode mid-macro. Throws
// std::invalid_argument on non-chain atoms or branches outside the task's
// branching factor.
ApplyOutcome apply(ChainState& st, const grammar::MacroAction& action);

}  // namespace horizonlab::chain
