#include "horizonlab/env.hpp"

#include <stdexcept>

#include "horizonlab/chain.hpp"
#include "horizonlab/rushhour.hpp"
#include "horizonlab/sudoku.hpp"

namespace horizonlab::env {

RewardMode reward_mode_from_string(const std::string& s) {
  if (s == "sparse") return RewardMode::sparse;
  if (s == "dense") return RewardMode::dense;
  throw std::invalid_argument("unknown reward mode: " + s);
}

std::string to_string(RewardMode m) {
  return m == RewardMode::sparse ? "sparse" : "dense";
}

namespace {

class SudokuEnv final : public Env {
 public:
  SudokuEnv(datasets::TaskInstance task, RewardMode mode)
      : task_(std::move(task)),
        mode_(mode),
        spec_(grammar::sudoku_grammar(
            task_.state.size() == 16 ? 4 : 9)) {
    reset();
  }

  const grammar::GrammarSpec& gspec() const override { return spec_; }

  std::string goal_text() const override {
    return "sudoku" + std::to_string(spec_.board_size);
  }

  std::string observe() const override {
    return sudoku::serialize(state_.board);
  }

  StepResult apply_action(const grammar::MacroAction& action) override {
    auto out = sudoku::apply(state_, action);
    StepResult r;
    r.atom_valid = std::move(out.atom_valid);
    r.subgoal_events = std::move(out.subgoal_events);
    r.terminal = out.terminal;
    r.success = out.terminal;
    if (mode_ == RewardMode::dense) {
      r.reward = static_cast<double>(r.subgoal_events.size());
    } else {
      r.reward = r.terminal ? 1.0 : 0.0;
    }
    r.step_correctness =
        action.atoms.empty() ? -1.0 : sudoku::step_correctness(out);
    return r;
  }

  int goal_distance() const override { return task_.goal_distance; }

  int default_budget(grammar::MacroMode) const override { return 50; }

  void reset() override {
    const int size = task_.state.size() == 16 ? 4 : 9;
    auto board = sudoku::deserialize(task_.state, size);
    auto solution = sudoku::deserialize(task_.sudoku_solution, size);
    state_ = sudoku::make_state(board, solution);
  }

 private:
  datasets::TaskInstance task_;
  RewardMode mode_;
  grammar::GrammarSpec spec_;
  sudoku::SudokuState state_;
};

class RushHourEnv final : public Env {
 public:
  explicit RushHourEnv(datasets::TaskInstance task)
      : task_(std::move(task)), spec_(grammar::rushhour_grammar()) {
    reset();
  }

  const grammar::GrammarSpec& gspec() const override { return spec_; }

  std::string goal_text() const override { return "rushhour"; }

  std::string observe() const override {
    return rushhour::serialize(board_);
  }

  StepResult apply_action(const grammar::MacroAction& action) override {
    auto out = rushhour::apply(board_, action);
    StepResult r;
    r.atom_valid = std::move(out.atom_valid);
    r.terminal = out.terminal;
    r.success = out.terminal;
    r.reward = out.terminal ? 1.0 : 0.0;
    return r;
  }

  int goal_distance() const override { return task_.goal_distance; }

  int default_budget(grammar::MacroMode mode) const override {
    return mode == grammar::MacroMode::atomic ? 30 : 20;
  }

  void reset() override { board_ = rushhour::parse_board(task_.state); }

 private:
  datasets::TaskInstance task_;
  grammar::GrammarSpec spec_;
  rushhour::Board board_;
};

class ChainEnv final : public Env {
 public:
  ChainEnv(datasets::TaskInstance task, RewardMode mode)
      : task_(std::move(task)),
        mode_(mode),
        spec_(grammar::chain_grammar(task_.chain_branching)) {
    reset();
  }

  const grammar::GrammarSpec& gspec() const override { return spec_; }

  std::string goal_text() const override { return "chain"; }

  std::string observe() const override { return chain::observe(state_); }

  StepResult apply_action(const grammar::MacroAction& action) override {
    auto out = chain::apply(state_, action);
    StepResult r;
    r.atom_valid = std::move(out.atom_valid);
    r.subgoal_events = std::move(out.subgoal_events);
    // Wrong branches absorb rather than terminate: the episode keeps
    // consuming budget in the dead region and success becomes impossible, so
    // the sparse failure signal spreads over a full-length trajectory.
    r.terminal = out.terminal;
    r.success = out.terminal;
    if (mode_ == RewardMode::dense) {
      r.reward = static_cast<double>(r.subgoal_events.size());
    } else {
      r.reward = r.terminal ? 1.0 : 0.0;
    }
    return r;
  }

  int goal_distance() const override { return task_.goal_distance; }

  int default_budget(grammar::MacroMode) const override {
    return 2 * task_.goal_distance;
  }

  void reset() override {
    state_ = chain::make_state(chain::task_from_fields(
        task_.state, task_.chain_branching,
        chain::obs_mode_from_string(task_.chain_obs_mode),
        task_.chain_subgoal_period));
  }

 private:
  datasets::TaskInstance task_;
  RewardMode mode_;
  grammar::GrammarSpec spec_;
  chain::ChainState state_;
};

}  // namespace

std::unique_ptr<Env> make_env(const datasets::TaskInstance& task,
                              RewardMode mode) {
  switch (task.env) {
    case grammar::EnvTag::sudoku:
      return std::make_unique<SudokuEnv>(task, mode);
    case grammar::EnvTag::rushhour:
      if (mode == RewardMode::dense) {
        throw std::invalid_argument(
            "rushhour has no subgoal events; dense reward unavailable");
      }
      return std::make_unique<RushHourEnv>(task);
    case grammar::EnvTag::chain:
      if (mode == RewardMode::dense && task.chain_subgoal_period <= 0) {
        throw std::invalid_argument(
            "dense reward on chain requires subgoal_period > 0");
      }
      return std::make_unique<ChainEnv>(task, mode);
  }
  throw std::logic_error("unreachable env tag");
}

}  // namespace horizonlab::env
