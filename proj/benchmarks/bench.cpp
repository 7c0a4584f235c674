// Microbenchmarks for the hot paths: puzzle generation, the BFS solver,
// policy sampling/scoring, gradient accumulation, and full rollouts.
#include <benchmark/benchmark.h>

#include <optional>
#include <random>

#include "horizonlab/chain.hpp"
#include "horizonlab/datasets.hpp"
#include "horizonlab/env.hpp"
#include "horizonlab/grammar.hpp"
#include "horizonlab/policy.hpp"
#include "horizonlab/rl.hpp"
#include "horizonlab/rushhour.hpp"
#include "horizonlab/sudoku.hpp"
#include "horizonlab/util.hpp"

namespace {

using namespace horizonlab;

void BM_SudokuGenerateSolved9(benchmark::State& state) {
  std::uint64_t salt = 0;
  for (auto _ : state) {
    auto rng = util::substream(42, salt++);
    benchmark::DoNotOptimize(sudoku::generate_solved_grid(9, rng));
  }
}
BENCHMARK(BM_SudokuGenerateSolved9);

void BM_SudokuDig9To30(benchmark::State& state) {
  auto seed_rng = util::substream(43, 0);
  const sudoku::Grid solved = sudoku::generate_solved_grid(9, seed_rng);
  std::uint64_t salt = 0;
  for (auto _ : state) {
    auto rng = util::substream(44, salt++);
    benchmark::DoNotOptimize(sudoku::dig_puzzle(solved, 30, rng, false));
  }
}
BENCHMARK(BM_SudokuDig9To30);

void BM_SudokuBasicFixpoint(benchmark::State& state) {
  auto rng = util::substream(45, 0);
  const sudoku::Grid solved = sudoku::generate_solved_grid(9, rng);
  std::optional<sudoku::Grid> puzzle;
  while (!puzzle) puzzle = sudoku::dig_puzzle(solved, 25, rng, true);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sudoku::basic_fixpoint(*puzzle));
  }
}
BENCHMARK(BM_SudokuBasicFixpoint);

rushhour::Board solvable_board(std::uint64_t seed) {
  std::uint64_t salt = 0;
  for (;;) {
    auto rng = util::substream(seed, salt++);
    auto board = rushhour::generate_candidate(10, rng);
    if (!board) continue;
    auto solved = rushhour::solve_min_moves(*board);
    if (solved && solved->min_slide_moves >= 4) return *board;
  }
}

void BM_RushHourSolve(benchmark::State& state) {
  const rushhour::Board board = solvable_board(46);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rushhour::solve_min_moves(board));
  }
}
BENCHMARK(BM_RushHourSolve);

void BM_RushHourHarvest(benchmark::State& state) {
  const rushhour::Board board = solvable_board(47);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        rushhour::harvest_component(board, 4, 21, 200000, 2));
  }
}
BENCHMARK(BM_RushHourHarvest);

void BM_PolicySample(benchmark::State& state) {
  policy::SoftmaxSequencePolicy pi(grammar::sudoku_grammar(9), 1u << 18);
  auto rng = util::substream(48, 0);
  const std::string context = "goal sudoku9\nobs 530070000600195000098000060";
  const int cap = grammar::max_action_tokens(pi.gspec(),
                                             {grammar::MacroMode::atomic, 1});
  for (auto _ : state) {
    benchmark::DoNotOptimize(pi.sample_action(context, 0.8, rng, cap));
  }
}
BENCHMARK(BM_PolicySample);

void BM_PolicyLogprob(benchmark::State& state) {
  policy::SoftmaxSequencePolicy pi(grammar::sudoku_grammar(9), 1u << 18);
  const std::string context = "goal sudoku9\nobs 530070000600195000098000060";
  const auto tokens = grammar::tokenize_action("value(5, r3c4)", pi.vocab());
  for (auto _ : state) {
    benchmark::DoNotOptimize(pi.action_logprob(context, tokens));
  }
}
BENCHMARK(BM_PolicyLogprob);

void BM_GradientAccumulate32(benchmark::State& state) {
  policy::SoftmaxSequencePolicy pi(grammar::sudoku_grammar(9), 1u << 18);
  const std::string context = "goal sudoku9\nobs 530070000600195000098000060";
  const auto tokens = grammar::tokenize_action("value(5, r3c4)", pi.vocab());
  std::vector<policy::GradItem> items;
  for (int i = 0; i < 32; ++i) items.push_back({context, tokens, 0.5});
  policy::GradientAccumulator acc;
  for (auto _ : state) {
    acc.reset(pi.weights().size());
    policy::accumulate_policy_gradient(pi, items, acc);
    benchmark::DoNotOptimize(acc.grad().data());
  }
}
BENCHMARK(BM_GradientAccumulate32);

void BM_ImportanceWeight64(benchmark::State& state) {
  std::vector<double> train(64), behavior(64);
  auto rng = util::substream(49, 0);
  for (int i = 0; i < 64; ++i) {
    train[i] = -1.0 - 0.01 * util::uniform01(rng);
    behavior[i] = -1.0 - 0.01 * util::uniform01(rng);
  }
  const rl::ISConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(rl::importance_weight(train, behavior, cfg));
  }
}
BENCHMARK(BM_ImportanceWeight64);

void BM_ChainRolloutDepth12(benchmark::State& state) {
  datasets::TaskInstance task;
  task.id = "bench-chain";
  task.env = grammar::EnvTag::chain;
  task.chain_branching = 2;
  task.chain_obs_mode = "positional";
  task.chain_subgoal_period = 0;
  auto chain_task = chain::generate_chain(12, 2, chain::ObsMode::positional,
                                          0, 50);
  task.state = chain::serialize_path(chain_task);
  task.goal_distance = 12;

  policy::SoftmaxSequencePolicy pi(grammar::chain_grammar(2), 1u << 12);
  std::uint64_t salt = 0;
  for (auto _ : state) {
    auto environment = env::make_env(task, env::RewardMode::sparse);
    const int budget = environment->default_budget(grammar::MacroMode::atomic);
    auto rng = util::substream(51, salt++);
    benchmark::DoNotOptimize(
        rl::rollout(*environment, pi, {grammar::MacroMode::atomic, 1}, 1.0,
                    budget, 0, rng, task.id));
  }
}
BENCHMARK(BM_ChainRolloutDepth12);

}  // namespace
