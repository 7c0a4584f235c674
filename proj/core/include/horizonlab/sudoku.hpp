// Sudoku generation, grading and turn application for sizes 4 and 9.
// Goal distance of a puzzle is its empty-cell count: one atomic write per
// empty cell, and writes are never retractable during an episode.
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "horizonlab/grammar.hpp"

namespace horizonlab::sudoku {

// Row-major cell values, 0 = empty. size is 4 or 9; box edge is 2 or 3.
struct Grid {
  int size = 9;
  std::vector<std::uint8_t> cells;

  int box_edge() const { return size == 9 ? 3 : 2; }
  int at(int r, int c) const { return cells[r * size + c]; }
  void set(int r, int c, int v) { cells[r * size + c] = static_cast<std::uint8_t>(v); }
};

Grid empty_grid(int size);

// "530070..." one digit per cell, 0 for empty. Length must be size*size.
std::string serialize(const Grid& g);
Grid deserialize(const std::string& s, int size);

// True when no row/column/box repeats a nonzero value.
bool consistent(const Grid& g);
// consistent and fully filled.
bool is_solved(const Grid& g);

// Uniform-ish random solved grid via randomized backtracking. Deterministic
// per rng state.
Grid generate_solved_grid(int size, std::mt19937_64& rng);

// Number of completions, counting stops at cap. cap >= 1.
int count_solutions(const Grid& puzzle, int cap);

enum class Grade { basic, backtracking_only };

// Fixpoint of Full House / Naked Single / Hidden Single. basic iff the
// fixpoint reaches a full grid. Assumes a consistent puzzle.
Grade grade_basic(const Grid& puzzle);
// The fixpoint itself (for callers that also want the deduced cells).
Grid basic_fixpoint(const Grid& puzzle);

// Removes cells from a solved grid until empty_target empties, keeping the
// puzzle uniquely solvable (require_basic additionally keeps it solvable by
// the basic fixpoint alone, which implies uniqueness). Returns nullopt when
// this dig order gets stuck before the target; callers retry with fresh
// randomness. Uniqueness of a returned puzzle is certified by capped
// solution counting, never assumed.
std::optional<Grid> dig_puzzle(const Grid& solved, int empty_target,
                               std::mt19937_64& rng, bool require_basic);

// Episode state. Givens are immutable; wrong-but-legal writes persist and
// poison the board (the episode then runs out its budget).
struct SudokuState {
  Grid board;
  std::vector<bool> given;      // per cell
  Grid solution;                // reference for correctness / terminal check
  std::vector<bool> box_done;   // boxes already reported as subgoal events
};

SudokuState make_state(const Grid& puzzle, const Grid& solution);

struct ApplyOutcome {
  std::vector<bool> atom_valid;    // per atom: executed (cell was empty, value legal)
  std::vector<bool> atom_correct;  // per atom: executed and matches the solution
  std::vector<int> subgoal_events; // box indices completed-and-correct this turn
  bool terminal = false;           // board full and equal to the solution
};

// Applies atoms in order. An atom writing a given, an occupied cell, or
// violating a row/col/box constraint is skipped and flagged invalid; later
// atoms still execute. Throws std::invalid_argument on non-sudoku atoms or
// out-of-range coordinates (the parser never produces them).
ApplyOutcome apply(SudokuState& state, const grammar::MacroAction& action);

// Fraction of this turn's atoms that wrote the solution's value into their
// target cell. Precondition: the outcome covers at least one atom.
double step_correctness(const ApplyOutcome& outcome);

}  // namespace horizonlab::sudoku
