// 6x6 Rush Hour: board model, breadth-first optimal solver and turn
// application. One move slides one vehicle any positive number of free
// cells; goal distance of an instance is its minimum slide-move count.
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "horizonlab/grammar.hpp"

namespace horizonlab::rushhour {

constexpr int kSize = 6;
constexpr int kExitRow = 2;   // 0-based; target exits through the right edge
constexpr int kMaxVehicles = 13;  // 'X' plus 'A'..'L'

struct Vehicle {
  char id = 'X';
  int row = 0, col = 0;  // top-left cell
  int len = 2;           // 2 or 3
  bool horizontal = true;
};

// Vehicles are kept sorted by id with the target ('X') first, so equal boards
// serialize identically.
struct Board {
  std::vector<Vehicle> vehicles;  // vehicles[0] is the target

  const Vehicle& target() const { return vehicles[0]; }
};

// 36 chars row-major, '.' empty, 'X' target, letters for the rest. Throws
// std::invalid_argument on malformed input (bad shapes, missing target,
// vertical target, duplicate ids).
Board parse_board(const std::string& s);
std::string serialize(const Board& b);

// True when the target's nose touches the right edge of the exit row.
bool solved(const Board& b);

struct SolveResult {
  int min_slide_moves = 0;  // one slide of any distance = one move
  int min_cell_moves = 0;   // one cell of sliding = one move
};

// BFS over the reachable state graph. nullopt when no goal state is
// reachable. min_cell_moves >= min_slide_moves for solvable boards.
std::optional<SolveResult> solve_min_moves(const Board& b);

// Random placement: target on the exit row plus (vehicles-1) extra vehicles.
// nullopt when placement repeatedly fails (dense boards) — callers retry.
// The board is NOT guaranteed solvable or unsolved; filtering is a pipeline
// concern.
std::optional<Board> generate_candidate(int vehicles, std::mt19937_64& rng);

struct ApplyOutcome {
  std::vector<bool> atom_valid;
  bool terminal = false;
};

// Applies a parsed move: all atoms share one vehicle and direction and the
// whole slide succeeds or nothing moves (each blocked atom is flagged).
// A move referencing an absent vehicle is invalid in full. Throws
// std::invalid_argument on mixed-vehicle atom lists (the parser never
// produces them).
ApplyOutcome apply(Board& b, const grammar::MacroAction& action);

// Enumerates legal single-slide successors (vehicle index, direction,
// distance); used by the solver and by dataset harvesting.
struct Slide {
  int vehicle = 0;
  grammar::Dir dir = grammar::Dir::right;
  int dist = 1;
};
std::vector<Slide> legal_slides(const Board& b);
void apply_slide(Board& b, const Slide& s);

// Deep-band instance mining. Slides are reversible, so the slide-reachable
// component of any board is closed; a reverse BFS from the component's solved
// states labels every state with its exact minimum slide-move count. Returns
// up to per_distance_cap boards per distance in [lo, hi], ordered by
// (distance, packed state key) for determinism. Empty when the component
// exceeds max_states or contains no solved state.
std::vector<std::pair<Board, int>> harvest_component(
    const Board& b, int lo, int hi, std::size_t max_states,
    std::size_t per_distance_cap);

}  // namespace horizonlab::rushhour
