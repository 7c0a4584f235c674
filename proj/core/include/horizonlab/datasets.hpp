// Dataset pipeline: candidate generation -> filtering -> partition into
// goal-distance bands with disjoint train/test splits. Manifests are JSONL
// with a provenance header and regenerate byte-identically per seed.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "horizonlab/grammar.hpp"

namespace horizonlab::datasets {

// One puzzle/board/chain instance plus its certified metadata. state is the
// canonical serialization (digit string, 36-char board, or chain path
// digits); the env-specific fields mirror the manifest sidecar.
struct TaskInstance {
  std::string id;
  grammar::EnvTag env = grammar::EnvTag::sudoku;
  std::string state;
  int goal_distance = 0;
  std::string band;
  std::string split;  // "train" or "test"
  std::uint64_t seed = 0;

  // sudoku sidecar
  std::string sudoku_solution;
  std::string sudoku_grade;
  // rushhour sidecar (goal_distance is the slide-move metric)
  int rush_min_cell_moves = 0;
  // chain sidecar
  int chain_branching = 0;
  std::string chain_obs_mode;
  int chain_subgoal_period = 0;
};

// Half-open bands are a foot-gun; bounds are inclusive.
struct LevelBand {
  std::string label;
  int low = 0;
  int high = 0;
  int train_count = 0;
  int test_count = 0;
};

std::vector<LevelBand> sudoku9_default_bands();   // L1..L7, 11..45 empties
std::vector<LevelBand> sudoku4_default_bands();   // S1..S4, 2..12 empties
std::vector<LevelBand> rushhour_default_bands();  // 4..21 slide moves

struct PipelineConfig {
  grammar::EnvTag env = grammar::EnvTag::sudoku;
  int sudoku_size = 9;
  std::vector<LevelBand> bands;
  std::uint64_t seed = 0;
  // Empty: built-in oracle filter (sudoku: basic-technique grade; rushhour:
  // BFS solvability). Otherwise a shell command implementing the external
  // filter protocol.
  std::string external_filter;
  // Candidate generation budget multiplier before reporting deficits.
  int retry_factor = 64;
  int rush_vehicles_lo = 8;
  int rush_vehicles_hi = 12;
  // chain generation parameters (bands select on depth)
  int chain_branching = 2;
  std::string chain_obs_mode = "positional";
  int chain_subgoal_period = 0;
};

struct Deficit {
  std::string band;
  std::string split;
  int wanted = 0;
  int got = 0;
};

struct Manifest {
  std::string schema_version;
  grammar::EnvTag env = grammar::EnvTag::sudoku;
  std::uint64_t seed = 0;
  std::string provenance;  // canonical config text; regeneration recipe
  std::vector<LevelBand> bands;
  std::vector<TaskInstance> instances;
};

// Underfilled bands leave manifest absent and deficits listing every gap.
struct PipelineResult {
  std::optional<Manifest> manifest;
  std::vector<Deficit> deficits;
  long candidates_generated = 0;
  long candidates_kept = 0;
};

PipelineResult run_pipeline(const PipelineConfig& config);

// Feeds instances to `command` as JSONL on stdin; the child answers one
// "keep" or "drop" line per instance in order. Any other output lines are
// ignored. Throws std::runtime_error when the child cannot be run or the
// verdict count mismatches.
std::vector<bool> external_filter(const std::string& command,
                                  const std::vector<TaskInstance>& instances);

void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

// Band totals by (band, split); validation helper shared with tests/CLI.
struct BandCount {
  std::string band;
  int train = 0;
  int test = 0;
};
std::vector<BandCount> count_by_band(const Manifest& m);

}  // namespace horizonlab::datasets
