// Run configuration: plain-text sectioned key=value files, strict validation
// (unknown keys are errors, every violation reported with its key path),
// documented defaults for absent fields, and provenance stamping.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "horizonlab/datasets.hpp"
#include "horizonlab/env.hpp"
#include "horizonlab/grammar.hpp"
#include "horizonlab/rl.hpp"

namespace horizonlab::configio {

inline constexpr const char* kCodeVersion = "horizonlab 0.1.0";

// Everything a command run needs. A zero-key config file yields exactly
// these defaults.
struct RunConfig {
  // [env]
  grammar::EnvTag env = grammar::EnvTag::sudoku;
  int sudoku_size = 9;
  grammar::ParseMode parse_mode{grammar::MacroMode::atomic, 1};
  env::RewardMode reward_mode = env::RewardMode::sparse;
  std::string chain_obs_mode = "positional";
  int chain_subgoal_period = 0;
  int chain_branching = 2;

  // [advantage] / [is] / [trainer]
  rl::AdvantageConfig advantage;
  rl::ISConfig is_config;
  rl::TrainerConfig trainer;  // parse/reward/segment/seed mirrored on load
  std::uint32_t table_size = 1u << 18;

  // [data]
  std::string manifest_path;
  std::vector<std::string> bands;  // band label selection; empty = all
  std::string split = "train";     // train | test | all
  std::string bands_spec = "default";
  int retry_factor = 64;
  int vehicles_lo = 8;
  int vehicles_hi = 12;
  std::string external_filter;

  // [eval]
  int eval_k = 4;
  double eval_temperature = 0.8;

  // [curriculum] phases, e.g. "S1,S2@100;S3@200" (bands@iterations;...)
  std::string curriculum_phases;

  // [paths]
  std::string out_dir;
  std::string checkpoint;

  // [run]
  std::uint64_t seed = 0;
  bool seed_overridden_by_env = false;  // HORIZONLAB_SEED was honored
};

struct ValidationReport {
  std::vector<std::string> violations;  // "section.key: message"
  bool ok() const { return violations.empty(); }
  std::string joined() const;
};

struct LoadResult {
  std::optional<RunConfig> config;  // only set when the report is clean
  ValidationReport report;
};

// Parses and validates; never partially applies. The HORIZONLAB_SEED
// environment variable, when set to an unsigned integer, overrides the
// seed after parsing (a malformed value is a violation).
LoadResult load_config(const std::filesystem::path& path);
LoadResult load_config_text(const std::string& text);

// Band list parsing for the generate command: "default" selects the
// environment's built-in table; otherwise "label:low-high:train/test,..."
std::vector<datasets::LevelBand> parse_bands_spec(const std::string& spec,
                                                  grammar::EnvTag env,
                                                  int sudoku_size);

// Deterministic full rendering of a config (every field, fixed order);
// the digest input and the reproduction recipe.
std::string canonical_text(const RunConfig& config);

// FNV-1a over the file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

struct ProvenanceRecord {
  std::string code_version;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> outputs;  // path, digest
};

ProvenanceRecord stamp_provenance(
    const RunConfig& config,
    const std::vector<std::filesystem::path>& outputs);
void write_provenance(const std::filesystem::path& path,
                      const ProvenanceRecord& record);
// Re-digests every recorded output; false when any file changed or vanished.
bool verify_outputs(const ProvenanceRecord& record);

}  // namespace horizonlab::configio
