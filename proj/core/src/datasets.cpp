#include "horizonlab/datasets.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>

#include <unistd.h>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "horizonlab/chain.hpp"
#include "horizonlab/rushhour.hpp"
#include "horizonlab/sudoku.hpp"
#include "horizonlab/util.hpp"

namespace horizonlab::datasets {

namespace {

constexpr const char* kSchemaVersion = "horizonlab-manifest-1";
constexpr std::uint64_t kSudokuStream = 0x7375646f6b752121ull;
constexpr std::uint64_t kRushStream = 0x72757368686f7572ull;
constexpr std::uint64_t kChainStream = 0x636861696e212121ull;
constexpr std::size_t kComponentCap = 400000;
constexpr std::size_t kPerDistanceCap = 2;

void validate_bands(const std::vector<LevelBand>& bands) {
  if (bands.empty()) throw std::invalid_argument("no level bands configured");
  std::set<std::string> labels;
  int prev_high = -1;
  for (const LevelBand& b : bands) {
    if (b.label.empty()) throw std::invalid_argument("band with empty label");
    if (!labels.insert(b.label).second) {
      throw std::invalid_argument("duplicate band label: " + b.label);
    }
    if (b.low > b.high) {
      throw std::invalid_argument("band " + b.label + " has low > high");
    }
    if (b.low <= prev_high) {
      throw std::invalid_argument(
          "bands must be ordered and disjoint; violation at " + b.label);
    }
    if (b.train_count < 0 || b.test_count < 0) {
      throw std::invalid_argument("band " + b.label + " has negative counts");
    }
    prev_high = b.high;
  }
}

std::string env_label(const PipelineConfig& config) {
  switch (config.env) {
    case grammar::EnvTag::sudoku:
      return "sudoku" + std::to_string(config.sudoku_size);
    case grammar::EnvTag::rushhour:
      return "rushhour";
    case grammar::EnvTag::chain:
      return "chain";
  }
  throw std::logic_error("unreachable env tag");
}

std::string provenance_text(const PipelineConfig& config) {
  std::ostringstream os;
  os << "schema=" << kSchemaVersion << ";env=" << env_label(config)
     << ";seed=" << config.seed << ";bands=";
  for (std::size_t i = 0; i < config.bands.size(); ++i) {
    const LevelBand& b = config.bands[i];
    if (i) os << ",";
    os << b.label << ":" << b.low << "-" << b.high << ":" << b.train_count
       << "/" << b.test_count;
  }
  os << ";filter="
     << (config.external_filter.empty() ? std::string("oracle")
                                        : "external:" + config.external_filter)
     << ";retry=" << config.retry_factor;
  if (config.env == grammar::EnvTag::rushhour) {
    os << ";vehicles=" << config.rush_vehicles_lo << "-"
       << config.rush_vehicles_hi;
  }
  if (config.env == grammar::EnvTag::chain) {
    os << ";branching=" << config.chain_branching
       << ";obs=" << config.chain_obs_mode
       << ";period=" << config.chain_subgoal_period;
  }
  os << ";split_rule=fill-order";
  return os.str();
}

nlohmann::json instance_to_json(const TaskInstance& t) {
  nlohmann::json sidecar;
  switch (t.env) {
    case grammar::EnvTag::sudoku:
      sidecar = {{"solution", t.sudoku_solution}, {"grade", t.sudoku_grade}};
      break;
    case grammar::EnvTag::rushhour:
      sidecar = {{"min_cell_moves", t.rush_min_cell_moves}};
      break;
    case grammar::EnvTag::chain:
      sidecar = {{"branching", t.chain_branching},
                 {"obs_mode", t.chain_obs_mode},
                 {"subgoal_period", t.chain_subgoal_period}};
      break;
  }
  return nlohmann::json{{"id", t.id},
                        {"env", grammar::to_string(t.env)},
                        {"state", t.state},
                        {"goal_distance", t.goal_distance},
                        {"band", t.band},
                        {"split", t.split},
                        {"seed", t.seed},
                        {"sidecar", sidecar}};
}

TaskInstance instance_from_json(const nlohmann::json& j) {
  TaskInstance t;
  t.id = j.at("id").get<std::string>();
  t.env = grammar::env_tag_from_string(j.at("env").get<std::string>());
  t.state = j.at("state").get<std::string>();
  t.goal_distance = j.at("goal_distance").get<int>();
  t.band = j.at("band").get<std::string>();
  t.split = j.at("split").get<std::string>();
  t.seed = j.at("seed").get<std::uint64_t>();
  const nlohmann::json& sidecar = j.at("sidecar");
  switch (t.env) {
    case grammar::EnvTag::sudoku:
      t.sudoku_solution = sidecar.at("solution").get<std::string>();
      t.sudoku_grade = sidecar.at("grade").get<std::string>();
      break;
    case grammar::EnvTag::rushhour:
      t.rush_min_cell_moves = sidecar.at("min_cell_moves").get<int>();
      break;
    case grammar::EnvTag::chain:
      t.chain_branching = sidecar.at("branching").get<int>();
      t.chain_obs_mode = sidecar.at("obs_mode").get<std::string>();
      t.chain_subgoal_period = sidecar.at("subgoal_period").get<int>();
      break;
  }
  return t;
}

// Candidates per filtering round; bounded so a long generation run cannot
// buffer unbounded work before the external process sees any of it.
constexpr std::size_t kFilterRound = 64;

struct FillState {
  std::vector<std::vector<TaskInstance>> buckets;  // per band, fill order
  std::vector<int> needed;                         // remaining per band
  long generated = 0;
  long kept = 0;

  explicit FillState(const std::vector<LevelBand>& bands)
      : buckets(bands.size()) {
    needed.reserve(bands.size());
    for (const LevelBand& b : bands) {
      needed.push_back(b.train_count + b.test_count);
    }
  }
  bool done() const {
    return std::all_of(needed.begin(), needed.end(),
                       [](int n) { return n == 0; });
  }
  long total_remaining() const {
    long t = 0;
    for (int n : needed) t += n;
    return t;
  }
};

// Runs the configured external filter over a buffered round and places the
// survivors; with no filter configured candidates pass straight through.
void place_round(const std::string& filter_cmd,
                 std::vector<std::pair<std::size_t, TaskInstance>>& round,
                 FillState& fill) {
  if (round.empty()) return;
  std::vector<bool> verdicts;
  if (!filter_cmd.empty()) {
    std::vector<TaskInstance> instances;
    instances.reserve(round.size());
    for (auto& [band_idx, inst] : round) instances.push_back(inst);
    verdicts = external_filter(filter_cmd, instances);
  } else {
    verdicts.assign(round.size(), true);
  }
  for (std::size_t i = 0; i < round.size(); ++i) {
    auto& [band_idx, inst] = round[i];
    if (!verdicts[i]) continue;
    if (fill.needed[band_idx] == 0) continue;  // band raced full in-round
    fill.buckets[band_idx].push_back(std::move(inst));
    fill.needed[band_idx] -= 1;
    fill.kept += 1;
  }
  round.clear();
}

// Index of the next band that still needs instances, cycling from `cursor`.
std::size_t next_unfilled(const FillState& fill, std::size_t cursor) {
  const std::size_t n = fill.needed.size();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t idx = (cursor + i) % n;
    if (fill.needed[idx] > 0) return idx;
  }
  throw std::logic_error("next_unfilled called with all bands full");
}

void fill_sudoku(const PipelineConfig& config, FillState& fill) {
  const int size = config.sudoku_size;
  if (size != 4 && size != 9) {
    throw std::invalid_argument("sudoku_size must be 4 or 9");
  }
  const bool external = !config.external_filter.empty();
  const long max_attempts =
      static_cast<long>(config.retry_factor) * fill.total_remaining();
  std::vector<std::pair<std::size_t, TaskInstance>> round;
  std::size_t band_cursor = 0;
  for (long attempt = 0; attempt < max_attempts && !fill.done(); ++attempt) {
    const std::size_t band_idx = next_unfilled(fill, band_cursor);
    band_cursor = (band_idx + 1) % fill.needed.size();
    const LevelBand& band = config.bands[band_idx];
    std::mt19937_64 rng = util::substream(
        config.seed, kSudokuStream, static_cast<std::uint64_t>(attempt));
    const int target = util::uniform_int(rng, band.low, band.high);
    sudoku::Grid solved = sudoku::generate_solved_grid(size, rng);
    // With the default oracle filter the dig itself preserves the
    // basic-technique grade (basic-solvable implies unique); an external
    // filter instead gets uniqueness-only candidates to judge.
    std::optional<sudoku::Grid> dug =
        sudoku::dig_puzzle(solved, target, rng, /*require_basic=*/!external);
    fill.generated += 1;
    if (!dug) continue;
    const bool basic = sudoku::grade_basic(*dug) == sudoku::Grade::basic;
    if (!external && !basic) continue;  // oracle capability filter
    TaskInstance t;
    t.env = grammar::EnvTag::sudoku;
    t.state = sudoku::serialize(*dug);
    t.sudoku_solution = sudoku::serialize(solved);
    t.sudoku_grade = basic ? "basic" : "backtracking_only";
    t.goal_distance = target;
    t.band = band.label;
    t.seed = static_cast<std::uint64_t>(attempt);
    round.emplace_back(band_idx, std::move(t));
    if (!external || round.size() >= kFilterRound) {
      place_round(config.external_filter, round, fill);
    }
  }
  place_round(config.external_filter, round, fill);
}

void fill_rushhour(const PipelineConfig& config, FillState& fill) {
  if (config.rush_vehicles_lo < 2 ||
      config.rush_vehicles_hi > rushhour::kMaxVehicles ||
      config.rush_vehicles_lo > config.rush_vehicles_hi) {
    throw std::invalid_argument("rushhour vehicle range invalid");
  }
  int global_lo = config.bands.front().low;
  int global_hi = config.bands.back().high;
  // Component attempts are far more productive than per-instance attempts
  // (one component can stock several bands), so the budget divides down.
  const long max_attempts = std::max<long>(
      1, static_cast<long>(config.retry_factor) * fill.total_remaining() / 8);
  std::set<std::string> seen_boards;
  std::vector<std::pair<std::size_t, TaskInstance>> round;
  for (long attempt = 0; attempt < max_attempts && !fill.done(); ++attempt) {
    std::mt19937_64 rng = util::substream(
        config.seed, kRushStream, static_cast<std::uint64_t>(attempt));
    const int vehicles = util::uniform_int(rng, config.rush_vehicles_lo,
                                           config.rush_vehicles_hi);
    std::optional<rushhour::Board> candidate =
        rushhour::generate_candidate(vehicles, rng);
    fill.generated += 1;
    if (!candidate) continue;
    auto picks = rushhour::harvest_component(*candidate, global_lo, global_hi,
                                             kComponentCap, kPerDistanceCap);
    for (auto& [board, dist] : picks) {
      // Locate the band this distance belongs to (gaps between bands drop).
      std::size_t band_idx = config.bands.size();
      for (std::size_t i = 0; i < config.bands.size(); ++i) {
        if (dist >= config.bands[i].low && dist <= config.bands[i].high) {
          band_idx = i;
          break;
        }
      }
      if (band_idx == config.bands.size()) continue;
      if (fill.needed[band_idx] == 0) continue;
      std::string state = rushhour::serialize(board);
      if (!seen_boards.insert(state).second) continue;
      // Solvability is the oracle filter; the harvest guarantees it, and the
      // full solve supplies the unit-move sidecar plus a cross-check.
      std::optional<rushhour::SolveResult> solve =
          rushhour::solve_min_moves(board);
      if (!solve || solve->min_slide_moves != dist) {
        throw std::logic_error(
            "harvest distance disagrees with solver on " + state);
      }
      TaskInstance t;
      t.env = grammar::EnvTag::rushhour;
      t.state = std::move(state);
      t.goal_distance = dist;
      t.rush_min_cell_moves = solve->min_cell_moves;
      t.band = config.bands[band_idx].label;
      t.seed = static_cast<std::uint64_t>(attempt);
      round.emplace_back(band_idx, std::move(t));
    }
    if (config.external_filter.empty() || round.size() >= kFilterRound) {
      place_round(config.external_filter, round, fill);
    }
  }
  place_round(config.external_filter, round, fill);
}

void fill_chain(const PipelineConfig& config, FillState& fill) {
  const bool external = !config.external_filter.empty();
  const long max_attempts =
      static_cast<long>(config.retry_factor) * fill.total_remaining();
  std::set<std::string> seen_tasks;
  std::vector<std::pair<std::size_t, TaskInstance>> round;
  std::size_t band_cursor = 0;
  chain::ObsMode mode = chain::obs_mode_from_string(config.chain_obs_mode);
  for (long attempt = 0; attempt < max_attempts && !fill.done(); ++attempt) {
    const std::size_t band_idx = next_unfilled(fill, band_cursor);
    band_cursor = (band_idx + 1) % fill.needed.size();
    const LevelBand& band = config.bands[band_idx];
    std::mt19937_64 rng = util::substream(
        config.seed, kChainStream, static_cast<std::uint64_t>(attempt));
    const int depth = util::uniform_int(rng, band.low, band.high);
    chain::ChainTask task = chain::generate_chain(
        depth, config.chain_branching, mode, config.chain_subgoal_period,
        util::mix(config.seed, kChainStream,
                  static_cast<std::uint64_t>(attempt)));
    fill.generated += 1;
    std::string path = chain::serialize_path(task);
    std::string key = std::to_string(depth) + "|" + path;
    if (!seen_tasks.insert(key).second) continue;
    TaskInstance t;
    t.env = grammar::EnvTag::chain;
    t.state = std::move(path);
    t.goal_distance = depth;
    t.chain_branching = config.chain_branching;
    t.chain_obs_mode = config.chain_obs_mode;
    t.chain_subgoal_period = config.chain_subgoal_period;
    t.band = band.label;
    t.seed = static_cast<std::uint64_t>(attempt);
    round.emplace_back(band_idx, std::move(t));
    if (!external || round.size() >= kFilterRound) {
      place_round(config.external_filter, round, fill);
    }
  }
  place_round(config.external_filter, round, fill);
}

}  // namespace

std::vector<LevelBand> sudoku9_default_bands() {
  // Joint train counts for the L1-L2 and L3-L4 pairs are split evenly; see
  // each manifest's provenance line.
  return {{"L1", 11, 15, 320, 100}, {"L2", 16, 20, 320, 100},
          {"L3", 21, 25, 320, 100}, {"L4", 26, 30, 320, 100},
          {"L5", 31, 35, 0, 100},   {"L6", 36, 40, 0, 100},
          {"L7", 41, 45, 0, 50}};
}

std::vector<LevelBand> sudoku4_default_bands() {
  return {{"S1", 2, 4, 200, 50},
          {"S2", 5, 7, 200, 50},
          {"S3", 8, 10, 200, 50},
          {"S4", 11, 12, 200, 50}};
}

std::vector<LevelBand> rushhour_default_bands() {
  return {{"R1", 4, 6, 0, 100},   {"R2", 7, 9, 0, 100},
          {"R3", 10, 12, 0, 100}, {"R4", 13, 15, 0, 100},
          {"R5", 16, 18, 0, 100}, {"R6", 19, 21, 0, 100}};
}

PipelineResult run_pipeline(const PipelineConfig& config) {
  validate_bands(config.bands);
  if (config.retry_factor < 1) {
    throw std::invalid_argument("retry_factor must be >= 1");
  }
  FillState fill(config.bands);
  switch (config.env) {
    case grammar::EnvTag::sudoku:
      fill_sudoku(config, fill);
      break;
    case grammar::EnvTag::rushhour:
      fill_rushhour(config, fill);
      break;
    case grammar::EnvTag::chain:
      fill_chain(config, fill);
      break;
  }

  PipelineResult result;
  result.candidates_generated = fill.generated;
  result.candidates_kept = fill.kept;

  // Partition: fill order maps to train first, then test; ids are assigned
  // band-locally so reruns keep them stable.
  const std::string label = env_label(config);
  std::vector<TaskInstance> instances;
  for (std::size_t i = 0; i < config.bands.size(); ++i) {
    const LevelBand& band = config.bands[i];
    std::vector<TaskInstance>& bucket = fill.buckets[i];
    const int train_got =
        std::min<int>(band.train_count, static_cast<int>(bucket.size()));
    const int test_got = std::min<int>(
        band.test_count, static_cast<int>(bucket.size()) - train_got);
    if (train_got < band.train_count) {
      result.deficits.push_back(
          Deficit{band.label, "train", band.train_count, train_got});
    }
    if (test_got < band.test_count) {
      result.deficits.push_back(
          Deficit{band.label, "test", band.test_count, test_got});
    }
    char buf[16];
    for (int k = 0; k < train_got + test_got; ++k) {
      TaskInstance& t = bucket[static_cast<std::size_t>(k)];
      t.split = k < train_got ? "train" : "test";
      const int idx = k < train_got ? k : k - train_got;
      std::snprintf(buf, sizeof buf, "%04d", idx);
      t.id = label + "-" + band.label + "-" + t.split + "-" + buf;
      instances.push_back(std::move(t));
    }
  }

  if (!result.deficits.empty()) return result;

  Manifest m;
  m.schema_version = kSchemaVersion;
  m.env = config.env;
  m.seed = config.seed;
  m.provenance = provenance_text(config);
  m.bands = config.bands;
  m.instances = std::move(instances);
  result.manifest = std::move(m);
  return result;
}

std::vector<bool> external_filter(const std::string& command,
                                  const std::vector<TaskInstance>& instances) {
  if (command.empty()) {
    throw std::invalid_argument("external filter command is empty");
  }
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path();
  const std::uint64_t tag =
      util::mix(static_cast<std::uint64_t>(::getpid()),
                reinterpret_cast<std::uintptr_t>(&instances),
                static_cast<std::uint64_t>(instances.size()));
  const fs::path in_path = dir / ("hzl-filter-" + std::to_string(tag) + ".in");
  const fs::path out_path =
      dir / ("hzl-filter-" + std::to_string(tag) + ".out");
  {
    std::ofstream in(in_path, std::ios::trunc);
    if (!in) {
      throw std::runtime_error("cannot stage external filter input");
    }
    for (const TaskInstance& t : instances) {
      in << instance_to_json(t).dump() << "\n";
    }
  }
  const std::string shell_cmd =
      command + " < " + in_path.string() + " > " + out_path.string();
  const int rc = std::system(shell_cmd.c_str());
  std::vector<bool> verdicts;
  std::string failure;
  if (rc != 0) {
    failure = "external filter exited with status " + std::to_string(rc);
  } else {
    std::ifstream out(out_path);
    std::string line;
    while (std::getline(out, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
        line.pop_back();
      }
      if (line == "keep") {
        verdicts.push_back(true);
      } else if (line == "drop") {
        verdicts.push_back(false);
      }
      // Non-verdict lines are the filter's own logging; ignored.
    }
    if (verdicts.size() != instances.size()) {
      failure = "external filter produced " +
                std::to_string(verdicts.size()) + " verdicts for " +
                std::to_string(instances.size()) + " instances";
    }
  }
  std::error_code ec;
  fs::remove(in_path, ec);
  fs::remove(out_path, ec);
  if (!failure.empty()) {
    throw std::runtime_error(failure + " (command: " + command + ")");
  }
  return verdicts;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw std::runtime_error("cannot open manifest for writing: " +
                             path.string());
  }
  nlohmann::json bands = nlohmann::json::array();
  for (const LevelBand& b : m.bands) {
    bands.push_back({{"label", b.label},
                     {"low", b.low},
                     {"high", b.high},
                     {"train", b.train_count},
                     {"test", b.test_count}});
  }
  nlohmann::json header{{"schema", m.schema_version},
                        {"env", grammar::to_string(m.env)},
                        {"seed", m.seed},
                        {"provenance", m.provenance},
                        {"bands", bands},
                        {"count", m.instances.size()}};
  os << header.dump() << "\n";
  for (const TaskInstance& t : m.instances) {
    os << instance_to_json(t).dump() << "\n";
  }
  if (!os) {
    throw std::runtime_error("short write on manifest: " + path.string());
  }
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("cannot open manifest: " + path.string());
  }
  std::string line;
  long line_no = 0;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error("manifest " + path.string() + " line " +
                             std::to_string(line_no) + ": " + what);
  };
  if (!std::getline(is, line)) fail("missing header");
  line_no = 1;
  Manifest m;
  std::size_t expected = 0;
  try {
    nlohmann::json header = nlohmann::json::parse(line);
    m.schema_version = header.at("schema").get<std::string>();
    if (m.schema_version != kSchemaVersion) {
      fail("unsupported schema version " + m.schema_version);
    }
    m.env = grammar::env_tag_from_string(header.at("env").get<std::string>());
    m.seed = header.at("seed").get<std::uint64_t>();
    m.provenance = header.at("provenance").get<std::string>();
    for (const nlohmann::json& jb : header.at("bands")) {
      LevelBand b;
      b.label = jb.at("label").get<std::string>();
      b.low = jb.at("low").get<int>();
      b.high = jb.at("high").get<int>();
      b.train_count = jb.at("train").get<int>();
      b.test_count = jb.at("test").get<int>();
      m.bands.push_back(b);
    }
    expected = header.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed header: ") + e.what());
  }
  validate_bands(m.bands);
  std::set<std::string> ids;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    TaskInstance t;
    try {
      t = instance_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("malformed record: ") + e.what());
    }
    if (t.env != m.env) fail("record env differs from manifest env");
    if (t.split != "train" && t.split != "test") {
      fail("record split must be train or test");
    }
    if (!ids.insert(t.id).second) fail("duplicate id " + t.id);
    const LevelBand* band = nullptr;
    for (const LevelBand& b : m.bands) {
      if (b.label == t.band) {
        band = &b;
        break;
      }
    }
    if (!band) fail("record band " + t.band + " not declared in header");
    if (t.goal_distance < band->low || t.goal_distance > band->high) {
      fail("goal_distance " + std::to_string(t.goal_distance) +
           " outside band " + t.band);
    }
    m.instances.push_back(std::move(t));
  }
  if (m.instances.size() != expected) {
    fail("header count " + std::to_string(expected) + " but " +
         std::to_string(m.instances.size()) + " records");
  }
  return m;
}

std::vector<BandCount> count_by_band(const Manifest& m) {
  std::vector<BandCount> counts;
  for (const LevelBand& b : m.bands) {
    counts.push_back(BandCount{b.label, 0, 0});
  }
  for (const TaskInstance& t : m.instances) {
    for (BandCount& c : counts) {
      if (c.band == t.band) {
        (t.split == "train" ? c.train : c.test) += 1;
        break;
      }
    }
  }
  return counts;
}

}  // namespace horizonlab::datasets
