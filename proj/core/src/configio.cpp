#include "horizonlab/configio.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "horizonlab/util.hpp"

namespace horizonlab::configio {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

struct Parser {
  RunConfig cfg;
  ValidationReport report;

  void violation(const std::string& key, const std::string& msg) {
    report.violations.push_back(key + ": " + msg);
  }

  bool parse_long(const std::string& key, const std::string& v, long& out) {
    try {
      std::size_t used = 0;
      long x = std::stol(v, &used);
      if (used != v.size()) throw std::invalid_argument("trailing");
      out = x;
      return true;
    } catch (const std::exception&) {
      violation(key, "'" + v + "' is not an integer");
      return false;
    }
  }

  bool parse_u64(const std::string& key, const std::string& v,
                 std::uint64_t& out) {
    try {
      std::size_t used = 0;
      unsigned long long x = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument("trailing");
      out = x;
      return true;
    } catch (const std::exception&) {
      violation(key, "'" + v + "' is not an unsigned integer");
      return false;
    }
  }

  bool parse_double(const std::string& key, const std::string& v,
                    double& out) {
    try {
      std::size_t used = 0;
      double x = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument("trailing");
      out = x;
      return true;
    } catch (const std::exception&) {
      violation(key, "'" + v + "' is not a number");
      return false;
    }
  }

  bool parse_bool(const std::string& key, const std::string& v, bool& out) {
    if (v == "true" || v == "1" || v == "yes") {
      out = true;
      return true;
    }
    if (v == "false" || v == "0" || v == "no") {
      out = false;
      return true;
    }
    violation(key, "'" + v + "' is not a boolean");
    return false;
  }

  void apply(const std::string& section, const std::string& key,
             const std::string& value) {
    const std::string path = section + "." + key;
    long l = 0;
    double d = 0.0;
    if (section == "env") {
      if (key == "name") {
        try {
          cfg.env = grammar::env_tag_from_string(value);
        } catch (const std::exception&) {
          violation(path, "must be sudoku, rushhour, or chain");
        }
      } else if (key == "sudoku_size") {
        if (parse_long(path, value, l)) {
          if (l != 4 && l != 9) {
            violation(path, "must be 4 or 9");
          } else {
            cfg.sudoku_size = static_cast<int>(l);
          }
        }
      } else if (key == "macro_mode") {
        if (value == "atomic") {
          cfg.parse_mode.mode = grammar::MacroMode::atomic;
        } else if (value == "fixed") {
          cfg.parse_mode.mode = grammar::MacroMode::fixed;
        } else if (value == "flexible") {
          cfg.parse_mode.mode = grammar::MacroMode::flexible;
        } else if (value == "unbounded") {
          cfg.parse_mode.mode = grammar::MacroMode::unbounded;
        } else {
          violation(path, "must be atomic, fixed, flexible, or unbounded");
        }
      } else if (key == "macro_n") {
        if (parse_long(path, value, l)) {
          if (l < 1) {
            violation(path, "must be >= 1");
          } else {
            cfg.parse_mode.n = static_cast<int>(l);
          }
        }
      } else if (key == "reward_mode") {
        try {
          cfg.reward_mode = env::reward_mode_from_string(value);
        } catch (const std::exception&) {
          violation(path, "must be sparse or dense");
        }
      } else if (key == "obs_mode") {
        if (value != "positional" && value != "windowed") {
          violation(path, "must be positional or windowed");
        } else {
          cfg.chain_obs_mode = value;
        }
      } else if (key == "subgoal_period") {
        if (parse_long(path, value, l)) {
          if (l < 0) {
            violation(path, "must be >= 0");
          } else {
            cfg.chain_subgoal_period = static_cast<int>(l);
          }
        }
      } else if (key == "branching") {
        if (parse_long(path, value, l)) {
          if (l < 2 || l > 10) {
            violation(path, "must lie in [2, 10]");
          } else {
            cfg.chain_branching = static_cast<int>(l);
          }
        }
      } else {
        violation(path, "unknown key");
      }
    } else if (section == "advantage") {
      if (key == "gamma") {
        if (parse_double(path, value, d)) {
          if (!(d > 0.0 && d <= 1.0)) {
            violation(path, "gamma must lie in (0,1]");
          } else {
            cfg.advantage.gamma = d;
          }
        }
      } else if (key == "alpha") {
        if (parse_double(path, value, d)) {
          if (d < 0.0) {
            violation(path, "must be >= 0");
          } else {
            cfg.advantage.alpha = d;
          }
        }
      } else if (key == "normalization") {
        try {
          cfg.advantage.normalization = rl::norm_mode_from_string(value);
        } catch (const std::exception&) {
          violation(path, "must be batch, group, or none");
        }
      } else if (key == "group_size") {
        if (parse_long(path, value, l)) {
          if (l < 1) {
            violation(path, "must be >= 1");
          } else {
            cfg.advantage.group_size = static_cast<int>(l);
          }
        }
      } else if (key == "epsilon") {
        if (parse_double(path, value, d)) {
          if (!(d > 0.0)) {
            violation(path, "must be positive");
          } else {
            cfg.advantage.epsilon = d;
          }
        }
      } else {
        violation(path, "unknown key");
      }
    } else if (section == "is") {
      if (key == "c_low") {
        if (parse_double(path, value, d)) {
          if (!(d > 0.0 && d <= 1.0)) {
            violation(path, "must lie in (0,1]");
          } else {
            cfg.is_config.c_low = d;
          }
        }
      } else if (key == "c_high") {
        if (parse_double(path, value, d)) {
          if (d < 1.0) {
            violation(path, "must be >= 1");
          } else {
            cfg.is_config.c_high = d;
          }
        }
      } else if (key == "c_trunc") {
        if (parse_double(path, value, d)) {
          if (d < 1.0) {
            violation(path, "must be >= 1");
          } else {
            cfg.is_config.c_trunc = d;
          }
        }
      } else {
        violation(path, "unknown key");
      }
    } else if (section == "trainer") {
      if (key == "epochs") {
        if (parse_long(path, value, l)) {
          if (l < 1) {
            violation(path, "must be >= 1");
          } else {
            cfg.trainer.epochs = static_cast<int>(l);
          }
        }
      } else if (key == "iterations") {
        if (parse_long(path, value, l)) {
          if (l < 0) {
            violation(path, "must be >= 0");
          } else {
            cfg.trainer.iterations = static_cast<int>(l);
          }
        }
      } else if (key == "batch_size") {
        if (parse_long(path, value, l)) {
          if (l < 1) {
            violation(path, "must be >= 1");
          } else {
            cfg.trainer.batch_size = static_cast<int>(l);
          }
        }
      } else if (key == "minibatches") {
        if (parse_long(path, value, l)) {
          if (l < 1) {
            violation(path, "must be >= 1");
          } else {
            cfg.trainer.minibatches = static_cast<int>(l);
          }
        }
      } else if (key == "learning_rate") {
        if (parse_double(path, value, d)) {
          if (!(d > 0.0)) {
            violation(path, "must be positive");
          } else {
            cfg.trainer.learning_rate = d;
          }
        }
      } else if (key == "temperature") {
        if (parse_double(path, value, d)) {
          if (!(d > 0.0)) {
            violation(path, "must be positive");
          } else {
            cfg.trainer.temperature = d;
          }
        }
      } else if (key == "h_max") {
        if (parse_long(path, value, l)) {
          if (l < 0) {
            violation(path, "must be >= 0 (0 means environment default)");
          } else {
            cfg.trainer.h_max = static_cast<int>(l);
          }
        }
      } else if (key == "window") {
        if (parse_long(path, value, l)) {
          if (l < 0) {
            violation(path, "must be >= 0");
          } else {
            cfg.trainer.window = static_cast<int>(l);
          }
        }
      } else if (key == "segment_subgoals") {
        bool b = false;
        if (parse_bool(path, value, b)) cfg.trainer.segment_subgoals = b;
      } else if (key == "table_size") {
        if (parse_long(path, value, l)) {
          if (l < (1 << 6) || l > (1 << 24) || (l & (l - 1)) != 0) {
            violation(path, "must be a power of two in [64, 16777216]");
          } else {
            cfg.table_size = static_cast<std::uint32_t>(l);
          }
        }
      } else {
        violation(path, "unknown key");
      }
    } else if (section == "data") {
      if (key == "manifest") {
        cfg.manifest_path = value;
      } else if (key == "bands") {
        cfg.bands.clear();
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) {
          item = trim(item);
          if (!item.empty()) cfg.bands.push_back(item);
        }
      } else if (key == "split") {
        if (value != "train" && value != "test" && value != "all") {
          violation(path, "must be train, test, or all");
        } else {
          cfg.split = value;
        }
      } else if (key == "bands_spec") {
        cfg.bands_spec = value;
      } else if (key == "retry_factor") {
        if (parse_long(path, value, l)) {
          if (l < 1) {
            violation(path, "must be >= 1");
          } else {
            cfg.retry_factor = static_cast<int>(l);
          }
        }
      } else if (key == "vehicles_lo") {
        if (parse_long(path, value, l)) {
          cfg.vehicles_lo = static_cast<int>(l);
        }
      } else if (key == "vehicles_hi") {
        if (parse_long(path, value, l)) {
          cfg.vehicles_hi = static_cast<int>(l);
        }
      } else if (key == "external_filter") {
        cfg.external_filter = value;
      } else {
        violation(path, "unknown key");
      }
    } else if (section == "eval") {
      if (key == "k") {
        if (parse_long(path, value, l)) {
          if (l < 1) {
            violation(path, "must be >= 1");
          } else {
            cfg.eval_k = static_cast<int>(l);
          }
        }
      } else if (key == "temperature") {
        if (parse_double(path, value, d)) {
          if (!(d > 0.0)) {
            violation(path, "must be positive");
          } else {
            cfg.eval_temperature = d;
          }
        }
      } else {
        violation(path, "unknown key");
      }
    } else if (section == "curriculum") {
      if (key == "phases") {
        cfg.curriculum_phases = value;
      } else {
        violation(path, "unknown key");
      }
    } else if (section == "paths") {
      if (key == "out") {
        cfg.out_dir = value;
      } else if (key == "checkpoint") {
        cfg.checkpoint = value;
      } else {
        violation(path, "unknown key");
      }
    } else if (section == "run") {
      if (key == "seed") {
        std::uint64_t s = 0;
        if (parse_u64(path, value, s)) cfg.seed = s;
      } else {
        violation(path, "unknown key");
      }
    } else {
      violation(path, "unknown section");
    }
  }

  void cross_checks() {
    if (cfg.parse_mode.mode == grammar::MacroMode::atomic &&
        cfg.parse_mode.n != 1) {
      violation("env.macro_n", "must be 1 when macro_mode is atomic");
    }
    if (cfg.trainer.batch_size % cfg.trainer.minibatches != 0) {
      violation("trainer.batch_size",
                "must be divisible by trainer.minibatches");
    }
    if (cfg.advantage.normalization == rl::NormMode::group &&
        cfg.trainer.batch_size % cfg.advantage.group_size != 0) {
      violation("trainer.batch_size",
                "must be divisible by advantage.group_size in group mode");
    }
    if (cfg.vehicles_lo < 2 || cfg.vehicles_hi > 13 ||
        cfg.vehicles_lo > cfg.vehicles_hi) {
      violation("data.vehicles_lo",
                "vehicle range must satisfy 2 <= lo <= hi <= 13");
    }
    if (cfg.env == grammar::EnvTag::rushhour &&
        cfg.reward_mode == env::RewardMode::dense) {
      violation("env.reward_mode", "rushhour has no dense reward");
    }
    if (cfg.env == grammar::EnvTag::chain &&
        cfg.reward_mode == env::RewardMode::dense &&
        cfg.chain_subgoal_period <= 0) {
      violation("env.reward_mode",
                "dense reward on chain requires subgoal_period > 0");
    }
  }

  void finalize() {
    // Mirror the env/run sections into the trainer so callers hand rl::train
    // one struct.
    cfg.trainer.parse_mode = cfg.parse_mode;
    cfg.trainer.reward_mode = cfg.reward_mode;
    cfg.trainer.seed = cfg.seed;
  }
};

}  // namespace

std::string ValidationReport::joined() const {
  std::string out;
  for (const std::string& v : violations) {
    out += v;
    out += "\n";
  }
  return out;
}

LoadResult load_config_text(const std::string& text) {
  Parser p;
  std::istringstream is(text);
  std::string line;
  std::string section;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) {
        p.violation("line " + std::to_string(line_no),
                    "malformed section header '" + t + "'");
        section.clear();
        continue;
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      p.violation("line " + std::to_string(line_no),
                  "expected key = value, got '" + t + "'");
      continue;
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      p.violation("line " + std::to_string(line_no), "empty key");
      continue;
    }
    if (section.empty()) {
      p.violation(key, "key outside any [section]");
      continue;
    }
    p.apply(section, key, value);
  }

  if (const char* env_seed = std::getenv("HORIZONLAB_SEED")) {
    std::uint64_t s = 0;
    if (p.parse_u64("HORIZONLAB_SEED", env_seed, s)) {
      p.cfg.seed = s;
      p.cfg.seed_overridden_by_env = true;
    }
  }
  p.cross_checks();
  p.finalize();

  LoadResult result;
  result.report = std::move(p.report);
  if (result.report.ok()) result.config = std::move(p.cfg);
  return result;
}

LoadResult load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    LoadResult r;
    r.report.violations.push_back(path.string() + ": cannot open config");
    return r;
  }
  std::ostringstream buf;
  buf << is.rdbuf();
  return load_config_text(buf.str());
}

std::vector<datasets::LevelBand> parse_bands_spec(const std::string& spec,
                                                  grammar::EnvTag env,
                                                  int sudoku_size) {
  if (spec.empty() || spec == "default") {
    switch (env) {
      case grammar::EnvTag::sudoku:
        return sudoku_size == 4 ? datasets::sudoku4_default_bands()
                                : datasets::sudoku9_default_bands();
      case grammar::EnvTag::rushhour:
        return datasets::rushhour_default_bands();
      case grammar::EnvTag::chain:
        throw std::invalid_argument(
            "chain has no default bands; supply data.bands_spec as "
            "label:low-high:train/test,...");
    }
  }
  std::vector<datasets::LevelBand> bands;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    datasets::LevelBand b;
    char dash = 0, slash = 0;
    char label[32] = {0};
    // label:low-high:train/test
    int consumed = 0;
    const int got = std::sscanf(item.c_str(), "%31[^:]:%d%c%d:%d%c%d%n",
                                label, &b.low, &dash, &b.high, &b.train_count,
                                &slash, &b.test_count, &consumed);
    if (got != 7 || dash != '-' || slash != '/' ||
        consumed != static_cast<int>(item.size())) {
      throw std::invalid_argument("bad band spec item '" + item +
                                  "' (want label:low-high:train/test)");
    }
    b.label = label;
    if (b.low < 0 || b.low > b.high || b.train_count < 0 ||
        b.test_count < 0) {
      throw std::invalid_argument("bad band range in '" + item + "'");
    }
    bands.push_back(b);
  }
  if (bands.empty()) {
    throw std::invalid_argument("band spec '" + spec + "' yields no bands");
  }
  return bands;
}

std::string canonical_text(const RunConfig& c) {
  std::ostringstream os;
  os << "env.name=" << grammar::to_string(c.env) << "\n"
     << "env.sudoku_size=" << c.sudoku_size << "\n"
     << "env.macro_mode=" << static_cast<int>(c.parse_mode.mode) << "\n"
     << "env.macro_n=" << c.parse_mode.n << "\n"
     << "env.reward_mode=" << env::to_string(c.reward_mode) << "\n"
     << "env.obs_mode=" << c.chain_obs_mode << "\n"
     << "env.subgoal_period=" << c.chain_subgoal_period << "\n"
     << "env.branching=" << c.chain_branching << "\n"
     << "advantage.gamma=" << c.advantage.gamma << "\n"
     << "advantage.alpha=" << c.advantage.alpha << "\n"
     << "advantage.normalization=" << rl::to_string(c.advantage.normalization)
     << "\n"
     << "advantage.group_size=" << c.advantage.group_size << "\n"
     << "advantage.epsilon=" << c.advantage.epsilon << "\n"
     << "is.c_low=" << c.is_config.c_low << "\n"
     << "is.c_high=" << c.is_config.c_high << "\n"
     << "is.c_trunc=" << c.is_config.c_trunc << "\n"
     << "trainer.epochs=" << c.trainer.epochs << "\n"
     << "trainer.iterations=" << c.trainer.iterations << "\n"
     << "trainer.batch_size=" << c.trainer.batch_size << "\n"
     << "trainer.minibatches=" << c.trainer.minibatches << "\n"
     << "trainer.learning_rate=" << c.trainer.learning_rate << "\n"
     << "trainer.temperature=" << c.trainer.temperature << "\n"
     << "trainer.h_max=" << c.trainer.h_max << "\n"
     << "trainer.window=" << c.trainer.window << "\n"
     << "trainer.segment_subgoals=" << (c.trainer.segment_subgoals ? 1 : 0)
     << "\n"
     << "trainer.table_size=" << c.table_size << "\n"
     << "data.manifest=" << c.manifest_path << "\n";
  os << "data.bands=";
  for (std::size_t i = 0; i < c.bands.size(); ++i) {
    if (i) os << ",";
    os << c.bands[i];
  }
  os << "\n"
     << "data.split=" << c.split << "\n"
     << "data.bands_spec=" << c.bands_spec << "\n"
     << "data.retry_factor=" << c.retry_factor << "\n"
     << "data.vehicles_lo=" << c.vehicles_lo << "\n"
     << "data.vehicles_hi=" << c.vehicles_hi << "\n"
     << "data.external_filter=" << c.external_filter << "\n"
     << "eval.k=" << c.eval_k << "\n"
     << "eval.temperature=" << c.eval_temperature << "\n"
     << "curriculum.phases=" << c.curriculum_phases << "\n"
     << "paths.out=" << c.out_dir << "\n"
     << "paths.checkpoint=" << c.checkpoint << "\n"
     << "run.seed=" << c.seed << "\n";
  return os.str();
}

namespace {
std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(x));
  return buf;
}
}  // namespace

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("cannot digest missing file: " + path.string());
  }
  std::uint64_t h = util::kFnvOffset;
  char buf[4096];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) {
    h = util::fnv1a_bytes(buf, static_cast<std::size_t>(is.gcount()), h);
    if (!is) break;
  }
  return hex64(h);
}

ProvenanceRecord stamp_provenance(
    const RunConfig& config,
    const std::vector<std::filesystem::path>& outputs) {
  ProvenanceRecord rec;
  rec.code_version = kCodeVersion;
  rec.config_digest = hex64(util::fnv1a(canonical_text(config)));
  rec.seed = config.seed;
  for (const auto& p : outputs) {
    rec.outputs.emplace_back(p.string(), file_digest(p));
  }
  return rec;
}

void write_provenance(const std::filesystem::path& path,
                      const ProvenanceRecord& record) {
  nlohmann::json outputs = nlohmann::json::array();
  for (const auto& [p, digest] : record.outputs) {
    outputs.push_back({{"path", p}, {"digest", digest}});
  }
  nlohmann::json j{{"code_version", record.code_version},
                   {"config_digest", record.config_digest},
                   {"seed", record.seed},
                   {"outputs", outputs}};
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw std::runtime_error("cannot write provenance: " + path.string());
  }
  os << j.dump(2) << "\n";
}

bool verify_outputs(const ProvenanceRecord& record) {
  for (const auto& [p, digest] : record.outputs) {
    try {
      if (file_digest(p) != digest) return false;
    } catch (const std::exception&) {
      return false;
    }
  }
  return true;
}

}  // namespace horizonlab::configio
