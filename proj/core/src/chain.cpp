#include "horizonlab/chain.hpp"

#include <stdexcept>

#include "horizonlab/util.hpp"

namespace horizonlab::chain {

std::string to_string(ObsMode m) {
  return m == ObsMode::positional ? "positional" : "windowed";
}

ObsMode obs_mode_from_string(const std::string& s) {
  if (s == "positional") return ObsMode::positional;
  if (s == "windowed") return ObsMode::windowed;
  throw std::invalid_argument("unknown observation mode: " + s);
}

ChainTask generate_chain(int depth, int branching, ObsMode mode,
                         int subgoal_period, std::uint64_t seed) {
  if (depth < 1) throw std::invalid_argument("generate_chain: depth must be >= 1");
  if (branching < 2 || branching > 10) {
    throw std::invalid_argument("generate_chain: branching must be in 2..10");
  }
  if (subgoal_period < 0) {
    throw std::invalid_argument("generate_chain: negative subgoal period");
  }
  ChainTask t;
  t.depth = depth;
  t.branching = branching;
  t.obs_mode = mode;
  t.subgoal_period = subgoal_period;
  auto rng = util::substream(seed, 0x636861696eull);  // "chain"
  t.correct_path.resize(depth);
  for (int i = 0; i < depth; ++i) {
    t.correct_path[i] =
        static_cast<std::uint8_t>(util::uniform_int(rng, 0, branching - 1));
  }
  return t;
}

std::string serialize_path(const ChainTask& t) {
  std::string s;
  s.reserve(t.correct_path.size());
  for (std::uint8_t b : t.correct_path) s.push_back(static_cast<char>('0' + b));
  return s;
}

ChainTask task_from_fields(const std::string& path_digits, int branching,
                           ObsMode mode, int subgoal_period) {
  if (path_digits.empty()) throw std::invalid_argument("chain task: empty path");
  if (branching < 2 || branching > 10) {
    throw std::invalid_argument("chain task: branching must be in 2..10");
  }
  ChainTask t;
  t.depth = static_cast<int>(path_digits.size());
  t.branching = branching;
  t.obs_mode = mode;
  t.subgoal_period = subgoal_period;
  t.correct_path.reserve(path_digits.size());
  for (char ch : path_digits) {
    const int b = ch - '0';
    if (b < 0 || b >= branching) {
      throw std::invalid_argument("chain task: path digit outside branching");
    }
    t.correct_path.push_back(static_cast<std::uint8_t>(b));
  }
  return t;
}

ChainState make_state(const ChainTask& t) {
  if (t.depth < 1 || t.correct_path.size() != static_cast<std::size_t>(t.depth)) {
    throw std::invalid_argument("chain state: malformed task");
  }
  return ChainState{t, 0, false};
}

std::string observe(const ChainState& st) {
  if (st.absorbed) return "dead";
  const ChainTask& t = st.task;
  const int box = st.progress / kBoxSize;
  std::string chunk;
  for (int i = box * kBoxSize; i < std::min((box + 1) * kBoxSize, t.depth); ++i) {
    chunk.push_back(static_cast<char>('0' + t.correct_path[i]));
  }
  if (t.obs_mode == ObsMode::positional) {
    return "n" + std::to_string(st.progress) + "|" + chunk;
  }
  return "b" + chunk;
}

ApplyOutcome apply(ChainState& st, const grammar::MacroAction& action) {
  if (action.atoms.empty()) throw std::invalid_argument("apply: empty macro");
  ApplyOutcome out;
  out.atom_valid.reserve(action.atoms.size());
  bool terminal = st.progress == st.task.depth;
  for (const grammar::AtomicAction& aa : action.atoms) {
    const auto* a = std::get_if<grammar::ChainAtom>(&aa);
    if (!a) throw std::invalid_argument("apply: non-chain atom");
    if (a->branch < 0 || a->branch >= st.task.branching) {
      throw std::invalid_argument("apply: branch outside task branching");
    }
    out.atom_valid.push_back(true);
    if (terminal || st.absorbed) continue;  // inert
    if (a->branch == st.task.correct_path[st.progress]) {
      ++st.progress;
      const int p = st.task.subgoal_period;
      if (p > 0 && (st.progress % p == 0 || st.progress == st.task.depth)) {
        out.subgoal_events.push_back((st.progress + p - 1) / p);
      }
      terminal = st.progress == st.task.depth;
    } else {
      st.absorbed = true;
    }
  }
  out.terminal = terminal;
  return out;
}

}  // namespace horizonlab::chain
