#include "horizonlab/rushhour.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <map>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace horizonlab::rushhour {

namespace {

bool id_in_closed_set(char id) {
  return id == 'X' || (id >= 'A' && id < 'A' + kMaxVehicles - 1);
}

using Occ = std::array<int, kSize * kSize>;  // vehicle index or -1

Occ occupancy(const Board& b) {
  Occ occ;
  occ.fill(-1);
  for (std::size_t i = 0; i < b.vehicles.size(); ++i) {
    const Vehicle& v = b.vehicles[i];
    for (int k = 0; k < v.len; ++k) {
      const int r = v.row + (v.horizontal ? 0 : k);
      const int c = v.col + (v.horizontal ? k : 0);
      occ[r * kSize + c] = static_cast<int>(i);
    }
  }
  return occ;
}

void validate_board(const Board& b) {
  if (b.vehicles.empty() || b.vehicles[0].id != 'X') {
    throw std::invalid_argument("board: missing target vehicle");
  }
  if (!b.vehicles[0].horizontal || b.vehicles[0].row != kExitRow) {
    throw std::invalid_argument("board: target must lie on the exit row");
  }
  Occ occ;
  occ.fill(-1);
  for (std::size_t i = 0; i < b.vehicles.size(); ++i) {
    const Vehicle& v = b.vehicles[i];
    if (!id_in_closed_set(v.id)) {
      throw std::invalid_argument("board: vehicle id outside closed set");
    }
    if (v.len < 2 || v.len > 3) throw std::invalid_argument("board: bad length");
    for (int k = 0; k < v.len; ++k) {
      const int r = v.row + (v.horizontal ? 0 : k);
      const int c = v.col + (v.horizontal ? k : 0);
      if (r < 0 || r >= kSize || c < 0 || c >= kSize) {
        throw std::invalid_argument("board: vehicle outside the board");
      }
      if (occ[r * kSize + c] != -1) {
        throw std::invalid_argument("board: overlapping vehicles");
      }
      occ[r * kSize + c] = static_cast<int>(i);
    }
  }
}

}  // namespace

Board parse_board(const std::string& s) {
  if (s.size() != kSize * kSize) {
    throw std::invalid_argument("board: serialization must be 36 chars");
  }
  std::map<char, std::vector<int>> groups;
  for (int i = 0; i < kSize * kSize; ++i) {
    const char ch = s[i];
    if (ch == '.') continue;
    if (!id_in_closed_set(ch)) {
      throw std::invalid_argument("board: unknown cell character");
    }
    groups[ch].push_back(i);
  }
  Board b;
  for (const auto& [id, cells] : groups) {
    const int len = static_cast<int>(cells.size());
    if (len < 2 || len > 3) {
      throw std::invalid_argument("board: vehicle must cover 2 or 3 cells");
    }
    const int r0 = cells[0] / kSize, c0 = cells[0] % kSize;
    Vehicle v{id, r0, c0, len, true};
    bool horiz = true, vert = true;
    for (int k = 0; k < len; ++k) {
      if (cells[k] != cells[0] + k) horiz = false;
      if (cells[k] != cells[0] + k * kSize) vert = false;
    }
    if (horiz == vert) throw std::invalid_argument("board: non-linear vehicle");
    v.horizontal = horiz;
    b.vehicles.push_back(v);
  }
  // Target first, rest by id.
  std::sort(b.vehicles.begin(), b.vehicles.end(), [](const Vehicle& a, const Vehicle& c) {
    if ((a.id == 'X') != (c.id == 'X')) return a.id == 'X';
    return a.id < c.id;
  });
  validate_board(b);
  return b;
}

std::string serialize(const Board& b) {
  std::string s(kSize * kSize, '.');
  for (const Vehicle& v : b.vehicles) {
    for (int k = 0; k < v.len; ++k) {
      const int r = v.row + (v.horizontal ? 0 : k);
      const int c = v.col + (v.horizontal ? k : 0);
      s[r * kSize + c] = v.id;
    }
  }
  return s;
}

bool solved(const Board& b) {
  const Vehicle& t = b.target();
  return t.col + t.len == kSize;
}

std::vector<Slide> legal_slides(const Board& b) {
  std::vector<Slide> out;
  const Occ occ = occupancy(b);
  for (std::size_t i = 0; i < b.vehicles.size(); ++i) {
    const Vehicle& v = b.vehicles[i];
    const auto free_at = [&](int r, int c) {
      return r >= 0 && r < kSize && c >= 0 && c < kSize && occ[r * kSize + c] < 0;
    };
    if (v.horizontal) {
      for (int d = 1; free_at(v.row, v.col - d); ++d) {
        out.push_back({static_cast<int>(i), grammar::Dir::left, d});
      }
      for (int d = 1; free_at(v.row, v.col + v.len - 1 + d); ++d) {
        out.push_back({static_cast<int>(i), grammar::Dir::right, d});
      }
    } else {
      for (int d = 1; free_at(v.row - d, v.col); ++d) {
        out.push_back({static_cast<int>(i), grammar::Dir::up, d});
      }
      for (int d = 1; free_at(v.row + v.len - 1 + d, v.col); ++d) {
        out.push_back({static_cast<int>(i), grammar::Dir::down, d});
      }
    }
  }
  return out;
}

void apply_slide(Board& b, const Slide& s) {
  Vehicle& v = b.vehicles.at(s.vehicle);
  switch (s.dir) {
    case grammar::Dir::left: v.col -= s.dist; break;
    case grammar::Dir::right: v.col += s.dist; break;
    case grammar::Dir::up: v.row -= s.dist; break;
    case grammar::Dir::down: v.row += s.dist; break;
  }
}

namespace {

// Packed movable coordinates, 3 bits per vehicle.
std::uint64_t encode(const Board& b) {
  std::uint64_t key = 0;
  for (std::size_t i = 0; i < b.vehicles.size(); ++i) {
    const Vehicle& v = b.vehicles[i];
    key |= static_cast<std::uint64_t>(v.horizontal ? v.col : v.row) << (3 * i);
  }
  return key;
}

void decode(Board& b, std::uint64_t key) {
  for (std::size_t i = 0; i < b.vehicles.size(); ++i) {
    Vehicle& v = b.vehicles[i];
    const int off = static_cast<int>((key >> (3 * i)) & 7u);
    (v.horizontal ? v.col : v.row) = off;
  }
}

std::optional<int> bfs(const Board& start, bool unit_moves) {
  Board b = start;
  const std::uint64_t s0 = encode(b);
  std::unordered_set<std::uint64_t> seen{s0};
  seen.reserve(1 << 14);
  std::deque<std::pair<std::uint64_t, int>> queue{{s0, 0}};
  while (!queue.empty()) {
    const auto [key, depth] = queue.front();
    queue.pop_front();
    decode(b, key);
    if (solved(b)) return depth;
    for (const Slide& s : legal_slides(b)) {
      if (unit_moves && s.dist != 1) continue;
      Board nb = b;
      apply_slide(nb, s);
      const std::uint64_t nk = encode(nb);
      if (seen.insert(nk).second) queue.emplace_back(nk, depth + 1);
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<SolveResult> solve_min_moves(const Board& b) {
  validate_board(b);
  const auto slide = bfs(b, false);
  if (!slide) return std::nullopt;
  const auto cell = bfs(b, true);
  if (!cell) throw std::logic_error("cell-move BFS disagrees on solvability");
  return SolveResult{*slide, *cell};
}

std::vector<std::pair<Board, int>> harvest_component(
    const Board& start, int lo, int hi, std::size_t max_states,
    std::size_t per_distance_cap) {
  validate_board(start);
  if (lo < 1 || hi < lo || per_distance_cap == 0) {
    throw std::invalid_argument("harvest_component: bad distance range");
  }
  Board scratch = start;

  // Forward sweep collecting the whole component.
  std::unordered_set<std::uint64_t> component{encode(scratch)};
  component.reserve(1 << 14);
  std::deque<std::uint64_t> queue{encode(scratch)};
  std::vector<std::uint64_t> solved_keys;
  while (!queue.empty()) {
    const std::uint64_t key = queue.front();
    queue.pop_front();
    decode(scratch, key);
    if (solved(scratch)) solved_keys.push_back(key);
    for (const Slide& s : legal_slides(scratch)) {
      Board nb = scratch;
      apply_slide(nb, s);
      const std::uint64_t nk = encode(nb);
      if (component.insert(nk).second) {
        if (component.size() > max_states) return {};
        queue.push_back(nk);
      }
    }
  }
  if (solved_keys.empty()) return {};

  // Reverse labeling: multi-source BFS from every solved state. Closure of
  // the component under slides makes the restriction exact.
  std::unordered_map<std::uint64_t, int> dist;
  dist.reserve(component.size());
  for (std::uint64_t key : solved_keys) dist.emplace(key, 0);
  std::deque<std::uint64_t> frontier(solved_keys.begin(), solved_keys.end());
  while (!frontier.empty()) {
    const std::uint64_t key = frontier.front();
    frontier.pop_front();
    const int d = dist.at(key);
    if (d >= hi) continue;  // nothing beyond hi is ever harvested
    decode(scratch, key);
    for (const Slide& s : legal_slides(scratch)) {
      Board nb = scratch;
      apply_slide(nb, s);
      const std::uint64_t nk = encode(nb);
      if (dist.emplace(nk, d + 1).second) frontier.push_back(nk);
    }
  }

  std::vector<std::pair<Board, int>> picks;
  std::vector<std::uint64_t> keys_at;
  for (int d = lo; d <= hi; ++d) {
    keys_at.clear();
    for (const auto& [key, kd] : dist) {
      if (kd == d) keys_at.push_back(key);
    }
    std::sort(keys_at.begin(), keys_at.end());
    const std::size_t take = std::min(per_distance_cap, keys_at.size());
    for (std::size_t i = 0; i < take; ++i) {
      decode(scratch, keys_at[i]);
      picks.emplace_back(scratch, d);
    }
  }
  return picks;
}

std::optional<Board> generate_candidate(int vehicles, std::mt19937_64& rng) {
  if (vehicles < 1 || vehicles > kMaxVehicles) {
    throw std::domain_error("generate_candidate: vehicle count out of range");
  }
  Board b;
  Vehicle target{'X', kExitRow, std::uniform_int_distribution<int>(0, 3)(rng), 2,
                 true};
  b.vehicles.push_back(target);
  int next_id = 0;
  for (int n = 1; n < vehicles; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      Vehicle v;
      v.id = static_cast<char>('A' + next_id);
      v.horizontal = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
      v.len = std::uniform_int_distribution<int>(0, 2)(rng) == 0 ? 3 : 2;
      const int span = kSize - v.len;
      if (v.horizontal) {
        v.row = std::uniform_int_distribution<int>(0, kSize - 1)(rng);
        v.col = std::uniform_int_distribution<int>(0, span)(rng);
      } else {
        v.row = std::uniform_int_distribution<int>(0, span)(rng);
        v.col = std::uniform_int_distribution<int>(0, kSize - 1)(rng);
      }
      const Occ occ = occupancy(b);
      bool clash = false;
      for (int k = 0; k < v.len && !clash; ++k) {
        const int r = v.row + (v.horizontal ? 0 : k);
        const int c = v.col + (v.horizontal ? k : 0);
        clash = occ[r * kSize + c] != -1;
      }
      if (!clash) {
        b.vehicles.push_back(v);
        ++next_id;
        placed = true;
      }
    }
    if (!placed) return std::nullopt;
  }
  validate_board(b);
  return b;
}

ApplyOutcome apply(Board& b, const grammar::MacroAction& action) {
  if (action.atoms.empty()) throw std::invalid_argument("apply: empty macro");
  const auto* first = std::get_if<grammar::RushAtom>(&action.atoms[0]);
  if (!first) throw std::invalid_argument("apply: non-rushhour atom");
  for (const grammar::AtomicAction& aa : action.atoms) {
    const auto* a = std::get_if<grammar::RushAtom>(&aa);
    if (!a || a->vehicle != first->vehicle || a->dir != first->dir) {
      throw std::invalid_argument("apply: atoms must repeat one unit slide");
    }
  }
  ApplyOutcome out;
  const std::size_t dist = action.atoms.size();
  if (solved(b)) {
    // Episode already over; inert.
    out.atom_valid.assign(dist, true);
    out.terminal = true;
    return out;
  }
  int vi = -1;
  for (std::size_t i = 0; i < b.vehicles.size(); ++i) {
    if (b.vehicles[i].id == first->vehicle) {
      vi = static_cast<int>(i);
      break;
    }
  }
  bool ok = vi >= 0;
  if (ok) {
    const Vehicle& v = b.vehicles[vi];
    const bool along = (first->dir == grammar::Dir::left ||
                        first->dir == grammar::Dir::right);
    ok = along == v.horizontal;
  }
  if (ok) {
    // The whole slide must be free: all-or-nothing.
    const Occ occ = occupancy(b);
    const Vehicle& v = b.vehicles[vi];
    for (std::size_t d = 1; d <= dist && ok; ++d) {
      int r = v.row, c = v.col;
      switch (first->dir) {
        case grammar::Dir::left: c = v.col - static_cast<int>(d); break;
        case grammar::Dir::right: c = v.col + v.len - 1 + static_cast<int>(d); break;
        case grammar::Dir::up: r = v.row - static_cast<int>(d); break;
        case grammar::Dir::down: r = v.row + v.len - 1 + static_cast<int>(d); break;
      }
      ok = r >= 0 && r < kSize && c >= 0 && c < kSize && occ[r * kSize + c] < 0;
    }
  }
  out.atom_valid.assign(dist, ok);
  if (ok) {
    apply_slide(b, Slide{vi, first->dir, static_cast<int>(dist)});
  }
  out.terminal = solved(b);
  return out;
}

}  // namespace horizonlab::rushhour
