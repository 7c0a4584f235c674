#include "horizonlab/sudoku.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <stdexcept>

namespace horizonlab::sudoku {

namespace {

void check_size(int size) {
  if (size != 4 && size != 9) {
    throw std::domain_error("sudoku: size must be 4 or 9");
  }
}

int box_of(int r, int c, int size) {
  const int e = size == 9 ? 3 : 2;
  return (r / e) * e + (c / e);
}

// Bitmask solver state: bit v set = value v+1 used in that unit.
struct Masks {
  int size;
  unsigned full;
  std::vector<unsigned> row, col, box;

  explicit Masks(const Grid& g) : size(g.size) {
    full = (1u << size) - 1u;
    row.assign(size, 0);
    col.assign(size, 0);
    box.assign(size, 0);
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        const int v = g.at(r, c);
        if (v) place(r, c, v);
      }
    }
  }
  void place(int r, int c, int v) {
    const unsigned bit = 1u << (v - 1);
    row[r] |= bit;
    col[c] |= bit;
    box[box_of(r, c, size)] |= bit;
  }
  void remove(int r, int c, int v) {
    const unsigned bit = ~(1u << (v - 1));
    row[r] &= bit;
    col[c] &= bit;
    box[box_of(r, c, size)] &= bit;
  }
  unsigned candidates(int r, int c) const {
    return full & ~(row[r] | col[c] | box[box_of(r, c, size)]);
  }
};

int count_rec(Grid& g, Masks& m, int cap, int found) {
  // Most-constrained empty cell first.
  int best_r = -1, best_c = -1;
  unsigned best_cand = 0;
  int best_n = m.size + 1;
  for (int r = 0; r < g.size && best_n > 1; ++r) {
    for (int c = 0; c < g.size; ++c) {
      if (g.at(r, c)) continue;
      const unsigned cand = m.candidates(r, c);
      const int n = std::popcount(cand);
      if (n == 0) return found;  // dead end
      if (n < best_n) {
        best_n = n;
        best_cand = cand;
        best_r = r;
        best_c = c;
        if (n == 1) break;
      }
    }
  }
  if (best_r < 0) return found + 1;  // full grid
  for (unsigned cand = best_cand; cand; cand &= cand - 1) {
    const int v = std::countr_zero(cand) + 1;
    g.set(best_r, best_c, v);
    m.place(best_r, best_c, v);
    found = count_rec(g, m, cap, found);
    m.remove(best_r, best_c, v);
    g.set(best_r, best_c, 0);
    if (found >= cap) return found;
  }
  return found;
}

bool fill_rec(Grid& g, Masks& m, int cell,
              const std::vector<std::vector<int>>& orders) {
  const int n = g.size;
  if (cell == n * n) return true;
  const int r = cell / n, c = cell % n;
  if (g.at(r, c)) return fill_rec(g, m, cell + 1, orders);
  const unsigned cand = m.candidates(r, c);
  for (int v : orders[cell]) {
    if (!(cand & (1u << (v - 1)))) continue;
    g.set(r, c, v);
    m.place(r, c, v);
    if (fill_rec(g, m, cell + 1, orders)) return true;
    m.remove(r, c, v);
    g.set(r, c, 0);
  }
  return false;
}

}  // namespace

Grid empty_grid(int size) {
  check_size(size);
  Grid g;
  g.size = size;
  g.cells.assign(size * size, 0);
  return g;
}

std::string serialize(const Grid& g) {
  std::string s;
  s.reserve(g.cells.size());
  for (std::uint8_t v : g.cells) s.push_back(static_cast<char>('0' + v));
  return s;
}

Grid deserialize(const std::string& s, int size) {
  check_size(size);
  if (static_cast<int>(s.size()) != size * size) {
    throw std::invalid_argument("sudoku deserialize: wrong length");
  }
  Grid g = empty_grid(size);
  for (int i = 0; i < size * size; ++i) {
    const char ch = s[i];
    if (ch < '0' || ch > '0' + size) {
      throw std::invalid_argument("sudoku deserialize: bad digit");
    }
    g.cells[i] = static_cast<std::uint8_t>(ch - '0');
  }
  return g;
}

bool consistent(const Grid& g) {
  const int n = g.size;
  std::vector<unsigned> row(n, 0), col(n, 0), box(n, 0);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const int v = g.at(r, c);
      if (!v) continue;
      const unsigned bit = 1u << (v - 1);
      const int b = box_of(r, c, n);
      if ((row[r] | col[c] | box[b]) & bit) return false;
      row[r] |= bit;
      col[c] |= bit;
      box[b] |= bit;
    }
  }
  return true;
}

bool is_solved(const Grid& g) {
  for (std::uint8_t v : g.cells) {
    if (!v) return false;
  }
  return consistent(g);
}

Grid generate_solved_grid(int size, std::mt19937_64& rng) {
  check_size(size);
  Grid g = empty_grid(size);
  std::vector<std::vector<int>> orders(size * size);
  std::vector<int> base(size);
  std::iota(base.begin(), base.end(), 1);
  for (auto& o : orders) {
    o = base;
    std::shuffle(o.begin(), o.end(), rng);
  }
  Masks m(g);
  if (!fill_rec(g, m, 0, orders)) {
    throw std::logic_error("solved grid backtracking failed");  // cannot happen
  }
  return g;
}

int count_solutions(const Grid& puzzle, int cap) {
  if (cap < 1) throw std::domain_error("count_solutions: cap must be >= 1");
  if (!consistent(puzzle)) return 0;
  Grid g = puzzle;
  Masks m(g);
  return count_rec(g, m, cap, 0);
}

Grid basic_fixpoint(const Grid& puzzle) {
  Grid g = puzzle;
  const int n = g.size;
  const int e = g.box_edge();
  Masks m(g);
  bool progressed = true;
  const auto fill = [&](int r, int c, int v) {
    g.set(r, c, v);
    m.place(r, c, v);
    progressed = true;
  };
  while (progressed) {
    progressed = false;
    // Full House: a unit with a single empty cell takes its missing value.
    for (int r = 0; r < n; ++r) {
      int empty_c = -1, empties = 0;
      for (int c = 0; c < n; ++c) {
        if (!g.at(r, c)) {
          ++empties;
          empty_c = c;
        }
      }
      if (empties == 1) {
        const unsigned cand = m.candidates(r, empty_c);
        if (std::popcount(cand) == 1) fill(r, empty_c, std::countr_zero(cand) + 1);
      }
    }
    for (int c = 0; c < n; ++c) {
      int empty_r = -1, empties = 0;
      for (int r = 0; r < n; ++r) {
        if (!g.at(r, c)) {
          ++empties;
          empty_r = r;
        }
      }
      if (empties == 1) {
        const unsigned cand = m.candidates(empty_r, c);
        if (std::popcount(cand) == 1) fill(empty_r, c, std::countr_zero(cand) + 1);
      }
    }
    // Naked Single: exactly one candidate left in a cell.
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        if (g.at(r, c)) continue;
        const unsigned cand = m.candidates(r, c);
        if (std::popcount(cand) == 1) fill(r, c, std::countr_zero(cand) + 1);
      }
    }
    // Hidden Single: a value with exactly one home in a unit.
    const auto hidden_in_unit = [&](auto cell_at) {
      for (int v = 1; v <= n; ++v) {
        int spot_r = -1, spot_c = -1, homes = 0;
        bool present = false;
        for (int k = 0; k < n; ++k) {
          const auto [r, c] = cell_at(k);
          if (g.at(r, c) == v) {
            present = true;
            break;
          }
          if (!g.at(r, c) && (m.candidates(r, c) & (1u << (v - 1)))) {
            ++homes;
            spot_r = r;
            spot_c = c;
          }
        }
        if (!present && homes == 1) fill(spot_r, spot_c, v);
      }
    };
    for (int r = 0; r < n; ++r) {
      hidden_in_unit([r](int k) { return std::pair<int, int>(r, k); });
    }
    for (int c = 0; c < n; ++c) {
      hidden_in_unit([c](int k) { return std::pair<int, int>(k, c); });
    }
    for (int b = 0; b < n; ++b) {
      const int r0 = (b / e) * e, c0 = (b % e) * e;
      hidden_in_unit([r0, c0, e](int k) {
        return std::pair<int, int>(r0 + k / e, c0 + k % e);
      });
    }
  }
  return g;
}

Grade grade_basic(const Grid& puzzle) {
  return is_solved(basic_fixpoint(puzzle)) ? Grade::basic
                                           : Grade::backtracking_only;
}

std::optional<Grid> dig_puzzle(const Grid& solved, int empty_target,
                               std::mt19937_64& rng, bool require_basic) {
  const int n = solved.size;
  if (!is_solved(solved)) throw std::domain_error("dig_puzzle: grid not solved");
  if (empty_target < 1 || empty_target >= n * n) {
    throw std::domain_error("dig_puzzle: empty_target out of range");
  }
  std::vector<int> order(n * n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Grid g = solved;
  int empties = 0;
  for (int cell : order) {
    if (empties == empty_target) break;
    const std::uint8_t saved = g.cells[cell];
    g.cells[cell] = 0;
    bool ok;
    if (require_basic) {
      ok = grade_basic(g) == Grade::basic;
    } else {
      ok = count_solutions(g, 2) == 1;
    }
    if (ok) {
      ++empties;
    } else {
      g.cells[cell] = saved;
    }
  }
  if (empties != empty_target) return std::nullopt;
  if (count_solutions(g, 2) != 1) {
    throw std::logic_error("dig_puzzle: uniqueness certification failed");
  }
  return g;
}

SudokuState make_state(const Grid& puzzle, const Grid& solution) {
  if (puzzle.size != solution.size) {
    throw std::invalid_argument("make_state: size mismatch");
  }
  if (!is_solved(solution)) {
    throw std::invalid_argument("make_state: solution grid not solved");
  }
  const int n = puzzle.size;
  for (int i = 0; i < n * n; ++i) {
    if (puzzle.cells[i] && puzzle.cells[i] != solution.cells[i]) {
      throw std::invalid_argument("make_state: puzzle disagrees with solution");
    }
  }
  SudokuState st;
  st.board = puzzle;
  st.solution = solution;
  st.given.resize(n * n);
  for (int i = 0; i < n * n; ++i) st.given[i] = puzzle.cells[i] != 0;
  st.box_done.assign(n, true);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if (!puzzle.at(r, c)) st.box_done[box_of(r, c, n)] = false;
    }
  }
  return st;
}

namespace {

bool box_complete_correct(const SudokuState& st, int b) {
  const int n = st.board.size;
  const int e = st.board.box_edge();
  const int r0 = (b / e) * e, c0 = (b % e) * e;
  for (int dr = 0; dr < e; ++dr) {
    for (int dc = 0; dc < e; ++dc) {
      const int r = r0 + dr, c = c0 + dc;
      if (st.board.at(r, c) != st.solution.at(r, c)) return false;
      if (!st.board.at(r, c)) return false;
    }
  }
  return true;
}

bool board_terminal(const SudokuState& st) {
  return st.board.cells == st.solution.cells;
}

}  // namespace

ApplyOutcome apply(SudokuState& state, const grammar::MacroAction& action) {
  if (action.atoms.empty()) throw std::invalid_argument("apply: empty macro");
  const int n = state.board.size;
  ApplyOutcome out;
  out.atom_valid.reserve(action.atoms.size());
  out.atom_correct.reserve(action.atoms.size());
  bool terminal = board_terminal(state);
  for (const grammar::AtomicAction& aa : action.atoms) {
    const auto* a = std::get_if<grammar::SudokuAtom>(&aa);
    if (!a) throw std::invalid_argument("apply: non-sudoku atom");
    if (a->value < 1 || a->value > n || a->row < 1 || a->row > n || a->col < 1 ||
        a->col > n) {
      throw std::invalid_argument("apply: atom out of range");
    }
    if (terminal) {
      // Episode already over; trailing atoms are inert and unpenalized.
      out.atom_valid.push_back(true);
      out.atom_correct.push_back(false);
      continue;
    }
    const int r = a->row - 1, c = a->col - 1;
    bool valid = !state.given[r * n + c] && state.board.at(r, c) == 0;
    if (valid) {
      // Legality against current board contents (row/col/box uniqueness).
      Masks m(state.board);
      valid = (m.candidates(r, c) & (1u << (a->value - 1))) != 0;
    }
    out.atom_valid.push_back(valid);
    if (!valid) {
      out.atom_correct.push_back(false);
      continue;
    }
    state.board.set(r, c, a->value);
    out.atom_correct.push_back(state.solution.at(r, c) == a->value);
    const int b = box_of(r, c, n);
    if (!state.box_done[b] && box_complete_correct(state, b)) {
      state.box_done[b] = true;
      out.subgoal_events.push_back(b);
    }
    terminal = board_terminal(state);
  }
  out.terminal = terminal;
  return out;
}

double step_correctness(const ApplyOutcome& outcome) {
  if (outcome.atom_correct.empty()) {
    throw std::domain_error("step_correctness: no atoms");
  }
  int correct = 0;
  for (bool b : outcome.atom_correct) correct += b ? 1 : 0;
  return static_cast<double>(correct) /
         static_cast<double>(outcome.atom_correct.size());
}

}  // namespace horizonlab::sudoku
