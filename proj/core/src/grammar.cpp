#include "horizonlab/grammar.hpp"

#include <cctype>
#include <stdexcept>

namespace horizonlab::grammar {

std::string to_string(EnvTag t) {
  switch (t) {
    case EnvTag::sudoku: return "sudoku";
    case EnvTag::rushhour: return "rushhour";
    case EnvTag::chain: return "chain";
  }
  throw std::logic_error("unknown env tag");
}

EnvTag env_tag_from_string(const std::string& s) {
  if (s == "sudoku") return EnvTag::sudoku;
  if (s == "rushhour") return EnvTag::rushhour;
  if (s == "chain") return EnvTag::chain;
  throw std::invalid_argument("unknown env tag: " + s);
}

GrammarSpec sudoku_grammar(int board_size) {
  if (board_size != 4 && board_size != 9) {
    throw std::domain_error("sudoku grammar: size must be 4 or 9");
  }
  GrammarSpec g;
  g.env = EnvTag::sudoku;
  g.board_size = board_size;
  return g;
}

GrammarSpec rushhour_grammar() {
  GrammarSpec g;
  g.env = EnvTag::rushhour;
  return g;
}

GrammarSpec chain_grammar(int branching) {
  if (branching < 2 || branching > 10) {
    throw std::domain_error("chain grammar: branching must be in 2..10");
  }
  GrammarSpec g;
  g.env = EnvTag::chain;
  g.branching = branching;
  return g;
}

std::string to_string(Dir d) {
  switch (d) {
    case Dir::up: return "up";
    case Dir::down: return "down";
    case Dir::left: return "left";
    case Dir::right: return "right";
  }
  throw std::logic_error("unknown dir");
}

std::string to_string(FormatReason r) {
  switch (r) {
    case FormatReason::unparseable: return "unparseable";
    case FormatReason::wrong_arity: return "wrong_arity";
    case FormatReason::out_of_bounds_syntax: return "out_of_bounds_syntax";
  }
  throw std::logic_error("unknown format reason");
}

namespace {

// Hand-rolled scanner over the canonical surface. Whitespace between
// lexemes is insignificant; everything else is exact.
struct Cursor {
  std::string_view s;
  std::size_t i = 0;

  void ws() {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  }
  bool done() {
    ws();
    return i >= s.size();
  }
  bool lit(char c) {
    ws();
    if (i < s.size() && s[i] == c) {
      ++i;
      return true;
    }
    return false;
  }
  bool word(std::string_view w) {
    ws();
    if (s.substr(i, w.size()) != w) return false;
    // Reject identifier characters running past the keyword ("valuex").
    const std::size_t after = i + w.size();
    if (after < s.size() && std::isalpha(static_cast<unsigned char>(s[after]))) {
      return false;
    }
    i = after;
    return true;
  }
  std::optional<long> number() {
    ws();
    if (i >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i]))) {
      return std::nullopt;
    }
    long v = 0;
    std::size_t digits = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
      if (digits > 6) return std::nullopt;  // absurd length, treat as broken
      v = v * 10 + (s[i] - '0');
      ++i;
      ++digits;
    }
    return v;
  }
  std::optional<char> upper_letter() {
    ws();
    if (i < s.size() && s[i] >= 'A' && s[i] <= 'Z') return s[i++];
    return std::nullopt;
  }
};

FormatError err(FormatReason r, std::string detail) {
  return FormatError{r, std::move(detail)};
}

// Vehicle ids are 'X' plus 'A','B',... skipping nothing ('X' is outside the
// A.. run on a 6x6 board with max_vehicles <= 13, ids A..L).
bool vehicle_in_bounds(char id, const GrammarSpec& spec) {
  if (id == 'X') return true;
  return id >= 'A' && id < static_cast<char>('A' + spec.max_vehicles - 1);
}

ParseResult finish_arity(MacroAction action, const ParseMode& mode) {
  const int n = static_cast<int>(action.atoms.size());
  switch (mode.mode) {
    case MacroMode::atomic:
      if (n != 1) return err(FormatReason::wrong_arity, "atomic mode requires exactly one atom");
      break;
    case MacroMode::fixed:
      if (n != mode.n) return err(FormatReason::wrong_arity, "fixed-arity mismatch");
      break;
    case MacroMode::flexible:
      if (n < 1 || n > mode.n) return err(FormatReason::wrong_arity, "flexible bound exceeded");
      break;
    case MacroMode::unbounded:
      break;
  }
  return action;
}

ParseResult parse_sudoku(std::string_view text, const GrammarSpec& spec,
                         const ParseMode& mode) {
  Cursor c{text};
  MacroAction action;
  while (true) {
    if (!c.word("value")) return err(FormatReason::unparseable, "expected 'value'");
    if (!c.lit('(')) return err(FormatReason::unparseable, "expected '('");
    const auto v = c.number();
    if (!v) return err(FormatReason::unparseable, "expected value digit");
    if (!c.lit(',')) return err(FormatReason::unparseable, "expected ','");
    c.ws();
    if (!c.lit('r')) return err(FormatReason::unparseable, "expected row marker");
    const auto r = c.number();
    if (!r) return err(FormatReason::unparseable, "expected row index");
    if (!c.lit('c')) return err(FormatReason::unparseable, "expected col marker");
    const auto col = c.number();
    if (!col) return err(FormatReason::unparseable, "expected col index");
    if (!c.lit(')')) return err(FormatReason::unparseable, "expected ')'");
    const int n = spec.board_size;
    if (*v < 1 || *v > n || *r < 1 || *r > n || *col < 1 || *col > n) {
      return err(FormatReason::out_of_bounds_syntax, "cell or value outside board");
    }
    action.atoms.push_back(SudokuAtom{static_cast<int>(*v), static_cast<int>(*r),
                                      static_cast<int>(*col)});
    if (c.done()) break;
    if (!c.lit(';')) return err(FormatReason::unparseable, "expected ';' between atoms");
    if (c.done()) return err(FormatReason::unparseable, "dangling ';'");
  }
  return finish_arity(std::move(action), mode);
}

std::optional<Dir> parse_dir(Cursor& c) {
  if (c.word("up")) return Dir::up;
  if (c.word("down")) return Dir::down;
  if (c.word("left")) return Dir::left;
  if (c.word("right")) return Dir::right;
  return std::nullopt;
}

ParseResult parse_rushhour(std::string_view text, const GrammarSpec& spec,
                           const ParseMode& mode) {
  Cursor c{text};
  if (!c.word("move")) return err(FormatReason::unparseable, "expected 'move'");
  if (!c.lit('(')) return err(FormatReason::unparseable, "expected '('");
  const auto id = c.upper_letter();
  if (!id) return err(FormatReason::unparseable, "expected vehicle id");
  if (!c.lit(',')) return err(FormatReason::unparseable, "expected ','");
  const auto dir = parse_dir(c);
  if (!dir) return err(FormatReason::unparseable, "expected direction");
  long dist = 1;
  if (c.lit(',')) {
    const auto d = c.number();
    if (!d) return err(FormatReason::unparseable, "expected distance");
    dist = *d;
  }
  if (!c.lit(')')) return err(FormatReason::unparseable, "expected ')'");
  if (!c.done()) return err(FormatReason::unparseable, "trailing text after move");
  if (!vehicle_in_bounds(*id, spec)) {
    return err(FormatReason::out_of_bounds_syntax, "vehicle id outside closed set");
  }
  // Longest slide on a 6-wide board is 6-2 = 4 cells.
  if (dist < 1 || dist > 4) {
    return err(FormatReason::out_of_bounds_syntax, "distance outside 1..4");
  }
  MacroAction action;
  for (long k = 0; k < dist; ++k) action.atoms.push_back(RushAtom{*id, *dir});
  return finish_arity(std::move(action), mode);
}

ParseResult parse_chain(std::string_view text, const GrammarSpec& spec,
                        const ParseMode& mode) {
  Cursor c{text};
  MacroAction action;
  while (true) {
    if (!c.word("go")) return err(FormatReason::unparseable, "expected 'go'");
    if (!c.lit('(')) return err(FormatReason::unparseable, "expected '('");
    const auto b = c.number();
    if (!b) return err(FormatReason::unparseable, "expected branch index");
    if (!c.lit(')')) return err(FormatReason::unparseable, "expected ')'");
    if (*b >= spec.branching) {
      return err(FormatReason::out_of_bounds_syntax, "branch outside 0..branching-1");
    }
    action.atoms.push_back(ChainAtom{static_cast<int>(*b)});
    if (c.done()) break;
    if (!c.lit(';')) return err(FormatReason::unparseable, "expected ';' between atoms");
    if (c.done()) return err(FormatReason::unparseable, "dangling ';'");
  }
  return finish_arity(std::move(action), mode);
}

}  // namespace

ParseResult parse_action(std::string_view text, const GrammarSpec& spec,
                         const ParseMode& mode) {
  if ((mode.mode == MacroMode::fixed || mode.mode == MacroMode::flexible) &&
      mode.n < 1) {
    throw std::domain_error("parse_action: fixed/flexible require n >= 1");
  }
  switch (spec.env) {
    case EnvTag::sudoku: return parse_sudoku(text, spec, mode);
    case EnvTag::rushhour: return parse_rushhour(text, spec, mode);
    case EnvTag::chain: return parse_chain(text, spec, mode);
  }
  throw std::logic_error("unknown env tag");
}

std::string render_action(const MacroAction& action, const GrammarSpec& spec) {
  if (action.atoms.empty()) {
    throw std::invalid_argument("render_action: empty macro");
  }
  std::string out;
  switch (spec.env) {
    case EnvTag::sudoku: {
      for (std::size_t i = 0; i < action.atoms.size(); ++i) {
        const auto* a = std::get_if<SudokuAtom>(&action.atoms[i]);
        if (!a) throw std::invalid_argument("render_action: non-sudoku atom");
        const int n = spec.board_size;
        if (a->value < 1 || a->value > n || a->row < 1 || a->row > n ||
            a->col < 1 || a->col > n) {
          throw std::invalid_argument("render_action: sudoku atom out of bounds");
        }
        if (i) out += "; ";
        out += "value(" + std::to_string(a->value) + ", r" +
               std::to_string(a->row) + "c" + std::to_string(a->col) + ")";
      }
      return out;
    }
    case EnvTag::rushhour: {
      const auto* first = std::get_if<RushAtom>(&action.atoms[0]);
      if (!first) throw std::invalid_argument("render_action: non-rushhour atom");
      for (const AtomicAction& aa : action.atoms) {
        const auto* a = std::get_if<RushAtom>(&aa);
        if (!a || a->vehicle != first->vehicle || a->dir != first->dir) {
          throw std::invalid_argument(
              "render_action: rushhour macro must repeat one unit slide");
        }
      }
      if (!(first->vehicle == 'X' ||
            (first->vehicle >= 'A' &&
             first->vehicle < static_cast<char>('A' + spec.max_vehicles - 1)))) {
        throw std::invalid_argument("render_action: vehicle id out of bounds");
      }
      if (action.atoms.size() > 4) {
        throw std::invalid_argument("render_action: slide distance above 4");
      }
      out = "move(";
      out += first->vehicle;
      out += ", " + to_string(first->dir);
      if (action.atoms.size() > 1) {
        out += ", " + std::to_string(action.atoms.size());
      }
      out += ")";
      return out;
    }
    case EnvTag::chain: {
      for (std::size_t i = 0; i < action.atoms.size(); ++i) {
        const auto* a = std::get_if<ChainAtom>(&action.atoms[i]);
        if (!a) throw std::invalid_argument("render_action: non-chain atom");
        if (a->branch < 0 || a->branch >= spec.branching) {
          throw std::invalid_argument("render_action: branch out of bounds");
        }
        if (i) out += "; ";
        out += "go(" + std::to_string(a->branch) + ")";
      }
      return out;
    }
  }
  throw std::logic_error("unknown env tag");
}

ActionText split_structured(std::string_view raw) {
  ActionText out;
  out.raw = std::string(raw);
  std::string_view s = raw;
  std::size_t start = 0;
  while (start < s.size() && std::isspace(static_cast<unsigned char>(s[start]))) {
    ++start;
  }
  constexpr std::string_view kReason = "REASON:";
  constexpr std::string_view kAction = ", ACTION:";
  if (s.substr(start, kReason.size()) != kReason) return out;
  const std::size_t split = s.rfind(kAction);
  if (split == std::string_view::npos || split < start + kReason.size()) {
    return out;
  }
  std::string reason(s.substr(start + kReason.size(), split - start - kReason.size()));
  std::string action(s.substr(split + kAction.size()));
  // Trim the action field; the reason keeps its interior spacing.
  const auto a0 = action.find_first_not_of(" \t");
  const auto a1 = action.find_last_not_of(" \t\r\n");
  if (a0 == std::string::npos) {
    action.clear();
  } else {
    action = action.substr(a0, a1 - a0 + 1);
  }
  out.structured = {std::move(reason), std::move(action)};
  return out;
}

std::string_view action_field(const ActionText& text) {
  if (text.structured) return text.structured->second;
  return text.raw;
}

Vocabulary make_vocabulary(const GrammarSpec& spec) {
  Vocabulary v;
  v.spec = spec;
  switch (spec.env) {
    case EnvTag::sudoku: {
      const int n = spec.board_size;
      v.lexemes.push_back("value");
      for (int d = 1; d <= n; ++d) v.lexemes.push_back(std::to_string(d));
      for (int r = 1; r <= n; ++r) v.lexemes.push_back("r" + std::to_string(r));
      for (int c = 1; c <= n; ++c) v.lexemes.push_back("c" + std::to_string(c));
      v.sep_token = v.size();
      v.lexemes.push_back(";");
      break;
    }
    case EnvTag::rushhour: {
      v.lexemes.push_back("move");
      v.lexemes.push_back("X");
      for (int k = 0; k < spec.max_vehicles - 1; ++k) {
        v.lexemes.push_back(std::string(1, static_cast<char>('A' + k)));
      }
      v.lexemes.insert(v.lexemes.end(), {"up", "down", "left", "right"});
      for (int d = 1; d <= 4; ++d) v.lexemes.push_back(std::to_string(d));
      break;
    }
    case EnvTag::chain: {
      v.lexemes.push_back("go");
      for (int b = 0; b < spec.branching; ++b) {
        v.lexemes.push_back(std::to_string(b));
      }
      v.sep_token = v.size();
      v.lexemes.push_back(";");
      break;
    }
  }
  v.end_token = v.size();
  v.lexemes.push_back("<end>");
  return v;
}

namespace {

int lookup(const Vocabulary& vocab, std::string_view lexeme) {
  for (int i = 0; i < vocab.size(); ++i) {
    if (vocab.lexemes[i] == lexeme) return i;
  }
  throw std::invalid_argument("tokenize: lexeme outside closed vocabulary: " +
                              std::string(lexeme));
}

}  // namespace

std::vector<int> tokenize_action(std::string_view text, const Vocabulary& vocab) {
  std::vector<int> out;
  std::size_t i = 0;
  const auto isid = [](char ch) {
    return std::islower(static_cast<unsigned char>(ch));
  };
  while (i < text.size()) {
    const char ch = text[i];
    if (std::isspace(static_cast<unsigned char>(ch)) || ch == '(' || ch == ')' ||
        ch == ',') {
      ++i;
      continue;
    }
    if (ch == ';') {
      if (vocab.sep_token < 0) {
        throw std::invalid_argument("tokenize: ';' not in this vocabulary");
      }
      out.push_back(vocab.sep_token);
      ++i;
      continue;
    }
    if (ch >= 'A' && ch <= 'Z') {
      out.push_back(lookup(vocab, text.substr(i, 1)));
      ++i;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(ch))) {
      std::size_t j = i;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      out.push_back(lookup(vocab, text.substr(i, j - i)));
      i = j;
      continue;
    }
    if (isid(ch)) {
      std::size_t j = i;
      while (j < text.size() && isid(text[j])) ++j;
      std::string_view word = text.substr(i, j - i);
      // Row/col markers fuse a letter with digits ("r3", "c12").
      if ((word == "r" || word == "c") && j < text.size() &&
          std::isdigit(static_cast<unsigned char>(text[j]))) {
        std::size_t k = j;
        while (k < text.size() && std::isdigit(static_cast<unsigned char>(text[k]))) ++k;
        out.push_back(lookup(vocab, text.substr(i, k - i)));
        i = k;
        continue;
      }
      out.push_back(lookup(vocab, word));
      i = j;
      continue;
    }
    throw std::invalid_argument(std::string("tokenize: stray character '") + ch + "'");
  }
  return out;
}

namespace {

// Grammar-directed printers. Well-formed sequences print to canonical text;
// anything else degrades to space-joined lexemes that the parser rejects.
// Open atoms in a closable state are closed at end-of-sequence, so sampled
// sequences that hit the length cap right after a complete atom still parse.

std::string detok_sudoku(std::span<const int> tokens, const Vocabulary& v) {
  const int n = v.spec.board_size;
  enum { kStart, kVal, kDigit, kRow, kClosed, kDone } st = kStart;
  std::string out;
  const auto bare = [&](int t) {
    if (!out.empty()) out += ' ';
    out += v.lexemes[t];
  };
  for (int t : tokens) {
    if (t == v.end_token) {
      st = kDone;
      continue;
    }
    if (st == kDone) {
      bare(t);
      continue;
    }
    const bool digit = t >= 1 && t <= n;
    const bool row = t >= n + 1 && t <= 2 * n;
    const bool col = t >= 2 * n + 1 && t <= 3 * n;
    if (t == 0 && (st == kStart)) {
      out += "value(";
      st = kVal;
    } else if (digit && st == kVal) {
      out += v.lexemes[t];
      st = kDigit;
    } else if (row && st == kDigit) {
      out += ", " + v.lexemes[t];
      st = kRow;
    } else if (col && st == kRow) {
      out += v.lexemes[t] + ")";
      st = kClosed;
    } else if (t == v.sep_token && st == kClosed) {
      out += "; ";
      st = kStart;
    } else {
      bare(t);
    }
  }
  return out;
}

std::string detok_rushhour(std::span<const int> tokens, const Vocabulary& v) {
  const int nveh = v.spec.max_vehicles;
  const int dir0 = 1 + nveh;
  const int dist0 = dir0 + 4;
  enum { kStart, kMove, kVeh, kDir, kDist, kClosed, kDone } st = kStart;
  std::string out;
  const auto bare = [&](int t) {
    if (!out.empty()) out += ' ';
    out += v.lexemes[t];
  };
  for (int t : tokens) {
    if (t == v.end_token) {
      if (st == kDir || st == kDist) out += ")";
      st = kDone;
      continue;
    }
    if (st == kDone) {
      bare(t);
      continue;
    }
    const bool veh = t >= 1 && t <= nveh;
    const bool dir = t >= dir0 && t < dir0 + 4;
    const bool dist = t >= dist0 && t < dist0 + 4;
    if (t == 0 && st == kStart) {
      out += "move(";
      st = kMove;
    } else if (veh && st == kMove) {
      out += v.lexemes[t];
      st = kVeh;
    } else if (dir && st == kVeh) {
      out += ", " + v.lexemes[t];
      st = kDir;
    } else if (dist && st == kDir) {
      out += ", " + v.lexemes[t];
      st = kDist;
    } else {
      bare(t);
    }
  }
  if (st == kDir || st == kDist) out += ")";
  return out;
}

std::string detok_chain(std::span<const int> tokens, const Vocabulary& v) {
  const int b = v.spec.branching;
  enum { kStart, kGo, kBranch, kDone } st = kStart;
  std::string out;
  const auto bare = [&](int t) {
    if (!out.empty()) out += ' ';
    out += v.lexemes[t];
  };
  for (int t : tokens) {
    if (t == v.end_token) {
      if (st == kBranch) out += ")";
      st = kDone;
      continue;
    }
    if (st == kDone) {
      bare(t);
      continue;
    }
    const bool branch = t >= 1 && t <= b;
    if (t == 0 && st == kStart) {
      out += "go(";
      st = kGo;
    } else if (branch && st == kGo) {
      out += v.lexemes[t];
      st = kBranch;
    } else if (t == v.sep_token && st == kBranch) {
      // The keyword token of the next atom re-opens "go(" from kStart.
      out += "); ";
      st = kStart;
    } else {
      bare(t);
    }
  }
  if (st == kBranch) out += ")";
  return out;
}

}  // namespace

std::string detokenize(std::span<const int> tokens, const Vocabulary& vocab) {
  for (int t : tokens) {
    if (t < 0 || t >= vocab.size()) {
      throw std::out_of_range("detokenize: token id outside vocabulary");
    }
  }
  switch (vocab.spec.env) {
    case EnvTag::sudoku: return detok_sudoku(tokens, vocab);
    case EnvTag::rushhour: return detok_rushhour(tokens, vocab);
    case EnvTag::chain: return detok_chain(tokens, vocab);
  }
  throw std::logic_error("unknown env tag");
}

int max_action_tokens(const GrammarSpec& spec, const ParseMode& mode) {
  int atoms = 1;
  switch (mode.mode) {
    case MacroMode::atomic: atoms = 1; break;
    case MacroMode::fixed:
    case MacroMode::flexible: atoms = std::max(1, mode.n); break;
    case MacroMode::unbounded: atoms = 16; break;  // sampler cap, not a grammar bound
  }
  switch (spec.env) {
    case EnvTag::sudoku: return atoms * 5 + 3;
    case EnvTag::rushhour: return 7;  // move + vehicle + dir + dist + end + slack
    case EnvTag::chain: return atoms * 3 + 3;
  }
  throw std::logic_error("unknown env tag");
}

}  // namespace horizonlab::grammar
