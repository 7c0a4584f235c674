// Action grammars over closed per-environment vocabularies.
//
// Canonical surface forms:
//   sudoku    "value(5, r3c4)"            macros joined by "; "
//   rushhour  "move(A, right)"            macro distance "move(A, right, 2)"
//   chain     "go(0)"                     macros joined by "; "
//
// Parsing is total: any input either yields a MacroAction or a FormatError
// with one of three reasons. Nothing here consults environment state; bounds
// checked at this layer are purely syntactic (board geometry, branching).
#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace horizonlab::grammar {

enum class EnvTag { sudoku, rushhour, chain };

std::string to_string(EnvTag t);
EnvTag env_tag_from_string(const std::string& s);

// Static syntax parameters per environment family.
struct GrammarSpec {
  EnvTag env = EnvTag::sudoku;
  int board_size = 9;    // sudoku: 4 or 9
  int max_vehicles = 13; // rushhour: 'X' plus 'A'.. ; ids beyond this are unknown
  int branching = 2;     // chain: branch indices 0..branching-1
};

GrammarSpec sudoku_grammar(int board_size);
GrammarSpec rushhour_grammar();
GrammarSpec chain_grammar(int branching);

enum class MacroMode { atomic, fixed, flexible, unbounded };

// fixed(n): exactly n atoms. flexible(n): 1..n atoms. Other modes ignore n.
struct ParseMode {
  MacroMode mode = MacroMode::atomic;
  int n = 1;
};

struct SudokuAtom {
  int value = 0;  // 1..size
  int row = 0;    // 1..size
  int col = 0;    // 1..size
  bool operator==(const SudokuAtom&) const = default;
};

enum class Dir { up, down, left, right };

std::string to_string(Dir d);

// One unit slide. A distance-N surface move parses to N identical atoms.
struct RushAtom {
  char vehicle = 'X';
  Dir dir = Dir::right;
  bool operator==(const RushAtom&) const = default;
};

struct ChainAtom {
  int branch = 0;
  bool operator==(const ChainAtom&) const = default;
};

using AtomicAction = std::variant<SudokuAtom, RushAtom, ChainAtom>;

struct MacroAction {
  std::vector<AtomicAction> atoms;  // non-empty for parsed actions
  bool operator==(const MacroAction&) const = default;
};

enum class FormatReason { unparseable, wrong_arity, out_of_bounds_syntax };

std::string to_string(FormatReason r);

struct FormatError {
  FormatReason reason = FormatReason::unparseable;
  std::string detail;
};

using ParseResult = std::variant<MacroAction, FormatError>;

// Never throws on malformed text; errors are data. Throws std::domain_error
// only for contract violations (e.g. fixed/flexible with n < 1).
ParseResult parse_action(std::string_view text, const GrammarSpec& spec,
                         const ParseMode& mode);

// Inverse of parse on well-formed actions. Throws std::invalid_argument when
// the macro is empty, mixes environments, or payloads are out of bounds.
std::string render_action(const MacroAction& action, const GrammarSpec& spec);

// Structured model output "REASON:<text>, ACTION:<action>". structured is
// absent when the raw text does not carry the two labeled fields; the parse
// target is then the raw text itself.
struct ActionText {
  std::string raw;
  std::optional<std::pair<std::string, std::string>> structured;  // (reason, action)
};

ActionText split_structured(std::string_view raw);

// The text parse_action should consume for this output.
std::string_view action_field(const ActionText& text);

// Closed token vocabulary. Token ids index lexemes; id order is stable per
// GrammarSpec so checkpoints and trajectories stay compatible.
struct Vocabulary {
  GrammarSpec spec;
  std::vector<std::string> lexemes;
  int sep_token = -1;  // -1 when the grammar has no separator (rushhour)
  int end_token = -1;

  int size() const { return static_cast<int>(lexemes.size()); }
};

Vocabulary make_vocabulary(const GrammarSpec& spec);

// Canonical text -> token ids (END not appended; callers sampling sequences
// terminate with end_token themselves). Throws std::invalid_argument when a
// lexeme falls outside the closed vocabulary.
std::vector<int> tokenize_action(std::string_view text, const Vocabulary& vocab);

// Total on arbitrary token id sequences (unknown ids throw std::out_of_range;
// any in-vocabulary sequence yields a string). Well-formed sequences print
// back to canonical surface text.
std::string detokenize(std::span<const int> tokens, const Vocabulary& vocab);

// Tokens of one atom incl. trailing separator, used to cap sampling length.
int max_action_tokens(const GrammarSpec& spec, const ParseMode& mode);

}  // namespace horizonlab::grammar
