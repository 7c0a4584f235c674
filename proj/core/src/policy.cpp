#include "horizonlab/policy.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "horizonlab/util.hpp"

namespace horizonlab::policy {

namespace {

// Salt constants for the four feature families; arbitrary but frozen, since
// every saved checkpoint depends on them.
constexpr std::uint64_t kTagBias = 0xb1a5b1a5b1a5b1a5ull;
constexpr std::uint64_t kTagGrammar = 0x6772616d6d617221ull;
constexpr std::uint64_t kTagCtxLocal = 0x0c7c0c7c0c7c0c7cull;
constexpr std::uint64_t kTagCtxPrefix = 0x9e3779b185ebca87ull;

bool is_pow2(std::uint32_t x) { return x != 0 && (x & (x - 1)) == 0; }

std::uint64_t extend_prefix_hash(std::uint64_t h, int token) {
  // Fold the token id into the running fnv1a state, byte by byte in a fixed
  // order so the stream is platform-independent.
  auto u = static_cast<std::uint32_t>(token);
  unsigned char bytes[4] = {
      static_cast<unsigned char>(u & 0xff),
      static_cast<unsigned char>((u >> 8) & 0xff),
      static_cast<unsigned char>((u >> 16) & 0xff),
      static_cast<unsigned char>((u >> 24) & 0xff),
  };
  return util::fnv1a_bytes(bytes, 4, h);
}

// Writes the normalized distribution into probs and returns log Z for the
// (already temperature-scaled) logits.
double softmax_inplace(std::span<double> logits, std::span<double> probs) {
  double m = logits[0];
  for (double z : logits) m = std::max(m, z);
  double sum = 0.0;
  for (std::size_t v = 0; v < logits.size(); ++v) {
    probs[v] = std::exp(logits[v] - m);
    sum += probs[v];
  }
  for (std::size_t v = 0; v < logits.size(); ++v) probs[v] /= sum;
  return m + std::log(sum);
}

struct CheckpointHeader {
  std::uint32_t magic = 0x485a4c50;  // "HZLP"
  std::uint32_t version = kFeatureVersion;
  std::uint8_t env = 0;
  std::int32_t board_size = 0;
  std::int32_t max_vehicles = 0;
  std::int32_t branching = 0;
  std::uint32_t table_size = 0;
  std::uint32_t vocab_size = 0;
  std::uint64_t feature_hash = 0;
  std::uint64_t weight_count = 0;
};

void put_u32(std::ostream& os, std::uint32_t x) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t x) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return x;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return x;
}

}  // namespace

SoftmaxSequencePolicy::SoftmaxSequencePolicy(const grammar::GrammarSpec& spec,
                                             std::uint32_t table_size)
    : vocab_(grammar::make_vocabulary(spec)), table_size_(table_size) {
  if (!is_pow2(table_size) || table_size < (1u << 6) ||
      table_size > (1u << 24)) {
    throw std::invalid_argument(
        "feature table size must be a power of two in [2^6, 2^24]");
  }
  mask_ = table_size_ - 1;
  weights_.assign(static_cast<std::size_t>(table_size_) * vocab_.lexemes.size(),
                  0.0);
}

std::uint64_t SoftmaxSequencePolicy::feature_config_hash() const {
  std::string desc = "fv" + std::to_string(kFeatureVersion) + "|" +
                     grammar::to_string(vocab_.spec.env) + "|" +
                     std::to_string(vocab_.spec.board_size) + "|" +
                     std::to_string(vocab_.spec.max_vehicles) + "|" +
                     std::to_string(vocab_.spec.branching) + "|" +
                     std::to_string(table_size_) + "|" +
                     std::to_string(vocab_.lexemes.size());
  return util::fnv1a(desc);
}

void SoftmaxSequencePolicy::feature_rows(
    std::uint64_t ctx_hash, int pos, int prev, std::uint64_t prefix_hash,
    std::uint32_t out[kFeaturesPerPosition]) const {
  auto upos = static_cast<std::uint64_t>(pos);
  auto uprev = static_cast<std::uint64_t>(prev + 1);
  out[0] = static_cast<std::uint32_t>(util::mix(kTagBias, 0)) & mask_;
  out[1] = static_cast<std::uint32_t>(util::mix(kTagGrammar, upos, uprev)) &
           mask_;
  out[2] = static_cast<std::uint32_t>(
               util::mix(ctx_hash, kTagCtxLocal, upos, uprev)) &
           mask_;
  out[3] = static_cast<std::uint32_t>(
               util::mix(ctx_hash, kTagCtxPrefix, upos, prefix_hash)) &
           mask_;
}

void SoftmaxSequencePolicy::logits(std::uint64_t ctx_hash, int pos, int prev,
                                   std::uint64_t prefix_hash,
                                   std::span<double> out) const {
  const std::size_t V = vocab_.lexemes.size();
  if (out.size() != V) throw std::invalid_argument("logit span size mismatch");
  std::uint32_t rows[kFeaturesPerPosition];
  feature_rows(ctx_hash, pos, prev, prefix_hash, rows);
  for (std::size_t v = 0; v < V; ++v) out[v] = 0.0;
  for (std::uint32_t r : rows) {
    const double* base = weights_.data() + static_cast<std::size_t>(r) * V;
    for (std::size_t v = 0; v < V; ++v) out[v] += base[v];
  }
}

double SoftmaxSequencePolicy::action_logprob(
    std::string_view context, std::span<const int> tokens,
    std::vector<double>* per_token) const {
  if (tokens.empty()) {
    throw std::invalid_argument("action_logprob on empty token sequence");
  }
  const std::size_t V = vocab_.lexemes.size();
  const std::uint64_t ctx_hash = util::fnv1a(context);
  std::vector<double> z(V), p(V);
  if (per_token) per_token->clear();
  double total = 0.0;
  std::uint64_t prefix_hash = util::kFnvOffset;
  int prev = -1;
  for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
    int tok = tokens[pos];
    if (tok < 0 || static_cast<std::size_t>(tok) >= V) {
      throw std::invalid_argument("token id out of vocabulary range");
    }
    logits(ctx_hash, static_cast<int>(pos), prev, prefix_hash, z);
    double log_z = softmax_inplace(z, p);
    double lp = z[static_cast<std::size_t>(tok)] - log_z;
    total += lp;
    if (per_token) per_token->push_back(lp);
    prefix_hash = extend_prefix_hash(prefix_hash, tok);
    prev = tok;
  }
  return total;
}

Sampled SoftmaxSequencePolicy::sample_action(std::string_view context,
                                             double temperature,
                                             std::mt19937_64& rng,
                                             int max_tokens) const {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("sampling temperature must be positive");
  }
  if (max_tokens < 1) {
    throw std::invalid_argument("max_tokens must be at least 1");
  }
  const std::size_t V = vocab_.lexemes.size();
  const std::uint64_t ctx_hash = util::fnv1a(context);
  std::vector<double> z(V), p(V);
  Sampled out;
  std::uint64_t prefix_hash = util::kFnvOffset;
  int prev = -1;
  for (int pos = 0; pos < max_tokens; ++pos) {
    logits(ctx_hash, pos, prev, prefix_hash, z);
    for (std::size_t v = 0; v < V; ++v) z[v] /= temperature;
    double log_z = softmax_inplace(z, p);
    double u = util::uniform01(rng);
    double cum = 0.0;
    std::size_t pick = V - 1;
    for (std::size_t v = 0; v < V; ++v) {
      cum += p[v];
      if (u < cum) {
        pick = v;
        break;
      }
    }
    out.tokens.push_back(static_cast<int>(pick));
    out.logprobs.push_back(z[pick] - log_z);
    if (static_cast<int>(pick) == vocab_.end_token) return out;
    prefix_hash = extend_prefix_hash(prefix_hash, static_cast<int>(pick));
    prev = static_cast<int>(pick);
  }
  out.hit_token_cap = true;
  return out;
}

double SoftmaxSequencePolicy::next_entropy(std::string_view context,
                                           std::span<const int> prefix) const {
  const std::size_t V = vocab_.lexemes.size();
  const std::uint64_t ctx_hash = util::fnv1a(context);
  std::uint64_t prefix_hash = util::kFnvOffset;
  int prev = -1;
  for (int tok : prefix) {
    if (tok < 0 || static_cast<std::size_t>(tok) >= V) {
      throw std::invalid_argument("prefix token id out of vocabulary range");
    }
    prefix_hash = extend_prefix_hash(prefix_hash, tok);
    prev = tok;
  }
  std::vector<double> z(V), p(V);
  logits(ctx_hash, static_cast<int>(prefix.size()), prev, prefix_hash, z);
  softmax_inplace(z, p);
  double h = 0.0;
  for (double q : p) {
    if (q > 0.0) h -= q * std::log(q);
  }
  return h;
}

std::vector<double> logit_gradient(std::span<const double> probs, int sampled,
                                   double advantage) {
  if (probs.empty()) throw std::invalid_argument("empty probability vector");
  if (sampled < 0 || static_cast<std::size_t>(sampled) >= probs.size()) {
    throw std::invalid_argument("sampled index out of range");
  }
  std::vector<double> g(probs.size());
  for (std::size_t v = 0; v < probs.size(); ++v) {
    double indicator = (static_cast<int>(v) == sampled) ? 1.0 : 0.0;
    g[v] = (indicator - probs[v]) * advantage;
  }
  return g;
}

bool GradientAccumulator::all_finite() const {
  for (double g : grad_) {
    if (!std::isfinite(g)) return false;
  }
  return true;
}

void accumulate_policy_gradient(const SoftmaxSequencePolicy& policy,
                                std::span<const GradItem> items,
                                GradientAccumulator& acc) {
  const std::size_t V = static_cast<std::size_t>(policy.vocab_size());
  if (acc.grad().size() != policy.weights().size()) {
    throw std::invalid_argument("gradient accumulator not sized to policy");
  }
  std::vector<double> z(V), p(V);
  std::vector<double>& g = acc.grad();
  for (const GradItem& item : items) {
    if (item.tokens.empty()) {
      throw std::invalid_argument("gradient item with no tokens");
    }
    if (item.coefficient == 0.0) continue;
    const std::uint64_t ctx_hash = util::fnv1a(item.context);
    std::uint64_t prefix_hash = util::kFnvOffset;
    int prev = -1;
    for (std::size_t pos = 0; pos < item.tokens.size(); ++pos) {
      int tok = item.tokens[pos];
      if (tok < 0 || static_cast<std::size_t>(tok) >= V) {
        throw std::invalid_argument("gradient item token out of range");
      }
      policy.logits(ctx_hash, static_cast<int>(pos), prev, prefix_hash, z);
      softmax_inplace(z, p);
      std::uint32_t rows[kFeaturesPerPosition];
      policy.feature_rows(ctx_hash, static_cast<int>(pos), prev, prefix_hash,
                          rows);
      for (std::uint32_t r : rows) {
        double* base = g.data() + static_cast<std::size_t>(r) * V;
        for (std::size_t v = 0; v < V; ++v) {
          double indicator = (static_cast<int>(v) == tok) ? 1.0 : 0.0;
          base[v] += item.coefficient * (indicator - p[v]);
        }
      }
      prefix_hash = extend_prefix_hash(prefix_hash, tok);
      prev = tok;
    }
  }
}

double mean_entropy(const SoftmaxSequencePolicy& policy,
                    std::span<const EntropyProbe> probes) {
  if (probes.empty()) {
    throw std::domain_error("mean_entropy over empty probe set");
  }
  double sum = 0.0;
  for (const EntropyProbe& probe : probes) {
    sum += policy.next_entropy(probe.context, probe.prefix);
  }
  return sum / static_cast<double>(probes.size());
}

void save_checkpoint(const SoftmaxSequencePolicy& policy,
                     const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw std::runtime_error("cannot open checkpoint for writing: " +
                             path.string());
  }
  CheckpointHeader h;
  const grammar::GrammarSpec& spec = policy.gspec();
  h.env = static_cast<std::uint8_t>(spec.env);
  h.board_size = spec.board_size;
  h.max_vehicles = spec.max_vehicles;
  h.branching = spec.branching;
  h.table_size = policy.table_size();
  h.vocab_size = static_cast<std::uint32_t>(policy.vocab_size());
  h.feature_hash = policy.feature_config_hash();
  h.weight_count = policy.weights().size();
  put_u32(os, h.magic);
  put_u32(os, h.version);
  put_u32(os, h.env);
  put_u32(os, static_cast<std::uint32_t>(h.board_size));
  put_u32(os, static_cast<std::uint32_t>(h.max_vehicles));
  put_u32(os, static_cast<std::uint32_t>(h.branching));
  put_u32(os, h.table_size);
  put_u32(os, h.vocab_size);
  put_u64(os, h.feature_hash);
  put_u64(os, h.weight_count);
  for (double w : policy.weights()) {
    std::uint64_t bits;
    std::memcpy(&bits, &w, sizeof bits);
    put_u64(os, bits);
  }
  if (!os) {
    throw std::runtime_error("short write while saving checkpoint: " +
                             path.string());
  }
}

SoftmaxSequencePolicy load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("cannot open checkpoint: " + path.string());
  }
  CheckpointHeader h;
  h.magic = get_u32(is);
  h.version = get_u32(is);
  h.env = static_cast<std::uint8_t>(get_u32(is));
  h.board_size = static_cast<std::int32_t>(get_u32(is));
  h.max_vehicles = static_cast<std::int32_t>(get_u32(is));
  h.branching = static_cast<std::int32_t>(get_u32(is));
  h.table_size = get_u32(is);
  h.vocab_size = get_u32(is);
  h.feature_hash = get_u64(is);
  h.weight_count = get_u64(is);
  if (!is || h.magic != 0x485a4c50) {
    throw std::runtime_error("not a policy checkpoint: " + path.string());
  }
  if (h.version != kFeatureVersion) {
    throw std::runtime_error("checkpoint feature version mismatch in " +
                             path.string());
  }
  grammar::GrammarSpec spec;
  switch (h.env) {
    case 0:
      spec = grammar::sudoku_grammar(h.board_size);
      break;
    case 1:
      spec = grammar::rushhour_grammar();
      break;
    case 2:
      spec = grammar::chain_grammar(h.branching);
      break;
    default:
      throw std::runtime_error("checkpoint has unknown environment tag");
  }
  SoftmaxSequencePolicy policy(spec, h.table_size);
  if (policy.feature_config_hash() != h.feature_hash ||
      static_cast<std::uint32_t>(policy.vocab_size()) != h.vocab_size ||
      policy.weights().size() != h.weight_count) {
    throw std::runtime_error(
        "checkpoint feature configuration does not match this build: " +
        path.string());
  }
  for (double& w : policy.weights()) {
    std::uint64_t bits = get_u64(is);
    std::memcpy(&w, &bits, sizeof w);
  }
  if (!is) {
    throw std::runtime_error("truncated checkpoint: " + path.string());
  }
  return policy;
}

}  // namespace horizonlab::policy
