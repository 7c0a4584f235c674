// Compact autoregressive token policy: a linear softmax over hashed
// conjunction features of (context text, token position, previous tokens).
// Zero weights give the uniform distribution, so fresh policies explore
// maximally. All hashing is versioned and platform-stable; checkpoints
// refuse to load into a mismatched feature configuration.
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "horizonlab/grammar.hpp"

namespace horizonlab::policy {

inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::uint32_t kFeaturesPerPosition = 4;

struct Sampled {
  std::vector<int> tokens;
  // Log-probability of each token under the *sampling* distribution (i.e. at
  // the sampling temperature), recorded so later reweighting has an exact
  // behavior density.
  std::vector<double> logprobs;
  bool hit_token_cap = false;
};

class SoftmaxSequencePolicy {
 public:
  // table_size must be a power of two in [2^6, 2^24].
  SoftmaxSequencePolicy(const grammar::GrammarSpec& spec,
                        std::uint32_t table_size);

  const grammar::Vocabulary& vocab() const { return vocab_; }
  const grammar::GrammarSpec& gspec() const { return vocab_.spec; }
  int vocab_size() const { return static_cast<int>(vocab_.lexemes.size()); }
  std::uint32_t table_size() const { return table_size_; }
  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }

  // Stable digest of everything a weight vector's meaning depends on.
  std::uint64_t feature_config_hash() const;

  // Feature row indices (into the hash table) active at one position.
  // prefix_hash is fnv1a over the byte representation of all previous token
  // ids; prev is the immediately preceding token id or -1 at position 0.
  void feature_rows(std::uint64_t ctx_hash, int pos, int prev,
                    std::uint64_t prefix_hash,
                    std::uint32_t out[kFeaturesPerPosition]) const;

  // Unnormalized temperature-1 logits for every vocabulary entry.
  void logits(std::uint64_t ctx_hash, int pos, int prev,
              std::uint64_t prefix_hash, std::span<double> out) const;

  // Temperature-1 log-probability of a full token sequence given the context
  // text. Optionally writes the per-token log-probabilities.
  double action_logprob(std::string_view context, std::span<const int> tokens,
                        std::vector<double>* per_token = nullptr) const;

  // Samples a token sequence at the given temperature until the end token or
  // max_tokens. Recorded logprobs are under the tempered distribution.
  Sampled sample_action(std::string_view context, double temperature,
                        std::mt19937_64& rng, int max_tokens) const;

  // Shannon entropy (nats) of the next-token distribution at temperature 1.
  double next_entropy(std::string_view context,
                      std::span<const int> prefix) const;

 private:
  grammar::Vocabulary vocab_;
  std::uint32_t table_size_ = 0;
  std::uint32_t mask_ = 0;
  std::vector<double> weights_;  // row-major: row r covers [r*V, (r+1)*V)
};

// d log softmax / d logits for one sampled token, scaled by the advantage:
// (1 - p[sampled]) * advantage at the sampled entry, -p[v] * advantage
// elsewhere. probs must be a full probability vector.
std::vector<double> logit_gradient(std::span<const double> probs, int sampled,
                                   double advantage);

// One weighted sequence term of the policy-gradient sum.
struct GradItem {
  std::string_view context;
  std::span<const int> tokens;
  double coefficient = 0.0;  // advantage times importance weight
};

class GradientAccumulator {
 public:
  void reset(std::size_t n_weights) { grad_.assign(n_weights, 0.0); }
  std::vector<double>& grad() { return grad_; }
  const std::vector<double>& grad() const { return grad_; }
  bool all_finite() const;

 private:
  std::vector<double> grad_;
};

// Adds sum_items coefficient * d(log pi(tokens | context))/d(theta) into acc
// (temperature 1). acc must already be sized to the policy's weight count.
void accumulate_policy_gradient(const SoftmaxSequencePolicy& policy,
                                std::span<const GradItem> items,
                                GradientAccumulator& acc);

struct EntropyProbe {
  std::string context;
  std::vector<int> prefix;
};

// Mean next-token entropy over probe points; the trainer's collapse gauge.
double mean_entropy(const SoftmaxSequencePolicy& policy,
                    std::span<const EntropyProbe> probes);

void save_checkpoint(const SoftmaxSequencePolicy& policy,
                     const std::filesystem::path& path);
// Throws std::runtime_error on unreadable/corrupt files or when the stored
// feature configuration differs from what the weights were trained with.
SoftmaxSequencePolicy load_checkpoint(const std::filesystem::path& path);

}  // namespace horizonlab::policy
