#include <stdexcept>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "doctest.h"
#include "horizonlab/grammar.hpp"
#include "horizonlab/policy.hpp"
#include "horizonlab/util.hpp"
#include "test_support.hpp"

using namespace horizonlab;

namespace {

policy::SoftmaxSequencePolicy fresh_chain_policy(std::uint32_t table = 1u << 10) {
  return policy::SoftmaxSequencePolicy(grammar::chain_grammar(2), table);
}

}  // namespace

TEST_SUITE("policy") {

TEST_CASE("zero weights give the uniform distribution") {
  auto p = fresh_chain_policy();
  const int V = p.vocab_size();
  CHECK(p.next_entropy("goal=chain|now=n0|0110", {}) ==
        doctest::Approx(std::log(V)).epsilon(1e-12));
  std::vector<double> per_token;
  std::vector<int> tokens{0, 1};
  double lp = p.action_logprob("any context", tokens, &per_token);
  REQUIRE(per_token.size() == 2);
  CHECK(per_token[0] == doctest::Approx(-std::log(V)).epsilon(1e-12));
  CHECK(per_token[1] == doctest::Approx(-std::log(V)).epsilon(1e-12));
  CHECK(lp == doctest::Approx(per_token[0] + per_token[1]).epsilon(1e-12));
}

TEST_CASE("sampling is deterministic per rng state and respects the cap") {
  auto p = fresh_chain_policy();
  std::mt19937_64 a(5), b(5);
  auto s1 = p.sample_action("ctx", 1.0, a, 8);
  auto s2 = p.sample_action("ctx", 1.0, b, 8);
  CHECK(s1.tokens == s2.tokens);
  CHECK(s1.logprobs == s2.logprobs);
  CHECK(s1.tokens.size() <= 8);
  REQUIRE(s1.tokens.size() == s1.logprobs.size());

  // With a one-token budget, ending and capping both occur across seeds.
  bool saw_cap = false, saw_end = false;
  for (int seed = 0; seed < 60; ++seed) {
    std::mt19937_64 rng(seed);
    auto s = p.sample_action("ctx", 1.0, rng, 1);
    if (s.hit_token_cap) saw_cap = true;
    if (!s.tokens.empty() && s.tokens.back() == p.vocab().end_token) {
      saw_end = true;
    }
  }
  CHECK(saw_cap);
  CHECK(saw_end);
}

TEST_CASE("recorded behavior logprobs match the policy density at T=1") {
  auto p = fresh_chain_policy();
  // Give the policy a non-trivial parameter vector.
  std::mt19937_64 wrng(17);
  for (double& w : p.weights()) w = 0.3 * (util::uniform01(wrng) - 0.5);
  std::mt19937_64 rng(6);
  auto s = p.sample_action("goal=chain|now=n0|01", 1.0, rng, 8);
  std::vector<double> per_token;
  p.action_logprob("goal=chain|now=n0|01", s.tokens, &per_token);
  REQUIRE(per_token.size() == s.logprobs.size());
  for (std::size_t i = 0; i < per_token.size(); ++i) {
    CHECK(per_token[i] == doctest::Approx(s.logprobs[i]).epsilon(1e-12));
  }
}

TEST_CASE("the format feature family is context independent") {
  auto p = fresh_chain_policy();
  std::uint32_t rows_a[policy::kFeaturesPerPosition];
  std::uint32_t rows_b[policy::kFeaturesPerPosition];
  const std::uint64_t prefix = util::fnv1a("");
  p.feature_rows(util::fnv1a("context one"), 2, 1, prefix, rows_a);
  p.feature_rows(util::fnv1a("context two"), 2, 1, prefix, rows_b);
  // Bias and grammar families depend only on (position, previous token).
  CHECK(rows_a[0] == rows_b[0]);
  CHECK(rows_a[1] == rows_b[1]);
  // The context families separate the two contexts.
  CHECK((rows_a[2] != rows_b[2] || rows_a[3] != rows_b[3]));

  // Different positions move the grammar family.
  p.feature_rows(util::fnv1a("context one"), 3, 1, prefix, rows_b);
  CHECK(rows_a[1] != rows_b[1]);
}

TEST_CASE("repeated positive updates concentrate probability on a sequence") {
  auto p = fresh_chain_policy();
  const std::string ctx = "goal=chain|now=n0|0110";
  std::vector<int> target = grammar::tokenize_action("go(0)", p.vocab());
  target.push_back(p.vocab().end_token);
  double before = p.action_logprob(ctx, target, nullptr);
  for (int step = 0; step < 50; ++step) {
    policy::GradientAccumulator acc;
    acc.reset(p.weights().size());
    policy::GradItem item{ctx, target, 1.0};
    policy::accumulate_policy_gradient(p, std::span<const policy::GradItem>(&item, 1), acc);
    REQUIRE(acc.all_finite());
    for (std::size_t i = 0; i < p.weights().size(); ++i) {
      p.weights()[i] += 0.5 * acc.grad()[i];
    }
  }
  double after = p.action_logprob(ctx, target, nullptr);
  CHECK(after > before + 1.0);
  std::mt19937_64 rng(3);
  auto s = p.sample_action(ctx, 0.05, rng, 8);
  CHECK(s.tokens == target);
}

TEST_CASE("logit gradient matches the closed form on a hand case") {
  std::vector<double> probs{0.5, 0.5};
  auto g = policy::logit_gradient(probs, 0, 2.0);
  REQUIRE(g.size() == 2);
  CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g[1] == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("mean entropy averages probe entropies") {
  auto p = fresh_chain_policy();
  std::vector<policy::EntropyProbe> probes{{"c1", {}}, {"c2", {0}}};
  CHECK(policy::mean_entropy(p, probes) ==
        doctest::Approx(std::log(p.vocab_size())).epsilon(1e-12));
}

TEST_CASE("gradient accumulator detects non-finite entries") {
  policy::GradientAccumulator acc;
  acc.reset(4);
  CHECK(acc.all_finite());
  acc.grad()[2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(acc.all_finite());
}

TEST_CASE("checkpoints round-trip bitwise and reject corrupt files") {
  auto p = fresh_chain_policy(1u << 8);
  std::mt19937_64 rng(23);
  for (double& w : p.weights()) w = util::uniform01(rng) - 0.5;
  auto dir = testsupport::scratch_dir("ckpt");
  auto path = dir / "p.ckpt";
  policy::save_checkpoint(p, path);
  auto back = policy::load_checkpoint(path);
  CHECK(back.table_size() == p.table_size());
  CHECK(back.vocab().lexemes == p.vocab().lexemes);
  REQUIRE(back.weights().size() == p.weights().size());
  CHECK(std::memcmp(back.weights().data(), p.weights().data(),
                    p.weights().size() * sizeof(double)) == 0);
  CHECK(back.feature_config_hash() == p.feature_config_hash());

  // Truncated file.
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    std::ofstream out(dir / "trunc.ckpt", std::ios::binary);
    out.write(bytes.data(), static_cast<long>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(policy::load_checkpoint(dir / "trunc.ckpt"),
                  std::runtime_error);
  // Garbage file.
  {
    std::ofstream out(dir / "junk.ckpt", std::ios::binary);
    out << "not a checkpoint";
  }
  CHECK_THROWS_AS(policy::load_checkpoint(dir / "junk.ckpt"),
                  std::runtime_error);
  CHECK_THROWS_AS(policy::load_checkpoint(dir / "missing.ckpt"),
                  std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("table size contract is enforced") {
  CHECK_THROWS_AS(policy::SoftmaxSequencePolicy(grammar::chain_grammar(2), 100),
                  std::invalid_argument);  // not a power of two
  CHECK_THROWS_AS(policy::SoftmaxSequencePolicy(grammar::chain_grammar(2), 2),
                  std::invalid_argument);  // below 2^6
}

}  // TEST_SUITE
