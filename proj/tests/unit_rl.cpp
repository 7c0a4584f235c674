#include <stdexcept>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "horizonlab/chain.hpp"
#include "horizonlab/env.hpp"
#include "horizonlab/grammar.hpp"
#include "horizonlab/policy.hpp"
#include "horizonlab/rl.hpp"
#include "horizonlab/util.hpp"
#include "test_support.hpp"

using namespace horizonlab;

namespace {

// Per-token log ratios -> (train, behavior) logprob pair with behavior fixed.
std::pair<std::vector<double>, std::vector<double>> from_ratios(
    const std::vector<double>& ratios) {
  std::vector<double> train, behavior;
  for (double r : ratios) {
    behavior.push_back(-1.0);
    train.push_back(-1.0 + std::log(r));
  }
  return {train, behavior};
}

core::Trajectory make_traj(const std::vector<double>& env_rewards,
                           const std::vector<double>& format_pens,
                           const std::vector<double>& validity_pens) {
  core::Trajectory t;
  t.task_id = "hand";
  for (std::size_t i = 0; i < env_rewards.size(); ++i) {
    core::Step s;
    s.context = "c" + std::to_string(i);
    s.action_tokens = {0};
    s.behavior_logprobs = {-1.0};
    s.env_reward = env_rewards[i];
    s.format_penalty = format_pens[i];
    s.validity_penalty = validity_pens[i];
    t.steps.push_back(std::move(s));
  }
  t.outcome = core::Outcome::failure;
  return t;
}

}  // namespace

TEST_SUITE("rl") {

TEST_CASE("on-policy importance weight is exactly one") {
  rl::ISConfig cfg;
  std::vector<double> lp{-0.3, -1.7, -0.05};
  auto w = rl::importance_weight(lp, lp, cfg);
  CHECK(w.rho_seq == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(w.rho_geo == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(w.weight == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_FALSE(w.masked);
  CHECK_FALSE(w.truncated);
}

TEST_CASE("geometric drift outside the trust band masks the sequence") {
  rl::ISConfig cfg;
  SUBCASE("upward drift: ratios (4, 1)") {
    auto [train, behavior] = from_ratios({4.0, 1.0});
    auto w = rl::importance_weight(train, behavior, cfg);
    CHECK(w.rho_seq == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(w.rho_geo == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(w.masked);
    CHECK(w.weight == 0.0);
  }
  SUBCASE("downward drift: ratios (0.9, 0.9)") {
    auto [train, behavior] = from_ratios({0.9, 0.9});
    auto w = rl::importance_weight(train, behavior, cfg);
    CHECK(w.rho_geo == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(w.masked);
    CHECK(w.weight == 0.0);
  }
}

TEST_CASE("in-band drift keeps the sequence ratio as the weight") {
  rl::ISConfig cfg;
  auto [train, behavior] = from_ratios({1.009, 1.009});
  auto w = rl::importance_weight(train, behavior, cfg);
  CHECK(w.rho_geo == doctest::Approx(1.009).epsilon(1e-12));
  CHECK_FALSE(w.masked);
  CHECK_FALSE(w.truncated);
  CHECK(w.weight == doctest::Approx(1.018081).epsilon(1e-9));
  CHECK(w.weight == doctest::Approx(1.009 * 1.009).epsilon(1e-12));
}

TEST_CASE("long in-band sequences truncate at c_trunc") {
  rl::ISConfig cfg;
  std::vector<double> ratios(130, 1.009);  // 1.009^130 > 3
  auto [train, behavior] = from_ratios(ratios);
  auto w = rl::importance_weight(train, behavior, cfg);
  CHECK(w.rho_geo == doctest::Approx(1.009).epsilon(1e-12));
  CHECK(w.rho_seq > 3.0);
  CHECK(w.truncated);
  CHECK_FALSE(w.masked);
  CHECK(w.weight == 3.0);
}

TEST_CASE("log-space evaluation matches the direct product") {
  rl::ISConfig cfg;
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    int T = 1 + static_cast<int>(util::uniform01(rng) * 19);
    std::vector<double> train(T), behavior(T);
    double direct = 1.0;
    for (int t = 0; t < T; ++t) {
      behavior[t] = -2.0 * util::uniform01(rng) - 0.01;
      double ratio = 0.99 + 0.03 * util::uniform01(rng);
      train[t] = behavior[t] + std::log(ratio);
      direct *= std::exp(train[t]) / std::exp(behavior[t]);
    }
    auto w = rl::importance_weight(train, behavior, cfg);
    CHECK(w.rho_seq == doctest::Approx(direct).epsilon(1e-12));
    CHECK(w.rho_geo ==
          doctest::Approx(std::pow(direct, 1.0 / T)).epsilon(1e-12));
    bool in_band = w.rho_geo >= cfg.c_low && w.rho_geo <= cfg.c_high;
    CHECK(w.masked == !in_band);
    if (w.masked) {
      CHECK(w.weight == 0.0);
    } else {
      CHECK(w.weight == doctest::Approx(std::min(direct, cfg.c_trunc))
                            .epsilon(1e-12));
      CHECK(w.weight <= cfg.c_trunc);
    }
  }
}

TEST_CASE("importance weight input contract") {
  rl::ISConfig cfg;
  std::vector<double> a{-1.0}, b{-1.0, -2.0}, empty;
  CHECK_THROWS_AS(rl::importance_weight(a, b, cfg), std::invalid_argument);
  CHECK_THROWS_AS(rl::importance_weight(empty, empty, cfg),
                  std::invalid_argument);
  std::vector<double> nan_lp{std::numeric_limits<double>::quiet_NaN()};
  std::vector<double> one{-1.0};
  CHECK_THROWS_AS(rl::importance_weight(nan_lp, one, cfg),
                  std::invalid_argument);
  CHECK_THROWS_AS(rl::importance_weight(one, nan_lp, cfg),
                  std::invalid_argument);
}

TEST_CASE("normalization modes") {
  SUBCASE("none is the identity") {
    std::vector<double> v{3.0, -1.0, 7.5};
    auto out = rl::normalize(v, rl::NormMode::none, 1e-8);
    CHECK(out == v);
  }
  SUBCASE("batch centers and scales by population std") {
    std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    auto out = rl::normalize(v, rl::NormMode::batch, 1e-8);
    double sd = std::sqrt(1.25);
    REQUIRE(out.size() == 4);
    for (int i = 0; i < 4; ++i) {
      CHECK(out[i] ==
            doctest::Approx((v[i] - 2.5) / sd).epsilon(1e-12));
    }
    double sum = out[0] + out[1] + out[2] + out[3];
    CHECK(sum == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("constant input maps to zeros via the epsilon floor") {
    std::vector<double> v{4.2, 4.2, 4.2};
    auto out = rl::normalize(v, rl::NormMode::batch, 1e-8);
    for (double x : out) CHECK(x == 0.0);
  }
  SUBCASE("group mode pools per group id") {
    std::vector<double> v{1.0, 3.0, 10.0, 30.0};
    std::vector<int> ids{0, 0, 1, 1};
    auto out = rl::normalize(v, rl::NormMode::group, 1e-8, ids);
    REQUIRE(out.size() == 4);
    CHECK(out[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out[2] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(out[3] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("group mode needs matching ids") {
    std::vector<double> v{1.0, 2.0};
    std::vector<int> ids{0};
    CHECK_THROWS_AS(rl::normalize(v, rl::NormMode::group, 1e-8, ids),
                    std::invalid_argument);
  }
}

TEST_CASE("reward decomposition separates returns from penalties") {
  auto traj = make_traj({0.0, 0.0, 1.0}, {-0.5, 0.0, 0.0}, {0.0, -1.0, 0.0});
  auto sr = rl::decompose_rewards(traj, 0.5, /*segment_subgoals=*/false);
  REQUIRE(sr.r_traj.size() == 3);
  CHECK(sr.r_traj[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(sr.r_traj[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(sr.r_traj[2] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(sr.r_step[0] == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(sr.r_step[1] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(sr.r_step[2] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("segmentation without events matches the plain return bitwise") {
  auto traj = make_traj({0.1, 0.7, 0.0, 1.0}, {0, 0, 0, 0}, {0, 0, 0, 0});
  auto plain = rl::decompose_rewards(traj, 0.9, false);
  auto seg = rl::decompose_rewards(traj, 0.9, true);
  CHECK(plain.r_traj == seg.r_traj);
  CHECK(plain.r_step == seg.r_step);
}

TEST_CASE("subgoal events cut the return horizon") {
  auto traj = make_traj({0.0, 0.0, 1.0}, {0, 0, 0}, {0, 0, 0});
  traj.steps[1].subgoal_events = {0};
  auto segs = rl::segment_by_subgoal(traj);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].begin == 0);
  CHECK(segs[0].end == 2);
  CHECK(segs[1].begin == 2);
  CHECK(segs[1].end == 3);
  auto sr = rl::decompose_rewards(traj, 0.5, true);
  // Return inside [0,2) sees only zero rewards; [2,3) sees the terminal 1.
  CHECK(sr.r_traj[0] == 0.0);
  CHECK(sr.r_traj[1] == 0.0);
  CHECK(sr.r_traj[2] == 1.0);
}

TEST_CASE("segment boundaries for multiple events") {
  auto traj = make_traj({0, 0, 0, 0, 0, 0}, {0, 0, 0, 0, 0, 0},
                        {0, 0, 0, 0, 0, 0});
  traj.steps[1].subgoal_events = {0};
  traj.steps[4].subgoal_events = {1};
  auto segs = rl::segment_by_subgoal(traj);
  REQUIRE(segs.size() == 3);
  CHECK(segs[0].begin == 0);
  CHECK(segs[0].end == 2);
  CHECK(segs[1].begin == 2);
  CHECK(segs[1].end == 5);
  CHECK(segs[2].begin == 5);
  CHECK(segs[2].end == 6);
}

TEST_CASE("segmented returns restart discounting after each event") {
  auto traj = make_traj({1.0, 1.0, 1.0}, {0, 0, 0}, {0, 0, 0});
  traj.steps[0].subgoal_events = {0};
  auto r = rl::segmented_returns(traj, 1.0);
  REQUIRE(r.size() == 3);
  CHECK(r[0] == doctest::Approx(1.0));
  CHECK(r[1] == doctest::Approx(2.0));
  CHECK(r[2] == doctest::Approx(1.0));
}

TEST_CASE("advantage mixing is a plain linear blend") {
  std::vector<double> a{1.0, 2.0}, b{10.0, 20.0};
  auto m = rl::mix_advantage(a, b, 0.2);
  REQUIRE(m.size() == 2);
  CHECK(m[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(m[1] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("advantage batch aligns records with trajectories") {
  std::vector<core::Trajectory> trajs;
  trajs.push_back(make_traj({0.0, 1.0}, {-0.5, 0.0}, {0.0, 0.0}));
  trajs.push_back(make_traj({0.0, 2.0}, {0.0, 0.0}, {0.0, 0.0}));
  std::vector<int> gids{0, 1};

  rl::AdvantageConfig cfg;
  cfg.gamma = 1.0;
  cfg.alpha = 0.5;
  cfg.normalization = rl::NormMode::none;
  auto batch = rl::compute_advantages(trajs, cfg, false, gids);
  CHECK(batch.batch_size == 2);
  REQUIRE(batch.records.size() == 4);
  // Record order: trajectory-major, turn-minor.
  CHECK(batch.records[0].traj_index == 0);
  CHECK(batch.records[0].turn == 0);
  CHECK(batch.records[1].traj_index == 0);
  CHECK(batch.records[1].turn == 1);
  CHECK(batch.records[2].traj_index == 1);
  CHECK(batch.records[3].group_id == 1);
  // gamma=1 returns: traj0 {1,1}, traj1 {2,2}; penalties only on (0,0).
  CHECK(batch.records[0].advantage == doctest::Approx(1.0 + 0.5 * -0.5));
  CHECK(batch.records[1].advantage == doctest::Approx(1.0));
  CHECK(batch.records[2].advantage == doctest::Approx(2.0));
  CHECK(batch.records[3].advantage == doctest::Approx(2.0));

  // Batch normalization pools the streams before mixing.
  cfg.normalization = rl::NormMode::batch;
  auto nb = rl::compute_advantages(trajs, cfg, false, gids);
  std::vector<double> rt{1.0, 1.0, 2.0, 2.0}, rs{-0.5, 0.0, 0.0, 0.0};
  auto rtn = rl::normalize(rt, rl::NormMode::batch, cfg.epsilon);
  auto rsn = rl::normalize(rs, rl::NormMode::batch, cfg.epsilon);
  for (int i = 0; i < 4; ++i) {
    CHECK(nb.records[i].r_traj_norm == doctest::Approx(rtn[i]).epsilon(1e-12));
    CHECK(nb.records[i].r_step_norm == doctest::Approx(rsn[i]).epsilon(1e-12));
    CHECK(nb.records[i].advantage ==
          doctest::Approx(rtn[i] + 0.5 * rsn[i]).epsilon(1e-12));
  }
}

TEST_CASE("rollout respects the budget and records densities per token") {
  auto task = testsupport::chain_instance("01", 2, "positional", 0);
  auto environment = env::make_env(task, env::RewardMode::sparse);
  policy::SoftmaxSequencePolicy pol(grammar::chain_grammar(2), 1u << 10);
  grammar::ParseMode mode{grammar::MacroMode::atomic, 1};
  std::mt19937_64 rng(7);
  auto rr = rl::rollout(*environment, pol, mode, 1.0, 4, 0, rng, task.id);
  CHECK(rr.trajectory.task_id == task.id);
  REQUIRE(!rr.trajectory.steps.empty());
  CHECK(rr.trajectory.steps.size() <= 4);
  CHECK(rr.step_correctness.size() == rr.trajectory.steps.size());
  int format_steps = 0;
  double validity_total = 0.0;
  for (const auto& s : rr.trajectory.steps) {
    CHECK(s.action_tokens.size() == s.behavior_logprobs.size());
    CHECK(s.context.rfind("goal=", 0) == 0);
    CHECK(s.format_penalty <= 0.0);
    if (s.format_penalty < 0.0) {
      ++format_steps;
      CHECK(s.format_penalty == doctest::Approx(-0.5));
    }
    validity_total += s.validity_penalty;
  }
  CHECK(format_steps == rr.format_errors);
  CHECK(validity_total ==
        doctest::Approx(-0.5 * rr.atoms_invalid).epsilon(1e-12));

  CHECK_THROWS_AS(
      rl::rollout(*environment, pol, mode, 1.0, 0, 0, rng, task.id),
      std::invalid_argument);
}

TEST_CASE("trainer config validation") {
  rl::AdvantageConfig adv;
  adv.normalization = rl::NormMode::group;
  adv.group_size = 3;
  rl::TrainerConfig t;
  t.batch_size = 32;  // 32 % 3 != 0
  CHECK_THROWS_AS(t.validate(adv), std::invalid_argument);
  adv.group_size = 8;
  CHECK_NOTHROW(t.validate(adv));
}

TEST_CASE("training solves a one-step task and stays on-policy at T=1") {
  auto task = testsupport::chain_instance("0", 2, "positional", 0);
  std::vector<datasets::TaskInstance> tasks{task};
  policy::SoftmaxSequencePolicy pol(grammar::chain_grammar(2), 1u << 12);

  rl::TrainerConfig t;
  t.iterations = 200;
  t.batch_size = 32;
  t.minibatches = 1;
  t.learning_rate = 0.3;
  t.temperature = 1.0;
  t.seed = 5;
  rl::AdvantageConfig adv;
  adv.gamma = 1.0;
  adv.normalization = rl::NormMode::batch;
  rl::ISConfig is;

  auto log = rl::train(pol, tasks, t, adv, is);
  REQUIRE(log.iterations.size() == 200);
  for (const auto& m : log.iterations) {
    // Single minibatch at the sampling temperature: updates are on-policy,
    // so nothing can drift, mask, or truncate.
    CHECK(m.masked_fraction == 0.0);
    CHECK(m.truncated_fraction == 0.0);
    CHECK_FALSE(m.rolled_back);
    CHECK(m.success_rate >= 0.0);
    CHECK(m.success_rate <= 1.0);
  }
  CHECK(log.final_success_rate() >= 0.9);
}

TEST_CASE("non-finite parameters roll the iteration back untouched") {
  auto task = testsupport::chain_instance("01", 2, "positional", 0);
  std::vector<datasets::TaskInstance> tasks{task};
  policy::SoftmaxSequencePolicy pol(grammar::chain_grammar(2), 1u << 10);
  for (double& w : pol.weights()) {
    w = std::numeric_limits<double>::quiet_NaN();
  }
  std::vector<double> before = pol.weights();

  rl::TrainerConfig t;
  t.iterations = 1;
  t.batch_size = 4;
  t.temperature = 1.0;
  t.seed = 3;
  rl::AdvantageConfig adv;
  rl::ISConfig is;
  auto log = rl::train(pol, tasks, t, adv, is);
  REQUIRE(log.iterations.size() == 1);
  CHECK(log.iterations[0].rolled_back);
  REQUIRE(pol.weights().size() == before.size());
  CHECK(std::memcmp(pol.weights().data(), before.data(),
                    before.size() * sizeof(double)) == 0);
}

}  // TEST_SUITE
