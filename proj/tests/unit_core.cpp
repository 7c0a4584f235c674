#include <stdexcept>
#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "doctest.h"
#include "horizonlab/core.hpp"
#include "horizonlab/util.hpp"
#include "test_support.hpp"

using namespace horizonlab;

TEST_SUITE("core") {

TEST_CASE("horizon profile accepts the atomic ordering and rejects violations") {
  core::HorizonProfile p{5, 10, 7};
  CHECK_NOTHROW(p.validate(1));
  p.effective_horizon = 5;
  CHECK_NOTHROW(p.validate(1));
  p.effective_horizon = 10;
  CHECK_NOTHROW(p.validate(1));
  p.effective_horizon = 4;  // below goal distance
  CHECK_THROWS_AS(p.validate(1), std::domain_error);
  p.effective_horizon = 11;  // above budget
  CHECK_THROWS_AS(p.validate(1), std::domain_error);
  core::HorizonProfile neg{-1, 10, std::nullopt};
  CHECK_THROWS_AS(neg.validate(1), std::domain_error);
}

TEST_CASE("macro bound lowers the floor to ceil(distance / bound)") {
  core::HorizonProfile p{10, 10, 3};
  CHECK_NOTHROW(p.validate(4));  // ceil(10/4) = 3
  p.effective_horizon = 2;
  CHECK_THROWS_AS(p.validate(4), std::domain_error);
  // Unbounded macros: only h >= 1 remains of the lower bound.
  p.effective_horizon = 1;
  CHECK_NOTHROW(p.validate(0));
  p.effective_horizon = 0;
  CHECK_THROWS_AS(p.validate(0), std::domain_error);
  // A profile without an observed horizon has nothing to violate.
  core::HorizonProfile open{10, 3, std::nullopt};
  CHECK_NOTHROW(open.validate(1));
}

TEST_CASE("outcome names round-trip and unknown names throw") {
  for (auto o : {core::Outcome::success, core::Outcome::failure,
                 core::Outcome::budget_exhausted}) {
    CHECK(core::outcome_from_string(core::to_string(o)) == o);
  }
  CHECK_THROWS_AS(core::outcome_from_string("flawless"), std::invalid_argument);
}

TEST_CASE("discounted returns match a direct O(T^2) summation oracle") {
  std::mt19937_64 rng(12345);
  for (int trial = 0; trial < 200; ++trial) {
    const int T = util::uniform_int(rng, 1, 40);
    double gamma = trial % 5 == 0 ? 1.0 : util::uniform01(rng) * 0.999 + 0.001;
    std::vector<double> r(T);
    for (double& x : r) x = util::uniform01(rng) * 4.0 - 2.0;
    std::vector<double> got = core::discounted_returns(r, gamma);
    REQUIRE(got.size() == r.size());
    for (int t = 0; t < T; ++t) {
      double want = 0.0;
      double scale = 1.0;
      for (int k = t; k < T; ++k) {
        want += scale * r[k];
        scale *= gamma;
      }
      CHECK(got[t] == doctest::Approx(want).epsilon(1e-12));
      CHECK(core::discounted_return(r, gamma, t) ==
            doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("discounted returns reject empty input, bad gamma, bad index") {
  std::vector<double> r{1.0, 2.0};
  CHECK_THROWS_AS(core::discounted_returns({}, 0.9), std::domain_error);
  CHECK_THROWS_AS(core::discounted_returns(r, 0.0), std::domain_error);
  CHECK_THROWS_AS(core::discounted_returns(r, 1.5), std::domain_error);
  CHECK_THROWS_AS(core::discounted_return(r, 0.9, 2), std::domain_error);
}

TEST_CASE("effective horizon counts turns of successes only") {
  core::Trajectory t;
  t.steps.resize(6);
  t.outcome = core::Outcome::success;
  CHECK(core::effective_horizon(t) == 6);
  t.outcome = core::Outcome::budget_exhausted;
  CHECK_THROWS_AS(core::effective_horizon(t), std::domain_error);
  t.outcome = core::Outcome::failure;
  CHECK_THROWS_AS(core::effective_horizon(t), std::domain_error);
}

TEST_CASE("window keeps only the most recent turns, oldest first") {
  std::vector<core::TurnRecord> history;
  for (int i = 0; i < 5; ++i) {
    history.push_back({"obs" + std::to_string(i), "", "act" + std::to_string(i)});
  }
  core::ObservationWindow w = core::build_window(history, 2, "g");
  REQUIRE(w.entries.size() == 2);
  CHECK(w.entries[0].observation == "obs3");
  CHECK(w.entries[1].observation == "obs4");
  CHECK(core::build_window(history, 0, "g").entries.empty());
  CHECK(core::build_window(history, 99, "g").entries.size() == 5);
  CHECK_THROWS_AS(core::build_window(history, -1, "g"), std::domain_error);
}

TEST_CASE("context rendering is the exact goal|obs;act|now layout") {
  core::ObservationWindow w;
  w.goal_text = "solve";
  CHECK(core::render_context(w, "board") == "goal=solve|now=board");
  w.entries.push_back({"o1", "", "a1"});
  w.entries.push_back({"o2", "because", "a2"});
  CHECK(core::render_context(w, "o3") ==
        "goal=solve|obs=o1;act=a1|obs=o2;why=because;act=a2|now=o3");
}

TEST_CASE("trajectory JSONL round-trips every field") {
  core::Trajectory t;
  t.task_id = "task-7";
  t.outcome = core::Outcome::success;
  t.seed = 0xfeedface;
  core::Step s;
  s.context = "goal=g|now=o";
  s.action_tokens = {0, 2, 4};
  s.behavior_logprobs = {-0.1, -1.25, -0.5};
  s.env_reward = 1.0;
  s.format_penalty = -0.5;
  s.validity_penalty = -1.0;
  s.subgoal_events = {1, 3};
  t.steps.push_back(s);
  t.steps.push_back(core::Step{});

  auto dir = testsupport::scratch_dir("trajjsonl");
  auto path = dir / "t.jsonl";
  core::write_trajectories_jsonl(path, std::vector<core::Trajectory>{t, t});
  auto back = core::read_trajectories_jsonl(path);
  REQUIRE(back.size() == 2);
  for (const core::Trajectory& b : back) {
    CHECK(b.task_id == t.task_id);
    CHECK(b.outcome == t.outcome);
    CHECK(b.seed == t.seed);
    REQUIRE(b.steps.size() == 2);
    CHECK(b.steps[0].context == s.context);
    CHECK(b.steps[0].action_tokens == s.action_tokens);
    CHECK(b.steps[0].behavior_logprobs == s.behavior_logprobs);
    CHECK(b.steps[0].env_reward == s.env_reward);
    CHECK(b.steps[0].format_penalty == s.format_penalty);
    CHECK(b.steps[0].validity_penalty == s.validity_penalty);
    CHECK(b.steps[0].subgoal_events == s.subgoal_events);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("hashing matches published FNV-1a and splitmix64 vectors") {
  CHECK(util::fnv1a("") == 0xcbf29ce484222325ull);
  CHECK(util::fnv1a("a") == 0xaf63dc4c8601ec8cull);
  CHECK(util::fnv1a("abc") == 0xe71fa2190541574bull);
  // splitmix64 of state 0 equals the reference stream's first output.
  CHECK(util::splitmix64(0) == 0xe220a8397b1dcdafull);
  // Substreams with different labels decorrelate immediately.
  auto a = util::substream(1, 2, 3);
  auto b = util::substream(1, 2, 4);
  CHECK(a() != b());
}

}  // TEST_SUITE
