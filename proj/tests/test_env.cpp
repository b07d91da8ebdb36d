// Environment tests: action decoding, the reward formula, reset/step
// semantics, mask delegation, rollout invariants and trajectory determinism.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cubes/ensemble.hpp"
#include "cubes/env.hpp"
#include "cubes/move_rules.hpp"
#include "cubes/rng.hpp"

namespace {

using cubes::CellCoord;
using cubes::Direction;
using cubes::Rng;
using cubes::env::CubesEnv;
using cubes::env::EnvConfig;
using cubes::env::StepResult;
using cubes::sim::ConnectivityMode;
using cubes::sim::Ensemble;
using cubes::sim::MoveOutcome;

std::vector<CellCoord> line_cells(int n) {
  std::vector<CellCoord> cells;
  for (int i = 0; i < n; ++i) cells.push_back({i, 0});
  return cells;
}

EnvConfig line_config(int n, uint64_t seed,
                      ConnectivityMode mode = ConnectivityMode::full()) {
  EnvConfig cfg;
  cfg.target = cubes::env::make_target("line", line_cells(n));
  cfg.n_cubes = n;
  cfg.canvas_side = 2 * n + 1;
  cfg.max_steps = 300;
  cfg.connectivity = mode;
  cfg.seed = seed;
  return cfg;
}

int sample_legal(const std::vector<uint8_t>& mask, Rng& rng) {
  std::vector<int> legal;
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) legal.push_back(int(i));
  REQUIRE(!legal.empty());
  return legal[rng.bounded(uint64_t(legal.size()))];
}

}  // namespace

TEST_CASE("decode_action: integer division picks the cube, parity the direction") {
  CHECK(cubes::env::decode_action(0, 9) == std::pair{0, Direction::CW});
  CHECK(cubes::env::decode_action(5, 9) == std::pair{2, Direction::CCW});
  CHECK(cubes::env::decode_action(17, 9) == std::pair{8, Direction::CCW});
  CHECK(cubes::env::decode_action(16, 9) == std::pair{8, Direction::CW});
  CHECK_THROWS_AS(cubes::env::decode_action(-1, 9), std::invalid_argument);
  CHECK_THROWS_AS(cubes::env::decode_action(18, 9), std::invalid_argument);
}

TEST_CASE("reward: terminal 1, signed budget-scaled nudges elsewhere") {
  // reaching the target dominates everything else
  CHECK(cubes::env::reward(9, 3, 9, 300, 0.7, 0.7, 1.2, 1.2) == 1.0);
  CHECK(cubes::env::reward(9, 9, 9, 300, 0.7, 0.7, 1.2, 1.2) == 1.0);

  // worked value: (0.7/300) * (5/9)^1.2
  const double got = cubes::env::reward(5, 4, 9, 300, 0.7, 0.7, 1.2, 1.2);
  CHECK(std::abs(got - 0.001152523472763962972) <= 1e-12);

  // ties count as "did not drop" and land in the positive branch
  const double tie = cubes::env::reward(5, 5, 9, 300, 0.7, 0.7, 1.2, 1.2);
  CHECK(tie == got);
  CHECK(tie > 0.0);

  // drops are negative, with their own scale and exponent
  const double drop = cubes::env::reward(4, 5, 9, 300, 0.9, 0.4, 1.2, 2.0);
  CHECK(std::abs(drop - (-0.4 / 300.0 * std::pow(4.0 / 9.0, 2.0))) <= 1e-15);

  // non-terminal rewards never exceed alpha/S_max in magnitude
  for (int ot = 0; ot < 9; ++ot)
    for (int op = 0; op <= 9; ++op) {
      double r = cubes::env::reward(ot, op, 9, 300, 0.7, 0.7, 1.2, 1.2);
      CHECK(std::abs(r) <= 0.7 / 300.0 + 1e-15);
    }
}

TEST_CASE("environment config validation") {
  CHECK_THROWS_AS(cubes::env::make_target("dup", {{0, 0}, {0, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(cubes::env::make_target("split", {{0, 0}, {2, 0}}), std::invalid_argument);

  EnvConfig cfg = line_config(9, 1);
  cfg.n_cubes = 8;  // target size mismatch
  CHECK_THROWS_AS(CubesEnv{cfg}, std::invalid_argument);

  cfg = line_config(9, 1);
  cfg.alpha1 = 0.0;
  CHECK_THROWS_AS(CubesEnv{cfg}, std::invalid_argument);

  cfg = line_config(9, 1);
  cfg.canvas_side = 5;  // nine cubes cannot fit
  CHECK_THROWS_AS(CubesEnv{cfg}, std::invalid_argument);
}

TEST_CASE("reset: seed-deterministic, overlap primed, reward zero") {
  CubesEnv a(line_config(9, 404));
  CubesEnv b(line_config(9, 404));
  for (int i = 0; i < 10; ++i) {
    StepResult ra = a.reset(), rb = b.reset();
    CHECK(ra.observation.binary == rb.observation.binary);
    CHECK(ra.observation.index == rb.observation.index);
    CHECK(ra.reward == 0.0);
    CHECK(rb.overlap == ra.overlap);
    CHECK(ra.mask == rb.mask);
    CHECK(a.state().coords() == b.state().coords());
  }
  CubesEnv c(line_config(9, 405));
  c.reset();
  a.reset();
  // different seeds diverge (overwhelmingly)
  CHECK(a.state().coords() != c.state().coords());
}

TEST_CASE("reset_to the target: episode starts finished") {
  CubesEnv env(line_config(9, 7));
  StepResult r = env.reset_to(line_cells(9));
  CHECK(r.done);
  CHECK(r.reward == 0.0);  // resets never pay the terminal reward
  CHECK(r.overlap == 9);
  CHECK(env.done());
  CHECK_THROWS_AS(env.step(0), std::logic_error);
}

TEST_CASE("single cube: every start already matches the 1-cell target") {
  EnvConfig cfg;
  cfg.target = cubes::env::make_target("dot", {{0, 0}});
  cfg.n_cubes = 1;
  cfg.canvas_side = 5;
  cfg.seed = 3;
  CubesEnv env(cfg);
  StepResult r = env.reset();
  CHECK(r.done);
  CHECK(r.overlap == 1);
}

TEST_CASE("masks delegate to legal_moves and match a brute apply oracle") {
  Rng rng(11);
  for (auto mode : {ConnectivityMode::full(), ConnectivityMode::local(2)}) {
    CubesEnv env(line_config(7, 21, mode));
    for (int trial = 0; trial < 60; ++trial) {
      StepResult r = env.reset();
      CHECK(r.mask == cubes::sim::legal_moves(env.state(), mode));
      REQUIRE(r.mask.size() == 14);
      for (int a = 0; a < 14; ++a) {
        Ensemble copy = env.state();
        MoveOutcome out = cubes::sim::apply_move(
            copy, {a / 2, a % 2 ? Direction::CCW : Direction::CW}, mode);
        CHECK((out == MoveOutcome::Applied) == bool(r.mask[size_t(a)]));
      }
      if (!r.done) env.step(sample_legal(r.mask, rng));  // stir the reset stream
    }
  }
}

TEST_CASE("local-mode masks are included in full-mode masks") {
  for (int radius : {1, 2, 3}) {
    CubesEnv full(line_config(8, 77, ConnectivityMode::full()));
    CubesEnv local(line_config(8, 77, ConnectivityMode::local(radius)));
    for (int trial = 0; trial < 40; ++trial) {
      StepResult rf = full.reset();
      StepResult rl = local.reset();  // same seed stream: identical states
      REQUIRE(full.state().coords() == local.state().coords());
      for (size_t i = 0; i < rf.mask.size(); ++i)
        if (rl.mask[i]) CHECK(rf.mask[i]);
    }
  }
}

TEST_CASE("rejected actions are recorded no-ops") {
  EnvConfig cfg = line_config(3, 5);
  CubesEnv env(cfg);
  // overlap is translation-invariant: a shifted copy of the target is done
  CHECK(env.reset_to({{0, 2}, {1, 2}, {2, 2}}).done);

  // a bent start; its corner cube is pinned (articulation point)
  StepResult r0 = env.reset_to({{0, 0}, {1, 0}, {1, 1}});
  REQUIRE(!r0.done);
  const auto before = env.state().coords();
  const int o_before = env.overlap_now();

  StepResult r = env.step(2);  // cube 1 (the corner cube) CW: blocked by both arcs
  CHECK(r.outcome != MoveOutcome::Applied);
  CHECK(env.state().coords() == before);
  CHECK(r.overlap == o_before);
  // unchanged overlap is a tie, so the nudge is positive
  CHECK(r.reward > 0.0);
  CHECK(r.reward ==
        cubes::env::reward(o_before, o_before, 3, cfg.max_steps, cfg.alpha0,
                           cfg.alpha1, cfg.gamma0, cfg.gamma1));
  CHECK(env.steps_taken() == 1);
}

TEST_CASE("a step that reaches the target pays 1 and finishes") {
  Ensemble e = Ensemble::from_cells(line_cells(9));
  REQUIRE(cubes::sim::apply_move(e, {8, Direction::CW}, ConnectivityMode::full()) ==
          MoveOutcome::Applied);
  CubesEnv env(line_config(9, 1));
  StepResult r0 = env.reset_to(e.coords());
  REQUIRE(!r0.done);
  CHECK(r0.overlap == 8);

  StepResult r = env.step(2 * 8 + 1);  // the inverse pivot of cube 8
  CHECK(r.done);
  CHECK(r.reward == 1.0);
  CHECK(r.overlap == 9);
  CHECK_THROWS_AS(env.step(0), std::logic_error);
}

TEST_CASE("random legal rollouts: connectivity, reward bounds, budget stop") {
  Rng rng(2222);
  EnvConfig cfg = line_config(6, 99);
  cfg.max_steps = 40;
  CubesEnv env(cfg);
  int budget_stops = 0, successes = 0;
  for (int ep = 0; ep < 25; ++ep) {
    StepResult r = env.reset();
    int steps = 0;
    while (!r.done) {
      r = env.step(sample_legal(r.mask, rng));
      ++steps;
      CHECK(cubes::sim::cells_connected(env.state().coords()));
      if (r.reward == 1.0) {
        CHECK(r.overlap == 6);
        CHECK(r.done);
      } else {
        CHECK(std::abs(r.reward) <= cfg.alpha0 / cfg.max_steps + 1e-15);
      }
      CHECK(!r.truncated);
    }
    CHECK(steps <= cfg.max_steps);
    if (r.overlap == 6)
      ++successes;
    else {
      CHECK(steps == cfg.max_steps);
      ++budget_stops;
    }
  }
  CHECK(successes + budget_stops == 25);
}

TEST_CASE("trajectories are determined by seed and action sequence") {
  EnvConfig cfg = line_config(7, 31337);
  cfg.max_steps = 60;
  CubesEnv a(cfg), b(cfg);
  Rng rng(8);
  for (int ep = 0; ep < 5; ++ep) {
    StepResult ra = a.reset();
    std::vector<int> actions;
    std::vector<double> rewards;
    while (!ra.done) {
      int act = sample_legal(ra.mask, rng);
      actions.push_back(act);
      ra = a.step(act);
      rewards.push_back(ra.reward);
    }
    StepResult rb = b.reset();
    for (size_t i = 0; i < actions.size(); ++i) {
      rb = b.step(actions[i]);
      CHECK(rb.reward == rewards[i]);
    }
    CHECK(rb.done);
    CHECK(a.state().coords() == b.state().coords());
  }
}
