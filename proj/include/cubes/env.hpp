#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cubes/ensemble.hpp"
#include "cubes/grid_image.hpp"
#include "cubes/move_rules.hpp"
#include "cubes/rng.hpp"

namespace cubes::env {

struct TargetShape {
  std::string name;
  std::vector<CellCoord> cells;

  int o_max() const { return int(cells.size()); }
};

// Validates distinctness and connectivity; throws std::invalid_argument.
TargetShape make_target(std::string name, std::vector<CellCoord> cells);

struct EnvConfig {
  TargetShape target;
  int n_cubes = 9;
  int canvas_side = 19;
  int max_steps = 300;  // per-episode step budget
  sim::ConnectivityMode connectivity = sim::ConnectivityMode::full();
  // reward scales/exponents: branch 0 when the overlap did not drop, branch 1
  // when it did
  double alpha0 = 0.7, alpha1 = 0.7;
  double gamma0 = 1.2, gamma1 = 1.2;
  uint64_t seed = 0;
};

// 1 when the target is reached; otherwise a step-budget-scaled nudge whose
// sign tracks whether the overlap dropped (ties count as "did not drop").
double reward(int o_t, int o_prev, int o_max, int s_max, double alpha0,
              double alpha1, double gamma0, double gamma1);

// action a -> (cube a / 2, a % 2 ? CCW : CW); out-of-range a throws
std::pair<int, Direction> decode_action(int a, int n);

struct StepResult {
  sim::GridImage observation;
  double reward = 0.0;
  bool done = false;
  bool truncated = false;  // stopped because no action was legal
  std::vector<uint8_t> mask;
  int overlap = 0;
  sim::MoveOutcome outcome = sim::MoveOutcome::Applied;
};

// Episode wrapper around the simulator: renders centered canvas observations,
// decodes and applies actions (rejected moves leave the state untouched),
// recomputes the symmetry-overlap after every step and hands out legality
// masks for the policy.
class CubesEnv {
 public:
  explicit CubesEnv(EnvConfig cfg);

  StepResult reset();                                        // fresh random start
  StepResult reset_to(const std::vector<CellCoord>& cells);  // injected start
  StepResult step(int action);

  const sim::Ensemble& state() const { return state_; }
  const EnvConfig& config() const { return cfg_; }
  const sim::GridImage& target_image() const { return target_img_; }
  int overlap_now() const { return o_prev_; }
  int steps_taken() const { return steps_; }
  bool done() const { return done_; }
  long long truncations() const { return truncations_; }

 private:
  StepResult settle(double reward_value, sim::MoveOutcome outcome);
  int compute_overlap() const;

  EnvConfig cfg_;
  sim::GridImage target_img_;
  Rng rng_;
  sim::Ensemble state_;
  int o_prev_ = 0;
  int steps_ = 0;
  bool done_ = true;
  long long truncations_ = 0;
};

}  // namespace cubes::env
