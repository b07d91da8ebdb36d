#include "cubes/env.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "cubes/overlap.hpp"

namespace cubes::env {

TargetShape make_target(std::string name, std::vector<CellCoord> cells) {
  if (cells.empty()) throw std::invalid_argument("target: no cells");
  std::set<std::pair<int, int>> seen;
  for (CellCoord c : cells) seen.insert({c.x, c.y});
  if (seen.size() != cells.size())
    throw std::invalid_argument("target: duplicate cells");
  if (!sim::cells_connected(cells))
    throw std::invalid_argument("target: cells must be face-connected");
  return {std::move(name), std::move(cells)};
}

double reward(int o_t, int o_prev, int o_max, int s_max, double alpha0,
              double alpha1, double gamma0, double gamma1) {
  if (o_t == o_max) return 1.0;
  const double frac = double(o_t) / double(o_max);
  if (o_t >= o_prev) return alpha0 / double(s_max) * std::pow(frac, gamma0);
  return -alpha1 / double(s_max) * std::pow(frac, gamma1);
}

std::pair<int, Direction> decode_action(int a, int n) {
  if (a < 0 || a >= 2 * n)
    throw std::invalid_argument("decode_action: action outside [0, 2N)");
  return {a / 2, a % 2 == 0 ? Direction::CW : Direction::CCW};
}

CubesEnv::CubesEnv(EnvConfig cfg)
    : cfg_(std::move(cfg)),
      target_img_(sim::render_cells(cfg_.target.cells, cfg_.canvas_side)),
      rng_(cfg_.seed) {
  if (cfg_.n_cubes < 1) throw std::invalid_argument("env: n_cubes must be >= 1");
  if (cfg_.max_steps < 1) throw std::invalid_argument("env: max_steps must be >= 1");
  if (cfg_.alpha0 <= 0 || cfg_.alpha1 <= 0 || cfg_.gamma0 <= 0 || cfg_.gamma1 <= 0)
    throw std::invalid_argument("env: reward parameters must be positive");
  if (cfg_.target.o_max() != cfg_.n_cubes)
    throw std::invalid_argument("env: target cube count must equal n_cubes");
  make_target(cfg_.target.name, cfg_.target.cells);  // re-validate
}

int CubesEnv::compute_overlap() const {
  return ovl::overlap(sim::render_images(state_, cfg_.canvas_side), target_img_).value;
}

// shared tail of reset/step: rendering, masking, the all-masked stop rule
StepResult CubesEnv::settle(double reward_value, sim::MoveOutcome outcome) {
  StepResult r;
  r.reward = reward_value;
  r.outcome = outcome;
  r.overlap = o_prev_;
  r.done = done_;
  r.mask = sim::legal_moves(state_, cfg_.connectivity);
  if (!r.done && std::none_of(r.mask.begin(), r.mask.end(),
                              [](uint8_t m) { return m != 0; })) {
    r.done = true;
    r.truncated = true;
    r.reward = 0.0;
    done_ = true;
    ++truncations_;
  }
  r.observation = sim::render_images(state_, cfg_.canvas_side);
  return r;
}

StepResult CubesEnv::reset() {
  state_ = sim::random_connected_ensemble(cfg_.n_cubes, rng_);
  steps_ = 0;
  o_prev_ = compute_overlap();
  done_ = o_prev_ == cfg_.target.o_max();
  return settle(0.0, sim::MoveOutcome::Applied);
}

StepResult CubesEnv::reset_to(const std::vector<CellCoord>& cells) {
  if (int(cells.size()) != cfg_.n_cubes)
    throw std::invalid_argument("reset_to: cube count must equal n_cubes");
  state_ = sim::Ensemble::from_cells(cells);
  steps_ = 0;
  o_prev_ = compute_overlap();
  done_ = o_prev_ == cfg_.target.o_max();
  return settle(0.0, sim::MoveOutcome::Applied);
}

StepResult CubesEnv::step(int action) {
  if (done_) throw std::logic_error("step: episode already finished");
  auto [cube, dir] = decode_action(action, cfg_.n_cubes);
  sim::MoveOutcome outcome =
      sim::apply_move(state_, {cube, dir}, cfg_.connectivity);
  ++steps_;
  const int o_t = compute_overlap();
  const double r = reward(o_t, o_prev_, cfg_.target.o_max(), cfg_.max_steps,
                          cfg_.alpha0, cfg_.alpha1, cfg_.gamma0, cfg_.gamma1);
  o_prev_ = o_t;
  done_ = o_t == cfg_.target.o_max() || steps_ >= cfg_.max_steps;
  return settle(r, outcome);
}

}  // namespace cubes::env
