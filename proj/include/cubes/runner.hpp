#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cubes/env.hpp"
#include "cubes/net.hpp"
#include "cubes/shape_io.hpp"

namespace cubes::run {

// Test-time action selection: sample from the masked distribution (the
// training regime) or take the most probable legal action.
enum class ActionMode : uint8_t { Sample = 0, Argmax = 1 };

struct EvalOptions {
  int episodes = 500;
  int budget = 0;   // per-episode step budget; <= 0 uses the training budget
  int radius = -1;  // local-connectivity radius; < 0 uses the receptive
                    // radius of the policy, 0 switches to full BFS checks
  ActionMode mode = ActionMode::Sample;
  uint64_t seed = 1;
  int threads = 1;  // worker threads; results are episode-index ordered
};

// Raw episode statistics. Move counts are collected for successful episodes
// only; the low/high flags mark the success-rate filter thresholds applied
// when tabulating move statistics.
struct EvalReport {
  int n_episodes = 0;
  int successes = 0;
  double success_rate = 0.0;
  std::vector<int> moves;  // per successful episode, in episode order
  double mean_moves = 0.0;
  double median_moves = 0.0;
  double moves_per_cube = 0.0;
  bool low_success = false;   // success_rate < 1%
  bool high_success = false;  // success_rate > 99%
  long long resamples = 0;    // perturbation walks that landed back on target
};

// Fills the derived fields (rate, mean/median, per-cube) from n_episodes,
// successes and moves.
void finalize_report(EvalReport& r, int n_cubes);

std::string report_to_json(const EvalReport& r);

// Runs `episodes` episodes from fresh random starts and reports success and
// move statistics. The policy's checkpoint metadata provides cube count,
// canvas side and the default budget; the target supplies the goal cells.
// Deterministic for a fixed seed regardless of thread count.
template <typename Real>
EvalReport evaluate(const net::PolicyValueNet<Real>& policy,
                    const env::TargetShape& target, const EvalOptions& opt);

// Perturbation recovery: each episode starts at the target, applies m
// uniformly random legal moves under full connectivity, then lets the policy
// repair the ensemble. Walks that end on a perfect-overlap state are
// resampled (and counted in `resamples`); m = 0 degenerates to an immediate
// success with zero moves.
template <typename Real>
EvalReport perturb_eval(const net::PolicyValueNet<Real>& policy,
                        const env::TargetShape& target, int m,
                        const EvalOptions& opt);

template <typename Real>
struct MorphPhase {
  const net::PolicyValueNet<Real>* policy = nullptr;
  env::TargetShape target;
};

struct MorphPhaseOutcome {
  std::string target_name;
  bool success = false;
  int steps = 0;
};

struct MorphReport {
  bool success = false;
  int total_steps = 0;
  std::vector<MorphPhaseOutcome> phases;
  std::vector<io::TraceRecord> trace;  // single stitched trace
};

std::string morph_report_to_json(const MorphReport& r);

// Drives the ensemble through the phase targets in order, hot-swapping the
// policy between phases. The stitched trace annotates every record with its
// phase; a phase that exhausts its budget marks the trace unsuccessful and
// ends the run. Throws if a phase's cube count does not match the start.
template <typename Real>
MorphReport morph(const std::vector<MorphPhase<Real>>& phases,
                  const std::vector<CellCoord>& start_cells,
                  const EvalOptions& opt);

// Run provenance: command, resolved configuration, seeds, build identifiers
// and a UTC timestamp — enough to re-execute the run exactly. Returned as a
// serialized JSON object.
std::string manifest_json(const std::string& command,
                          const std::string& config_json,
                          const std::vector<uint64_t>& seeds,
                          const std::string& outputs_json);

}  // namespace cubes::run
