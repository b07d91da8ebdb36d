#include "cubes/runner.hpp"

#include <algorithm>
#include <atomic>
#include <ctime>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "cubes/ppo.hpp"
#include "json.hpp"

namespace cubes::run {

namespace {

using nlohmann::json;

// Forwards one observation and picks an action from the masked distribution.
template <typename Real>
int pick_action(const net::PolicyValueNet<Real>& policy,
                const sim::GridImage& obs, const std::vector<uint8_t>& mask,
                ActionMode mode, Rng& rng) {
  net::SparseObs sp = net::build_sparse_obs(obs, policy.config().k);
  std::vector<Real> logits;
  Real value = 0;
  policy.forward_one(sp, logits, value);
  rl::MaskedDist dist = rl::masked_categorical(logits, mask);
  if (mode == ActionMode::Sample) return rl::sample(dist, rng);
  int best = 0;
  for (int a = 1; a < int(dist.probs.size()); ++a)
    if (dist.probs[size_t(a)] > dist.probs[size_t(best)]) best = a;
  return best;
}

// Builds the per-episode environment from the policy's checkpoint metadata
// and the evaluation options; validates that policy and target agree.
template <typename Real>
env::EnvConfig episode_config(const net::PolicyValueNet<Real>& policy,
                              const env::TargetShape& target,
                              const EvalOptions& opt, uint64_t env_seed) {
  const net::NetConfig& nc = policy.config();
  if (nc.n_cubes != target.o_max())
    throw std::invalid_argument(
        "runner: policy expects " + std::to_string(nc.n_cubes) +
        " cubes but target '" + target.name + "' has " +
        std::to_string(target.o_max()));
  env::EnvConfig cfg;
  cfg.target = target;
  cfg.n_cubes = nc.n_cubes;
  cfg.canvas_side = nc.canvas_side;
  cfg.max_steps = opt.budget > 0 ? opt.budget : nc.max_steps;
  const int r = opt.radius < 0 ? nc.receptive_radius() : opt.radius;
  cfg.connectivity = r > 0 ? sim::ConnectivityMode::local(r)
                           : sim::ConnectivityMode::full();
  cfg.seed = env_seed;
  return cfg;
}

struct EpisodeStats {
  bool success = false;
  int steps = 0;
};

// Plays the environment to completion from the given reset result. Sampled
// actions are always legal, so every step lands as an applied pivot; when a
// trace sink is given each step appends a record tagged with `phase`.
template <typename Real>
EpisodeStats run_episode(const net::PolicyValueNet<Real>& policy,
                         env::CubesEnv& env, env::StepResult res,
                         ActionMode mode, Rng& rng,
                         std::vector<io::TraceRecord>* trace,
                         const std::string& phase, int* global_step) {
  while (!env.done()) {
    const int a = pick_action(policy, res.observation, res.mask, mode, rng);
    const auto [cube, dir] = env::decode_action(a, env.config().n_cubes);
    res = env.step(a);
    if (trace) {
      io::TraceRecord rec;
      rec.step = global_step ? ++(*global_step) : env.steps_taken();
      rec.cube = cube;
      rec.direction = io::direction_name(dir);
      rec.outcome = io::outcome_name(res.outcome);
      rec.coords_after = env.state().coords();
      rec.phase = phase;
      trace->push_back(rec);
    }
  }
  EpisodeStats st;
  st.steps = env.steps_taken();
  st.success = env.overlap_now() == env.config().target.o_max();
  return st;
}

// Runs `body` on `threads` workers sharing an episode cursor; the first
// exception (if any) is rethrown on the calling thread after the join.
template <typename F>
void run_workers(F&& body, int threads) {
  std::atomic<int> cursor{0};
  const int t = std::max(1, threads);
  if (t == 1) {
    body(cursor);
    return;
  }
  std::mutex err_mutex;
  std::exception_ptr err;
  std::vector<std::thread> pool;
  pool.reserve(size_t(t));
  for (int i = 0; i < t; ++i)
    pool.emplace_back([&] {
      try {
        body(cursor);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!err) err = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

// One uniformly random legal pivot under full-BFS connectivity.
void apply_random_move(sim::Ensemble& ens, Rng& rng) {
  const std::vector<uint8_t> mask =
      sim::legal_moves(ens, sim::ConnectivityMode::full());
  std::vector<int> legal;
  for (int a = 0; a < int(mask.size()); ++a)
    if (mask[size_t(a)]) legal.push_back(a);
  if (legal.empty())
    throw std::runtime_error("runner: ensemble has no legal move");
  const int a = legal[size_t(rng.bounded(uint64_t(legal.size())))];
  const auto [cube, dir] = env::decode_action(a, ens.size());
  sim::apply_move(ens, {cube, dir}, sim::ConnectivityMode::full());
}

std::string phase_label(int index, const std::string& target_name) {
  return std::to_string(index) + ":" + target_name;
}

}  // namespace

void finalize_report(EvalReport& r, int n_cubes) {
  r.success_rate =
      r.n_episodes > 0 ? double(r.successes) / double(r.n_episodes) : 0.0;
  r.low_success = r.success_rate < 0.01;
  r.high_success = r.success_rate > 0.99;
  r.mean_moves = 0.0;
  r.median_moves = 0.0;
  r.moves_per_cube = 0.0;
  if (r.moves.empty()) return;
  double sum = 0.0;
  for (int mv : r.moves) sum += mv;
  r.mean_moves = sum / double(r.moves.size());
  std::vector<int> sorted = r.moves;
  std::sort(sorted.begin(), sorted.end());
  const size_t h = sorted.size() / 2;
  r.median_moves = sorted.size() % 2
                       ? double(sorted[h])
                       : 0.5 * (double(sorted[h - 1]) + double(sorted[h]));
  if (n_cubes > 0) r.moves_per_cube = r.mean_moves / double(n_cubes);
}

std::string report_to_json(const EvalReport& r) {
  json j;
  j["n_episodes"] = r.n_episodes;
  j["successes"] = r.successes;
  j["success_rate"] = r.success_rate;
  j["moves"] = r.moves;
  j["mean_moves"] = r.mean_moves;
  j["median_moves"] = r.median_moves;
  j["moves_per_cube"] = r.moves_per_cube;
  j["low_success"] = r.low_success;
  j["high_success"] = r.high_success;
  j["resamples"] = r.resamples;
  return j.dump(2) + "\n";
}

std::string morph_report_to_json(const MorphReport& r) {
  json j;
  j["success"] = r.success;
  j["total_steps"] = r.total_steps;
  j["phases"] = json::array();
  for (const auto& ph : r.phases)
    j["phases"].push_back({{"target", ph.target_name},
                           {"success", ph.success},
                           {"steps", ph.steps}});
  return j.dump(2) + "\n";
}

template <typename Real>
EvalReport evaluate(const net::PolicyValueNet<Real>& policy,
                    const env::TargetShape& target, const EvalOptions& opt) {
  if (opt.episodes <= 0)
    throw std::invalid_argument("runner: episodes must be positive");
  episode_config(policy, target, opt, 0);  // validate up front
  const int n = opt.episodes;
  std::vector<EpisodeStats> stats(static_cast<size_t>(n));
  run_workers(
      [&](std::atomic<int>& cursor) {
        for (int e = cursor.fetch_add(1); e < n; e = cursor.fetch_add(1)) {
          env::CubesEnv env(episode_config(
              policy, target, opt, derive_seed(opt.seed, 2 * uint64_t(e))));
          Rng act(derive_seed(opt.seed, 2 * uint64_t(e) + 1));
          stats[size_t(e)] = run_episode(policy, env, env.reset(), opt.mode,
                                         act, nullptr, "", nullptr);
        }
      },
      opt.threads);
  EvalReport rep;
  rep.n_episodes = n;
  for (const EpisodeStats& s : stats)
    if (s.success) {
      ++rep.successes;
      rep.moves.push_back(s.steps);
    }
  finalize_report(rep, target.o_max());
  return rep;
}

template <typename Real>
EvalReport perturb_eval(const net::PolicyValueNet<Real>& policy,
                        const env::TargetShape& target, int m,
                        const EvalOptions& opt) {
  if (m < 0) throw std::invalid_argument("runner: m must be >= 0");
  if (opt.episodes <= 0)
    throw std::invalid_argument("runner: episodes must be positive");
  episode_config(policy, target, opt, 0);
  const int n = opt.episodes;
  std::vector<EpisodeStats> stats(static_cast<size_t>(n));
  std::vector<long long> resampled(size_t(n), 0);
  run_workers(
      [&](std::atomic<int>& cursor) {
        for (int e = cursor.fetch_add(1); e < n; e = cursor.fetch_add(1)) {
          Rng walk(derive_seed(opt.seed, 2 * uint64_t(e)));
          env::CubesEnv env(episode_config(
              policy, target, opt, derive_seed(opt.seed, 2 * uint64_t(e))));
          env::StepResult res;
          for (int attempt = 0;; ++attempt) {
            sim::Ensemble ens = sim::Ensemble::from_cells(target.cells);
            for (int i = 0; i < m; ++i) apply_random_move(ens, walk);
            res = env.reset_to(ens.coords());
            // A walk may wander back onto a symmetry image of the target;
            // those starts teach nothing, so draw a fresh walk and log it.
            if (m == 0 || !env.done() || attempt >= 200) break;
            ++resampled[size_t(e)];
          }
          Rng act(derive_seed(opt.seed, 2 * uint64_t(e) + 1));
          stats[size_t(e)] = run_episode(policy, env, res, opt.mode, act,
                                         nullptr, "", nullptr);
        }
      },
      opt.threads);
  EvalReport rep;
  rep.n_episodes = n;
  for (const EpisodeStats& s : stats)
    if (s.success) {
      ++rep.successes;
      rep.moves.push_back(s.steps);
    }
  for (long long c : resampled) rep.resamples += c;
  finalize_report(rep, target.o_max());
  return rep;
}

template <typename Real>
MorphReport morph(const std::vector<MorphPhase<Real>>& phases,
                  const std::vector<CellCoord>& start_cells,
                  const EvalOptions& opt) {
  if (phases.empty())
    throw std::invalid_argument("runner: morph needs at least one phase");
  for (const MorphPhase<Real>& ph : phases) {
    if (!ph.policy)
      throw std::invalid_argument("runner: morph phase without a policy");
    if (ph.target.o_max() != int(start_cells.size()))
      throw std::invalid_argument(
          "runner: phase target '" + ph.target.name + "' has " +
          std::to_string(ph.target.o_max()) + " cells but the run starts with " +
          std::to_string(start_cells.size()));
  }
  MorphReport rep;
  rep.success = true;
  std::vector<CellCoord> cells = start_cells;
  int global_step = 0;
  io::TraceRecord init;
  init.step = 0;
  init.cube = -1;
  init.outcome = "init";
  init.coords_after = cells;
  init.phase = phase_label(1, phases[0].target.name);
  rep.trace.push_back(init);
  for (size_t p = 0; p < phases.size(); ++p) {
    const MorphPhase<Real>& ph = phases[p];
    const std::string label = phase_label(int(p) + 1, ph.target.name);
    env::CubesEnv env(episode_config(*ph.policy, ph.target, opt,
                                     derive_seed(opt.seed, 1000 + p)));
    env::StepResult res = env.reset_to(cells);
    Rng act(derive_seed(opt.seed, p));
    const EpisodeStats st = run_episode(*ph.policy, env, res, opt.mode, act,
                                        &rep.trace, label, &global_step);
    cells = env.state().coords();
    rep.phases.push_back({ph.target.name, st.success, st.steps});
    rep.total_steps += st.steps;
    if (!st.success) {
      rep.success = false;
      rep.trace.back().phase += ":incomplete";
      break;
    }
  }
  return rep;
}

std::string manifest_json(const std::string& command,
                          const std::string& config_json,
                          const std::vector<uint64_t>& seeds,
                          const std::string& outputs_json) {
  json j;
  j["command"] = command;
  j["config"] = json::parse(config_json);
  j["seeds"] = seeds;
  j["build"] = {
      {"project", "cubes 1.0.0"},
      {"compiler", __VERSION__},
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                    std::to_string(EIGEN_MAJOR_VERSION) + "." +
                    std::to_string(EIGEN_MINOR_VERSION)},
  };
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm);
  j["timestamp_utc"] = stamp;
  j["outputs"] = json::parse(outputs_json);
  return j.dump(2) + "\n";
}

template EvalReport evaluate(const net::PolicyValueNet<float>&,
                             const env::TargetShape&, const EvalOptions&);
template EvalReport evaluate(const net::PolicyValueNet<double>&,
                             const env::TargetShape&, const EvalOptions&);
template EvalReport perturb_eval(const net::PolicyValueNet<float>&,
                                 const env::TargetShape&, int,
                                 const EvalOptions&);
template EvalReport perturb_eval(const net::PolicyValueNet<double>&,
                                 const env::TargetShape&, int,
                                 const EvalOptions&);
template MorphReport morph(const std::vector<MorphPhase<float>>&,
                           const std::vector<CellCoord>&, const EvalOptions&);
template MorphReport morph(const std::vector<MorphPhase<double>>&,
                           const std::vector<CellCoord>&, const EvalOptions&);

}  // namespace cubes::run
