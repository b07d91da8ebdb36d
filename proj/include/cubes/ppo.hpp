#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cubes/env.hpp"
#include "cubes/net.hpp"
#include "cubes/rng.hpp"

namespace cubes::rl {

// Categorical distribution over 2N actions with hard masking: masked entries
// carry probability exactly 0 and contribute exactly 0 to the entropy. The
// softmax runs in double no matter the network precision.
struct MaskedDist {
  std::vector<double> probs;
  double entropy = 0;

  double log_prob(int a) const { return std::log(probs[size_t(a)]); }
};

template <typename Real>
MaskedDist masked_categorical(const std::vector<Real>& logits,
                              const std::vector<uint8_t>& mask);

// Draws from the renormalized unmasked distribution; at least one entry must
// be unmasked. Masked actions can never come out (their mass is exactly 0).
int sample(const MaskedDist& dist, Rng& rng);

struct PPOConfig {
  long long total_steps = 40000;
  int n_envs = 8;
  int steps_per_rollout = 128;
  int epochs_per_update = 10;
  int minibatch_size = 64;
  double learning_rate = 3e-4;
  double clip_range = 0.2;
  double discount = 0.99;
  double gae_lambda = 0.95;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;
  int checkpoint_every = 20;  // updates between periodic checkpoints
  uint64_t seed = 12345;
};

// Time-major transition storage: slot t * n_envs + e.
template <typename Real>
struct RolloutBuffer {
  int n_envs = 0, horizon = 0;
  std::vector<net::SparseObs> obs;
  std::vector<std::vector<uint8_t>> masks;
  std::vector<int> actions;
  std::vector<Real> log_probs, values, rewards;
  std::vector<uint8_t> dones;  // transition ended its episode
  std::vector<Real> advantages, returns;

  int size() const { return n_envs * horizon; }
  void resize(int n_envs_, int horizon_);
};

// Recursive GAE with episode-boundary resets; returns = advantages + values.
// bootstrap[e] is V(s_T) of env e's observation after the last transition
// (ignored where that transition finished the episode).
template <typename Real>
void compute_gae(RolloutBuffer<Real>& buf, const std::vector<Real>& bootstrap,
                 double discount, double gae_lambda);

// First-order adaptive-moment optimizer (bias-corrected running moments).
template <typename Real>
class Adam {
 public:
  Adam(size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-5);
  void step(net::ParamVector<Real>& params, const net::ParamVector<Real>& grads,
            double lr);

 private:
  double beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<double> m_, v_;
};

struct LossStats {
  double total = 0, policy = 0, value = 0, entropy = 0;
  double clip_fraction = 0, approx_kl = 0;
};

// One minibatch of the PPO objective: clipped surrogate + value_coef * value
// MSE - entropy_coef * masked entropy. Accumulates d(total)/d(params) into
// net.grads() (callers zero them). Advantages must arrive normalized.
template <typename Real>
LossStats ppo_loss(net::PolicyValueNet<Real>& net, const RolloutBuffer<Real>& buf,
                   const std::vector<int>& indices, const PPOConfig& cfg);

struct UpdateStats {
  LossStats loss;        // means over all minibatches of the update
  double grad_norm = 0;  // mean pre-clip global gradient norm
};

// Full update phase: per-update advantage normalization, epochs x shuffled
// minibatches, gradient-norm clipping, optimizer steps.
template <typename Real>
UpdateStats ppo_update(net::PolicyValueNet<Real>& net, RolloutBuffer<Real>& buf,
                       const PPOConfig& cfg, Adam<Real>& adam, Rng& rng);

struct TrainSummary {
  long long env_steps = 0;
  int updates = 0;
  long long episodes = 0;
  double last_success_rate = 0;
  std::string final_checkpoint;
  std::string metrics_path;
};

// Rollout/update training loop over n_envs sequentially-stepped environments
// (fixed order, so runs are bit-reproducible for a given seed and build).
// Writes metrics as JSON-lines plus periodic/final checkpoints and an index.
template <typename Real>
class Trainer {
 public:
  Trainer(env::EnvConfig env_cfg, net::NetConfig net_cfg, PPOConfig ppo_cfg);

  TrainSummary run(const std::string& out_dir);
  net::PolicyValueNet<Real>& policy() { return net_; }

 private:
  env::EnvConfig env_cfg_;
  PPOConfig ppo_;
  net::PolicyValueNet<Real> net_;
};

}  // namespace cubes::rl
