#include "cubes/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "cubes/shape_io.hpp"

namespace cubes::rl {

template <typename Real>
MaskedDist masked_categorical(const std::vector<Real>& logits,
                              const std::vector<uint8_t>& mask) {
  if (logits.size() != mask.size())
    throw std::invalid_argument("masked_categorical: logits/mask size mismatch");
  MaskedDist d;
  d.probs.assign(logits.size(), 0.0);
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) mx = std::max(mx, double(logits[i]));
  if (!std::isfinite(mx))
    throw std::invalid_argument("masked_categorical: every action is masked");
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) {
      const double e = std::exp(double(logits[i]) - mx);
      d.probs[i] = e;
      z += e;
    }
  for (size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) {
      const double p = d.probs[i] / z;
      d.probs[i] = p;
      if (p > 0.0) d.entropy -= p * std::log(p);
    }
  return d;
}

int sample(const MaskedDist& dist, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int last = -1;
  for (size_t i = 0; i < dist.probs.size(); ++i) {
    if (dist.probs[i] <= 0.0) continue;
    last = int(i);
    acc += dist.probs[i];
    if (u < acc) return int(i);
  }
  if (last < 0) throw std::logic_error("sample: distribution has no mass");
  return last;  // u landed in the round-off sliver past the final cumulant
}

template <typename Real>
void RolloutBuffer<Real>::resize(int n_envs_, int horizon_) {
  if (n_envs_ < 1 || horizon_ < 1)
    throw std::invalid_argument("rollout buffer: need n_envs >= 1 and horizon >= 1");
  n_envs = n_envs_;
  horizon = horizon_;
  const size_t n = size_t(n_envs) * horizon;
  obs.assign(n, {});
  masks.assign(n, {});
  actions.assign(n, 0);
  log_probs.assign(n, Real(0));
  values.assign(n, Real(0));
  rewards.assign(n, Real(0));
  dones.assign(n, 0);
  advantages.assign(n, Real(0));
  returns.assign(n, Real(0));
}

template <typename Real>
void compute_gae(RolloutBuffer<Real>& buf, const std::vector<Real>& bootstrap,
                 double discount, double gae_lambda) {
  if (int(bootstrap.size()) != buf.n_envs)
    throw std::invalid_argument("compute_gae: one bootstrap value per env required");
  for (int e = 0; e < buf.n_envs; ++e) {
    double gae = 0.0;
    for (int t = buf.horizon - 1; t >= 0; --t) {
      const size_t i = size_t(t) * buf.n_envs + e;
      const double nonterminal = buf.dones[i] ? 0.0 : 1.0;
      const double next_v = (t + 1 < buf.horizon)
                                ? double(buf.values[i + buf.n_envs])
                                : double(bootstrap[size_t(e)]);
      const double delta =
          double(buf.rewards[i]) + discount * nonterminal * next_v - double(buf.values[i]);
      gae = delta + discount * gae_lambda * nonterminal * gae;
      buf.advantages[i] = Real(gae);
      buf.returns[i] = Real(gae + double(buf.values[i]));
    }
  }
}

template <typename Real>
Adam<Real>::Adam(size_t n, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

template <typename Real>
void Adam<Real>::step(net::ParamVector<Real>& params,
                      const net::ParamVector<Real>& grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw std::invalid_argument("adam: parameter count changed under the optimizer");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (size_t i = 0; i < m_.size(); ++i) {
    const double g = double(grads[i]);
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    params[i] = Real(double(params[i]) - lr * mhat / (std::sqrt(vhat) + eps_));
  }
}

template <typename Real>
LossStats ppo_loss(net::PolicyValueNet<Real>& net, const RolloutBuffer<Real>& buf,
                   const std::vector<int>& indices, const PPOConfig& cfg) {
  if (indices.empty()) throw std::invalid_argument("ppo_loss: empty minibatch");
  const size_t m = indices.size();
  const double inv_m = 1.0 / double(m);

  std::vector<const net::SparseObs*> batch(m);
  for (size_t j = 0; j < m; ++j) batch[j] = &buf.obs[size_t(indices[j])];
  net::ForwardTrace<Real> trace;
  net.forward(batch, trace);

  LossStats st;
  std::vector<std::vector<Real>> dlogits(m);
  std::vector<Real> dvalues(m, Real(0));
  long long clipped = 0;

  for (size_t j = 0; j < m; ++j) {
    const size_t i = size_t(indices[j]);
    const MaskedDist dist = masked_categorical(trace.logits[j], buf.masks[i]);
    const int a = buf.actions[i];

    const double ratio = std::exp(dist.log_prob(a) - double(buf.log_probs[i]));
    const double adv = double(buf.advantages[i]);
    const double surr1 = ratio * adv;
    const double ratio_cl =
        std::clamp(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range);
    const double surr2 = ratio_cl * adv;
    st.policy += -std::min(surr1, surr2) * inv_m;
    // When the clipped branch is strictly lower the ratio sits outside the
    // trust region on the wrong side, so the sample contributes no gradient.
    const double g_lp = (surr2 < surr1) ? 0.0 : -adv * ratio;
    if (std::abs(ratio - 1.0) > cfg.clip_range) ++clipped;
    st.approx_kl += ((ratio - 1.0) - std::log(ratio)) * inv_m;

    const double vdiff = double(trace.values[j]) - double(buf.returns[i]);
    st.value += vdiff * vdiff * inv_m;
    dvalues[j] = Real(cfg.value_coef * 2.0 * vdiff * inv_m);

    st.entropy += dist.entropy * inv_m;
    std::vector<Real>& dl = dlogits[j];
    dl.assign(dist.probs.size(), Real(0));
    for (size_t c = 0; c < dist.probs.size(); ++c) {
      const double p = dist.probs[c];
      double g = g_lp * ((int(c) == a ? 1.0 : 0.0) - p);
      if (p > 0.0) g += cfg.entropy_coef * p * (std::log(p) + dist.entropy);
      dl[c] = Real(g * inv_m);
    }
  }
  st.clip_fraction = double(clipped) * inv_m;
  st.total = st.policy + cfg.value_coef * st.value - cfg.entropy_coef * st.entropy;
  if (!std::isfinite(st.total)) {
    std::ostringstream os;
    os << "ppo_loss: non-finite objective (policy=" << st.policy
       << ", value=" << st.value << ", entropy=" << st.entropy
       << ", clip_fraction=" << st.clip_fraction << ", approx_kl=" << st.approx_kl
       << ", minibatch=" << m << ")";
    throw std::runtime_error(os.str());
  }

  net.backward(trace, dlogits, dvalues);
  return st;
}

template <typename Real>
UpdateStats ppo_update(net::PolicyValueNet<Real>& net, RolloutBuffer<Real>& buf,
                       const PPOConfig& cfg, Adam<Real>& adam, Rng& rng) {
  const int n = buf.size();
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += double(buf.advantages[size_t(i)]);
  mean /= double(n);
  double var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = double(buf.advantages[size_t(i)]) - mean;
    var += d * d;
  }
  const double sd = std::max(std::sqrt(var / double(n)), 1e-8);
  for (int i = 0; i < n; ++i)
    buf.advantages[size_t(i)] = Real((double(buf.advantages[size_t(i)]) - mean) / sd);

  std::vector<int> order(size_t(n), 0);
  for (int i = 0; i < n; ++i) order[size_t(i)] = i;

  UpdateStats agg;
  int batches = 0;
  std::vector<int> chunk;
  for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
    rng.shuffle(order);
    for (int start = 0; start < n; start += cfg.minibatch_size) {
      const int stop = std::min(start + cfg.minibatch_size, n);
      chunk.assign(order.begin() + start, order.begin() + stop);
      net.zero_grads();
      const LossStats st = ppo_loss(net, buf, chunk, cfg);

      net::ParamVector<Real>& grads = net.grads();
      double norm2 = 0.0;
      for (const Real g : grads) norm2 += double(g) * double(g);
      const double norm = std::sqrt(norm2);
      if (norm > cfg.max_grad_norm && norm > 0.0) {
        const Real scale = Real(cfg.max_grad_norm / norm);
        for (Real& g : grads) g *= scale;
      }
      adam.step(net.params(), grads, cfg.learning_rate);

      agg.loss.total += st.total;
      agg.loss.policy += st.policy;
      agg.loss.value += st.value;
      agg.loss.entropy += st.entropy;
      agg.loss.clip_fraction += st.clip_fraction;
      agg.loss.approx_kl += st.approx_kl;
      agg.grad_norm += norm;
      ++batches;
    }
  }
  const double inv_b = 1.0 / double(batches);
  agg.loss.total *= inv_b;
  agg.loss.policy *= inv_b;
  agg.loss.value *= inv_b;
  agg.loss.entropy *= inv_b;
  agg.loss.clip_fraction *= inv_b;
  agg.loss.approx_kl *= inv_b;
  agg.grad_norm *= inv_b;
  return agg;
}

namespace {

net::NetConfig bind_net_config(net::NetConfig net_cfg, const env::EnvConfig& env_cfg) {
  net_cfg.n_cubes = env_cfg.n_cubes;
  net_cfg.canvas_side = env_cfg.canvas_side;
  net_cfg.max_steps = env_cfg.max_steps;
  net_cfg.shape_name = env_cfg.target.name;
  return net_cfg;
}

}  // namespace

template <typename Real>
Trainer<Real>::Trainer(env::EnvConfig env_cfg, net::NetConfig net_cfg, PPOConfig ppo_cfg)
    : env_cfg_(std::move(env_cfg)),
      ppo_(ppo_cfg),
      net_(bind_net_config(std::move(net_cfg), env_cfg_), derive_seed(ppo_cfg.seed, 0)) {
  if (ppo_.total_steps < 1 || ppo_.n_envs < 1 || ppo_.steps_per_rollout < 1 ||
      ppo_.epochs_per_update < 1 || ppo_.minibatch_size < 1)
    throw std::invalid_argument("trainer: all loop sizes must be positive");
}

template <typename Real>
TrainSummary Trainer<Real>::run(const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const int k = net_.config().k;
  const int n_envs = ppo_.n_envs;
  const int horizon = ppo_.steps_per_rollout;
  const long long per_rollout = (long long)n_envs * horizon;
  const int updates_total = int((ppo_.total_steps + per_rollout - 1) / per_rollout);

  std::vector<env::CubesEnv> envs;
  envs.reserve(size_t(n_envs));
  for (int e = 0; e < n_envs; ++e) {
    env::EnvConfig c = env_cfg_;
    c.seed = derive_seed(ppo_.seed, 100 + uint64_t(e));
    envs.emplace_back(std::move(c));
  }

  std::vector<net::SparseObs> cur_obs;
  cur_obs.resize(size_t(n_envs));
  std::vector<std::vector<uint8_t>> cur_mask;
  cur_mask.resize(size_t(n_envs));
  auto fresh_episode = [&](int e) {
    env::StepResult r = envs[size_t(e)].reset();
    for (int tries = 0; r.done; ++tries) {
      if (tries >= 1000)
        throw std::runtime_error("trainer: every reset starts at the target; nothing to learn");
      r = envs[size_t(e)].reset();
    }
    cur_obs[size_t(e)] = net::build_sparse_obs(r.observation, k);
    cur_mask[size_t(e)] = std::move(r.mask);
  };
  for (int e = 0; e < n_envs; ++e) fresh_episode(e);

  RolloutBuffer<Real> buf;
  buf.resize(n_envs, horizon);
  Adam<Real> adam(net_.param_count());
  Rng act_rng(derive_seed(ppo_.seed, 1));
  Rng shuffle_rng(derive_seed(ppo_.seed, 2));

  std::vector<double> ep_reward(size_t(n_envs), 0.0);
  std::vector<long long> ep_len(size_t(n_envs), 0);
  const int o_max = env_cfg_.target.o_max();

  const std::string metrics_path = out_dir + "/metrics.jsonl";
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw std::runtime_error("trainer: cannot open " + metrics_path);

  std::vector<std::string> checkpoints;
  TrainSummary summary;
  net::ForwardTrace<Real> trace;
  std::vector<const net::SparseObs*> batch(size_t(n_envs), nullptr);

  for (int u = 1; u <= updates_total; ++u) {
    long long rollout_eps = 0, rollout_succ = 0, rollout_moves = 0;
    double rollout_rew = 0.0;
    for (int t = 0; t < horizon; ++t) {
      for (int e = 0; e < n_envs; ++e) batch[size_t(e)] = &cur_obs[size_t(e)];
      net_.forward(batch, trace);
      for (int e = 0; e < n_envs; ++e) {
        const size_t idx = size_t(t) * n_envs + e;
        const MaskedDist dist =
            masked_categorical(trace.logits[size_t(e)], cur_mask[size_t(e)]);
        const int a = sample(dist, act_rng);
        buf.obs[idx] = cur_obs[size_t(e)];
        buf.masks[idx] = cur_mask[size_t(e)];
        buf.actions[idx] = a;
        buf.log_probs[idx] = Real(dist.log_prob(a));
        buf.values[idx] = trace.values[size_t(e)];
        env::StepResult sr = envs[size_t(e)].step(a);
        buf.rewards[idx] = Real(sr.reward);
        buf.dones[idx] = sr.done ? 1 : 0;
        ep_reward[size_t(e)] += sr.reward;
        ++ep_len[size_t(e)];
        if (sr.done) {
          ++rollout_eps;
          ++summary.episodes;
          rollout_rew += ep_reward[size_t(e)];
          if (sr.overlap == o_max) {
            ++rollout_succ;
            rollout_moves += ep_len[size_t(e)];
          }
          ep_reward[size_t(e)] = 0.0;
          ep_len[size_t(e)] = 0;
          fresh_episode(e);
        } else {
          cur_obs[size_t(e)] = net::build_sparse_obs(sr.observation, k);
          cur_mask[size_t(e)] = std::move(sr.mask);
        }
      }
    }
    for (int e = 0; e < n_envs; ++e) batch[size_t(e)] = &cur_obs[size_t(e)];
    net_.forward(batch, trace);
    compute_gae(buf, trace.values, ppo_.discount, ppo_.gae_lambda);
    const UpdateStats us = ppo_update(net_, buf, ppo_, adam, shuffle_rng);

    summary.env_steps += per_rollout;
    summary.updates = u;
    const double succ_rate =
        rollout_eps ? double(rollout_succ) / double(rollout_eps) : 0.0;
    summary.last_success_rate = succ_rate;

    const nlohmann::json line{
        {"update", u},
        {"env_steps", summary.env_steps},
        {"episodes", rollout_eps},
        {"episodes_total", summary.episodes},
        {"success_rate", succ_rate},
        {"mean_episode_reward", rollout_eps ? rollout_rew / double(rollout_eps) : 0.0},
        {"mean_success_moves",
         rollout_succ ? double(rollout_moves) / double(rollout_succ) : 0.0},
        {"policy_loss", us.loss.policy},
        {"value_loss", us.loss.value},
        {"entropy", us.loss.entropy},
        {"total_loss", us.loss.total},
        {"clip_fraction", us.loss.clip_fraction},
        {"approx_kl", us.loss.approx_kl},
        {"grad_norm", us.grad_norm},
    };
    metrics << line.dump() << '\n';

    if (ppo_.checkpoint_every > 0 && u % ppo_.checkpoint_every == 0 &&
        u != updates_total) {
      char name[64];
      std::snprintf(name, sizeof name, "policy_%06d.ckpt", u);
      net_.save(out_dir + "/" + name);
      checkpoints.emplace_back(name);
    }
  }
  metrics.close();

  const std::string final_name = "policy_final.ckpt";
  net_.save(out_dir + "/" + final_name);
  checkpoints.push_back(final_name);
  const nlohmann::json index{{"checkpoints", checkpoints},
                             {"final", final_name},
                             {"metrics", "metrics.jsonl"},
                             {"updates", updates_total},
                             {"env_steps", summary.env_steps},
                             {"episodes", summary.episodes}};
  io::atomic_write_file(out_dir + "/index.json", index.dump(2) + "\n");

  summary.final_checkpoint = out_dir + "/" + final_name;
  summary.metrics_path = metrics_path;
  return summary;
}

template MaskedDist masked_categorical<float>(const std::vector<float>&,
                                              const std::vector<uint8_t>&);
template MaskedDist masked_categorical<double>(const std::vector<double>&,
                                               const std::vector<uint8_t>&);
template struct RolloutBuffer<float>;
template struct RolloutBuffer<double>;
template void compute_gae<float>(RolloutBuffer<float>&, const std::vector<float>&,
                                 double, double);
template void compute_gae<double>(RolloutBuffer<double>&, const std::vector<double>&,
                                  double, double);
template class Adam<float>;
template class Adam<double>;
template LossStats ppo_loss<float>(net::PolicyValueNet<float>&,
                                   const RolloutBuffer<float>&,
                                   const std::vector<int>&, const PPOConfig&);
template LossStats ppo_loss<double>(net::PolicyValueNet<double>&,
                                    const RolloutBuffer<double>&,
                                    const std::vector<int>&, const PPOConfig&);
template UpdateStats ppo_update<float>(net::PolicyValueNet<float>&,
                                       RolloutBuffer<float>&, const PPOConfig&,
                                       Adam<float>&, Rng&);
template UpdateStats ppo_update<double>(net::PolicyValueNet<double>&,
                                        RolloutBuffer<double>&, const PPOConfig&,
                                        Adam<double>&, Rng&);
template class Trainer<float>;
template class Trainer<double>;

}  // namespace cubes::rl
