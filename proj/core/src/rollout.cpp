#include "flare/rl/rollout.hpp"

#include <string>

#include "flare/error.hpp"

namespace flare::rl {

using policy::KVCache;
using policy::PolicyNet;

Collector::Collector(env::TaskKind kind, int n_envs, uint64_t seed, env::SeedRange houses,
                     env::ShapingFlags shaping, env::Embodiment emb, ContextMode mode)
    : pool_(kind, n_envs, seed, houses, shaping, emb), mode_(mode) {
  workers_.resize(static_cast<size_t>(n_envs));
  for (auto& w : workers_) {
    w.episode_id = next_episode_id_++;
    w.actor_cache.reset(w.episode_id);
    w.critic_cache.reset(w.episode_id);
  }
}

void Collector::reset_worker(Worker& w) {
  w.episode_id = next_episode_id_++;
  w.actor_cache.reset(w.episode_id);
  w.critic_cache.reset(w.episode_id);
  w.prev_action = policy::kStartAction;
  w.ep_t = 0;
  w.pos_t = 0;
  w.history_obs.clear();
  w.history_actions.clear();
}

// At a window boundary the caches hold K/V rows computed under the previous
// parameter snapshot, so they cannot simply be extended. Window mode restarts
// the context; FullReplay rebuilds it by replaying the episode so far.
void Collector::begin_window(const PolicyNet& actor, const PolicyNet& critic) {
  const bool shared = &actor == &critic;
  for (auto& w : workers_) {
    if (mode_ == ContextMode::Window) {
      w.actor_cache.reset(w.episode_id);
      if (!shared) w.critic_cache.reset(w.episode_id);
      w.pos_t = 0;
      continue;
    }
    w.actor_cache.reset(w.episode_id);
    if (!shared) w.critic_cache.reset(w.episode_id);
    w.pos_t = w.ep_t;
    int prev = policy::kStartAction;
    for (size_t t = 0; t < w.history_obs.size(); t++) {
      const env::Observation& o = w.history_obs[t];
      actor.decoder_step(actor.encode_one(o), prev, static_cast<int>(t), w.actor_cache);
      if (!shared)
        critic.decoder_step(critic.encode_one(o), prev, static_cast<int>(t),
                            w.critic_cache);
      prev = w.history_actions[t];
    }
  }
}

RolloutBatch Collector::collect(const PolicyNet& actor, const PolicyNet& critic, int steps,
                                Rng& rng) {
  if (steps < 1) throw ContractError("collect: steps must be positive");
  const bool shared = &actor == &critic;
  const int n = pool_.size();
  begin_window(actor, critic);

  RolloutBatch batch;
  batch.workers = n;
  batch.steps = steps;
  batch.w.assign(static_cast<size_t>(n), {});
  for (auto& stream : batch.w) stream.reserve(static_cast<size_t>(steps));
  batch.bootstrap.assign(static_cast<size_t>(n), 0.f);
  if (mode_ == ContextMode::FullReplay) {
    batch.prefix_obs.resize(static_cast<size_t>(n));
    batch.prefix_actions.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; i++) {
      batch.prefix_obs[static_cast<size_t>(i)] = workers_[static_cast<size_t>(i)].history_obs;
      batch.prefix_actions[static_cast<size_t>(i)] =
          workers_[static_cast<size_t>(i)].history_actions;
    }
  }

  for (int t = 0; t < steps; t++) {
    for (int i = 0; i < n; i++) {
      Worker& w = workers_[static_cast<size_t>(i)];
      const env::Observation obs = pool_.obs(i);
      const auto valid = pool_.env(i).embodiment().valid;

      std::vector<float> belief =
          actor.decoder_step(actor.encode_one(obs), w.prev_action, w.pos_t, w.actor_cache);
      float value;
      if (shared) {
        value = actor.value_of(belief);
      } else {
        std::vector<float> cb = critic.decoder_step(critic.encode_one(obs), w.prev_action,
                                                    w.pos_t, w.critic_cache);
        value = critic.value_of(cb);
      }
      policy::ActResult ar = actor.act(belief, valid, false, &rng);

      env::StepResult sr = pool_.step(i, ar.action);
      env_steps_++;

      WorkerStep rec;
      rec.obs = obs;
      rec.prev_action = w.prev_action;
      rec.action = ar.action;
      rec.ep_t = w.ep_t;
      rec.logp = ar.log_prob;
      rec.value = value;
      rec.reward = sr.reward;
      rec.done = sr.done;
      rec.valid = valid;

      if (sr.done) {
        batch.episodes_finished++;
        if (sr.success) batch.successes++;
        if (sr.timeout) {
          // Truncation: the episode was cut by the step limit, not by the
          // task, so the value of the terminal state still backs up. When the
          // terminal observation would sit one past the decoder context (step
          // limit == context), the previous step's value stands in.
          if (w.pos_t + 1 >= actor.config().context) {
            rec.trunc_value = value;
          } else if (shared) {
            std::vector<float> tb = actor.decoder_step(actor.encode_one(sr.obs), ar.action,
                                                       w.pos_t + 1, w.actor_cache);
            rec.trunc_value = actor.value_of(tb);
          } else {
            std::vector<float> tb = critic.decoder_step(critic.encode_one(sr.obs), ar.action,
                                                        w.pos_t + 1, w.critic_cache);
            rec.trunc_value = critic.value_of(tb);
          }
        }
        reset_worker(w);
      } else {
        if (mode_ == ContextMode::FullReplay) {
          w.history_obs.push_back(obs);
          w.history_actions.push_back(ar.action);
        }
        w.prev_action = ar.action;
        w.ep_t++;
        w.pos_t++;
      }
      batch.w[static_cast<size_t>(i)].push_back(std::move(rec));
    }
  }

  // Bootstrap values for episodes still running at the window end. The cache
  // append is harmless: every cache is reset or rebuilt at the next window.
  for (int i = 0; i < n; i++) {
    Worker& w = workers_[static_cast<size_t>(i)];
    if (batch.w[static_cast<size_t>(i)].back().done) continue;
    const env::Observation& obs = pool_.obs(i);
    if (shared) {
      std::vector<float> b =
          actor.decoder_step(actor.encode_one(obs), w.prev_action, w.pos_t, w.actor_cache);
      batch.bootstrap[static_cast<size_t>(i)] = actor.value_of(b);
    } else {
      std::vector<float> b = critic.decoder_step(critic.encode_one(obs), w.prev_action,
                                                 w.pos_t, w.critic_cache);
      batch.bootstrap[static_cast<size_t>(i)] = critic.value_of(b);
    }
  }
  return batch;
}

}  // namespace flare::rl
