#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "flare/env/envpool.hpp"
#include "flare/policy/model.hpp"
#include "flare/rng.hpp"

namespace flare::rl {

// How the policy's attention context treats episode steps that happened
// before the current collection window.
//  - Window: the context restarts at every window boundary, during collection
//    and updates alike, so both sides see identical histories.
//  - FullReplay: the pre-window episode prefix is replayed under the current
//    parameters (gradient-free) to rebuild the caches, and update passes get
//    the same prefix as frozen K/V context.
enum class ContextMode { Window, FullReplay };

struct WorkerStep {
  env::Observation obs;
  int prev_action = policy::kStartAction;
  int action = 0;
  int ep_t = 0;  // step index within the episode
  float logp = 0.f;   // behavior log-prob under the collection snapshot
  float value = 0.f;  // critic value of obs under the collection snapshot
  float reward = 0.f;  // simulator reward only (sparse + enabled shaping)
  // Critic value of the terminal observation when this step hit the episode
  // step limit; folded into the reward as gamma * trunc_value for advantage
  // estimation. Zero for genuine terminals and non-final steps.
  float trunc_value = 0.f;
  bool done = false;
  std::array<uint8_t, env::kNumActions> valid{};
};

struct RolloutBatch {
  int workers = 0;
  int steps = 0;
  std::vector<std::vector<WorkerStep>> w;  // [workers][steps]
  std::vector<float> bootstrap;            // [workers], value after the last step
  // FullReplay only: this episode's pre-window history per worker (empty
  // vectors when the worker started a fresh episode inside the window).
  std::vector<std::vector<env::Observation>> prefix_obs;
  std::vector<std::vector<int>> prefix_actions;
  int episodes_finished = 0;
  int successes = 0;
  // Mean sparse return over episodes that finished inside the window (equal
  // to the success fraction while rewards stay binary).
  double mean_sparse_return() const {
    return episodes_finished ? static_cast<double>(successes) / episodes_finished : 0.0;
  }
};

// Steps a fixed pool of environments with per-worker decoder caches, carrying
// live episodes across successive windows. Pass the same net as actor and
// critic to run one shared trunk (values from its critic head); distinct nets
// keep their own caches and step in lockstep.
class Collector {
 public:
  Collector(env::TaskKind kind, int n_envs, uint64_t seed, env::SeedRange houses,
            env::ShapingFlags shaping = {}, env::Embodiment emb = env::Embodiment::A,
            ContextMode mode = ContextMode::Window);

  RolloutBatch collect(const policy::PolicyNet& actor, const policy::PolicyNet& critic,
                       int steps, Rng& rng);

  env::EnvPool& pool() { return pool_; }
  ContextMode mode() const { return mode_; }
  int64_t env_steps() const { return env_steps_; }

 private:
  struct Worker {
    policy::KVCache actor_cache, critic_cache;
    int prev_action = policy::kStartAction;
    int ep_t = 0;    // true episode step
    int pos_t = 0;   // decoder position (equals ep_t except after a Window cut)
    uint64_t episode_id = 0;
    std::vector<env::Observation> history_obs;  // episode so far (FullReplay)
    std::vector<int> history_actions;
  };

  void begin_window(const policy::PolicyNet& actor, const policy::PolicyNet& critic);
  void reset_worker(Worker& w);

  env::EnvPool pool_;
  ContextMode mode_;
  std::vector<Worker> workers_;
  int64_t env_steps_ = 0;
  uint64_t next_episode_id_ = 1;
};

}  // namespace flare::rl
