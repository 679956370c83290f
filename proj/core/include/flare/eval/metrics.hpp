#pragma once

#include <string>
#include <vector>

#include "flare/env/envpool.hpp"
#include "flare/policy/model.hpp"

namespace flare::eval {

// Episode-length weighted success: 0 on failure, lstar/max(steps, lstar) on
// success, so 1 means the agent was at least as fast as the planner.
float sel(bool success, int steps, int lstar);

struct EpisodeRecord {
  uint64_t house_seed = 0;
  bool success = false;
  int steps = 0;
  int lstar = 0;
  int collisions = 0;
  float reward_sum = 0.f;
  float sel = 0.f;
};

struct EvalReport {
  std::string task;
  std::string checkpoint_id;
  int episodes = 0;
  float sr = 0.f;
  float mean_sel = 0.f;
  float mean_len = 0.f;
  float mean_collisions = 0.f;
  float mean_return = 0.f;
  env::SeedRange houses{};
  std::vector<EpisodeRecord> records;
};

// Rolls the policy over freshly sampled episodes; greedy selects argmax
// actions, otherwise actions are sampled from the masked distribution.
EvalReport evaluate(const policy::PolicyNet& net, env::TaskKind kind, int n_episodes,
                    env::SeedRange houses, uint64_t seed, bool greedy = true,
                    env::Embodiment emb = env::Embodiment::A,
                    env::ShapingFlags shaping = {}, std::string checkpoint_id = "");

// Replays the planner's own actions; the ceiling every policy is scored against.
EvalReport evaluate_expert(env::TaskKind kind, int n_episodes, env::SeedRange houses,
                           uint64_t seed, env::Embodiment emb = env::Embodiment::A);

// Uniform choice over the valid action set; the floor.
EvalReport evaluate_random(env::TaskKind kind, int n_episodes, env::SeedRange houses,
                           uint64_t seed, env::Embodiment emb = env::Embodiment::A);

}  // namespace flare::eval
