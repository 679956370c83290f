#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "flare/env/types.hpp"
#include "flare/grad/optim.hpp"
#include "flare/policy/model.hpp"
#include "flare/rng.hpp"

namespace flare::rl {

// Off-policy baseline: discrete soft actor-critic over single observations
// (no decoder memory; each forward sees one step of context). Twin Q networks
// reuse the policy architecture with the 20-way head read as Q values.
struct SacConfig {
  float gamma = 0.99f;
  float tau = 0.005f;    // Polyak rate for the target networks
  float alpha = 0.01f;   // fixed entropy temperature
  float lr = 2e-4f;
  float max_grad_norm = 0.5f;
  int batch = 64;
  int buffer_capacity = 100'000;
  int updates_per_window = 64;
  void validate() const;
};

struct Transition {
  env::Observation obs, next_obs;
  int prev_action = policy::kStartAction;
  int action = 0;
  int next_prev_action = 0;
  float reward = 0.f;
  bool done = false;
  std::array<uint8_t, env::kNumActions> valid{}, next_valid{};
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity);
  void push(const Transition& t);
  int size() const { return static_cast<int>(data_.size()); }
  const Transition& at(int i) const { return data_[static_cast<size_t>(i)]; }

 private:
  size_t cap_;
  size_t head_ = 0;
  std::vector<Transition> data_;
};

struct SacAgent {
  policy::PolicyNet actor, q1, q2, target1, target2;
  grad::AdamState opt_actor, opt_q1, opt_q2;

  // Actor taken as given (checkpoint or fresh); Q networks freshly seeded,
  // targets start as exact copies of their online twins.
  SacAgent(policy::PolicyNet a, uint64_t seed, float lr);
};

struct SacStats {
  float q_loss = 0.f;      // mean over the twin critics
  float actor_loss = 0.f;
  float entropy = 0.f;     // mean policy entropy over the batch
  float mean_q = 0.f;      // mean min-Q over taken actions
};

// One gradient step on each critic and the actor from a uniformly sampled
// batch, then a Polyak update of both targets. Requires buffer size >= batch.
SacStats sac_update(SacAgent& agent, const ReplayBuffer& buffer, const SacConfig& cfg,
                    Rng& rng);

// target <- (1 - tau) * target + tau * online, parameter by parameter.
void polyak_update(policy::PolicyNet& target, const policy::PolicyNet& online, float tau);

}  // namespace flare::rl
