#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flare/env/envpool.hpp"
#include "flare/grad/optim.hpp"
#include "flare/policy/model.hpp"
#include "flare/rl/rollout.hpp"

namespace flare::rl {

struct TrainConfig {
  env::TaskKind task = env::TaskKind::Fetch;
  std::string preset = "desk";
  std::string algo = "ppo";  // ppo | sac

  float gamma = 0.99f;
  float lam = 0.95f;
  float clip = 0.1f;
  float value_weight = 0.5f;
  float entropy_weight = 0.0f;
  int update_repeats = 4;
  int minibatches = 1;  // 1 means full-batch updates
  float max_grad_norm = 0.5f;
  float scratch_lr = 2e-4f;
  float lr = 2e-5f;  // one order of magnitude under scratch_lr unless overridden
  bool normalize_advantages = true;
  bool shared_ac = false;  // one trunk, both heads, one optimizer

  int workers = 32;
  int window = 128;
  int64_t total_env_steps = 262'144;
  uint64_t seed = 0;
  ContextMode context_mode = ContextMode::Window;

  env::ShapingFlags shaping{};
  env::Embodiment embodiment = env::Embodiment::A;
  env::SeedRange train_houses = env::kTrainHouseSeeds;
  env::SeedRange eval_houses = env::kEvalHouseSeeds;
  int eval_every = 10;      // updates between greedy evals
  int eval_episodes = 200;  // episodes per eval

  // Throws ConfigError on out-of-range values, unknown preset/algo/task
  // pairing, a window the model context cannot hold, or train/eval house
  // ranges that overlap.
  void validate() const;
};

// Flat per-row advantage/return arrays in (worker, step) order.
struct AdvantageSet {
  std::vector<float> adv, ret;
};

// GAE per worker stream (truncation values folded into rewards, bootstrap at
// the window end), then optional whole-batch advantage normalization.
AdvantageSet prepare_advantages(const RolloutBatch& batch, const TrainConfig& cfg);

struct PpoStats {
  float policy_loss = 0.f;
  float value_loss = 0.f;  // the optimized term: 0.5 * weight * MSE
  float entropy = 0.f;     // mean action entropy, measured not optimized
  float clip_frac = 0.f;
  float approx_kl = 0.f;
  float grad_norm_actor = 0.f;   // pre-clip, averaged over optimizer steps
  float grad_norm_critic = 0.f;
  float first_pass_ratio_dev = 0.f;  // max |ratio - 1| seen on the first repeat
};

// Clipped-surrogate update over one collected batch: update_repeats passes,
// each split into minibatches by segment, gradients accumulated over bounded
// chunks so memory stays flat. critic == nullptr runs the shared-trunk
// variant where opt_actor owns every parameter of `actor` and the value loss
// backpropagates into the same trunk. Throws NumericError with a diagnostic
// dump if any loss goes non-finite.
PpoStats ppo_update(policy::PolicyNet& actor, policy::PolicyNet* critic,
                    const RolloutBatch& batch, const AdvantageSet& adv,
                    const TrainConfig& cfg, grad::AdamState& opt_actor,
                    grad::AdamState* opt_critic);

}  // namespace flare::rl
