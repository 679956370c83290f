#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "flare/env/types.hpp"
#include "flare/grad/checkpoint.hpp"
#include "flare/grad/ops.hpp"
#include "flare/policy/config.hpp"
#include "flare/rng.hpp"

namespace flare::policy {

using grad::ParamStore;
using grad::Tape;
using grad::Tensor;

// Per-episode decoder cache: one K and V row per past step per layer. The
// caller owns episode bookkeeping; the net only enforces that step t extends
// a cache of length t.
struct KVCache {
  uint64_t episode_id = 0;
  int len = 0;
  std::vector<std::vector<float>> k, v;  // [layer][len*d], row-major
  void reset(uint64_t new_episode) {
    episode_id = new_episode;
    len = 0;
    for (auto& kk : k) kk.clear();
    for (auto& vv : v) vv.clear();
  }
};

// Frozen per-layer K/V rows for earlier episode steps, so a training pass can
// attend across its whole history while only differentiating recent rows.
struct DecodePrefix {
  std::vector<grad::AttnPrefix> per_layer;
  bool empty() const { return per_layer.empty(); }
};

struct ActResult {
  int action = 0;
  float log_prob = 0.0f;
  std::array<float, env::kNumActions> probs{};
};

struct Provenance {
  std::string phase = "init";  // init | bc | rl
  int64_t steps = 0;
  uint64_t seed = 0;
};

class PolicyNet {
 public:
  PolicyNet(const PolicyConfig& cfg, uint64_t seed);

  const PolicyConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::vector<Tensor> parameters() const { return params_.tensors(); }
  std::vector<Tensor> actor_parameters() const;   // everything but the critic head
  std::vector<Tensor> critic_parameters() const;  // everything but the actor head
  int64_t param_count() const { return params_.param_count(); }
  PolicyNet clone() const;

  // ---- batched autodiff paths ----
  // State vectors for a batch of observations: [B x d].
  Tensor encode_batch(const std::vector<env::Observation>& obs, Tape* tape) const;
  // Beliefs [T x d] for packed causal sequences. seg_offsets (size S+1) bound
  // the episode segments; seg_t0[s] is the in-episode timestep of segment s's
  // first row; prev_actions holds kStartAction wherever t=0. An optional
  // prefix supplies frozen K/V context per layer (offsets per segment).
  Tensor decode_sequence(const Tensor& states, const std::vector<int>& prev_actions,
                         const std::vector<int>& seg_offsets,
                         const std::vector<int>& seg_t0, Tape* tape,
                         const DecodePrefix* prefix = nullptr) const;
  Tensor actor_logits(const Tensor& beliefs, Tape* tape) const;   // [T x 20]
  Tensor critic_values(const Tensor& beliefs, Tape* tape) const;  // [T x 1]

  // K/V rows a gradient-free decode of these rows produces, for use as the
  // frozen context of a later decode_sequence call.
  DecodePrefix build_prefix(const Tensor& states, const std::vector<int>& prev_actions,
                            const std::vector<int>& seg_offsets,
                            const std::vector<int>& seg_t0) const;

  // ---- single-step inference path (no autodiff) ----
  std::vector<float> encode_one(const env::Observation& obs) const;
  // Causal step t over the episode's cache; requires t == cache.len, extends
  // the cache by one and returns the belief vector.
  std::vector<float> decoder_step(const std::vector<float>& state, int prev_action,
                                  int t, KVCache& cache) const;
  float value_of(const std::vector<float>& belief) const;
  // Masked categorical head: invalid logits pushed to -1e9, probabilities
  // zeroed and renormalized so masked actions have probability exactly 0.
  ActResult act(const std::vector<float>& belief,
                const std::array<uint8_t, env::kNumActions>& valid, bool argmax,
                Rng* rng) const;

  // Fresh uniform(-1e-2, 1e-2) critic head, used when the critic network is
  // spawned from a pretrained actor.
  void reinit_critic_head(uint64_t seed);

 private:
  struct Block {
    Tensor ln1g, ln1b, wq, wk, wv, wo, ln2g, ln2b, w1, b1, w2, b2;
  };

  void register_params(uint64_t seed);
  void bind_views();
  Tensor run_stack(Tensor x, const std::vector<Block>& blocks, int heads, bool causal,
                   const std::vector<int>& seg, const std::vector<uint8_t>* key_valid,
                   const DecodePrefix* prefix, Tape* tape,
                   std::vector<grad::AttnPrefix>* capture) const;
  std::vector<float> sin_rows(const std::vector<int>& seg,
                              const std::vector<int>& seg_t0, int T) const;

  PolicyConfig cfg_;
  ParamStore params_;
  Tensor tok_, pos_, act_;
  std::vector<Block> enc_, dec_;
  Tensor enc_lnf_g_, enc_lnf_b_, dec_lnf_g_, dec_lnf_b_;
  Tensor actor_w_, actor_b_, critic_w_, critic_b_;
  std::vector<float> sin_table_;  // [context x d]
};

// Checkpoint (grad_core container) plus a JSON sidecar at <path>.json holding
// the config, vocabulary fingerprint and provenance.
void save_policy(const PolicyNet& net, const std::string& path, const Provenance& prov);
PolicyNet load_policy(const std::string& path, Provenance* prov_out = nullptr);

// Actor = checkpoint verbatim; critic = same trunk with a reinitialized value
// head; storage never aliases between the two.
std::pair<PolicyNet, PolicyNet> init_finetune(const std::string& ckpt_path, uint64_t seed);

}  // namespace flare::policy
