#include "flare/rl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flare/error.hpp"
#include "flare/policy/config.hpp"
#include "flare/policy/vocab.hpp"
#include "flare/rl/gae.hpp"

namespace flare::rl {

using grad::AdamState;
using grad::Tape;
using grad::Tensor;
using policy::PolicyNet;

void TrainConfig::validate() const {
  policy::PolicyConfig pc = policy::PolicyConfig::preset(preset);
  pc.validate();
  if (algo != "ppo" && algo != "sac")
    throw ConfigError("train config: unknown algorithm '" + algo + "' (ppo or sac)");
  if (gamma <= 0.f || gamma > 1.f) throw ConfigError("train config: gamma must be in (0, 1]");
  if (lam < 0.f || lam > 1.f) throw ConfigError("train config: lambda must be in [0, 1]");
  if (clip <= 0.f || clip >= 1.f) throw ConfigError("train config: clip must be in (0, 1)");
  if (value_weight < 0.f) throw ConfigError("train config: value weight must be >= 0");
  if (entropy_weight < 0.f) throw ConfigError("train config: entropy weight must be >= 0");
  if (update_repeats < 1) throw ConfigError("train config: update repeats must be >= 1");
  if (minibatches < 1) throw ConfigError("train config: minibatches must be >= 1");
  if (max_grad_norm <= 0.f) throw ConfigError("train config: max grad norm must be > 0");
  if (lr <= 0.f || scratch_lr <= 0.f) throw ConfigError("train config: learning rates must be > 0");
  if (workers < 1) throw ConfigError("train config: workers must be >= 1");
  if (window < 1) throw ConfigError("train config: window must be >= 1");
  if (window > pc.context)
    throw ConfigError("train config: window " + std::to_string(window) +
                      " exceeds model context " + std::to_string(pc.context));
  if (env::TaskSpec::for_kind(task).max_steps > pc.context)
    throw ConfigError(std::string("train config: task ") + env::task_name(task) +
                      " episodes exceed model context " + std::to_string(pc.context));
  if (total_env_steps < static_cast<int64_t>(workers) * window)
    throw ConfigError("train config: total env steps below one collection window");
  if (eval_every < 1) throw ConfigError("train config: eval cadence must be >= 1");
  if (eval_episodes < 1) throw ConfigError("train config: eval episodes must be >= 1");
  if (train_houses.span() == 0 || eval_houses.span() == 0)
    throw ConfigError("train config: empty house seed range");
  if (!train_houses.disjoint(eval_houses))
    throw ConfigError("train config: train and eval house seed ranges overlap");
}

AdvantageSet prepare_advantages(const RolloutBatch& batch, const TrainConfig& cfg) {
  if (batch.workers < 1 || batch.steps < 1)
    throw ContractError("prepare_advantages: empty batch");
  const size_t N = static_cast<size_t>(batch.workers) * batch.steps;
  AdvantageSet out;
  out.adv.resize(N);
  out.ret.resize(N);

  std::vector<float> rewards(static_cast<size_t>(batch.steps));
  std::vector<float> values(static_cast<size_t>(batch.steps));
  std::vector<uint8_t> dones(static_cast<size_t>(batch.steps));
  for (int wi = 0; wi < batch.workers; wi++) {
    const auto& stream = batch.w[static_cast<size_t>(wi)];
    if (static_cast<int>(stream.size()) != batch.steps)
      throw ContractError("prepare_advantages: ragged worker stream");
    for (int t = 0; t < batch.steps; t++) {
      const WorkerStep& s = stream[static_cast<size_t>(t)];
      rewards[static_cast<size_t>(t)] = s.reward + cfg.gamma * s.trunc_value;
      values[static_cast<size_t>(t)] = s.value;
      dones[static_cast<size_t>(t)] = s.done ? 1 : 0;
    }
    GaeResult g = compute_gae(rewards, values, batch.bootstrap[static_cast<size_t>(wi)],
                              dones, cfg.gamma, cfg.lam);
    for (int t = 0; t < batch.steps; t++) {
      const size_t r = static_cast<size_t>(wi) * batch.steps + t;
      out.adv[r] = static_cast<float>(g.advantages[static_cast<size_t>(t)]);
      out.ret[r] = static_cast<float>(g.returns[static_cast<size_t>(t)]);
    }
  }

  for (float a : out.adv)
    if (!std::isfinite(a))
      throw NumericError("prepare_advantages: non-finite advantage in batch");

  if (cfg.normalize_advantages) {
    double mean = 0.0;
    for (float a : out.adv) mean += a;
    mean /= static_cast<double>(N);
    double var = 0.0;
    for (float a : out.adv) var += (a - mean) * (a - mean);
    var /= static_cast<double>(N);
    const double sd = std::sqrt(var) + 1e-8;
    for (float& a : out.adv) a = static_cast<float>((a - mean) / sd);
  }
  return out;
}

namespace {

constexpr int kChunkRows = 256;  // activation-memory bound per backward pass

// One collected window flattened into decode_sequence form: rows in
// (worker, step) order, segments cut at episode boundaries.
struct Packed {
  std::vector<env::Observation> obs;
  std::vector<int> prev_actions, actions;
  std::vector<int> seg_offsets;  // [S+1]
  std::vector<int> seg_t0;       // [S]
  std::vector<int> seg_worker;   // [S]
  std::vector<float> behav_logp;
  std::vector<float> adv, ret;
  std::vector<float> mask_bias;  // [N*20]: 0 where valid, -1e9 where masked
  int rows = 0;
};

Packed pack(const RolloutBatch& b, const AdvantageSet& a, ContextMode mode) {
  Packed p;
  const size_t N = static_cast<size_t>(b.workers) * b.steps;
  if (a.adv.size() != N || a.ret.size() != N)
    throw ContractError("ppo_update: advantage set does not match the batch");
  p.rows = static_cast<int>(N);
  p.obs.reserve(N);
  p.prev_actions.reserve(N);
  p.actions.reserve(N);
  p.behav_logp.reserve(N);
  p.adv.reserve(N);
  p.ret.reserve(N);
  p.mask_bias.reserve(N * env::kNumActions);
  p.seg_offsets.push_back(0);

  for (int wi = 0; wi < b.workers; wi++) {
    const auto& stream = b.w[static_cast<size_t>(wi)];
    bool open = false;
    for (int t = 0; t < b.steps; t++) {
      const WorkerStep& s = stream[static_cast<size_t>(t)];
      if (!open) {
        p.seg_t0.push_back(mode == ContextMode::FullReplay ? s.ep_t : 0);
        p.seg_worker.push_back(wi);
        open = true;
      }
      p.obs.push_back(s.obs);
      p.prev_actions.push_back(s.prev_action);
      p.actions.push_back(s.action);
      p.behav_logp.push_back(s.logp);
      const size_t r = static_cast<size_t>(wi) * b.steps + t;
      p.adv.push_back(a.adv[r]);
      p.ret.push_back(a.ret[r]);
      for (int j = 0; j < env::kNumActions; j++)
        p.mask_bias.push_back(s.valid[static_cast<size_t>(j)] ? 0.f : -1e9f);
      if (s.done) {
        p.seg_offsets.push_back(static_cast<int>(p.obs.size()));
        open = false;
      }
    }
    if (open) p.seg_offsets.push_back(static_cast<int>(p.obs.size()));
  }
  return p;
}

// Frozen K/V context for segments [s0, s1), rebuilt under the net's current
// parameters. Only a worker's first segment can carry a prefix.
policy::DecodePrefix chunk_prefix(const PolicyNet& net, const RolloutBatch& b,
                                  const Packed& p, int s0, int s1) {
  std::vector<env::Observation> pre_obs;
  std::vector<int> pre_prev, pre_seg{0}, pre_t0;
  std::vector<int> seg_pre_len(static_cast<size_t>(s1 - s0), 0);
  if (!b.prefix_obs.empty()) {
    for (int s = s0; s < s1; s++) {
      const int wi = p.seg_worker[static_cast<size_t>(s)];
      const bool first_of_worker = s == 0 || p.seg_worker[static_cast<size_t>(s) - 1] != wi;
      const auto& hist = b.prefix_obs[static_cast<size_t>(wi)];
      if (!first_of_worker || hist.empty()) continue;
      const auto& acts = b.prefix_actions[static_cast<size_t>(wi)];
      int prev = policy::kStartAction;
      for (size_t t = 0; t < hist.size(); t++) {
        pre_obs.push_back(hist[t]);
        pre_prev.push_back(prev);
        prev = acts[t];
      }
      pre_seg.push_back(static_cast<int>(pre_obs.size()));
      pre_t0.push_back(0);
      seg_pre_len[static_cast<size_t>(s - s0)] = static_cast<int>(hist.size());
    }
  }

  policy::DecodePrefix out;
  if (pre_obs.empty()) return out;
  Tensor states = net.encode_batch(pre_obs, nullptr);
  policy::DecodePrefix built = net.build_prefix(states, pre_prev, pre_seg, pre_t0);
  out.per_layer.resize(built.per_layer.size());
  for (size_t l = 0; l < built.per_layer.size(); l++) {
    grad::AttnPrefix& dst = out.per_layer[l];
    dst.k = std::move(built.per_layer[l].k);
    dst.v = std::move(built.per_layer[l].v);
    dst.offsets.resize(static_cast<size_t>(s1 - s0) + 1, 0);
    int at = 0;
    for (int s = 0; s < s1 - s0; s++) {
      at += seg_pre_len[static_cast<size_t>(s)];
      dst.offsets[static_cast<size_t>(s) + 1] = at;
    }
  }
  return out;
}

struct ChunkSlice {
  int s0, s1;  // segment range
  int r0, r1;  // row range
};

std::vector<ChunkSlice> plan_chunks(const Packed& p, int s0, int s1) {
  std::vector<ChunkSlice> out;
  int s = s0;
  while (s < s1) {
    ChunkSlice c{s, s, p.seg_offsets[static_cast<size_t>(s)], 0};
    while (c.s1 < s1 &&
           (c.s1 == c.s0 ||
            p.seg_offsets[static_cast<size_t>(c.s1) + 1] - c.r0 <= kChunkRows))
      c.s1++;
    c.r1 = p.seg_offsets[static_cast<size_t>(c.s1)];
    out.push_back(c);
    s = c.s1;
  }
  return out;
}

struct Accum {
  double policy = 0, value = 0, entropy = 0, clip = 0, kl = 0;
  double max_dev_first = 0;
};

}  // namespace

PpoStats ppo_update(PolicyNet& actor, PolicyNet* critic, const RolloutBatch& batch,
                    const AdvantageSet& advset, const TrainConfig& cfg,
                    AdamState& opt_actor, AdamState* opt_critic) {
  const bool shared = critic == nullptr;
  if (!shared && opt_critic == nullptr)
    throw ContractError("ppo_update: separate critic requires its optimizer state");
  Packed p = pack(batch, advset, cfg.context_mode);
  const int S = static_cast<int>(p.seg_t0.size());
  const float N = static_cast<float>(p.rows);

  std::vector<Tensor> actor_params =
      shared ? actor.parameters() : actor.actor_parameters();
  std::vector<Tensor> critic_params;
  if (!shared) critic_params = critic->critic_parameters();

  Accum acc;
  double grad_actor = 0, grad_critic = 0;
  int opt_steps = 0;

  for (int rep = 0; rep < cfg.update_repeats; rep++) {
    for (int mb = 0; mb < cfg.minibatches; mb++) {
      const int ms0 = static_cast<int>(static_cast<int64_t>(S) * mb / cfg.minibatches);
      const int ms1 = static_cast<int>(static_cast<int64_t>(S) * (mb + 1) / cfg.minibatches);
      if (ms0 == ms1) continue;
      const std::vector<ChunkSlice> chunks = plan_chunks(p, ms0, ms1);

      for (const ChunkSlice& c : chunks) {
        const int n = c.r1 - c.r0;
        const float w = static_cast<float>(n) / N;

        std::vector<env::Observation> obs(p.obs.begin() + c.r0, p.obs.begin() + c.r1);
        std::vector<int> prev(p.prev_actions.begin() + c.r0, p.prev_actions.begin() + c.r1);
        std::vector<int> acts(p.actions.begin() + c.r0, p.actions.begin() + c.r1);
        std::vector<int> seg, t0;
        for (int s = c.s0; s <= c.s1; s++)
          seg.push_back(p.seg_offsets[static_cast<size_t>(s)] - c.r0);
        for (int s = c.s0; s < c.s1; s++) t0.push_back(p.seg_t0[static_cast<size_t>(s)]);
        std::vector<float> bias(p.mask_bias.begin() +
                                    static_cast<int64_t>(c.r0) * env::kNumActions,
                                p.mask_bias.begin() +
                                    static_cast<int64_t>(c.r1) * env::kNumActions);
        std::vector<float> behav(p.behav_logp.begin() + c.r0, p.behav_logp.begin() + c.r1);
        std::vector<float> adv(p.adv.begin() + c.r0, p.adv.begin() + c.r1);
        std::vector<float> ret(p.ret.begin() + c.r0, p.ret.begin() + c.r1);

        policy::DecodePrefix actor_prefix, critic_prefix;
        const policy::DecodePrefix* apfx = nullptr;
        const policy::DecodePrefix* cpfx = nullptr;
        if (cfg.context_mode == ContextMode::FullReplay) {
          actor_prefix = chunk_prefix(actor, batch, p, c.s0, c.s1);
          if (!actor_prefix.empty()) apfx = &actor_prefix;
          if (!shared) {
            critic_prefix = chunk_prefix(*critic, batch, p, c.s0, c.s1);
            if (!critic_prefix.empty()) cpfx = &critic_prefix;
          }
        }

        using namespace grad;
        Tape tape;
        Tensor states = actor.encode_batch(obs, &tape);
        Tensor beliefs = actor.decode_sequence(states, prev, seg, t0, &tape, apfx);
        Tensor logits = actor.actor_logits(beliefs, &tape);
        Tensor masked = add_constv(&tape, logits, bias, 1.f);
        Tensor lsm = log_softmax(&tape, masked);
        Tensor lp = pick_per_row(&tape, lsm, acts);
        Tensor logr = add_constv(&tape, lp, behav, -1.f);
        Tensor ratio = exp_op(&tape, logr);
        Tensor surr_raw = mul_constv(&tape, ratio, adv);
        Tensor surr_clip =
            mul_constv(&tape, clamp(&tape, ratio, 1.f - cfg.clip, 1.f + cfg.clip), adv);
        Tensor surr = min_ew(&tape, surr_raw, surr_clip);
        Tensor policy_term = scale(&tape, mean_all(&tape, surr), -w);

        Tensor probs = softmax(&tape, masked);
        Tensor plogp = mul(&tape, probs, lsm);
        Tensor ent_rows = scale(&tape, sum_rows(&tape, plogp), -1.f);
        Tensor ent_term = scale(&tape, mean_all(&tape, ent_rows), w);
        Tensor actor_loss = add(&tape, policy_term, scale(&tape, ent_term, -cfg.entropy_weight));

        // Ratio statistics before parameters move.
        for (int i = 0; i < n; i++) {
          const double r = ratio.at(i);
          const double lr_ = logr.at(i);
          if (rep == 0)
            acc.max_dev_first = std::max(acc.max_dev_first, std::abs(r - 1.0));
          if (r < 1.0 - cfg.clip || r > 1.0 + cfg.clip) acc.clip += 1.0;
          acc.kl += (r - 1.0) - lr_;
        }
        acc.policy += static_cast<double>(policy_term.item());
        acc.entropy += static_cast<double>(ent_term.item());

        if (shared) {
          Tensor vpred = actor.critic_values(beliefs, &tape);
          Tensor vloss = scale(&tape, mse(&tape, vpred, ret), 0.5f * cfg.value_weight * w);
          Tensor total = add(&tape, actor_loss, vloss);
          acc.value += static_cast<double>(vloss.item());
          if (!std::isfinite(total.item()))
            throw NumericError("ppo_update: non-finite loss (repeat " + std::to_string(rep) +
                               ", policy " + std::to_string(policy_term.item()) + ", value " +
                               std::to_string(vloss.item()) + ")");
          tape.backward(total);
        } else {
          if (!std::isfinite(actor_loss.item()))
            throw NumericError("ppo_update: non-finite actor loss (repeat " +
                               std::to_string(rep) + ", policy " +
                               std::to_string(policy_term.item()) + ")");
          tape.backward(actor_loss);
          Tape ctape;
          Tensor cstates = critic->encode_batch(obs, &ctape);
          Tensor cbeliefs = critic->decode_sequence(cstates, prev, seg, t0, &ctape, cpfx);
          Tensor vpred = critic->critic_values(cbeliefs, &ctape);
          Tensor vloss = scale(&ctape, mse(&ctape, vpred, ret), 0.5f * cfg.value_weight * w);
          acc.value += static_cast<double>(vloss.item());
          if (!std::isfinite(vloss.item()))
            throw NumericError("ppo_update: non-finite value loss (repeat " +
                               std::to_string(rep) + ", value " +
                               std::to_string(vloss.item()) + ")");
          ctape.backward(vloss);
        }
      }

      grad_actor += grad::clip_grad_norm(actor_params, cfg.max_grad_norm);
      grad::adam_step(opt_actor, actor_params);
      if (!shared) {
        grad_critic += grad::clip_grad_norm(critic_params, cfg.max_grad_norm);
        grad::adam_step(*opt_critic, critic_params);
      }
      opt_steps++;
    }
  }

  const double passes = static_cast<double>(cfg.update_repeats);
  PpoStats st;
  st.policy_loss = static_cast<float>(acc.policy / passes);
  st.value_loss = static_cast<float>(acc.value / passes);
  st.entropy = static_cast<float>(acc.entropy / passes);
  st.clip_frac = static_cast<float>(acc.clip / (passes * p.rows));
  st.approx_kl = static_cast<float>(acc.kl / (passes * p.rows));
  st.first_pass_ratio_dev = static_cast<float>(acc.max_dev_first);
  st.grad_norm_actor = opt_steps ? static_cast<float>(grad_actor / opt_steps) : 0.f;
  st.grad_norm_critic =
      shared ? st.grad_norm_actor
             : (opt_steps ? static_cast<float>(grad_critic / opt_steps) : 0.f);
  return st;
}

}  // namespace flare::rl
