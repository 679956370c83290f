#include "flare/rl/sac.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flare/error.hpp"

namespace flare::rl {

using grad::Tape;
using grad::Tensor;
using policy::PolicyNet;

void SacConfig::validate() const {
  if (gamma <= 0.f || gamma > 1.f) throw ConfigError("sac config: gamma must be in (0, 1]");
  if (tau <= 0.f || tau > 1.f) throw ConfigError("sac config: tau must be in (0, 1]");
  if (alpha < 0.f) throw ConfigError("sac config: alpha must be >= 0");
  if (lr <= 0.f) throw ConfigError("sac config: lr must be > 0");
  if (max_grad_norm <= 0.f) throw ConfigError("sac config: max grad norm must be > 0");
  if (batch < 1) throw ConfigError("sac config: batch must be >= 1");
  if (buffer_capacity < batch) throw ConfigError("sac config: buffer below batch size");
  if (updates_per_window < 1) throw ConfigError("sac config: updates per window must be >= 1");
}

ReplayBuffer::ReplayBuffer(int capacity) : cap_(static_cast<size_t>(capacity)) {
  if (capacity < 1) throw ContractError("replay buffer: capacity must be positive");
  data_.reserve(cap_);
}

void ReplayBuffer::push(const Transition& t) {
  if (data_.size() < cap_) {
    data_.push_back(t);
  } else {
    data_[head_] = t;
    head_ = (head_ + 1) % cap_;
  }
}

SacAgent::SacAgent(PolicyNet a, uint64_t seed, float lr)
    : actor(std::move(a)),
      q1(actor.config(), seed * 2654435761u + 101),
      q2(actor.config(), seed * 2654435761u + 202),
      target1(q1.clone()),
      target2(q2.clone()),
      opt_actor(actor.actor_parameters(), lr),
      opt_q1(q1.actor_parameters(), lr),
      opt_q2(q2.actor_parameters(), lr) {}

void polyak_update(PolicyNet& target, const PolicyNet& online, float tau) {
  std::vector<Tensor> tp = target.parameters();
  std::vector<Tensor> op = online.parameters();
  if (tp.size() != op.size())
    throw ContractError("polyak_update: parameter sets differ in size");
  for (size_t i = 0; i < tp.size(); i++) {
    if (tp[i].size() != op[i].size())
      throw ContractError("polyak_update: parameter shapes differ");
    float* t = tp[i].data();
    const float* o = op[i].data();
    for (int64_t j = 0; j < tp[i].size(); j++)
      t[j] = (1.f - tau) * t[j] + tau * o[j];
  }
}

namespace {

// Beliefs for a batch of isolated observations: every row is its own
// length-one segment at position zero, so no step sees any other.
Tensor single_step_beliefs(const PolicyNet& net, const std::vector<env::Observation>& obs,
                           const std::vector<int>& prev_actions, Tape* tape) {
  const int B = static_cast<int>(obs.size());
  std::vector<int> seg(static_cast<size_t>(B) + 1);
  for (int i = 0; i <= B; i++) seg[static_cast<size_t>(i)] = i;
  std::vector<int> t0(static_cast<size_t>(B), 0);
  Tensor states = net.encode_batch(obs, tape);
  return net.decode_sequence(states, prev_actions, seg, t0, tape);
}

std::vector<float> mask_bias(const std::vector<std::array<uint8_t, env::kNumActions>>& valid) {
  std::vector<float> bias;
  bias.reserve(valid.size() * env::kNumActions);
  for (const auto& v : valid)
    for (int a = 0; a < env::kNumActions; a++)
      bias.push_back(v[static_cast<size_t>(a)] ? 0.f : -1e9f);
  return bias;
}

}  // namespace

SacStats sac_update(SacAgent& agent, const ReplayBuffer& buffer, const SacConfig& cfg,
                    Rng& rng) {
  cfg.validate();
  if (buffer.size() < cfg.batch)
    throw ContractError("sac_update: buffer holds " + std::to_string(buffer.size()) +
                        " transitions, batch needs " + std::to_string(cfg.batch));
  const int B = cfg.batch;
  const int A = env::kNumActions;

  std::vector<env::Observation> obs(static_cast<size_t>(B)), nobs(static_cast<size_t>(B));
  std::vector<int> prev(static_cast<size_t>(B)), nprev(static_cast<size_t>(B));
  std::vector<int> acts(static_cast<size_t>(B));
  std::vector<float> rewards(static_cast<size_t>(B));
  std::vector<uint8_t> dones(static_cast<size_t>(B));
  std::vector<std::array<uint8_t, env::kNumActions>> valid(static_cast<size_t>(B)),
      nvalid(static_cast<size_t>(B));
  for (int i = 0; i < B; i++) {
    const Transition& t = buffer.at(rng.randint(0, buffer.size()));
    obs[static_cast<size_t>(i)] = t.obs;
    nobs[static_cast<size_t>(i)] = t.next_obs;
    prev[static_cast<size_t>(i)] = t.prev_action;
    nprev[static_cast<size_t>(i)] = t.next_prev_action;
    acts[static_cast<size_t>(i)] = t.action;
    rewards[static_cast<size_t>(i)] = t.reward;
    dones[static_cast<size_t>(i)] = t.done ? 1 : 0;
    valid[static_cast<size_t>(i)] = t.valid;
    nvalid[static_cast<size_t>(i)] = t.next_valid;
  }
  const std::vector<float> bias = mask_bias(valid);
  const std::vector<float> nbias = mask_bias(nvalid);

  // Soft targets under frozen networks.
  std::vector<float> y(static_cast<size_t>(B));
  {
    using namespace grad;
    Tensor nb = single_step_beliefs(agent.actor, nobs, nprev, nullptr);
    Tensor nlsm = log_softmax(nullptr, add_constv(nullptr, agent.actor.actor_logits(nb, nullptr),
                                                  nbias, 1.f));
    Tensor nq1 = agent.target1.actor_logits(
        single_step_beliefs(agent.target1, nobs, nprev, nullptr), nullptr);
    Tensor nq2 = agent.target2.actor_logits(
        single_step_beliefs(agent.target2, nobs, nprev, nullptr), nullptr);
    for (int i = 0; i < B; i++) {
      double soft = 0.0;
      for (int a = 0; a < A; a++) {
        if (!nvalid[static_cast<size_t>(i)][static_cast<size_t>(a)]) continue;
        const int64_t idx = static_cast<int64_t>(i) * A + a;
        const double lp = nlsm.at(idx);
        const double p = std::exp(lp);
        const double q = std::min(nq1.at(idx), nq2.at(idx));
        soft += p * (q - cfg.alpha * lp);
      }
      y[static_cast<size_t>(i)] = static_cast<float>(
          rewards[static_cast<size_t>(i)] +
          (dones[static_cast<size_t>(i)] ? 0.0 : cfg.gamma * soft));
    }
  }

  SacStats st;

  // Twin critic regression toward the shared target.
  for (PolicyNet* qn : {&agent.q1, &agent.q2}) {
    using namespace grad;
    Tape tape;
    Tensor beliefs = single_step_beliefs(*qn, obs, prev, &tape);
    Tensor q_all = qn->actor_logits(beliefs, &tape);
    Tensor q_taken = pick_per_row(&tape, q_all, acts);
    Tensor loss = mse(&tape, q_taken, y);
    if (!std::isfinite(loss.item()))
      throw NumericError("sac_update: non-finite critic loss");
    st.q_loss += 0.5f * loss.item();
    tape.backward(loss);
    std::vector<Tensor> params = qn->actor_parameters();
    clip_grad_norm(params, cfg.max_grad_norm);
    adam_step(qn == &agent.q1 ? agent.opt_q1 : agent.opt_q2, params);
  }

  // Actor: minimize E_s sum_a pi(a|s) (alpha log pi(a|s) - min Q(s, a)).
  {
    using namespace grad;
    std::vector<float> minq(static_cast<size_t>(B) * A);
    Tensor q1v = agent.q1.actor_logits(single_step_beliefs(agent.q1, obs, prev, nullptr),
                                       nullptr);
    Tensor q2v = agent.q2.actor_logits(single_step_beliefs(agent.q2, obs, prev, nullptr),
                                       nullptr);
    for (int64_t i = 0; i < static_cast<int64_t>(B) * A; i++)
      minq[static_cast<size_t>(i)] = std::min(q1v.at(i), q2v.at(i));

    Tape tape;
    Tensor beliefs = single_step_beliefs(agent.actor, obs, prev, &tape);
    Tensor masked = add_constv(&tape, agent.actor.actor_logits(beliefs, &tape), bias, 1.f);
    Tensor lsm = log_softmax(&tape, masked);
    Tensor probs = softmax(&tape, masked);
    Tensor inner = add_constv(&tape, scale(&tape, lsm, cfg.alpha), minq, -1.f);
    Tensor loss = mean_all(&tape, sum_rows(&tape, mul(&tape, probs, inner)));
    if (!std::isfinite(loss.item()))
      throw NumericError("sac_update: non-finite actor loss");
    st.actor_loss = loss.item();
    tape.backward(loss);
    std::vector<Tensor> params = agent.actor.actor_parameters();
    clip_grad_norm(params, cfg.max_grad_norm);
    adam_step(agent.opt_actor, params);

    double ent = 0.0, mq = 0.0;
    for (int i = 0; i < B; i++) {
      for (int a = 0; a < A; a++) {
        const int64_t idx = static_cast<int64_t>(i) * A + a;
        if (valid[static_cast<size_t>(i)][static_cast<size_t>(a)])
          ent -= static_cast<double>(probs.at(idx)) * lsm.at(idx);
      }
      mq += minq[static_cast<size_t>(i) * A + static_cast<size_t>(acts[static_cast<size_t>(i)])];
    }
    st.entropy = static_cast<float>(ent / B);
    st.mean_q = static_cast<float>(mq / B);
  }

  polyak_update(agent.target1, agent.q1, cfg.tau);
  polyak_update(agent.target2, agent.q2, cfg.tau);
  return st;
}

}  // namespace flare::rl
