#include "flare/eval/metrics.hpp"

#include <algorithm>

#include "flare/error.hpp"

namespace flare::eval {

float sel(bool success, int steps, int lstar) {
  if (steps < 1 || lstar < 1) throw ContractError("sel: episode lengths must be positive");
  if (!success) return 0.f;
  return static_cast<float>(lstar) / static_cast<float>(std::max(steps, lstar));
}

namespace {

void push_record(EvalReport& rep, uint64_t house_seed, bool success, int steps, int lstar,
                 int collisions, float ret) {
  EpisodeRecord rec;
  rec.house_seed = house_seed;
  rec.success = success;
  rec.steps = steps;
  rec.lstar = lstar;
  rec.collisions = collisions;
  rec.reward_sum = ret;
  rec.sel = sel(success, steps, lstar);
  rep.records.push_back(rec);
}

void finalize(EvalReport& rep) {
  double sr = 0, se = 0, len = 0, col = 0, ret = 0;
  for (const EpisodeRecord& r : rep.records) {
    sr += r.success ? 1 : 0;
    se += r.sel;
    len += r.steps;
    col += r.collisions;
    ret += r.reward_sum;
  }
  const double n = static_cast<double>(rep.records.size());
  rep.episodes = static_cast<int>(rep.records.size());
  rep.sr = static_cast<float>(sr / n);
  rep.mean_sel = static_cast<float>(se / n);
  rep.mean_len = static_cast<float>(len / n);
  rep.mean_collisions = static_cast<float>(col / n);
  rep.mean_return = static_cast<float>(ret / n);
}

EvalReport fresh_report(env::TaskKind kind, int n, env::SeedRange houses,
                        std::string ckpt) {
  if (n < 1) throw ContractError("evaluate: need at least one episode");
  if (houses.span() == 0) throw ContractError("evaluate: empty house seed range");
  EvalReport rep;
  rep.task = env::task_name(kind);
  rep.checkpoint_id = std::move(ckpt);
  rep.houses = houses;
  rep.records.reserve(static_cast<size_t>(n));
  return rep;
}

}  // namespace

EvalReport evaluate(const policy::PolicyNet& net, env::TaskKind kind, int n_episodes,
                    env::SeedRange houses, uint64_t seed, bool greedy,
                    env::Embodiment emb, env::ShapingFlags shaping,
                    std::string checkpoint_id) {
  EvalReport rep = fresh_report(kind, n_episodes, houses, std::move(checkpoint_id));
  Rng rng(seed, 19);
  policy::KVCache cache;
  for (int e = 0; e < n_episodes; e++) {
    env::EpisodeSetup ep = env::sample_episode(kind, rng, houses, emb);
    env::GridHouse env(std::move(ep.house), ep.instr, env::TaskSpec::for_kind(kind),
                       env::mask_for_embodiment(emb), shaping);
    env::Observation obs = env.reset(ep.reset_seed);
    cache.reset(static_cast<uint64_t>(e));
    int prev = policy::kStartAction, t = 0;
    float ret = 0.f;
    bool success = false;
    for (;;) {
      std::vector<float> belief = net.decoder_step(net.encode_one(obs), prev, t, cache);
      policy::ActResult act = net.act(belief, env.embodiment().valid, greedy, &rng);
      env::StepResult r = env.step(act.action);
      ret += r.reward;
      prev = act.action;
      t++;
      if (r.done) {
        success = r.success;
        break;
      }
      obs = r.obs;
    }
    push_record(rep, ep.house_seed, success, env.agent().steps, ep.lstar(),
                env.agent().collisions, ret);
  }
  finalize(rep);
  return rep;
}

EvalReport evaluate_expert(env::TaskKind kind, int n_episodes, env::SeedRange houses,
                           uint64_t seed, env::Embodiment emb) {
  EvalReport rep = fresh_report(kind, n_episodes, houses, "expert");
  Rng rng(seed, 19);
  for (int e = 0; e < n_episodes; e++) {
    env::EpisodeSetup ep = env::sample_episode(kind, rng, houses, emb);
    env::GridHouse env(std::move(ep.house), ep.instr, env::TaskSpec::for_kind(kind),
                       env::mask_for_embodiment(emb), {});
    env.reset(ep.reset_seed);
    float ret = 0.f;
    bool success = false;
    for (int a : ep.expert_actions) {
      env::StepResult r = env.step(a);
      ret += r.reward;
      if (r.done) {
        success = r.success;
        break;
      }
    }
    push_record(rep, ep.house_seed, success, env.agent().steps, ep.lstar(),
                env.agent().collisions, ret);
  }
  finalize(rep);
  return rep;
}

EvalReport evaluate_random(env::TaskKind kind, int n_episodes, env::SeedRange houses,
                           uint64_t seed, env::Embodiment emb) {
  EvalReport rep = fresh_report(kind, n_episodes, houses, "random");
  Rng rng(seed, 19);
  std::vector<int> valid;
  for (int e = 0; e < n_episodes; e++) {
    env::EpisodeSetup ep = env::sample_episode(kind, rng, houses, emb);
    env::GridHouse env(std::move(ep.house), ep.instr, env::TaskSpec::for_kind(kind),
                       env::mask_for_embodiment(emb), {});
    env.reset(ep.reset_seed);
    valid.clear();
    for (int a = 0; a < env::kNumActions; a++)
      if (env.embodiment().valid[static_cast<size_t>(a)]) valid.push_back(a);
    float ret = 0.f;
    bool success = false;
    for (;;) {
      int a = valid[static_cast<size_t>(rng.randint(0, static_cast<int>(valid.size())))];
      env::StepResult r = env.step(a);
      ret += r.reward;
      if (r.done) {
        success = r.success;
        break;
      }
    }
    push_record(rep, ep.house_seed, success, env.agent().steps, ep.lstar(),
                env.agent().collisions, ret);
  }
  finalize(rep);
  return rep;
}

}  // namespace flare::eval
