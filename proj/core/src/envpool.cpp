#include "flare/env/envpool.hpp"

#include "flare/error.hpp"

namespace flare::env {

EpisodeSetup sample_episode(TaskKind kind, Rng& rng, SeedRange houses, Embodiment emb,
                            int* attempts_out) {
  if (houses.span() == 0) throw ContractError("sample_episode: empty seed range");
  if (emb == Embodiment::B && (kind == TaskKind::PickUp || kind == TaskKind::Fetch ||
                               kind == TaskKind::RoomVisit))
    throw ContractError("sample_episode: task needs an arm this embodiment lacks");

  TaskSpec spec = TaskSpec::for_kind(kind);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    if (attempts_out) ++*attempts_out;
    EpisodeSetup ep;
    ep.house_seed = houses.lo + rng.next_u64() % houses.span();
    int rooms = rng.randint(spec.rooms_min, spec.rooms_max + 1);
    ep.house = generate_house(ep.house_seed, rooms);
    try {
      ep.instr = sample_instruction(ep.house, kind, rng);
    } catch (const UnsatisfiableInstructionError&) {
      continue;
    }
    ep.reset_seed = rng.next_u64();
    GridHouse probe(ep.house, ep.instr, spec, mask_for_embodiment(emb));
    try {
      probe.reset(ep.reset_seed);
    } catch (const UnsatisfiableInstructionError&) {
      continue;
    }
    auto plan = expert_plan(ep.house, ep.instr, probe.agent());
    if (!plan) continue;
    ep.expert_actions = std::move(*plan);
    return ep;
  }
  throw GenerationError("sample_episode: no solvable episode after 1000 attempts");
}

EnvPool::EnvPool(TaskKind kind, int n_envs, uint64_t seed, SeedRange houses,
                 ShapingFlags shaping, Embodiment emb)
    : kind_(kind), houses_(houses), shaping_(shaping), emb_(emb) {
  if (n_envs < 1) throw ContractError("EnvPool: need at least one environment");
  slots_.resize(static_cast<size_t>(n_envs));
  for (int i = 0; i < n_envs; ++i) {
    slots_[i].rng = Rng(seed, static_cast<uint64_t>(i));
    respawn(slots_[i]);
  }
}

const EnvPool::Slot& EnvPool::at(int i) const {
  if (i < 0 || i >= size()) throw ContractError("EnvPool: slot index out of range");
  return slots_[i];
}

EnvPool::Slot& EnvPool::at(int i) {
  if (i < 0 || i >= size()) throw ContractError("EnvPool: slot index out of range");
  return slots_[i];
}

void EnvPool::respawn(Slot& s) {
  EpisodeSetup ep = sample_episode(kind_, s.rng, houses_, emb_);
  s.env = GridHouse(std::move(ep.house), ep.instr, TaskSpec::for_kind(kind_),
                    mask_for_embodiment(emb_), shaping_);
  s.obs = s.env.reset(ep.reset_seed);
  s.lstar = ep.lstar();
}

StepResult EnvPool::step(int i, int action) {
  Slot& s = at(i);
  StepResult r = s.env.step(action);
  if (r.done)
    respawn(s);
  else
    s.obs = r.obs;
  return r;
}

}  // namespace flare::env
