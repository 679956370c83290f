#pragma once

#include <memory>
#include <vector>

#include "flare/env/expert.hpp"
#include "flare/env/gridhouse.hpp"

namespace flare::env {

struct SeedRange {
  uint64_t lo = 0, hi = 0;  // [lo, hi)
  uint64_t span() const { return hi - lo; }
  bool contains(uint64_t s) const { return s >= lo && s < hi; }
  bool disjoint(const SeedRange& o) const { return hi <= o.lo || o.hi <= lo; }
};

// House seed ranges. Training and evaluation never share a house seed;
// demonstration houses and the held-out validation slice partition the
// training range.
inline constexpr SeedRange kTrainHouseSeeds{0, 1'000'000};
inline constexpr SeedRange kDemoHouseSeeds{0, 900'000};
inline constexpr SeedRange kValHouseSeeds{900'000, 1'000'000};
inline constexpr SeedRange kEvalHouseSeeds{1'000'000, 1'100'000};

struct EpisodeSetup {
  uint64_t house_seed = 0;
  uint64_t reset_seed = 0;
  House house;
  Instruction instr;
  std::vector<int> expert_actions;  // from the reset pose to termination
  int lstar() const { return static_cast<int>(expert_actions.size()); }
};

// Draws (house, instruction, spawn) until the episode is planner-solvable,
// which also pins the expert length used by weighted success metrics.
// attempts_out, when given, is incremented once per draw including rejected
// ones, so callers can account for planner yield.
EpisodeSetup sample_episode(TaskKind kind, Rng& rng, SeedRange houses,
                            Embodiment emb = Embodiment::A, int* attempts_out = nullptr);

// Fixed-width batch of environments stepped one slot at a time. Slots
// resample and reset as soon as their episode terminates, so obs(i) is always
// a valid policy input; the result of the terminating step still carries the
// terminal observation. Slot i's episode stream depends only on (seed, i),
// never on stepping order across slots.
class EnvPool {
 public:
  EnvPool(TaskKind kind, int n_envs, uint64_t seed, SeedRange houses,
          ShapingFlags shaping = {}, Embodiment emb = Embodiment::A);

  int size() const { return static_cast<int>(slots_.size()); }
  TaskKind kind() const { return kind_; }
  const Observation& obs(int i) const { return at(i).obs; }
  const GridHouse& env(int i) const { return at(i).env; }
  int lstar(int i) const { return at(i).lstar; }
  StepResult step(int i, int action);

 private:
  struct Slot {
    GridHouse env;
    Observation obs;
    int lstar = 0;
    Rng rng{0};
  };
  const Slot& at(int i) const;
  Slot& at(int i);
  void respawn(Slot& s);

  TaskKind kind_;
  SeedRange houses_;
  ShapingFlags shaping_;
  Embodiment emb_;
  std::vector<Slot> slots_;
};

}  // namespace flare::env
