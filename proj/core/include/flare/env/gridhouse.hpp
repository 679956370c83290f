#pragma once

#include "flare/env/house.hpp"
#include "flare/rng.hpp"

namespace flare::env {

struct StepResult {
  Observation obs;  // terminal observation when done
  float reward = 0.0f;
  bool done = false;
  bool success = false;
  bool timeout = false;
};

// Single-agent episodic environment over a generated house. Rewards are
// sparse binary at termination unless shaping flags are set. All transitions
// are deterministic given the action sequence; reset is deterministic given
// its seed.
class GridHouse {
 public:
  GridHouse() = default;
  GridHouse(House house, Instruction instr, TaskSpec spec,
            EmbodimentSpec emb = mask_for_embodiment(Embodiment::A),
            ShapingFlags shaping = {});

  // Uniform spawn over free floor cells and headings, rejecting poses that
  // already satisfy the goal. PickUp additionally requires its target
  // category to start inside the view window.
  Observation reset(uint64_t seed);
  StepResult step(int action);

  Observation observe() const;
  bool goal_satisfied() const { return success_at(house_, instr_, state_); }
  bool episode_live() const { return live_ && !state_.done; }
  const AgentState& agent() const { return state_; }
  const House& house() const { return house_; }
  const Instruction& instruction() const { return instr_; }
  const TaskSpec& task() const { return spec_; }
  const EmbodimentSpec& embodiment() const { return emb_; }
  const ShapingFlags& shaping() const { return shaping_; }

  // Goal predicate on an arbitrary pose; pure, used by planners and tests.
  static bool success_at(const House& h, const Instruction& ins, const AgentState& s);
  // Geometric view test: forward offset (minus tilt) in [0,6], lateral in [-3,3].
  static bool cell_visible(const AgentState& s, int cx, int cy);

 private:
  House pristine_;  // layout as generated; restored on reset
  House house_;     // live copy, object positions mutate with pickup/dropoff
  Instruction instr_;
  TaskSpec spec_;
  EmbodimentSpec emb_;
  ShapingFlags shaping_;
  AgentState state_;
  bool live_ = false;
};

// Uniformly samples an instruction of the given kind that is satisfiable in
// this house; throws UnsatisfiableInstructionError when the house offers no
// valid argument (caller should resample the house).
Instruction sample_instruction(const House& h, TaskKind kind, Rng& rng);

}  // namespace flare::env
