#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "flare/env/gridhouse.hpp"

namespace flare::env {

// Shortest-path planner over poses (x, y, heading) using unit-cost MoveAhead,
// MoveBack, RotateLeft and RotateRight, with the task's manipulation or
// confirmation actions appended. Returns the full action sequence from the
// given pose to successful termination, or nullopt when unreachable.
std::optional<std::vector<int>> expert_plan(const House& h, const Instruction& ins,
                                            const AgentState& start);

// Length of the shortest pure-navigation sequence from `start` to any pose
// satisfying `goal` (-1 when unreachable). Exposed for planner tests.
int nav_distance(const House& h, const AgentState& start,
                 const std::function<bool(const AgentState&)>& goal);

}  // namespace flare::env
