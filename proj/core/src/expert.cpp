#include "flare/env/expert.hpp"

#include <algorithm>
#include <deque>

namespace flare::env {

namespace {

struct PoseGraph {
  const House& h;
  int W, H;
  int n_poses;
  explicit PoseGraph(const House& house)
      : h(house), W(house.width), H(house.height), n_poses(W * H * 4) {}

  int index(int x, int y, Heading hd) const {
    return (y * W + x) * 4 + static_cast<int>(hd);
  }
  AgentState pose_of(int idx, const AgentState& proto) const {
    AgentState s = proto;
    s.h = static_cast<Heading>(idx & 3);
    int cell = idx >> 2;
    s.x = cell % W;
    s.y = cell / W;
    return s;
  }
  // Successor pose for a navigation action, or -1 when blocked.
  int successor(int idx, int action) const {
    int x = (idx >> 2) % W, y = (idx >> 2) / W;
    Heading hd = static_cast<Heading>(idx & 3);
    switch (action) {
      case RotateLeft: return (idx & ~3) | static_cast<int>(turn_left(hd));
      case RotateRight: return (idx & ~3) | static_cast<int>(turn_right(hd));
      case MoveAhead:
      case MoveBack: {
        int dir = action == MoveAhead ? 1 : -1;
        int nx = x + dir * fwd_dx(hd), ny = y + dir * fwd_dy(hd);
        if (h.blocked(nx, ny)) return -1;
        return (ny * W + nx) * 4 + static_cast<int>(hd);
      }
      default: return -1;
    }
  }
};

constexpr int kNavActions[4] = {MoveAhead, MoveBack, RotateLeft, RotateRight};

struct BfsOut {
  int goal_idx = -1;
  std::vector<int> actions;
};

// Multi-goal breadth-first search; returns the action path to the nearest
// pose passing `goal`.
std::optional<BfsOut> bfs(const PoseGraph& g, const AgentState& start,
                          const std::function<bool(const AgentState&)>& goal) {
  std::vector<int32_t> parent(g.n_poses, -2);  // -2 unseen, -1 root
  std::vector<int8_t> via(g.n_poses, -1);
  int s = g.index(start.x, start.y, start.h);
  if (goal(start)) return BfsOut{s, {}};
  parent[s] = -1;
  std::deque<int> q{s};
  while (!q.empty()) {
    int cur = q.front();
    q.pop_front();
    for (int a : kNavActions) {
      int nxt = g.successor(cur, a);
      if (nxt < 0 || parent[nxt] != -2) continue;
      parent[nxt] = cur;
      via[nxt] = static_cast<int8_t>(a);
      if (goal(g.pose_of(nxt, start))) {
        BfsOut out;
        out.goal_idx = nxt;
        for (int i = nxt; parent[i] >= 0; i = parent[i]) out.actions.push_back(via[i]);
        std::reverse(out.actions.begin(), out.actions.end());
        return out;
      }
      q.push_back(nxt);
    }
  }
  return std::nullopt;
}

}  // namespace

int nav_distance(const House& h, const AgentState& start,
                 const std::function<bool(const AgentState&)>& goal) {
  PoseGraph g(h);
  auto out = bfs(g, start, goal);
  return out ? static_cast<int>(out->actions.size()) : -1;
}

std::optional<std::vector<int>> expert_plan(const House& h, const Instruction& ins,
                                            const AgentState& start) {
  PoseGraph g(h);

  if (ins.kind == TaskKind::PickUp || ins.kind == TaskKind::Fetch) {
    auto facing_target = [&](const AgentState& s) {
      int oid = h.object_at(s.x + fwd_dx(s.h), s.y + fwd_dy(s.h));
      return oid >= 0 && h.objects[oid].category == ins.category;
    };
    auto out = bfs(g, start, facing_target);
    if (!out) return std::nullopt;
    std::vector<int> plan = out->actions;
    if (start.arm < 1) plan.push_back(ArmExtend);
    plan.push_back(Pickup);
    plan.push_back(Done);
    return plan;
  }

  if (ins.kind == TaskKind::RoomVisit) {
    std::vector<int> plan;
    AgentState pose = start;
    uint32_t mask = start.subdone_mask;
    const uint32_t full = (uint32_t{1} << h.room_count()) - 1;
    auto flag_here = [&] {
      uint32_t bit = uint32_t{1} << h.room_at(pose.x, pose.y);
      if (!(mask & bit)) {
        mask |= bit;
        plan.push_back(SubDone);
      }
    };
    flag_here();
    while (mask != full) {
      auto in_new_room = [&](const AgentState& s) {
        int16_t r = h.room_at(s.x, s.y);
        return r >= 0 && !(mask & (uint32_t{1} << r));
      };
      auto out = bfs(g, pose, in_new_room);
      if (!out) return std::nullopt;
      plan.insert(plan.end(), out->actions.begin(), out->actions.end());
      pose = g.pose_of(out->goal_idx, pose);
      flag_here();
    }
    return plan;
  }

  // Remaining kinds terminate with Done at a pose satisfying the goal.
  auto goal = [&](const AgentState& s) { return GridHouse::success_at(h, ins, s); };
  auto out = bfs(g, start, goal);
  if (!out) return std::nullopt;
  std::vector<int> plan = out->actions;
  plan.push_back(Done);
  return plan;
}

}  // namespace flare::env
