#include "flare/env/gridhouse.hpp"

#include <algorithm>

#include "flare/error.hpp"

namespace flare::env {

namespace {

uint8_t cell_token(const House& h, int x, int y) {
  if (h.is_wall(x, y)) return 0;
  int oid = h.object_at(x, y);
  if (oid < 0) return 1;
  const ObjectInstance& o = h.objects[oid];
  return static_cast<uint8_t>(2 + 3 * static_cast<int>(o.category) + (o.size_class - 1));
}

bool within_prox(const AgentState& s, int cx, int cy, int prox) {
  return std::max(std::abs(cx - s.x), std::abs(cy - s.y)) <= prox;
}

// Visible, on-grid, within Chebyshev proximity.
bool observable_target(const AgentState& s, const ObjectInstance& o, int prox) {
  if (o.x < 0) return false;  // currently held
  return within_prox(s, o.x, o.y, prox) && GridHouse::cell_visible(s, o.x, o.y);
}

bool afford_match(const ObjectInstance& o, Afford a) {
  switch (a) {
    case Afford::Sittable: return cat_sittable(o.category);
    case Afford::Pickupable: return o.pickupable;
    default: return cat_container(o.category);
  }
}

}  // namespace

bool GridHouse::cell_visible(const AgentState& s, int cx, int cy) {
  int rx = cx - s.x, ry = cy - s.y;
  int f = rx * fwd_dx(s.h) + ry * fwd_dy(s.h);
  int l = rx * right_dx(s.h) + ry * right_dy(s.h);
  int row = f - s.tilt;
  return row >= 0 && row < kWindowSide && l >= -3 && l <= 3;
}

bool GridHouse::success_at(const House& h, const Instruction& ins, const AgentState& s) {
  const int prox = 2;
  switch (ins.kind) {
    case TaskKind::ObjectNav: {
      for (const auto& o : h.objects)
        if (o.category == ins.category && observable_target(s, o, prox)) return true;
      return false;
    }
    case TaskKind::PickUp:
    case TaskKind::Fetch:
      return s.held >= 0 && h.objects[s.held].category == ins.category;
    case TaskKind::RoomVisit:
      return h.room_count() > 0 &&
             s.subdone_mask == (uint32_t{1} << h.room_count()) - 1;
    case TaskKind::ObjNavRelAttr: {
      // Success targets the unique size extremum across the category.
      int best = -1;
      for (const auto& o : h.objects)
        if (o.category == ins.category) {
          if (best < 0)
            best = o.size_class;
          else
            best = ins.sup == Superlative::Largest ? std::max(best, o.size_class)
                                                   : std::min(best, o.size_class);
        }
      if (best < 0) return false;
      for (const auto& o : h.objects)
        if (o.category == ins.category && o.size_class == best &&
            observable_target(s, o, prox))
          return true;
      return false;
    }
    case TaskKind::RoomNav: {
      for (int y = 0; y < h.height; ++y)
        for (int x = 0; x < h.width; ++x) {
          int16_t r = h.room_at(x, y);
          if (r >= 0 && h.room_types[r] == ins.room && within_prox(s, x, y, prox) &&
              cell_visible(s, x, y))
            return true;
        }
      return false;
    }
    case TaskKind::ObjNavAfford: {
      for (const auto& o : h.objects)
        if (afford_match(o, ins.afford) && observable_target(s, o, prox)) return true;
      return false;
    }
  }
  return false;
}

GridHouse::GridHouse(House house, Instruction instr, TaskSpec spec,
                     EmbodimentSpec emb, ShapingFlags shaping)
    : pristine_(std::move(house)),
      house_(pristine_),
      instr_(instr),
      spec_(spec),
      emb_(emb),
      shaping_(shaping) {
  if (instr_.kind != spec_.kind) throw ContractError("instruction kind does not match task");
}

Observation GridHouse::observe() const {
  Observation obs;
  const AgentState& s = state_;
  for (int r = 0; r < kWindowSide; ++r) {
    int f = r + s.tilt;
    for (int l = -3; l <= 3; ++l) {
      int x = s.x + f * fwd_dx(s.h) + l * right_dx(s.h);
      int y = s.y + f * fwd_dy(s.h) + l * right_dy(s.h);
      obs.window[r * kWindowSide + (l + 3)] = cell_token(house_, x, y);
    }
  }
  obs.proprio[0] = static_cast<uint8_t>(s.arm);
  obs.proprio[1] = static_cast<uint8_t>(
      4 + (s.held < 0 ? 0 : 1 + static_cast<int>(house_.objects[s.held].category)));
  obs.proprio[2] = static_cast<uint8_t>(21 + (s.tilt + 1));
  obs.instr = instr_.tokens();
  return obs;
}

Observation GridHouse::reset(uint64_t seed) {
  house_ = pristine_;
  state_ = AgentState{};
  Rng rng(seed, /*stream=*/11);

  std::vector<std::pair<int, int>> free_cells;
  for (int y = 0; y < house_.height; ++y)
    for (int x = 0; x < house_.width; ++x)
      if (!house_.blocked(x, y)) free_cells.emplace_back(x, y);
  if (free_cells.empty()) throw ContractError("reset: house has no free cell");

  for (int attempt = 0; attempt < 1000; ++attempt) {
    auto [x, y] = free_cells[rng.randint(0, static_cast<int>(free_cells.size()))];
    AgentState cand;
    cand.x = x;
    cand.y = y;
    cand.h = static_cast<Heading>(rng.randint(0, 4));
    if (success_at(house_, instr_, cand)) continue;
    if (instr_.kind == TaskKind::PickUp) {
      bool seen = false;
      for (const auto& o : house_.objects)
        if (o.category == instr_.category && cell_visible(cand, o.x, o.y)) seen = true;
      if (!seen) continue;
    }
    state_ = cand;
    live_ = true;
    return observe();
  }
  throw UnsatisfiableInstructionError("reset: no admissible spawn pose found");
}

StepResult GridHouse::step(int action) {
  if (!live_) throw ContractError("step before reset");
  if (state_.done) throw ContractError("step on finished episode");
  if (action < 0 || action >= kNumActions) throw ContractError("action index out of range");

  AgentState& s = state_;
  s.steps += 1;
  bool collided = false;

  auto try_move = [&](int dir) {
    int nx = s.x + dir * fwd_dx(s.h), ny = s.y + dir * fwd_dy(s.h);
    if (house_.blocked(nx, ny)) {
      s.collisions += 1;
      collided = true;
    } else {
      s.x = nx;
      s.y = ny;
    }
  };

  if (!emb_.valid[action]) {
    // Masked actions are never offered to policies; if forced, they waste the step.
  } else if (action == emb_.tilt_up_action) {
    s.tilt = std::min(1, s.tilt + 1);
  } else if (action == emb_.tilt_down_action) {
    s.tilt = std::max(-1, s.tilt - 1);
  } else {
    switch (action) {
      case MoveAhead: try_move(+1); break;
      case MoveBack: try_move(-1); break;
      case RotateLeft:
      case RotateLeftSmall: s.h = turn_left(s.h); break;
      case RotateRight:
      case RotateRightSmall: s.h = turn_right(s.h); break;
      case ArmExtend: s.arm = std::min(3, s.arm + 1); break;
      case ArmRetract: s.arm = std::max(0, s.arm - 1); break;
      case ArmUp:
      case ArmDown:
      case WristCW:
      case WristCCW:
        break;  // articulation without grid effect
      case Pickup: {
        if (s.held >= 0) break;
        for (int f = 1; f <= s.arm; ++f) {
          int cx = s.x + f * fwd_dx(s.h), cy = s.y + f * fwd_dy(s.h);
          if (house_.is_wall(cx, cy)) break;
          int oid = house_.object_at(cx, cy);
          if (oid < 0) continue;
          if (house_.objects[oid].pickupable) {
            s.held = oid;
            house_.object_cell[cy * house_.width + cx] = -1;
            house_.objects[oid].x = house_.objects[oid].y = -1;
          }
          break;  // first object in reach ends the sweep either way
        }
        break;
      }
      case Dropoff: {
        if (s.held < 0) break;
        int cx = s.x + fwd_dx(s.h), cy = s.y + fwd_dy(s.h);
        if (house_.is_wall(cx, cy) || house_.object_at(cx, cy) >= 0) break;
        ObjectInstance& o = house_.objects[s.held];
        o.x = cx;
        o.y = cy;
        house_.object_cell[cy * house_.width + cx] = o.id;
        s.held = -1;
        break;
      }
      case SubDone: {
        if (instr_.kind != TaskKind::RoomVisit) break;
        int16_t room = house_.room_at(s.x, s.y);
        uint32_t bit = uint32_t{1} << room;
        if (s.subdone_mask & bit) break;  // repeat confirmations are wasted
        s.subdone_mask |= bit;
        if (s.subdone_mask == (uint32_t{1} << house_.room_count()) - 1) {
          s.done = true;
          s.success = true;
        }
        break;
      }
      case Done: {
        s.done = true;
        s.success = instr_.kind == TaskKind::RoomVisit
                        ? false  // RoomVisit only ends through its last SubDone
                        : success_at(house_, instr_, s);
        break;
      }
      default:
        break;  // reserved indices are inert under embodiment A
    }
  }

  StepResult r;
  r.success = s.success;
  if (s.done) {
    r.done = true;
    r.reward = s.success ? 1.0f : 0.0f;
  } else if (s.steps >= spec_.max_steps) {
    s.done = true;
    r.done = true;
    r.timeout = true;
  }
  if (shaping_.step_penalty) r.reward -= 0.01f;
  if (shaping_.collision_penalty && collided) r.reward -= 0.5f;
  r.obs = observe();
  return r;
}

Instruction sample_instruction(const House& h, TaskKind kind, Rng& rng) {
  Instruction ins;
  ins.kind = kind;
  auto fail = [&] {
    return UnsatisfiableInstructionError(std::string("no satisfiable ") +
                                         task_name(kind) + " instruction in house");
  };
  switch (kind) {
    case TaskKind::ObjectNav:
    case TaskKind::PickUp:
    case TaskKind::Fetch: {
      bool need_pick = kind != TaskKind::ObjectNav;
      std::vector<Cat> cats;
      for (int c = 0; c < kNumCategories; ++c) {
        Cat cat = static_cast<Cat>(c);
        if (need_pick && !cat_pickupable(cat)) continue;
        for (const auto& o : h.objects)
          if (o.category == cat) {
            cats.push_back(cat);
            break;
          }
      }
      if (cats.empty()) throw fail();
      ins.category = cats[rng.randint(0, static_cast<int>(cats.size()))];
      return ins;
    }
    case TaskKind::RoomVisit:
      if (h.room_count() < 2) throw fail();
      return ins;
    case TaskKind::ObjNavRelAttr: {
      // Candidate (category, superlative) pairs: two or more instances with a
      // unique size extremum, so the goal object is well defined.
      std::vector<std::pair<Cat, Superlative>> cands;
      for (int c = 0; c < kNumCategories; ++c) {
        int count = 0, mn = 9, mx = 0, n_mn = 0, n_mx = 0;
        for (const auto& o : h.objects)
          if (o.category == static_cast<Cat>(c)) {
            ++count;
            mn = std::min(mn, o.size_class);
            mx = std::max(mx, o.size_class);
          }
        if (count < 2 || mn == mx) continue;
        for (const auto& o : h.objects)
          if (o.category == static_cast<Cat>(c)) {
            n_mn += o.size_class == mn;
            n_mx += o.size_class == mx;
          }
        if (n_mx == 1) cands.emplace_back(static_cast<Cat>(c), Superlative::Largest);
        if (n_mn == 1) cands.emplace_back(static_cast<Cat>(c), Superlative::Smallest);
      }
      if (cands.empty()) throw fail();
      auto [cat, sup] = cands[rng.randint(0, static_cast<int>(cands.size()))];
      ins.category = cat;
      ins.sup = sup;
      return ins;
    }
    case TaskKind::RoomNav: {
      std::vector<RoomType> types;
      for (int t = 0; t < kNumRoomTypes; ++t)
        for (const RoomType rt : h.room_types)
          if (rt == static_cast<RoomType>(t)) {
            types.push_back(rt);
            break;
          }
      if (types.empty()) throw fail();
      ins.room = types[rng.randint(0, static_cast<int>(types.size()))];
      return ins;
    }
    case TaskKind::ObjNavAfford: {
      std::vector<Afford> tags;
      for (Afford a : {Afford::Sittable, Afford::Pickupable, Afford::Container}) {
        for (const auto& o : h.objects)
          if (afford_match(o, a)) {
            tags.push_back(a);
            break;
          }
      }
      if (tags.empty()) throw fail();
      ins.afford = tags[rng.randint(0, static_cast<int>(tags.size()))];
      return ins;
    }
  }
  throw fail();
}

}  // namespace flare::env
