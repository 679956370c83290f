#include "flare/env/house.hpp"

#include <algorithm>
#include <cstring>

#include "flare/error.hpp"
#include "flare/rng.hpp"

namespace flare::env {

namespace {

struct CatInfo {
  const char* name;
  bool pickupable, sittable, container;
  uint8_t size_mask;  // bit i = size i+1 allowed
};

constexpr CatInfo kCats[kNumCategories] = {
    {"apple", true, false, false, 0b011},  {"mug", true, false, false, 0b011},
    {"book", true, false, false, 0b011},   {"ball", true, false, false, 0b111},
    {"vase", true, false, false, 0b111},   {"box", true, false, true, 0b111},
    {"chair", false, true, false, 0b110},  {"sofa", false, true, false, 0b100},
    {"bed", false, true, false, 0b100},    {"table", false, false, false, 0b110},
    {"lamp", false, false, false, 0b011},  {"tv", false, false, false, 0b111},
    {"fridge", false, false, true, 0b100}, {"sink", false, false, false, 0b010},
    {"toilet", false, false, false, 0b010},{"plant", false, false, false, 0b111},
};

constexpr const char* kRoomNames[kNumRoomTypes] = {
    "kitchen", "bedroom", "livingroom", "bathroom", "office"};

constexpr const char* kTaskNames[kNumTaskKinds] = {
    "objectnav", "pickup", "fetch", "roomvisit",
    "objectnav_relattr", "roomnav", "objectnav_afford"};

constexpr const char* kActionNames[kNumActions] = {
    "MoveAhead", "MoveBack", "RotateLeft", "RotateRight",
    "RotateLeftSmall", "RotateRightSmall",
    "ArmExtend", "ArmRetract", "ArmUp", "ArmDown", "WristCW", "WristCCW",
    "Pickup", "Dropoff", "SubDone", "Done",
    "Reserved0", "Reserved1", "Reserved2", "Reserved3"};

}  // namespace

const char* cat_name(Cat c) { return kCats[static_cast<int>(c)].name; }
bool cat_pickupable(Cat c) { return kCats[static_cast<int>(c)].pickupable; }
bool cat_sittable(Cat c) { return kCats[static_cast<int>(c)].sittable; }
bool cat_container(Cat c) { return kCats[static_cast<int>(c)].container; }
uint8_t cat_size_mask(Cat c) { return kCats[static_cast<int>(c)].size_mask; }

std::optional<Cat> cat_from_name(const std::string& s) {
  for (int i = 0; i < kNumCategories; ++i)
    if (s == kCats[i].name) return static_cast<Cat>(i);
  return std::nullopt;
}

const char* room_name(RoomType r) { return kRoomNames[static_cast<int>(r)]; }
std::optional<RoomType> room_from_name(const std::string& s) {
  for (int i = 0; i < kNumRoomTypes; ++i)
    if (s == kRoomNames[i]) return static_cast<RoomType>(i);
  return std::nullopt;
}

const char* task_name(TaskKind k) { return kTaskNames[static_cast<int>(k)]; }
std::optional<TaskKind> task_from_name(const std::string& s) {
  for (int i = 0; i < kNumTaskKinds; ++i)
    if (s == kTaskNames[i]) return static_cast<TaskKind>(i);
  return std::nullopt;
}

const char* afford_name(Afford a) {
  switch (a) {
    case Afford::Sittable: return "sittable";
    case Afford::Pickupable: return "pickupable";
    default: return "container";
  }
}

const char* superlative_name(Superlative s) {
  return s == Superlative::Largest ? "largest" : "smallest";
}

const char* action_name(int a) {
  if (a < 0 || a >= kNumActions) throw ContractError("action index out of range");
  return kActionNames[a];
}

std::optional<Embodiment> embodiment_from_name(const std::string& s) {
  if (s == "a" || s == "A") return Embodiment::A;
  if (s == "b" || s == "B") return Embodiment::B;
  return std::nullopt;
}

EmbodimentSpec mask_for_embodiment(Embodiment e) {
  EmbodimentSpec spec;
  spec.id = e;
  if (e == Embodiment::A) {
    spec.valid.fill(1);  // reserved indices stay inert no-ops
    return spec;
  }
  // No arm: movement, turning, Done, plus camera tilt on two reserved slots.
  spec.valid.fill(0);
  for (int a : {MoveAhead, MoveBack, RotateLeft, RotateRight,
                RotateLeftSmall, RotateRightSmall, Done, Reserved0, Reserved1})
    spec.valid[a] = 1;
  spec.tilt_up_action = Reserved0;
  spec.tilt_down_action = Reserved1;
  return spec;
}

TaskSpec TaskSpec::for_kind(TaskKind k) {
  TaskSpec t;
  t.kind = k;
  if (k == TaskKind::RoomVisit) {
    t.max_steps = 300;
    t.rooms_min = 3;
    t.rooms_max = 5;
  } else {
    t.max_steps = 200;
    t.rooms_min = 2;
    t.rooms_max = 4;
  }
  return t;
}

// ---- instruction encoding ----

std::array<uint8_t, kInstrLen> Instruction::tokens() const {
  std::array<uint8_t, kInstrLen> t{};
  t[0] = static_cast<uint8_t>(1 + static_cast<int>(kind));
  switch (kind) {
    case TaskKind::ObjectNav:
    case TaskKind::PickUp:
    case TaskKind::Fetch:
      t[1] = static_cast<uint8_t>(8 + static_cast<int>(category));
      break;
    case TaskKind::RoomVisit:
      break;
    case TaskKind::ObjNavRelAttr:
      t[1] = static_cast<uint8_t>(8 + static_cast<int>(category));
      t[2] = static_cast<uint8_t>(32 + static_cast<int>(sup));
      break;
    case TaskKind::RoomNav:
      t[1] = static_cast<uint8_t>(24 + static_cast<int>(room));
      break;
    case TaskKind::ObjNavAfford:
      t[1] = static_cast<uint8_t>(29 + static_cast<int>(afford));
      break;
  }
  return t;
}

Instruction Instruction::from_tokens(const std::array<uint8_t, kInstrLen>& t) {
  auto bad = [&](const char* why) { return SchemaError(std::string("instruction tokens: ") + why); };
  if (t[0] < 1 || t[0] > kNumTaskKinds) throw bad("first token must encode a task kind");
  Instruction ins;
  ins.kind = static_cast<TaskKind>(t[0] - 1);
  int args = 0;
  auto take_cat = [&](uint8_t v) {
    if (v < 8 || v >= 24) throw bad("expected a category token");
    return static_cast<Cat>(v - 8);
  };
  switch (ins.kind) {
    case TaskKind::ObjectNav:
    case TaskKind::PickUp:
    case TaskKind::Fetch:
      ins.category = take_cat(t[1]);
      args = 2;
      break;
    case TaskKind::RoomVisit:
      args = 1;
      break;
    case TaskKind::ObjNavRelAttr:
      ins.category = take_cat(t[1]);
      if (t[2] < 32 || t[2] > 33) throw bad("expected a superlative token");
      ins.sup = static_cast<Superlative>(t[2] - 32);
      args = 3;
      break;
    case TaskKind::RoomNav:
      if (t[1] < 24 || t[1] > 28) throw bad("expected a room token");
      ins.room = static_cast<RoomType>(t[1] - 24);
      args = 2;
      break;
    case TaskKind::ObjNavAfford:
      if (t[1] < 29 || t[1] > 31) throw bad("expected an affordance token");
      ins.afford = static_cast<Afford>(t[1] - 29);
      args = 2;
      break;
  }
  for (int i = args; i < kInstrLen; ++i)
    if (t[i] != 0) throw bad("trailing tokens must be padding");
  return ins;
}

std::string Instruction::text() const {
  std::string s = task_name(kind);
  switch (kind) {
    case TaskKind::ObjectNav:
    case TaskKind::PickUp:
    case TaskKind::Fetch:
      return s + " " + cat_name(category);
    case TaskKind::RoomVisit:
      return s;
    case TaskKind::ObjNavRelAttr:
      return s + " " + superlative_name(sup) + " " + cat_name(category);
    case TaskKind::RoomNav:
      return s + " " + room_name(room);
    case TaskKind::ObjNavAfford:
      return s + " " + afford_name(afford);
  }
  return s;
}

// ---- house generation ----

namespace {

struct Rect {  // inclusive floor-cell bounds
  int x0, y0, x1, y1;
  int w() const { return x1 - x0 + 1; }
  int h() const { return y1 - y0 + 1; }
};

struct Split {
  bool vertical;  // true: wall is a column
  int line;       // x of the column / y of the row
  int lo, hi;     // extent of the wall segment along the other axis
};

constexpr int kMinRoomSide = 3;

// Try one BSP layout. Returns false if the rect cannot host `rooms` leaves or
// a door cannot be carved for some split.
bool try_layout(Rng& rng, int interior_w, int interior_h, int rooms,
                House& house, std::vector<uint8_t>& door) {
  const int W = interior_w + 2, H = interior_h + 2;
  house.width = W;
  house.height = H;
  house.walls.assign(static_cast<size_t>(W) * H, 0);
  for (int x = 0; x < W; ++x) house.walls[x] = house.walls[(H - 1) * W + x] = 1;
  for (int y = 0; y < H; ++y) house.walls[y * W] = house.walls[y * W + W - 1] = 1;

  std::vector<Rect> leaves{{1, 1, interior_w, interior_h}};
  std::vector<Split> splits;
  while (static_cast<int>(leaves.size()) < rooms) {
    // Split the largest leaf that still can be split.
    int best = -1, best_dim = 0;
    for (size_t i = 0; i < leaves.size(); ++i) {
      int d = std::max(leaves[i].w(), leaves[i].h());
      if (d >= 2 * kMinRoomSide + 1 && d > best_dim) {
        best_dim = d;
        best = static_cast<int>(i);
      }
    }
    if (best < 0) return false;
    Rect r = leaves[best];
    bool vertical = r.w() >= r.h();
    Split s;
    s.vertical = vertical;
    if (vertical) {
      s.line = rng.randint(r.x0 + kMinRoomSide, r.x1 - kMinRoomSide + 1);
      s.lo = r.y0;
      s.hi = r.y1;
      leaves[best] = {r.x0, r.y0, s.line - 1, r.y1};
      leaves.push_back({s.line + 1, r.y0, r.x1, r.y1});
      for (int y = s.lo; y <= s.hi; ++y) house.walls[y * W + s.line] = 1;
    } else {
      s.line = rng.randint(r.y0 + kMinRoomSide, r.y1 - kMinRoomSide + 1);
      s.lo = r.x0;
      s.hi = r.x1;
      leaves[best] = {r.x0, r.y0, r.x1, s.line - 1};
      leaves.push_back({r.x0, s.line + 1, r.x1, r.y1});
      for (int x = s.lo; x <= s.hi; ++x) house.walls[s.line * W + x] = 1;
    }
    splits.push_back(s);
  }

  // Carve one door per split, where both sides are floor.
  door.assign(house.walls.size(), 0);
  for (const Split& s : splits) {
    std::vector<int> cand;
    for (int t = s.lo; t <= s.hi; ++t) {
      int x = s.vertical ? s.line : t;
      int y = s.vertical ? t : s.line;
      int ax = s.vertical ? x - 1 : x, ay = s.vertical ? y : y - 1;
      int bx = s.vertical ? x + 1 : x, by = s.vertical ? y : y + 1;
      if (!house.walls[ay * W + ax] && !house.walls[by * W + bx])
        cand.push_back(y * W + x);
    }
    if (cand.empty()) return false;
    int pick = cand[rng.randint(0, static_cast<int>(cand.size()))];
    house.walls[pick] = 0;
    door[pick] = 1;
  }

  // Room ids: each leaf rect is a room; door cells join the room on their
  // west/north side so every floor cell has exactly one id.
  house.room_of.assign(house.walls.size(), -1);
  for (size_t i = 0; i < leaves.size(); ++i) {
    const Rect& r = leaves[i];
    for (int y = r.y0; y <= r.y1; ++y)
      for (int x = r.x0; x <= r.x1; ++x)
        house.room_of[y * W + x] = static_cast<int16_t>(i);
  }
  for (int y = 1; y < H - 1; ++y)
    for (int x = 1; x < W - 1; ++x) {
      int i = y * W + x;
      if (!door[i]) continue;
      int16_t west = house.room_of[i - 1], north = house.room_of[i - W];
      house.room_of[i] = west >= 0 ? west : north;
    }
  house.room_types.resize(leaves.size());
  return true;
}

const Cat kAnchorsByRoom[kNumRoomTypes][2] = {
    {Cat::Fridge, Cat::Sink},   // kitchen
    {Cat::Bed, Cat::Bed},       // bedroom (single anchor, sentinel repeat)
    {Cat::Sofa, Cat::Tv},       // living room
    {Cat::Toilet, Cat::Toilet}, // bathroom (single)
    {Cat::Table, Cat::Lamp},    // office
};
const int kAnchorCount[kNumRoomTypes] = {2, 1, 2, 1, 2};

constexpr Cat kExtraPool[] = {Cat::Apple, Cat::Mug, Cat::Book, Cat::Ball,
                              Cat::Vase, Cat::Box, Cat::Chair, Cat::Plant};

int sample_size(Rng& rng, Cat c) {
  uint8_t mask = cat_size_mask(c);
  int sizes[3], n = 0;
  for (int s = 1; s <= 3; ++s)
    if ((mask >> (s - 1)) & 1) sizes[n++] = s;
  return sizes[rng.randint(0, n)];
}

// Cells of `room` eligible for an object: floor, empty, not a door, and not
// orthogonally adjacent to a door (doors must stay passable).
std::vector<int> placement_cells(const House& h, const std::vector<uint8_t>& door, int room) {
  std::vector<int> out;
  const int W = h.width;
  for (int y = 1; y < h.height - 1; ++y)
    for (int x = 1; x < W - 1; ++x) {
      int i = y * W + x;
      if (h.walls[i] || h.room_of[i] != room || h.object_cell[i] >= 0 || door[i]) continue;
      if (door[i - 1] || door[i + 1] || door[i - W] || door[i + W]) continue;
      out.push_back(i);
    }
  return out;
}

bool furnish(Rng& rng, House& house, const std::vector<uint8_t>& door) {
  const int n = house.room_count();
  // Types: a permutation of the five room types, cycled if more rooms.
  std::vector<RoomType> perm(kNumRoomTypes);
  for (int i = 0; i < kNumRoomTypes; ++i) perm[i] = static_cast<RoomType>(i);
  rng.shuffle(perm);
  for (int i = 0; i < n; ++i) house.room_types[i] = perm[i % kNumRoomTypes];

  house.object_cell.assign(house.walls.size(), -1);
  house.objects.clear();
  auto place = [&](Cat c, int room) {
    auto cells = placement_cells(house, door, room);
    if (cells.empty()) return false;
    int at = cells[rng.randint(0, static_cast<int>(cells.size()))];
    ObjectInstance obj;
    obj.id = static_cast<int>(house.objects.size());
    obj.category = c;
    obj.size_class = sample_size(rng, c);
    obj.x = at % house.width;
    obj.y = at / house.width;
    obj.pickupable = cat_pickupable(c);
    house.object_cell[at] = obj.id;
    house.objects.push_back(obj);
    return true;
  };

  for (int r = 0; r < n; ++r) {
    int t = static_cast<int>(house.room_types[r]);
    for (int a = 0; a < kAnchorCount[t]; ++a)
      if (!place(kAnchorsByRoom[t][a], r)) return false;
  }
  for (int r = 0; r < n; ++r) {
    int extras = rng.randint(1, 4);
    for (int e = 0; e < extras; ++e)
      place(kExtraPool[rng.randint(0, 8)], r);  // full room tolerated
  }
  bool any_pickupable = false;
  for (const auto& o : house.objects) any_pickupable |= o.pickupable;
  if (!any_pickupable && !place(Cat::Apple, rng.randint(0, n))) return false;
  return true;
}

bool validate(const House& h) {
  const int W = h.width, H = h.height;
  std::vector<int> free_cells;
  for (int i = 0; i < W * H; ++i)
    if (!h.walls[i] && h.object_cell[i] < 0) free_cells.push_back(i);
  if (free_cells.size() < 2) return false;

  // All free cells mutually reachable (objects block).
  std::vector<uint8_t> seen(W * H, 0);
  std::vector<int> stack{free_cells[0]};
  seen[free_cells[0]] = 1;
  size_t reached = 0;
  while (!stack.empty()) {
    int i = stack.back();
    stack.pop_back();
    ++reached;
    for (int d : {-1, 1, -W, W}) {
      int j = i + d;
      if (!seen[j] && !h.walls[j] && h.object_cell[j] < 0) {
        seen[j] = 1;
        stack.push_back(j);
      }
    }
  }
  if (reached != free_cells.size()) return false;

  // Every object approachable from a free neighbor; at least one pickupable.
  bool any_pick = false;
  for (const auto& o : h.objects) {
    any_pick |= o.pickupable;
    bool ok = false;
    for (int d : {-1, 1, -W, W}) {
      int j = o.y * W + o.x + d;
      if (!h.walls[j] && h.object_cell[j] < 0) ok = true;
    }
    if (!ok) return false;
  }
  if (!any_pick) return false;

  // Every room keeps at least one free cell.
  std::vector<uint8_t> room_free(h.room_count(), 0);
  for (int i : free_cells)
    if (h.room_of[i] >= 0) room_free[h.room_of[i]] = 1;
  for (uint8_t v : room_free)
    if (!v) return false;
  return true;
}

}  // namespace

House generate_house(uint64_t seed, int room_count) {
  if (room_count < 2 || room_count > 6)
    throw ContractError("generate_house: room_count must be in [2,6]");
  Rng rng(seed, /*stream=*/7);
  for (int attempt = 0; attempt < 100; ++attempt) {
    House house;
    house.seed = seed;
    int iw = 7 + 2 * (room_count - 1) + rng.randint(0, 3);
    int ih = 7 + 2 * std::max(0, room_count - 2) + rng.randint(0, 3);
    std::vector<uint8_t> door;
    if (!try_layout(rng, iw, ih, room_count, house, door)) continue;
    if (!furnish(rng, house, door)) continue;
    if (!validate(house)) continue;
    return house;
  }
  throw GenerationError("generate_house: no valid layout after 100 attempts");
}

}  // namespace flare::env
