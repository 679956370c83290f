#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

namespace flare::env {

// ---- object vocabulary ----
inline constexpr int kNumCategories = 16;
enum class Cat : uint8_t {
  Apple, Mug, Book, Ball, Vase, Box, Chair, Sofa,
  Bed, Table, Lamp, Tv, Fridge, Sink, Toilet, Plant
};
const char* cat_name(Cat c);
std::optional<Cat> cat_from_name(const std::string& s);
bool cat_pickupable(Cat c);
bool cat_sittable(Cat c);
bool cat_container(Cat c);
// Allowed size classes per category, as a bitmask over sizes 1..3.
uint8_t cat_size_mask(Cat c);
inline bool cat_size_ok(Cat c, int size) {
  return size >= 1 && size <= 3 && (cat_size_mask(c) >> (size - 1)) & 1;
}

// ---- rooms ----
inline constexpr int kNumRoomTypes = 5;
enum class RoomType : uint8_t { Kitchen, Bedroom, LivingRoom, Bathroom, Office };
const char* room_name(RoomType r);
std::optional<RoomType> room_from_name(const std::string& s);

// ---- headings ----
enum class Heading : uint8_t { N, E, S, W };
inline int fwd_dx(Heading h) { return h == Heading::E ? 1 : h == Heading::W ? -1 : 0; }
inline int fwd_dy(Heading h) { return h == Heading::S ? 1 : h == Heading::N ? -1 : 0; }
// Unit vector to the agent's right (heading rotated 90 degrees clockwise).
inline int right_dx(Heading h) { return fwd_dy(h) == 0 ? 0 : -fwd_dy(h); }
inline int right_dy(Heading h) { return fwd_dx(h); }
inline Heading turn_left(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 3) % 4); }
inline Heading turn_right(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 1) % 4); }

// ---- task kinds ----
inline constexpr int kNumTaskKinds = 7;
enum class TaskKind : uint8_t {
  ObjectNav, PickUp, Fetch, RoomVisit,  // base tasks (demonstrated)
  ObjNavRelAttr, RoomNav, ObjNavAfford  // novel tasks (never demonstrated)
};
const char* task_name(TaskKind k);
std::optional<TaskKind> task_from_name(const std::string& s);
inline bool task_is_base(TaskKind k) { return static_cast<int>(k) <= 3; }

enum class Afford : uint8_t { Sittable, Pickupable, Container };
const char* afford_name(Afford a);
enum class Superlative : uint8_t { Largest, Smallest };
const char* superlative_name(Superlative s);

// ---- actions ----
inline constexpr int kNumActions = 20;
enum Action : int {
  MoveAhead = 0, MoveBack, RotateLeft, RotateRight,
  RotateLeftSmall, RotateRightSmall,  // alias to 90-degree turns at grid scale
  ArmExtend, ArmRetract, ArmUp, ArmDown, WristCW, WristCCW,
  Pickup, Dropoff, SubDone, Done,
  Reserved0, Reserved1, Reserved2, Reserved3
};
const char* action_name(int a);

// ---- embodiments ----
enum class Embodiment : uint8_t { A, B };
std::optional<Embodiment> embodiment_from_name(const std::string& s);

// Validity mask plus the repurposing table for reserved indices. Embodiment B
// has no arm: arm/wrist/pickup/dropoff/subdone are invalid, and two reserved
// indices become camera tilt controls that shift the view window one row.
struct EmbodimentSpec {
  Embodiment id = Embodiment::A;
  std::array<uint8_t, kNumActions> valid{};
  int tilt_up_action = -1;
  int tilt_down_action = -1;
  int valid_count() const {
    int n = 0;
    for (uint8_t v : valid) n += v;
    return n;
  }
};
EmbodimentSpec mask_for_embodiment(Embodiment e);

// ---- instructions ----
inline constexpr int kInstrLen = 8;
// Token layout: [0]=1+kind, then arguments, 0-padded. Vocabulary:
//   0 PAD, 1..7 task kind, 8..23 category, 24..28 room type,
//   29..31 affordance, 32..33 superlative.
inline constexpr int kInstrVocab = 34;

struct Instruction {
  TaskKind kind = TaskKind::ObjectNav;
  Cat category = Cat::Apple;          // ObjectNav / PickUp / Fetch / ObjNavRelAttr
  RoomType room = RoomType::Kitchen;  // RoomNav
  Afford afford = Afford::Sittable;   // ObjNavAfford
  Superlative sup = Superlative::Largest;  // ObjNavRelAttr

  std::array<uint8_t, kInstrLen> tokens() const;
  static Instruction from_tokens(const std::array<uint8_t, kInstrLen>& t);
  std::string text() const;
  bool operator==(const Instruction&) const = default;
};

// ---- observations ----
// 7x7 egocentric window: row r is forward distance r (plus camera tilt), the
// agent sits at the rear-row center, column 3. Cell token vocabulary:
//   0 wall or out of bounds, 1 empty floor, 2 + 3*category + (size-1) objects.
inline constexpr int kWindowSide = 7;
inline constexpr int kWindowCells = kWindowSide * kWindowSide;
inline constexpr int kCellVocab = 2 + 3 * kNumCategories;  // 50
// Proprioception tokens: arm extension 0..3, held-object slot 4..20 (4 = empty
// hand, 5+cat otherwise), camera tilt 21..23 (21 = tilted down).
inline constexpr int kProprioVocab = 24;

struct Observation {
  std::array<uint8_t, kWindowCells> window{};
  std::array<uint8_t, 3> proprio{};
  std::array<uint8_t, kInstrLen> instr{};
  bool operator==(const Observation&) const = default;
};

// ---- agent & task ----
struct AgentState {
  int x = 0, y = 0;
  Heading h = Heading::N;
  int arm = 0;       // 0..3 cells of reach straight ahead
  int held = -1;     // object id or -1
  int tilt = 0;      // -1/0/+1 window row shift (embodiment B)
  int collisions = 0;
  int steps = 0;
  bool done = false;
  bool success = false;
  uint32_t subdone_mask = 0;  // rooms confirmed via SubDone (RoomVisit)
};

struct TaskSpec {
  TaskKind kind = TaskKind::ObjectNav;
  int max_steps = 200;   // RoomVisit runs 300
  int proximity = 2;     // Chebyshev distance for success
  int rooms_min = 2, rooms_max = 4;
  static TaskSpec for_kind(TaskKind k);
};

struct ShapingFlags {
  bool step_penalty = false;       // -0.01 per step
  bool collision_penalty = false;  // -0.5 per blocked movement
  bool any() const { return step_penalty || collision_penalty; }
};

}  // namespace flare::env
