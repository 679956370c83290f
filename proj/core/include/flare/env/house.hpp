#pragma once

#include <cstdint>
#include <vector>

#include "flare/env/types.hpp"

namespace flare::env {

struct ObjectInstance {
  int id = 0;
  Cat category = Cat::Apple;
  int size_class = 1;  // 1..3
  int x = 0, y = 0;
  bool pickupable = false;
  bool operator==(const ObjectInstance&) const = default;
};

struct House {
  int width = 0, height = 0;
  uint64_t seed = 0;
  std::vector<uint8_t> walls;     // width*height, 1 = wall
  std::vector<int16_t> room_of;   // room id per cell, -1 on walls
  std::vector<RoomType> room_types;
  std::vector<ObjectInstance> objects;
  std::vector<int> object_cell;   // object id per cell, -1 if none

  int room_count() const { return static_cast<int>(room_types.size()); }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  bool is_wall(int x, int y) const { return !in_bounds(x, y) || walls[y * width + x]; }
  int16_t room_at(int x, int y) const { return in_bounds(x, y) ? room_of[y * width + x] : int16_t{-1}; }
  int object_at(int x, int y) const { return in_bounds(x, y) ? object_cell[y * width + x] : -1; }
  // A cell the agent cannot occupy or traverse.
  bool blocked(int x, int y) const { return is_wall(x, y) || object_at(x, y) >= 0; }
  bool operator==(const House&) const = default;
};

// Procedural layout: binary-space-partition rooms joined by doors, typed and
// furnished. Same (seed, room_count) always yields an identical house; throws
// GenerationError after 100 failed attempts.
House generate_house(uint64_t seed, int room_count);

}  // namespace flare::env
