#include <set>

#include "doctest.h"
#include "flare/env/house.hpp"
#include "flare/error.hpp"
#include "oracles/grid_oracles.hpp"

using namespace flare;
using namespace flare::env;

TEST_CASE("house generation is deterministic in seed and room count") {
  for (uint64_t seed : {1u, 42u, 999u}) {
    House a = generate_house(seed, 3);
    House b = generate_house(seed, 3);
    CHECK(a == b);
  }
  House x = generate_house(5, 3);
  House y = generate_house(6, 3);
  CHECK(x != y);
}

TEST_CASE("room count parameter is echoed exactly") {
  for (int rooms = 2; rooms <= 6; ++rooms) {
    House h = generate_house(100 + rooms, rooms);
    CHECK(h.room_count() == rooms);
    std::set<int> ids;
    for (int16_t r : h.room_of)
      if (r >= 0) ids.insert(r);
    CHECK(static_cast<int>(ids.size()) == rooms);
    CHECK(*ids.begin() == 0);
    CHECK(*ids.rbegin() == rooms - 1);
  }
  CHECK_THROWS_AS(generate_house(1, 1), ContractError);
  CHECK_THROWS_AS(generate_house(1, 7), ContractError);
}

TEST_CASE("seed sweep: connectivity and structural invariants hold") {
  int checked = 0;
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    int rooms = 2 + static_cast<int>(seed % 4);
    House h = generate_house(seed, rooms);
    ++checked;

    // Border is solid wall.
    for (int x = 0; x < h.width; ++x) {
      REQUIRE(h.is_wall(x, 0));
      REQUIRE(h.is_wall(x, h.height - 1));
    }
    for (int y = 0; y < h.height; ++y) {
      REQUIRE(h.is_wall(0, y));
      REQUIRE(h.is_wall(h.width - 1, y));
    }

    // Every floor cell has exactly one room id; walls have none.
    for (int i = 0; i < h.width * h.height; ++i) {
      if (h.walls[i])
        REQUIRE(h.room_of[i] == -1);
      else {
        REQUIRE(h.room_of[i] >= 0);
        REQUIRE(h.room_of[i] < rooms);
      }
    }

    // All free floor cells mutually reachable.
    REQUIRE(gridoracle::flood_free_cells(h) == gridoracle::count_free_cells(h));

    // Each room 4-connected.
    for (int r = 0; r < rooms; ++r) REQUIRE(gridoracle::room_is_connected(h, r));

    // Objects: contiguous ids, on floor, consistent cell index, legal sizes,
    // at least one pickupable, and every object approachable.
    bool any_pick = false;
    for (size_t k = 0; k < h.objects.size(); ++k) {
      const ObjectInstance& o = h.objects[k];
      REQUIRE(o.id == static_cast<int>(k));
      REQUIRE(!h.is_wall(o.x, o.y));
      REQUIRE(h.object_at(o.x, o.y) == o.id);
      REQUIRE(cat_size_ok(o.category, o.size_class));
      REQUIRE(o.pickupable == cat_pickupable(o.category));
      any_pick |= o.pickupable;
      bool approach = false;
      for (auto [dx, dy] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}})
        if (!h.blocked(o.x + dx, o.y + dy)) approach = true;
      REQUIRE(approach);
    }
    REQUIRE(any_pick);
    int cells_with_obj = 0;
    for (int v : h.object_cell)
      if (v >= 0) ++cells_with_obj;
    REQUIRE(cells_with_obj == static_cast<int>(h.objects.size()));

    // Room types do not repeat while five or fewer rooms.
    if (rooms <= 5) {
      std::set<RoomType> types(h.room_types.begin(), h.room_types.end());
      REQUIRE(static_cast<int>(types.size()) == rooms);
    }
  }
  CHECK(checked == 1000);
}

TEST_CASE("room type and anchor coverage across seeds") {
  std::set<RoomType> seen_types;
  bool saw_multi_size_category = false;
  for (uint64_t seed = 0; seed < 200; ++seed) {
    House h = generate_house(seed, 3);
    for (RoomType t : h.room_types) seen_types.insert(t);
    for (int r = 0; r < h.room_count(); ++r) {
      // Each typed room carries its anchor categories somewhere inside it.
      auto has = [&](Cat c) {
        for (const auto& o : h.objects)
          if (o.category == c && h.room_at(o.x, o.y) == r) return true;
        return false;
      };
      switch (h.room_types[r]) {
        case RoomType::Kitchen: REQUIRE(has(Cat::Fridge)); REQUIRE(has(Cat::Sink)); break;
        case RoomType::Bedroom: REQUIRE(has(Cat::Bed)); break;
        case RoomType::LivingRoom: REQUIRE(has(Cat::Sofa)); REQUIRE(has(Cat::Tv)); break;
        case RoomType::Bathroom: REQUIRE(has(Cat::Toilet)); break;
        case RoomType::Office: REQUIRE(has(Cat::Table)); REQUIRE(has(Cat::Lamp)); break;
      }
    }
    for (int c = 0; c < kNumCategories; ++c) {
      int mn = 9, mx = 0;
      for (const auto& o : h.objects)
        if (static_cast<int>(o.category) == c) {
          mn = std::min(mn, o.size_class);
          mx = std::max(mx, o.size_class);
        }
      if (mx > mn) saw_multi_size_category = true;
    }
  }
  CHECK(seen_types.size() == static_cast<size_t>(kNumRoomTypes));
  CHECK(saw_multi_size_category);
}

TEST_CASE("category table exposes the affordance and size vocabulary") {
  int pick = 0, sit = 0, cont = 0;
  for (int c = 0; c < kNumCategories; ++c) {
    Cat cat = static_cast<Cat>(c);
    pick += cat_pickupable(cat);
    sit += cat_sittable(cat);
    cont += cat_container(cat);
    CHECK(cat_size_mask(cat) != 0);
    CHECK(cat_from_name(cat_name(cat)) == cat);
  }
  CHECK(pick == 6);
  CHECK(sit == 3);
  CHECK(cont == 2);
  CHECK(!cat_from_name("spoon").has_value());
}
