// Independent graph oracles for the gridworld tests: plain flood fill and a
// priority-queue Dijkstra over the (cell, heading) product graph. Kept free of
// library search code so they can disagree with it.
#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <vector>

#include "flare/env/house.hpp"

namespace gridoracle {

using flare::env::House;

// Number of free floor cells reachable from the first free cell.
inline int flood_free_cells(const House& h) {
  const int W = h.width, H = h.height;
  std::vector<uint8_t> seen(static_cast<size_t>(W) * H, 0);
  int start = -1;
  for (int i = 0; i < W * H; ++i)
    if (!h.walls[i] && h.object_cell[i] < 0) {
      start = i;
      break;
    }
  if (start < 0) return 0;
  std::vector<int> stack{start};
  seen[start] = 1;
  int count = 0;
  while (!stack.empty()) {
    int i = stack.back();
    stack.pop_back();
    ++count;
    int x = i % W, y = i / W;
    const int nx[4] = {x - 1, x + 1, x, x};
    const int ny[4] = {y, y, y - 1, y + 1};
    for (int k = 0; k < 4; ++k) {
      if (nx[k] < 0 || nx[k] >= W || ny[k] < 0 || ny[k] >= H) continue;
      int j = ny[k] * W + nx[k];
      if (!seen[j] && !h.walls[j] && h.object_cell[j] < 0) {
        seen[j] = 1;
        stack.push_back(j);
      }
    }
  }
  return count;
}

inline int count_free_cells(const House& h) {
  int n = 0;
  for (size_t i = 0; i < h.walls.size(); ++i)
    if (!h.walls[i] && h.object_cell[i] < 0) ++n;
  return n;
}

// Floor cells of one room reachable from the room's first floor cell, moving
// only through that room (objects do not block room connectivity).
inline bool room_is_connected(const House& h, int room) {
  const int W = h.width, H = h.height;
  std::vector<int> cells;
  for (int i = 0; i < W * H; ++i)
    if (h.room_of[i] == room) cells.push_back(i);
  if (cells.empty()) return false;
  std::vector<uint8_t> seen(static_cast<size_t>(W) * H, 0);
  std::vector<int> stack{cells[0]};
  seen[cells[0]] = 1;
  size_t count = 0;
  while (!stack.empty()) {
    int i = stack.back();
    stack.pop_back();
    ++count;
    for (int d : {-1, 1, -W, W}) {
      int j = i + d;
      if (j < 0 || j >= W * H || seen[j]) continue;
      if (h.room_of[j] == room) {
        seen[j] = 1;
        stack.push_back(j);
      }
    }
  }
  return count == cells.size();
}

// Dijkstra over poses (cell, heading); edges: rotate left/right, move
// ahead/back, all weight 1. Returns shortest distance from the start pose to
// any pose whose (x, y, heading) satisfies `goal`, or -1.
inline int dijkstra_pose(const House& h, int sx, int sy, int sh,
                         const std::function<bool(int, int, int)>& goal) {
  const int W = h.width, H = h.height, N = W * H * 4;
  auto blocked = [&](int x, int y) {
    return x < 0 || x >= W || y < 0 || y >= H || h.walls[y * W + x] ||
           h.object_cell[y * W + x] >= 0;
  };
  const int fdx[4] = {0, 1, 0, -1}, fdy[4] = {-1, 0, 1, 0};  // N E S W
  std::vector<int> dist(N, INT32_MAX);
  using Item = std::pair<int, int>;  // (dist, pose)
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  int s = (sy * W + sx) * 4 + sh;
  dist[s] = 0;
  pq.emplace(0, s);
  while (!pq.empty()) {
    auto [d, p] = pq.top();
    pq.pop();
    if (d > dist[p]) continue;
    int hd = p & 3, cell = p >> 2, x = cell % W, y = cell / W;
    if (goal(x, y, hd)) return d;
    auto relax = [&](int q) {
      if (q >= 0 && d + 1 < dist[q]) {
        dist[q] = d + 1;
        pq.emplace(d + 1, q);
      }
    };
    relax((cell * 4) + ((hd + 1) & 3));
    relax((cell * 4) + ((hd + 3) & 3));
    for (int dir : {1, -1}) {
      int nx = x + dir * fdx[hd], ny = y + dir * fdy[hd];
      if (!blocked(nx, ny)) relax((ny * W + nx) * 4 + hd);
    }
  }
  return -1;
}

}  // namespace gridoracle
