#pragma once

#include <cstdint>
#include <vector>

namespace flare::rl {

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantages + values
};

// Generalized advantage estimation over one reward/value stream. done[t] set
// means no value flows across t (the episode ended there); bootstrap is the
// value of the state after the last step and only matters when the stream was
// cut mid-episode. Accumulates in double so the backward recursion matches a
// naive forward sum to full precision.
GaeResult compute_gae(const std::vector<float>& rewards, const std::vector<float>& values,
                      float bootstrap, const std::vector<uint8_t>& dones, float gamma,
                      float lambda);

}  // namespace flare::rl
