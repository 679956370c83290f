#include "flare/rl/gae.hpp"

#include <string>

#include "flare/error.hpp"

namespace flare::rl {

GaeResult compute_gae(const std::vector<float>& rewards, const std::vector<float>& values,
                      float bootstrap, const std::vector<uint8_t>& dones, float gamma,
                      float lambda) {
  const size_t T = rewards.size();
  if (values.size() != T || dones.size() != T)
    throw ContractError("compute_gae: rewards/values/dones lengths differ (" +
                        std::to_string(T) + "/" + std::to_string(values.size()) + "/" +
                        std::to_string(dones.size()) + ")");
  GaeResult out;
  out.advantages.resize(T);
  out.returns.resize(T);
  double next_adv = 0.0;
  double next_value = bootstrap;
  for (size_t i = T; i-- > 0;) {
    const double live = dones[i] ? 0.0 : 1.0;
    const double delta =
        rewards[i] + static_cast<double>(gamma) * next_value * live - values[i];
    next_adv = delta + static_cast<double>(gamma) * lambda * live * next_adv;
    out.advantages[i] = next_adv;
    out.returns[i] = next_adv + values[i];
    next_value = values[i];
  }
  return out;
}

}  // namespace flare::rl
