#pragma once

#include <map>
#include <string>
#include <vector>

#include "flare/env/envpool.hpp"

namespace flare::im {

// One expert trajectory, complete enough to re-simulate from scratch: the
// house is regenerated from (house_seed, rooms) and the spawn from reset_seed.
struct DemoEpisode {
  uint64_t house_seed = 0;
  int rooms = 0;
  uint64_t reset_seed = 0;
  env::Instruction instr;
  std::vector<env::Observation> obs;  // observation before each action
  std::vector<int> actions;           // expert actions, terminal action last
  int lstar() const { return static_cast<int>(actions.size()); }
  env::TaskKind kind() const { return instr.kind; }
  bool operator==(const DemoEpisode&) const = default;
};

struct DemoDataset {
  std::vector<DemoEpisode> episodes;
  std::map<env::TaskKind, int> counts;
  std::string vocab_fingerprint;
  uint64_t seed = 0;
  int attempts = 0;  // sampler draws, including rejected ones
  int skipped = 0;   // draws that never became a stored episode
};

// Expert demonstrations over the demo house range. Only the four base task
// kinds are allowed; draws that the planner cannot solve are skipped and
// counted, and a stored/attempted yield under 90% aborts generation.
DemoDataset generate_demos(const std::vector<env::TaskKind>& mix, int per_task,
                           uint64_t seed);

// Re-simulates the episode; true iff every stored observation matches the
// fresh rollout bit for bit and the trajectory ends in success.
bool replay_episode(const DemoEpisode& ep, std::string* why = nullptr);

// Directory layout: manifest.json plus one JSON-lines file per task kind.
void save_demos(const DemoDataset& d, const std::string& dir);
DemoDataset load_demos(const std::string& dir);

}  // namespace flare::im
