#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "flare/env/types.hpp"
#include "flare/policy/config.hpp"

namespace flare::policy {

// Observation tokens mapped into the combined table, in encoder order
// (window, proprioception, instruction, STATE). Throws ContractError on a
// token outside its source vocabulary.
std::array<int, kEncTokens> encode_observation(const env::Observation& obs);

// Key-validity row mask for one encoder sequence: instruction PAD positions
// are masked out of attention, everything else participates.
std::array<uint8_t, kEncTokens> observation_key_mask(const env::Observation& obs);

// FNV-1a fingerprint of every token table the policy depends on (categories,
// sizes, rooms, tasks, affordances, actions, vocab layout). Stored in dataset
// manifests and checkpoint sidecars so stale artifacts are detectable.
uint64_t vocab_fingerprint();
std::string vocab_fingerprint_hex();

}  // namespace flare::policy
