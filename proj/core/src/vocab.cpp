#include "flare/policy/vocab.hpp"

#include <cstdio>

#include "flare/error.hpp"

namespace flare::policy {

namespace {

void check_token(int tok, int vocab, const char* what) {
  if (tok < 0 || tok >= vocab)
    throw ContractError(std::string(what) + " token out of vocabulary");
}

}  // namespace

std::array<int, kEncTokens> encode_observation(const env::Observation& obs) {
  std::array<int, kEncTokens> ids{};
  int p = 0;
  for (uint8_t c : obs.window) {
    check_token(c, env::kCellVocab, "cell");
    ids[p++] = kCellBase + c;
  }
  for (uint8_t c : obs.proprio) {
    check_token(c, env::kProprioVocab, "proprioception");
    ids[p++] = kProprioBase + c;
  }
  for (uint8_t c : obs.instr) {
    check_token(c, env::kInstrVocab, "instruction");
    ids[p++] = kInstrBase + c;
  }
  ids[p] = kStateTok;
  return ids;
}

std::array<uint8_t, kEncTokens> observation_key_mask(const env::Observation& obs) {
  std::array<uint8_t, kEncTokens> mask;
  mask.fill(1);
  for (int i = 0; i < env::kInstrLen; ++i)
    if (obs.instr[i] == 0) mask[env::kWindowCells + 3 + i] = 0;
  return mask;
}

uint64_t vocab_fingerprint() {
  std::string desc;
  desc.reserve(1024);
  auto add = [&](const std::string& s) {
    desc += s;
    desc += ';';
  };
  for (int c = 0; c < env::kNumCategories; ++c) {
    env::Cat cat = static_cast<env::Cat>(c);
    add(env::cat_name(cat));
    add(std::to_string(env::cat_size_mask(cat)));
    add(std::to_string(env::cat_pickupable(cat) | env::cat_sittable(cat) << 1 |
                       env::cat_container(cat) << 2));
  }
  for (int r = 0; r < env::kNumRoomTypes; ++r)
    add(env::room_name(static_cast<env::RoomType>(r)));
  for (int k = 0; k < env::kNumTaskKinds; ++k)
    add(env::task_name(static_cast<env::TaskKind>(k)));
  for (int a = 0; a < env::kNumActions; ++a) add(env::action_name(a));
  for (int v : {env::kCellVocab, env::kProprioVocab, env::kInstrVocab, kTokVocab,
                kActionVocab, kEncTokens})
    add(std::to_string(v));

  uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : desc) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string vocab_fingerprint_hex() {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(vocab_fingerprint()));
  return buf;
}

}  // namespace flare::policy
