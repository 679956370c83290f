#pragma once

#include <string>

#include "flare/env/types.hpp"

namespace flare::policy {

// Encoder sequence: 49 window + 3 proprioception + 8 instruction + 1 STATE.
inline constexpr int kEncTokens = env::kWindowCells + 3 + env::kInstrLen + 1;
inline constexpr int kStatePos = kEncTokens - 1;
// One combined token table spans the cell, proprioception and instruction
// vocabularies plus the STATE symbol, each range offset past the previous.
inline constexpr int kCellBase = 0;
inline constexpr int kProprioBase = env::kCellVocab;
inline constexpr int kInstrBase = kProprioBase + env::kProprioVocab;
inline constexpr int kStateTok = kInstrBase + env::kInstrVocab;
inline constexpr int kTokVocab = kStateTok + 1;  // 109
// Previous-action table: one row per action plus a START symbol for t=0.
inline constexpr int kStartAction = env::kNumActions;
inline constexpr int kActionVocab = env::kNumActions + 1;

struct PolicyConfig {
  int d = 128;
  int enc_layers = 2, enc_heads = 4;
  int dec_layers = 2, dec_heads = 4;
  int mlp_ratio = 4;
  int context = 300;  // covers the longest configured episode
  int n_actions = env::kNumActions;

  std::string preset_name = "desk";

  static PolicyConfig preset(const std::string& name);
  void validate() const;  // throws ConfigError
  bool operator==(const PolicyConfig&) const = default;
};

}  // namespace flare::policy
