#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flare/rl/ppo.hpp"

namespace flare::rl {

struct CurveRow {
  int64_t env_steps = 0;
  int update_idx = 0;
  double mean_sparse_return = 0;
  double eval_sr = 0, eval_sel = 0, mean_ep_len = 0, mean_collisions = 0;
  double policy_loss = 0, value_loss = 0, clip_frac = 0, approx_kl = 0;
  double grad_norm_actor = 0, grad_norm_critic = 0;
};

inline constexpr const char* kCurveHeader =
    "env_steps,update_idx,mean_sparse_return,eval_sr,eval_sel,mean_ep_len,"
    "mean_collisions,policy_loss,value_loss,clip_frac,approx_kl,grad_norm_actor,"
    "grad_norm_critic";

struct FinetuneResult {
  std::string run_dir, config_json, curves_csv, ckpt_best, ckpt_last;
  float init_eval_sr = 0.f;
  float final_eval_sr = 0.f;
  float best_eval_sr = -1.f;
  int64_t env_steps = 0;
  std::vector<CurveRow> rows;
};

// Serialized config echo, fixed key order; ablation runs are compared by
// diffing these files key by key.
std::string config_to_json(const TrainConfig& cfg, const std::string& init_checkpoint);

// The other direction: applies every key of a serialized config onto base and
// returns the result, so partial files override only what they name. Unknown
// keys, wrong-typed values, and unknown enum spellings throw ConfigError.
// When the text carries init_checkpoint it lands in *init_ckpt (if non-null).
TrainConfig config_overlay(TrainConfig base, const std::string& json_text,
                           std::string* init_ckpt = nullptr);

// RL over sparse rewards from a pretrained checkpoint (empty path: random
// initialization, the from-scratch reference). Writes config.json before any
// compute, appends one curves.csv row per update plus a leading
// pre-training row, evaluates greedily on held-out houses at the configured
// cadence and always at the first and last row, and keeps the best and final
// actor checkpoints.
FinetuneResult finetune(const std::string& ckpt_path, const TrainConfig& cfg,
                        const std::string& out_dir);

// Parses a curves.csv written by finetune; throws SchemaError on a missing or
// reordered header or a malformed row.
std::vector<CurveRow> load_curves(const std::string& csv_path);

}  // namespace flare::rl
