#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flare/rl/finetune.hpp"

namespace flare::eval {

// One named training run inside a suite: the suite baseline with at most one
// config key changed. `knob` names that key ("" for the baseline run itself),
// and the runner refuses to start if the serialized configs disagree with it.
struct SuiteRunSpec {
  std::string name;
  std::string knob;
  rl::TrainConfig cfg;
  std::string init_checkpoint;
};

// A named bundle of single-knob runs sharing one baseline config, one base
// checkpoint and one seed list.
struct ExperimentSuite {
  std::string name;
  rl::TrainConfig baseline;
  std::string base_checkpoint;
  std::vector<SuiteRunSpec> runs;
  std::vector<uint64_t> seeds;

  // Known suites:
  //   ablations:  flare, lr_x10 (lr * 10), shared_ac, eb_02 (entropy 0.2), sac
  //   adaptation: flare, step_pen, coll_pen, embodiment_b
  //   novel:      flare, scratch (no initial checkpoint)
  // Seeds run baseline.seed .. baseline.seed + n_seeds - 1. Throws ConfigError
  // on an unknown suite name.
  static ExperimentSuite make(const std::string& suite_name, const rl::TrainConfig& baseline,
                              const std::string& base_checkpoint, int n_seeds = 3);
};

struct SuiteRunResult {
  std::string run;
  uint64_t seed = 0;
  std::string dir;
  bool ok = false;
  std::string error;
  double final_eval_sr = 0, final_eval_sel = 0, mean_ep_len = 0, mean_collisions = 0;
};

struct SuiteResult {
  std::string suite_dir, baseline_json, comparison_csv, comparison_md, failures_json;
  std::vector<SuiteRunResult> rows;  // run-major, seed-minor, in suite order
};

inline constexpr const char* kComparisonHeader =
    "run,seed,final_eval_sr,final_eval_sel,mean_ep_len,mean_collisions";

// Top-level keys whose values differ between two serialized run configs
// (a key present on one side only counts as changed), sorted. Throws
// SchemaError if either string is not a JSON object.
std::vector<std::string> config_diff_keys(const std::string& json_a,
                                          const std::string& json_b);

// Executes every (run, seed) combination under out_dir/<run>/seed<k>. Before
// any compute: validates every run config (train/eval house disjointness
// included) and checks the single-knob discipline against the baseline
// serialization, which is written to baseline.json. A run that then fails at
// runtime is recorded in failures.json and the suite continues. Emits
// comparison.csv (kComparisonHeader, one row per finished run/seed) and
// comparison.md (per-run mean with min/max bands). The parallel flag is
// accepted for interface compatibility; runs execute sequentially and are
// order-independent, so results do not depend on it.
SuiteResult run_suite(const ExperimentSuite& suite, const std::string& out_dir,
                      bool parallel = false);

}  // namespace flare::eval
