#pragma once

#include <string>
#include <vector>

#include "flare/grad/optim.hpp"
#include "flare/im/demos.hpp"
#include "flare/policy/model.hpp"

namespace flare::im {

struct BCConfig {
  int epochs = 8;
  int batch_episodes = 8;
  float lr = 1e-3f;
  int chunk_len = 300;     // episodes longer than this train in separate chunks
  float eval_frac = 0.05f; // episodes held out for the reported validation loss
  uint64_t seed = 0;
  std::string preset = "desk";
  float clip = 1.0f;
  int eval_every = 250;    // gradient steps between rollout evaluations
  int eval_episodes = 25;  // greedy rollouts per task per evaluation
  void validate() const;   // throws ConfigError
};

// One teacher-forced gradient step over whole episodes (chunked only past
// chunk_len): mean per-token cross-entropy against the expert actions,
// clipped global norm, Adam update of `params`. Returns the batch loss.
float bc_update(policy::PolicyNet& net, grad::AdamState& opt,
                std::vector<grad::Tensor>& params,
                const std::vector<const DemoEpisode*>& batch, int chunk_len, float clip);

// Teacher-forced mean loss without gradients.
float bc_loss(const policy::PolicyNet& net, const std::vector<const DemoEpisode*>& batch,
              int chunk_len);

struct BCRow {
  int64_t step = 0;
  float loss = 0.f;  // validation loss on the held-out split
  std::string eval_task;
  float eval_sr = 0.f;
  float eval_sel = 0.f;
};

struct BCResult {
  std::string ckpt_best, ckpt_last, log_csv;
  float best_mean_sr = -1.f;
  int64_t steps = 0;
  std::vector<BCRow> rows;
};

// Full pretraining run: epochs over the dataset with periodic greedy
// evaluation on held-out validation houses; keeps the best-evaluation
// checkpoint alongside the final one and logs
// `step,loss,eval_task,eval_sr,eval_sel` rows to CSV.
BCResult train_bc(const BCConfig& cfg, const DemoDataset& data, const std::string& out_dir);

}  // namespace flare::im
