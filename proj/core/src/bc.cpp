#include "flare/im/bc.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "flare/error.hpp"
#include "flare/eval/metrics.hpp"
#include "flare/grad/ops.hpp"
#include "flare/grad/tape.hpp"

namespace flare::im {

void BCConfig::validate() const {
  if (epochs < 1 || batch_episodes < 1 || chunk_len < 1 || eval_every < 1 ||
      eval_episodes < 1)
    throw ConfigError("behavior cloning config values must be positive");
  if (!(lr > 0.f) || !(clip > 0.f)) throw ConfigError("learning rate and clip must be positive");
  if (!(eval_frac > 0.f) || eval_frac >= 1.f)
    throw ConfigError("eval split fraction must lie in (0, 1)");
  policy::PolicyConfig pc = policy::PolicyConfig::preset(preset);
  if (chunk_len > pc.context)
    throw ConfigError("chunk length " + std::to_string(chunk_len) +
                      " exceeds the model context of " + std::to_string(pc.context));
}

namespace {

// Episodes packed as independent causal segments; long episodes split into
// truncated-context chunks that keep their true timestep base.
struct PackedBatch {
  std::vector<env::Observation> obs;
  std::vector<int> prev_actions, targets, seg, t0;
};

PackedBatch pack(const std::vector<const DemoEpisode*>& batch, int chunk_len) {
  if (batch.empty()) throw ContractError("behavior cloning batch is empty");
  PackedBatch p;
  p.seg.push_back(0);
  for (const DemoEpisode* ep : batch) {
    if (!ep || ep->actions.empty())
      throw ContractError("behavior cloning batch holds an empty episode");
    const int T = static_cast<int>(ep->actions.size());
    for (int c0 = 0; c0 < T; c0 += chunk_len) {
      const int c1 = std::min(T, c0 + chunk_len);
      for (int t = c0; t < c1; t++) {
        p.obs.push_back(ep->obs[static_cast<size_t>(t)]);
        p.prev_actions.push_back(t == 0 ? policy::kStartAction
                                        : ep->actions[static_cast<size_t>(t) - 1]);
        p.targets.push_back(ep->actions[static_cast<size_t>(t)]);
      }
      p.seg.push_back(static_cast<int>(p.obs.size()));
      p.t0.push_back(c0);
    }
  }
  return p;
}

grad::Tensor forward_loss(const policy::PolicyNet& net, const PackedBatch& p,
                          grad::Tape* tape) {
  grad::Tensor states = net.encode_batch(p.obs, tape);
  grad::Tensor beliefs = net.decode_sequence(states, p.prev_actions, p.seg, p.t0, tape);
  grad::Tensor logits = net.actor_logits(beliefs, tape);
  return grad::cross_entropy(tape, logits, p.targets);
}

}  // namespace

float bc_update(policy::PolicyNet& net, grad::AdamState& opt,
                std::vector<grad::Tensor>& params,
                const std::vector<const DemoEpisode*>& batch, int chunk_len, float clip) {
  PackedBatch p = pack(batch, chunk_len);
  grad::Tape tape;
  grad::Tensor loss = forward_loss(net, p, &tape);
  tape.backward(loss);
  grad::clip_grad_norm(params, clip);
  grad::adam_step(opt, params);
  return loss.item();
}

float bc_loss(const policy::PolicyNet& net, const std::vector<const DemoEpisode*>& batch,
              int chunk_len) {
  PackedBatch p = pack(batch, chunk_len);
  return forward_loss(net, p, nullptr).item();
}

BCResult train_bc(const BCConfig& cfg, const DemoDataset& data, const std::string& out_dir) {
  cfg.validate();
  if (data.episodes.empty()) throw ContractError("train_bc: empty dataset");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  policy::PolicyNet net(policy::PolicyConfig::preset(cfg.preset), cfg.seed);
  std::vector<grad::Tensor> params = net.actor_parameters();
  grad::AdamState opt(params, cfg.lr);

  // held-out split for the reported loss
  std::vector<int> order(data.episodes.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed, 41);
  rng.shuffle(order);
  const int n_val = std::max(
      1, static_cast<int>(cfg.eval_frac * static_cast<float>(order.size()) + 0.5f));
  if (n_val >= static_cast<int>(order.size()))
    throw ContractError("train_bc: dataset too small for the eval split");
  std::vector<const DemoEpisode*> val;
  std::vector<int> train_idx;
  for (size_t i = 0; i < order.size(); i++) {
    if (static_cast<int>(i) < n_val)
      val.push_back(&data.episodes[static_cast<size_t>(order[i])]);
    else
      train_idx.push_back(order[i]);
  }
  std::set<env::TaskKind> kinds;
  for (const DemoEpisode& ep : data.episodes) kinds.insert(ep.kind());

  BCResult res;
  res.log_csv = (fs::path(out_dir) / "bc_log.csv").string();
  res.ckpt_best = (fs::path(out_dir) / "ckpt_best.flrb").string();
  res.ckpt_last = (fs::path(out_dir) / "ckpt_last.flrb").string();
  std::ofstream log(res.log_csv);
  if (!log) throw ConfigError("train_bc: cannot write log in " + out_dir);
  log << "step,loss,eval_task,eval_sr,eval_sel\n";

  const int64_t steps_per_epoch =
      (static_cast<int64_t>(train_idx.size()) + cfg.batch_episodes - 1) / cfg.batch_episodes;
  const int64_t total = steps_per_epoch * cfg.epochs;

  auto run_eval = [&](int64_t step) {
    float vloss = bc_loss(net, val, cfg.chunk_len);
    float mean_sr = 0.f;
    for (env::TaskKind kind : kinds) {
      eval::EvalReport rep =
          eval::evaluate(net, kind, cfg.eval_episodes, env::kValHouseSeeds,
                         cfg.seed + static_cast<uint64_t>(step), true);
      BCRow row{step, vloss, rep.task, rep.sr, rep.mean_sel};
      res.rows.push_back(row);
      log << step << "," << vloss << "," << rep.task << "," << rep.sr << ","
          << rep.mean_sel << "\n";
      mean_sr += rep.sr;
    }
    log.flush();
    mean_sr /= static_cast<float>(kinds.size());
    if (mean_sr > res.best_mean_sr) {
      res.best_mean_sr = mean_sr;
      save_policy(net, res.ckpt_best, {"bc", step, cfg.seed});
    }
  };

  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; epoch++) {
    rng.shuffle(train_idx);
    for (size_t at = 0; at < train_idx.size(); at += static_cast<size_t>(cfg.batch_episodes)) {
      std::vector<const DemoEpisode*> batch;
      for (size_t i = at; i < std::min(train_idx.size(), at + static_cast<size_t>(cfg.batch_episodes)); i++)
        batch.push_back(&data.episodes[static_cast<size_t>(train_idx[i])]);
      bc_update(net, opt, params, batch, cfg.chunk_len, cfg.clip);
      step++;
      if (step % cfg.eval_every == 0 && step != total) run_eval(step);
    }
  }
  run_eval(total);
  res.steps = total;
  save_policy(net, res.ckpt_last, {"bc", total, cfg.seed});
  return res;
}

}  // namespace flare::im
