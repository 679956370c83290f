#include "flare/rl/finetune.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "flare/error.hpp"
#include "flare/eval/metrics.hpp"
#include "flare/rl/sac.hpp"
#include "json.hpp"

namespace flare::rl {

namespace fs = std::filesystem;
using policy::PolicyNet;

std::string config_to_json(const TrainConfig& cfg, const std::string& init_checkpoint) {
  nlohmann::ordered_json j;
  j["task"] = env::task_name(cfg.task);
  j["preset"] = cfg.preset;
  j["algo"] = cfg.algo;
  j["gamma"] = cfg.gamma;
  j["lambda"] = cfg.lam;
  j["clip"] = cfg.clip;
  j["value_weight"] = cfg.value_weight;
  j["entropy_weight"] = cfg.entropy_weight;
  j["update_repeats"] = cfg.update_repeats;
  j["minibatches"] = cfg.minibatches;
  j["max_grad_norm"] = cfg.max_grad_norm;
  j["scratch_lr"] = cfg.scratch_lr;
  j["lr"] = cfg.lr;
  j["normalize_advantages"] = cfg.normalize_advantages;
  j["shared_ac"] = cfg.shared_ac;
  j["workers"] = cfg.workers;
  j["window"] = cfg.window;
  j["total_env_steps"] = cfg.total_env_steps;
  j["seed"] = cfg.seed;
  j["context_mode"] = cfg.context_mode == ContextMode::Window ? "window" : "full_replay";
  j["step_penalty"] = cfg.shaping.step_penalty;
  j["collision_penalty"] = cfg.shaping.collision_penalty;
  j["embodiment"] = cfg.embodiment == env::Embodiment::A ? "a" : "b";
  j["train_houses"] = {cfg.train_houses.lo, cfg.train_houses.hi};
  j["eval_houses"] = {cfg.eval_houses.lo, cfg.eval_houses.hi};
  j["eval_every"] = cfg.eval_every;
  j["eval_episodes"] = cfg.eval_episodes;
  j["init_checkpoint"] = init_checkpoint;
  return j.dump(2) + "\n";
}

TrainConfig config_overlay(TrainConfig base, const std::string& json_text,
                           std::string* init_ckpt) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: unparseable JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");

  auto num = [](const nlohmann::json& v, const std::string& k) -> double {
    if (!v.is_number()) throw ConfigError("config key '" + k + "' must be a number");
    return v.get<double>();
  };
  auto integer = [](const nlohmann::json& v, const std::string& k) -> int64_t {
    if (!v.is_number_integer()) throw ConfigError("config key '" + k + "' must be an integer");
    return v.get<int64_t>();
  };
  auto boolean = [](const nlohmann::json& v, const std::string& k) -> bool {
    if (!v.is_boolean()) throw ConfigError("config key '" + k + "' must be a boolean");
    return v.get<bool>();
  };
  auto str = [](const nlohmann::json& v, const std::string& k) -> std::string {
    if (!v.is_string()) throw ConfigError("config key '" + k + "' must be a string");
    return v.get<std::string>();
  };
  auto range = [&](const nlohmann::json& v, const std::string& k) -> env::SeedRange {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() ||
        !v[1].is_number_integer())
      throw ConfigError("config key '" + k + "' must be [lo, hi]");
    return {v[0].get<uint64_t>(), v[1].get<uint64_t>()};
  };

  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const nlohmann::json& v = it.value();
    if (k == "task") {
      std::optional<env::TaskKind> t = env::task_from_name(str(v, k));
      if (!t) {
        std::string names;
        for (int i = 0; i < env::kNumTaskKinds; i++)
          names += std::string(i ? ", " : "") + env::task_name(static_cast<env::TaskKind>(i));
        throw ConfigError("unknown task '" + str(v, k) + "' (valid: " + names + ")");
      }
      base.task = *t;
    } else if (k == "preset") {
      base.preset = str(v, k);
    } else if (k == "algo") {
      base.algo = str(v, k);
    } else if (k == "gamma") {
      base.gamma = static_cast<float>(num(v, k));
    } else if (k == "lambda") {
      base.lam = static_cast<float>(num(v, k));
    } else if (k == "clip") {
      base.clip = static_cast<float>(num(v, k));
    } else if (k == "value_weight") {
      base.value_weight = static_cast<float>(num(v, k));
    } else if (k == "entropy_weight") {
      base.entropy_weight = static_cast<float>(num(v, k));
    } else if (k == "update_repeats") {
      base.update_repeats = static_cast<int>(integer(v, k));
    } else if (k == "minibatches") {
      base.minibatches = static_cast<int>(integer(v, k));
    } else if (k == "max_grad_norm") {
      base.max_grad_norm = static_cast<float>(num(v, k));
    } else if (k == "scratch_lr") {
      base.scratch_lr = static_cast<float>(num(v, k));
    } else if (k == "lr") {
      base.lr = static_cast<float>(num(v, k));
    } else if (k == "normalize_advantages") {
      base.normalize_advantages = boolean(v, k);
    } else if (k == "shared_ac") {
      base.shared_ac = boolean(v, k);
    } else if (k == "workers") {
      base.workers = static_cast<int>(integer(v, k));
    } else if (k == "window") {
      base.window = static_cast<int>(integer(v, k));
    } else if (k == "total_env_steps") {
      base.total_env_steps = integer(v, k);
    } else if (k == "seed") {
      if (!v.is_number_integer()) throw ConfigError("config key 'seed' must be an integer");
      base.seed = v.get<uint64_t>();
    } else if (k == "context_mode") {
      const std::string m = str(v, k);
      if (m == "window") base.context_mode = ContextMode::Window;
      else if (m == "full_replay") base.context_mode = ContextMode::FullReplay;
      else throw ConfigError("config key 'context_mode' must be window or full_replay");
    } else if (k == "step_penalty") {
      base.shaping.step_penalty = boolean(v, k);
    } else if (k == "collision_penalty") {
      base.shaping.collision_penalty = boolean(v, k);
    } else if (k == "embodiment") {
      const std::string e = str(v, k);
      if (e == "a") base.embodiment = env::Embodiment::A;
      else if (e == "b") base.embodiment = env::Embodiment::B;
      else throw ConfigError("config key 'embodiment' must be a or b");
    } else if (k == "train_houses") {
      base.train_houses = range(v, k);
    } else if (k == "eval_houses") {
      base.eval_houses = range(v, k);
    } else if (k == "eval_every") {
      base.eval_every = static_cast<int>(integer(v, k));
    } else if (k == "eval_episodes") {
      base.eval_episodes = static_cast<int>(integer(v, k));
    } else if (k == "init_checkpoint") {
      if (init_ckpt != nullptr) *init_ckpt = str(v, k);
    } else {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
  return base;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

std::string row_to_csv(const CurveRow& r) {
  std::ostringstream os;
  os << r.env_steps << ',' << r.update_idx << ',' << fmt(r.mean_sparse_return) << ','
     << fmt(r.eval_sr) << ',' << fmt(r.eval_sel) << ',' << fmt(r.mean_ep_len) << ','
     << fmt(r.mean_collisions) << ',' << fmt(r.policy_loss) << ',' << fmt(r.value_loss)
     << ',' << fmt(r.clip_frac) << ',' << fmt(r.approx_kl) << ','
     << fmt(r.grad_norm_actor) << ',' << fmt(r.grad_norm_critic);
  return os.str();
}

struct EvalOutcome {
  double sr = 0, sel = 0, len = 0, collisions = 0;
};

EvalOutcome run_eval(const PolicyNet& actor, const TrainConfig& cfg, uint64_t eval_seed) {
  eval::EvalReport rep = eval::evaluate(actor, cfg.task, cfg.eval_episodes, cfg.eval_houses,
                                        eval_seed, true, cfg.embodiment);
  return {rep.sr, rep.mean_sel, rep.mean_len, rep.mean_collisions};
}

// Sparse-reward stepping with single-observation context, feeding the replay
// buffer; the off-policy counterpart of Collector.
struct SacDriver {
  env::EnvPool pool;
  std::vector<int> prev;
  int episodes = 0, successes = 0;

  SacDriver(const TrainConfig& cfg)
      : pool(cfg.task, cfg.workers, cfg.seed, cfg.train_houses, cfg.shaping,
             cfg.embodiment),
        prev(static_cast<size_t>(cfg.workers), policy::kStartAction) {}

  int run(PolicyNet& actor, ReplayBuffer& buffer, int steps, Rng& rng) {
    episodes = 0;
    successes = 0;
    const auto valid = pool.env(0).embodiment().valid;
    for (int t = 0; t < steps; t++) {
      for (int i = 0; i < pool.size(); i++) {
        const env::Observation obs = pool.obs(i);
        policy::KVCache cache;
        cache.k.resize(static_cast<size_t>(actor.config().dec_layers));
        cache.v.resize(static_cast<size_t>(actor.config().dec_layers));
        std::vector<float> belief = actor.decoder_step(
            actor.encode_one(obs), prev[static_cast<size_t>(i)], 0, cache);
        policy::ActResult ar = actor.act(belief, valid, false, &rng);
        env::StepResult sr = pool.step(i, ar.action);
        Transition tr;
        tr.obs = obs;
        tr.next_obs = sr.done ? sr.obs : pool.obs(i);
        tr.prev_action = prev[static_cast<size_t>(i)];
        tr.action = ar.action;
        tr.next_prev_action = ar.action;
        tr.reward = sr.reward;
        tr.done = sr.done && !sr.timeout;  // truncation still bootstraps
        tr.valid = valid;
        tr.next_valid = valid;
        buffer.push(tr);
        if (sr.done) {
          episodes++;
          if (sr.success) successes++;
          prev[static_cast<size_t>(i)] = policy::kStartAction;
        } else {
          prev[static_cast<size_t>(i)] = ar.action;
        }
      }
    }
    return steps * pool.size();
  }
};

}  // namespace

FinetuneResult finetune(const std::string& ckpt_path, const TrainConfig& cfg,
                        const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);

  FinetuneResult res;
  res.run_dir = out_dir;
  res.config_json = (fs::path(out_dir) / "config.json").string();
  res.curves_csv = (fs::path(out_dir) / "curves.csv").string();
  res.ckpt_best = (fs::path(out_dir) / "ckpt_best.flrb").string();
  res.ckpt_last = (fs::path(out_dir) / "ckpt_last.flrb").string();
  {
    std::ofstream cf(res.config_json);
    cf << config_to_json(cfg, ckpt_path);
  }

  // Actor and critic initialization. A checkpoint seeds both (critic with a
  // fresh value head); otherwise both start from one random draw so scratch
  // and fine-tuned runs differ only in the starting parameters.
  PolicyNet actor = [&] {
    if (!ckpt_path.empty()) return policy::load_policy(ckpt_path);
    return PolicyNet(policy::PolicyConfig::preset(cfg.preset), cfg.seed * 9176 + 11);
  }();
  if (actor.config().preset_name != cfg.preset)
    throw ConfigError("finetune: checkpoint preset '" + actor.config().preset_name +
                      "' does not match configured preset '" + cfg.preset + "'");
  PolicyNet critic = actor.clone();
  critic.reinit_critic_head(cfg.seed * 7919 + 3);

  std::ofstream csv(res.curves_csv);
  csv << kCurveHeader << "\n";

  const int64_t window_steps = static_cast<int64_t>(cfg.workers) * cfg.window;
  const int updates = static_cast<int>(cfg.total_env_steps / window_steps);
  Rng act_rng(cfg.seed, 13);

  EvalOutcome last_eval;
  const auto eval_seed = [&](int row) {
    return cfg.seed * 1000003ull + static_cast<uint64_t>(row) * 7331ull;
  };
  const auto consider_best = [&](double sr, int64_t steps_done) {
    if (static_cast<float>(sr) > res.best_eval_sr) {
      res.best_eval_sr = static_cast<float>(sr);
      policy::save_policy(actor, res.ckpt_best, {"rl", steps_done, cfg.seed});
    }
  };

  last_eval = run_eval(actor, cfg, eval_seed(0));
  res.init_eval_sr = static_cast<float>(last_eval.sr);
  consider_best(last_eval.sr, 0);
  CurveRow head;
  head.eval_sr = last_eval.sr;
  head.eval_sel = last_eval.sel;
  head.mean_ep_len = last_eval.len;
  head.mean_collisions = last_eval.collisions;
  res.rows.push_back(head);
  csv << row_to_csv(head) << "\n" << std::flush;

  if (cfg.algo == "ppo") {
    Collector collector(cfg.task, cfg.workers, cfg.seed, cfg.train_houses, cfg.shaping,
                        cfg.embodiment, cfg.context_mode);
    grad::AdamState opt_actor(
        cfg.shared_ac ? actor.parameters() : actor.actor_parameters(), cfg.lr);
    std::optional<grad::AdamState> opt_critic;
    if (!cfg.shared_ac) opt_critic.emplace(critic.critic_parameters(), cfg.lr);

    for (int u = 0; u < updates; u++) {
      RolloutBatch batch =
          collector.collect(actor, cfg.shared_ac ? actor : critic, cfg.window, act_rng);
      AdvantageSet adv = prepare_advantages(batch, cfg);
      PpoStats st = ppo_update(actor, cfg.shared_ac ? nullptr : &critic, batch, adv, cfg,
                               opt_actor, cfg.shared_ac ? nullptr : &*opt_critic);

      CurveRow row;
      row.env_steps = static_cast<int64_t>(u + 1) * window_steps;
      row.update_idx = u + 1;
      row.mean_sparse_return = batch.mean_sparse_return();
      row.policy_loss = st.policy_loss;
      row.value_loss = st.value_loss;
      row.clip_frac = st.clip_frac;
      row.approx_kl = st.approx_kl;
      row.grad_norm_actor = st.grad_norm_actor;
      row.grad_norm_critic = st.grad_norm_critic;
      if ((u + 1) % cfg.eval_every == 0 || u == updates - 1) {
        last_eval = run_eval(actor, cfg, eval_seed(u + 1));
        consider_best(last_eval.sr, row.env_steps);
      }
      row.eval_sr = last_eval.sr;
      row.eval_sel = last_eval.sel;
      row.mean_ep_len = last_eval.len;
      row.mean_collisions = last_eval.collisions;
      res.rows.push_back(row);
      csv << row_to_csv(row) << "\n" << std::flush;
    }
    res.env_steps = collector.env_steps();
  } else {
    SacConfig sc;
    sc.gamma = cfg.gamma;
    sc.lr = cfg.lr;
    sc.max_grad_norm = cfg.max_grad_norm;
    SacAgent agent(std::move(actor), cfg.seed, sc.lr);
    ReplayBuffer buffer(sc.buffer_capacity);
    SacDriver driver(cfg);
    Rng upd_rng(cfg.seed, 17);

    for (int u = 0; u < updates; u++) {
      res.env_steps += driver.run(agent.actor, buffer, cfg.window, act_rng);
      SacStats st{};
      for (int k = 0; k < sc.updates_per_window && buffer.size() >= sc.batch; k++)
        st = sac_update(agent, buffer, sc, upd_rng);
      CurveRow row;
      row.env_steps = static_cast<int64_t>(u + 1) * window_steps;
      row.update_idx = u + 1;
      row.mean_sparse_return =
          driver.episodes ? static_cast<double>(driver.successes) / driver.episodes : 0.0;
      row.policy_loss = st.actor_loss;
      row.value_loss = st.q_loss;
      if ((u + 1) % cfg.eval_every == 0 || u == updates - 1) {
        last_eval = run_eval(agent.actor, cfg, eval_seed(u + 1));
        if (static_cast<float>(last_eval.sr) > res.best_eval_sr) {
          res.best_eval_sr = static_cast<float>(last_eval.sr);
          policy::save_policy(agent.actor, res.ckpt_best, {"rl", row.env_steps, cfg.seed});
        }
      }
      row.eval_sr = last_eval.sr;
      row.eval_sel = last_eval.sel;
      row.mean_ep_len = last_eval.len;
      row.mean_collisions = last_eval.collisions;
      res.rows.push_back(row);
      csv << row_to_csv(row) << "\n" << std::flush;
    }
    actor = std::move(agent.actor);
  }

  res.final_eval_sr = static_cast<float>(last_eval.sr);
  policy::save_policy(actor, res.ckpt_last, {"rl", res.env_steps, cfg.seed});
  return res;
}

std::vector<CurveRow> load_curves(const std::string& csv_path) {
  std::ifstream f(csv_path);
  if (!f.good()) throw SchemaError("curves: cannot open " + csv_path);
  std::string line;
  if (!std::getline(f, line) || line != kCurveHeader)
    throw SchemaError("curves: unexpected header in " + csv_path);
  std::vector<CurveRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string cell;
    std::vector<double> v;
    try {
      while (std::getline(is, cell, ',')) v.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw SchemaError("curves: malformed cell '" + cell + "' in " + csv_path);
    }
    if (v.size() != 13) throw SchemaError("curves: row with " + std::to_string(v.size()) +
                                          " fields in " + csv_path);
    CurveRow r;
    r.env_steps = static_cast<int64_t>(v[0]);
    r.update_idx = static_cast<int>(v[1]);
    r.mean_sparse_return = v[2];
    r.eval_sr = v[3];
    r.eval_sel = v[4];
    r.mean_ep_len = v[5];
    r.mean_collisions = v[6];
    r.policy_loss = v[7];
    r.value_loss = v[8];
    r.clip_frac = v[9];
    r.approx_kl = v[10];
    r.grad_norm_actor = v[11];
    r.grad_norm_critic = v[12];
    rows.push_back(r);
  }
  if (rows.empty()) throw SchemaError("curves: no data rows in " + csv_path);
  return rows;
}

}  // namespace flare::rl
