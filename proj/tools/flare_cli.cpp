#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flare/error.hpp"
#include "flare/eval/metrics.hpp"
#include "flare/eval/plots.hpp"
#include "flare/eval/suite.hpp"
#include "flare/im/bc.hpp"
#include "flare/im/demos.hpp"
#include "flare/policy/model.hpp"
#include "flare/rl/finetune.hpp"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr const char* kToolVersion = "0.1.0";

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw flare::ConfigError("cannot read " + path);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

std::string fnv1a_hex(const std::string& path) {
  const std::string bytes = read_file(path);
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string timestamp_utc() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string valid_task_list() {
  std::string names;
  for (int i = 0; i < flare::env::kNumTaskKinds; i++)
    names += std::string(i ? ", " : "") +
             flare::env::task_name(static_cast<flare::env::TaskKind>(i));
  return names;
}

flare::env::TaskKind parse_task(const std::string& name) {
  std::optional<flare::env::TaskKind> t = flare::env::task_from_name(name);
  if (!t)
    throw flare::ConfigError("unknown task '" + name + "' (valid: " + valid_task_list() + ")");
  return *t;
}

flare::env::Embodiment parse_embodiment(const std::string& e) {
  if (e == "a") return flare::env::Embodiment::A;
  if (e == "b") return flare::env::Embodiment::B;
  throw flare::ConfigError("embodiment must be a or b, got '" + e + "'");
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw flare::ConfigError(what + " not found: " + path);
}

// One run manifest per output directory, written before the command computes
// anything: the resolved config plus input hashes make the run re-creatable.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const ordered_json& resolved_config,
                    const std::vector<std::string>& input_files,
                    const std::vector<std::string>& output_paths) {
  ordered_json m;
  m["command"] = command;
  m["tool_version"] = kToolVersion;
  m["timestamp"] = timestamp_utc();
  m["config"] = resolved_config;
  ordered_json inputs = ordered_json::object();
  for (const std::string& p : input_files) inputs[p] = fnv1a_hex(p);
  m["inputs"] = inputs;
  m["outputs"] = output_paths;
  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / "run_manifest.json").string();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw flare::Error("cannot write " + path);
  f << m.dump(2) << "\n";
}

// Shared training knobs for `finetune` and `suite`. Precedence: built-in
// defaults, then --config file keys, then explicit flags.
struct TrainOpts {
  std::string config_file;
  std::string task, preset, algo, embodiment, context_mode;
  double lr = 0, entropy = 0;
  bool shared_ac = false, step_penalty = false, collision_penalty = false;
  int64_t steps = 0;
  int workers = 0, window = 0, eval_every = 0, eval_episodes = 0;
  uint64_t seed = 0;

  CLI::Option *task_o = nullptr, *preset_o = nullptr, *algo_o = nullptr, *emb_o = nullptr,
              *mode_o = nullptr, *lr_o = nullptr, *ent_o = nullptr, *shared_o = nullptr,
              *sp_o = nullptr, *cp_o = nullptr, *steps_o = nullptr, *workers_o = nullptr,
              *window_o = nullptr, *ee_o = nullptr, *ep_o = nullptr, *seed_o = nullptr;

  void attach(CLI::App* c) {
    c->add_option("--config", config_file,
                  "JSON config file layered over built-in defaults (explicit flags win)");
    task_o = c->add_option("--task", task, "task to train on (" + valid_task_list() + ")");
    preset_o = c->add_option("--preset", preset, "model size preset: desk, paper, or mini");
    algo_o = c->add_option("--algo", algo, "training algorithm: ppo or sac");
    lr_o = c->add_option("--lr", lr, "learning rate when starting from a checkpoint");
    ent_o = c->add_option("--entropy", entropy, "entropy bonus coefficient");
    shared_o = c->add_flag("--shared-ac", shared_ac,
                           "one trunk with actor and critic heads, one optimizer");
    sp_o = c->add_flag("--step-penalty", step_penalty, "subtract 0.01 reward per step");
    cp_o = c->add_flag("--collision-penalty", collision_penalty,
                       "subtract 0.5 reward per blocked movement");
    emb_o = c->add_option("--embodiment", embodiment,
                          "robot body: a (all actions) or b (navigation + camera tilt)");
    mode_o = c->add_option("--context-mode", context_mode,
                           "attention context across update windows: window or full_replay");
    steps_o = c->add_option("--steps", steps, "total environment steps to train for");
    workers_o = c->add_option("--workers", workers, "environment pool width");
    window_o = c->add_option("--window", window, "steps per worker per update window");
    ee_o = c->add_option("--eval-every", eval_every, "updates between held-out evaluations");
    ep_o = c->add_option("--eval-episodes", eval_episodes, "episodes per evaluation");
    seed_o = c->add_option("--seed", seed, "run seed");
  }

  flare::rl::TrainConfig resolve(std::string* init_ckpt) const {
    flare::rl::TrainConfig cfg;
    if (!config_file.empty())
      cfg = flare::rl::config_overlay(cfg, read_file(config_file), init_ckpt);
    if (*task_o) cfg.task = parse_task(task);
    if (*preset_o) cfg.preset = preset;
    if (*algo_o) cfg.algo = algo;
    if (*lr_o) cfg.lr = static_cast<float>(lr);
    if (*ent_o) cfg.entropy_weight = static_cast<float>(entropy);
    if (*shared_o) cfg.shared_ac = shared_ac;
    if (*sp_o) cfg.shaping.step_penalty = step_penalty;
    if (*cp_o) cfg.shaping.collision_penalty = collision_penalty;
    if (*emb_o) cfg.embodiment = parse_embodiment(embodiment);
    if (*mode_o) {
      if (context_mode == "window") cfg.context_mode = flare::rl::ContextMode::Window;
      else if (context_mode == "full_replay")
        cfg.context_mode = flare::rl::ContextMode::FullReplay;
      else throw flare::ConfigError("context mode must be window or full_replay");
    }
    if (*steps_o) cfg.total_env_steps = steps;
    if (*workers_o) cfg.workers = workers;
    if (*window_o) cfg.window = window;
    if (*ee_o) cfg.eval_every = eval_every;
    if (*ep_o) cfg.eval_episodes = eval_episodes;
    if (*seed_o) cfg.seed = seed;
    return cfg;
  }
};

void cmd_gen_demos(const std::vector<std::string>& tasks, int n, uint64_t seed,
                   const std::string& out) {
  std::vector<flare::env::TaskKind> mix;
  for (const std::string& t : tasks) {
    flare::env::TaskKind kind = parse_task(t);
    if (!flare::env::task_is_base(kind))
      throw flare::ConfigError("task '" + t +
                               "' has no expert demonstrations (valid here: objectnav, "
                               "pickup, fetch, roomvisit)");
    mix.push_back(kind);
  }
  ordered_json cfg;
  cfg["tasks"] = tasks;
  cfg["episodes_per_task"] = n;
  cfg["seed"] = seed;
  std::vector<std::string> outputs = {(fs::path(out) / "manifest.json").string()};
  for (flare::env::TaskKind k : mix)
    outputs.push_back((fs::path(out) / (std::string(flare::env::task_name(k)) + ".jsonl")).string());
  write_manifest(out, "gen-demos", cfg, {}, outputs);

  flare::im::DemoDataset data = flare::im::generate_demos(mix, n, seed);
  flare::im::save_demos(data, out);
  std::printf("gen-demos: stored %zu episodes across %zu tasks in %s\n",
              data.episodes.size(), data.counts.size(), out.c_str());
}

void cmd_train_bc(const std::string& data_dir, const flare::im::BCConfig& cfg,
                  const std::string& out) {
  const std::string dataset_manifest = (fs::path(data_dir) / "manifest.json").string();
  require_file(dataset_manifest, "demo dataset");
  cfg.validate();

  ordered_json c;
  c["data"] = data_dir;
  c["preset"] = cfg.preset;
  c["epochs"] = cfg.epochs;
  c["batch_episodes"] = cfg.batch_episodes;
  c["lr"] = cfg.lr;
  c["chunk_len"] = cfg.chunk_len;
  c["eval_frac"] = cfg.eval_frac;
  c["eval_every"] = cfg.eval_every;
  c["eval_episodes"] = cfg.eval_episodes;
  c["clip"] = cfg.clip;
  c["seed"] = cfg.seed;
  write_manifest(out, "train-bc", c, {dataset_manifest},
                 {(fs::path(out) / "ckpt_best.flrb").string(),
                  (fs::path(out) / "ckpt_last.flrb").string(),
                  (fs::path(out) / "bc_log.csv").string()});

  flare::im::DemoDataset data = flare::im::load_demos(data_dir);
  flare::im::BCResult res = flare::im::train_bc(cfg, data, out);
  std::printf("train-bc: %lld steps, best mean eval SR %.3f, checkpoints in %s\n",
              static_cast<long long>(res.steps), res.best_mean_sr, out.c_str());
}

void cmd_finetune(const std::string& ckpt_flag, bool ckpt_given, const TrainOpts& opts,
                  const std::string& out) {
  std::string init;
  flare::rl::TrainConfig cfg = opts.resolve(&init);
  if (ckpt_given) init = ckpt_flag;  // flag wins over the config file
  cfg.validate();
  if (!init.empty()) require_file(init, "checkpoint");

  std::vector<std::string> inputs;
  if (!init.empty()) inputs.push_back(init);
  write_manifest(out, "finetune",
                 ordered_json::parse(flare::rl::config_to_json(cfg, init)), inputs,
                 {(fs::path(out) / "config.json").string(),
                  (fs::path(out) / "curves.csv").string(),
                  (fs::path(out) / "ckpt_best.flrb").string(),
                  (fs::path(out) / "ckpt_last.flrb").string()});

  flare::rl::FinetuneResult res = flare::rl::finetune(init, cfg, out);
  std::printf("finetune: %lld env steps, eval SR %.3f -> %.3f (best %.3f), run dir %s\n",
              static_cast<long long>(res.env_steps), res.init_eval_sr, res.final_eval_sr,
              res.best_eval_sr, out.c_str());
}

void cmd_eval(const std::string& ckpt, const std::string& task, int episodes, uint64_t seed,
              bool sample, const std::string& embodiment, const std::string& out) {
  flare::env::TaskKind kind = parse_task(task);
  flare::env::Embodiment emb = parse_embodiment(embodiment);
  require_file(ckpt, "checkpoint");
  if (episodes < 1) throw flare::ConfigError("--episodes must be at least 1");

  ordered_json c;
  c["ckpt"] = ckpt;
  c["task"] = task;
  c["episodes"] = episodes;
  c["seed"] = seed;
  c["greedy"] = !sample;
  c["embodiment"] = embodiment;
  c["houses"] = {flare::env::kEvalHouseSeeds.lo, flare::env::kEvalHouseSeeds.hi};
  const std::string report_path = (fs::path(out) / "report.json").string();
  const std::string episodes_path = (fs::path(out) / "episodes.csv").string();
  write_manifest(out, "eval", c, {ckpt}, {report_path, episodes_path});

  flare::policy::PolicyNet net = flare::policy::load_policy(ckpt);
  flare::eval::EvalReport rep =
      flare::eval::evaluate(net, kind, episodes, flare::env::kEvalHouseSeeds, seed, !sample,
                            emb, {}, ckpt);

  ordered_json r;
  r["task"] = rep.task;
  r["checkpoint"] = rep.checkpoint_id;
  r["episodes"] = rep.episodes;
  r["sr"] = rep.sr;
  r["mean_sel"] = rep.mean_sel;
  r["mean_len"] = rep.mean_len;
  r["mean_collisions"] = rep.mean_collisions;
  r["mean_return"] = rep.mean_return;
  r["houses"] = {rep.houses.lo, rep.houses.hi};
  ordered_json recs = ordered_json::array();
  for (const flare::eval::EpisodeRecord& e : rep.records)
    recs.push_back({{"house_seed", e.house_seed},
                    {"success", e.success},
                    {"steps", e.steps},
                    {"lstar", e.lstar},
                    {"collisions", e.collisions},
                    {"sel", e.sel}});
  r["records"] = recs;
  {
    std::ofstream f(report_path, std::ios::binary);
    if (!f) throw flare::Error("cannot write " + report_path);
    f << r.dump(2) << "\n";
  }
  {
    std::ofstream f(episodes_path, std::ios::binary);
    if (!f) throw flare::Error("cannot write " + episodes_path);
    f << "house_seed,success,steps,lstar,collisions,sel\n";
    for (const flare::eval::EpisodeRecord& e : rep.records) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.6f", static_cast<double>(e.sel));
      f << e.house_seed << ',' << (e.success ? 1 : 0) << ',' << e.steps << ',' << e.lstar
        << ',' << e.collisions << ',' << buf << "\n";
    }
  }
  std::printf("eval: %s on %d episodes, SR %.3f, SEL %.3f, report in %s\n", task.c_str(),
              episodes, rep.sr, rep.mean_sel, out.c_str());
}

void cmd_suite(const std::string& name, const std::string& ckpt, int n_seeds,
               const TrainOpts& opts, const std::string& out) {
  std::string ignored;
  flare::rl::TrainConfig baseline = opts.resolve(&ignored);
  require_file(ckpt, "base checkpoint");
  flare::eval::ExperimentSuite suite =
      flare::eval::ExperimentSuite::make(name, baseline, ckpt, n_seeds);

  ordered_json c;
  c["suite"] = name;
  c["seeds"] = n_seeds;
  c["base_checkpoint"] = ckpt;
  c["baseline"] = ordered_json::parse(flare::rl::config_to_json(baseline, ckpt));
  write_manifest(out, "suite", c, {ckpt},
                 {(fs::path(out) / "baseline.json").string(),
                  (fs::path(out) / "comparison.csv").string(),
                  (fs::path(out) / "comparison.md").string(),
                  (fs::path(out) / "failures.json").string()});

  flare::eval::SuiteResult res = flare::eval::run_suite(suite, out);
  int ok = 0;
  for (const flare::eval::SuiteRunResult& r : res.rows) ok += r.ok ? 1 : 0;
  std::printf("suite %s: %d/%zu runs finished, comparison table in %s\n", name.c_str(), ok,
              res.rows.size(), res.comparison_csv.c_str());
}

void cmd_plot(const std::vector<std::string>& runs, const std::string& out) {
  ordered_json c;
  c["runs"] = runs;
  std::vector<std::string> inputs;
  for (const std::string& r : runs)
    inputs.push_back((fs::path(r) / "curves.csv").string());
  std::vector<std::string> outputs;
  for (const char* metric : flare::eval::kPlotMetrics)
    outputs.push_back((fs::path(out) / (std::string(metric) + ".svg")).string());
  for (const std::string& p : inputs) require_file(p, "curve file");
  write_manifest(out, "plot", c, inputs, outputs);

  flare::eval::PlotResult res = flare::eval::emit_plots(runs, out);
  std::printf("plot: %zu charts over %zu runs in %s\n", res.files.size(), runs.size(),
              out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"procedural gridworld pipeline: expert demos, behavior cloning, sparse-reward "
               "RL fine-tuning, evaluation, ablation suites, plots"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  // gen-demos
  auto gd_tasks = std::make_shared<std::vector<std::string>>(
      std::vector<std::string>{"objectnav", "pickup", "fetch", "roomvisit"});
  auto gd_n = std::make_shared<int>(0);
  auto gd_seed = std::make_shared<uint64_t>(0);
  auto gd_out = std::make_shared<std::string>();
  CLI::App* gd = app.add_subcommand("gen-demos", "generate expert demonstration episodes");
  gd->add_option("--tasks", *gd_tasks, "task list (default: the four demonstrated tasks)")
      ->delimiter(',');
  gd->add_option("--n", *gd_n, "episodes per task")->required();
  gd->add_option("--seed", *gd_seed, "generation seed");
  gd->add_option("--out", *gd_out, "output dataset directory")->required();
  gd->callback([=] { cmd_gen_demos(*gd_tasks, *gd_n, *gd_seed, *gd_out); });

  // train-bc
  auto bc_data = std::make_shared<std::string>();
  auto bc_out = std::make_shared<std::string>();
  auto bc_cfg = std::make_shared<flare::im::BCConfig>();
  CLI::App* bc = app.add_subcommand("train-bc", "pretrain the policy on demonstrations");
  bc->add_option("--data", *bc_data, "demo dataset directory")->required();
  bc->add_option("--preset", bc_cfg->preset, "model size preset: desk, paper, or mini");
  bc->add_option("--epochs", bc_cfg->epochs, "passes over the dataset");
  bc->add_option("--batch-episodes", bc_cfg->batch_episodes, "episodes per gradient step");
  bc->add_option("--lr", bc_cfg->lr, "learning rate");
  bc->add_option("--seed", bc_cfg->seed, "training seed");
  bc->add_option("--eval-every", bc_cfg->eval_every, "gradient steps between evaluations");
  bc->add_option("--eval-episodes", bc_cfg->eval_episodes, "episodes per task per evaluation");
  bc->add_option("--out", *bc_out, "output run directory")->required();
  bc->callback([=] { cmd_train_bc(*bc_data, *bc_cfg, *bc_out); });

  // finetune
  auto ft_ckpt = std::make_shared<std::string>();
  auto ft_out = std::make_shared<std::string>();
  auto ft_opts = std::make_shared<TrainOpts>();
  CLI::App* ft = app.add_subcommand("finetune", "RL fine-tuning from sparse rewards");
  CLI::Option* ft_ckpt_o =
      ft->add_option("--ckpt", *ft_ckpt, "starting checkpoint (omit to train from scratch)");
  ft_opts->attach(ft);
  ft->add_option("--out", *ft_out, "output run directory")->required();
  ft->callback([=] { cmd_finetune(*ft_ckpt, ft_ckpt_o->count() > 0, *ft_opts, *ft_out); });

  // eval
  auto ev_ckpt = std::make_shared<std::string>();
  auto ev_task = std::make_shared<std::string>();
  auto ev_eps = std::make_shared<int>(200);
  auto ev_seed = std::make_shared<uint64_t>(0);
  auto ev_sample = std::make_shared<bool>(false);
  auto ev_emb = std::make_shared<std::string>("a");
  auto ev_out = std::make_shared<std::string>();
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on held-out houses");
  ev->add_option("--ckpt", *ev_ckpt, "checkpoint to evaluate")->required();
  ev->add_option("--task", *ev_task, "task (" + valid_task_list() + ")")->required();
  ev->add_option("--episodes", *ev_eps, "evaluation episode count");
  ev->add_option("--seed", *ev_seed, "evaluation seed");
  ev->add_flag("--sample", *ev_sample, "sample actions instead of greedy argmax");
  ev->add_option("--embodiment", *ev_emb, "robot body: a or b");
  ev->add_option("--out", *ev_out, "output directory")->required();
  ev->callback(
      [=] { cmd_eval(*ev_ckpt, *ev_task, *ev_eps, *ev_seed, *ev_sample, *ev_emb, *ev_out); });

  // suite
  auto st_name = std::make_shared<std::string>();
  auto st_ckpt = std::make_shared<std::string>();
  auto st_seeds = std::make_shared<int>(3);
  auto st_out = std::make_shared<std::string>();
  auto st_opts = std::make_shared<TrainOpts>();
  CLI::App* st = app.add_subcommand(
      "suite", "run a named single-knob experiment suite (ablations, adaptation, novel)");
  st->add_option("--name", *st_name, "suite name: ablations, adaptation, or novel")
      ->required();
  st->add_option("--ckpt", *st_ckpt, "base checkpoint every run starts from")->required();
  st->add_option("--seeds", *st_seeds, "seeds per run");
  st_opts->attach(st);
  st->add_option("--out", *st_out, "output suite directory")->required();
  st->callback([=] { cmd_suite(*st_name, *st_ckpt, *st_seeds, *st_opts, *st_out); });

  // plot
  auto pl_runs = std::make_shared<std::vector<std::string>>();
  auto pl_out = std::make_shared<std::string>();
  CLI::App* pl = app.add_subcommand("plot", "render SVG curve charts for finished runs");
  pl->add_option("--runs", *pl_runs, "run directories holding curves.csv")
      ->required()
      ->delimiter(',');
  pl->add_option("--out", *pl_out, "output directory")->required();
  pl->callback([=] { cmd_plot(*pl_runs, *pl_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const flare::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const flare::SchemaError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const flare::CheckpointError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return 3;
  }
  return 0;
}
