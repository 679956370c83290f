#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "flare/error.hpp"
#include "flare/eval/metrics.hpp"
#include "flare/im/bc.hpp"
#include "flare/im/demos.hpp"
#include "json.hpp"

using namespace flare;
using namespace flare::im;

namespace {

const std::vector<env::TaskKind> kBaseMix{env::TaskKind::ObjectNav, env::TaskKind::PickUp,
                                          env::TaskKind::Fetch, env::TaskKind::RoomVisit};

std::vector<const DemoEpisode*> refs(const DemoDataset& d, std::vector<int> idx = {}) {
  std::vector<const DemoEpisode*> out;
  if (idx.empty())
    for (const DemoEpisode& ep : d.episodes) out.push_back(&ep);
  else
    for (int i : idx) out.push_back(&d.episodes[static_cast<size_t>(i)]);
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("episode-length weighted success follows its closed form") {
  CHECK(eval::sel(false, 10, 10) == 0.f);
  CHECK(eval::sel(true, 10, 10) == 1.f);
  CHECK(eval::sel(true, 100, 50) == doctest::Approx(0.5f));
  CHECK(eval::sel(true, 5, 50) == 1.f);  // faster than the planner caps at 1
  CHECK_THROWS_AS(eval::sel(true, 0, 5), ContractError);
  CHECK_THROWS_AS(eval::sel(true, 5, 0), ContractError);
}

TEST_CASE("the planner scores perfect success and efficiency") {
  for (env::TaskKind kind : {env::TaskKind::ObjectNav, env::TaskKind::RoomVisit}) {
    eval::EvalReport rep = eval::evaluate_expert(kind, 20, env::kEvalHouseSeeds, 5);
    CHECK(rep.sr == 1.f);
    CHECK(rep.mean_sel == 1.f);
    CHECK(rep.episodes == 20);
    for (const eval::EpisodeRecord& r : rep.records) {
      CHECK(r.success);
      CHECK(r.steps == r.lstar);
      CHECK(r.house_seed >= env::kEvalHouseSeeds.lo);
      CHECK(r.house_seed < env::kEvalHouseSeeds.hi);
      CHECK(r.reward_sum == 1.f);
    }
  }
}

TEST_CASE("a uniform-random policy stays under ten percent success") {
  eval::EvalReport rep = eval::evaluate_random(env::TaskKind::ObjectNav, 200,
                                               env::kEvalHouseSeeds, 7);
  CHECK(rep.sr < 0.10f);
  for (const eval::EpisodeRecord& r : rep.records) CHECK(r.sel <= (r.success ? 1.f : 0.f));
}

TEST_CASE("report aggregates equal recomputation from per-episode records") {
  policy::PolicyNet net(policy::PolicyConfig::preset("mini"), 3);
  eval::EvalReport rep =
      eval::evaluate(net, env::TaskKind::ObjectNav, 12, env::kValHouseSeeds, 11, true);
  double sr = 0, se = 0, len = 0, col = 0;
  for (const eval::EpisodeRecord& r : rep.records) {
    sr += r.success;
    se += r.sel;
    len += r.steps;
    col += r.collisions;
    CHECK(r.sel == eval::sel(r.success, r.steps, r.lstar));
  }
  CHECK(rep.sr == doctest::Approx(sr / 12).epsilon(1e-6));
  CHECK(rep.mean_sel == doctest::Approx(se / 12).epsilon(1e-6));
  CHECK(rep.mean_len == doctest::Approx(len / 12).epsilon(1e-6));
  CHECK(rep.mean_collisions == doctest::Approx(col / 12).epsilon(1e-6));
  CHECK(rep.mean_sel <= rep.sr + 1e-6f);

  eval::EvalReport again =
      eval::evaluate(net, env::TaskKind::ObjectNav, 12, env::kValHouseSeeds, 11, true);
  for (size_t i = 0; i < rep.records.size(); i++) {
    CHECK(rep.records[i].house_seed == again.records[i].house_seed);
    CHECK(rep.records[i].steps == again.records[i].steps);
    CHECK(rep.records[i].success == again.records[i].success);
  }
  CHECK_THROWS_AS(eval::evaluate(net, env::TaskKind::ObjectNav, 0, env::kValHouseSeeds, 1),
                  ContractError);
}

TEST_CASE("demo generation is deterministic, on-range and base-task only") {
  DemoDataset d = generate_demos(kBaseMix, 10, 77);
  CHECK(d.episodes.size() == 40);
  CHECK(d.counts.size() == 4);
  for (const auto& [kind, n] : d.counts) {
    CHECK(n == 10);
    CHECK(env::task_is_base(kind));
  }
  CHECK(d.attempts >= 40);
  CHECK(d.skipped == d.attempts - 40);
  for (const DemoEpisode& ep : d.episodes) {
    CHECK(env::task_is_base(ep.kind()));
    CHECK(env::kDemoHouseSeeds.contains(ep.house_seed));
    CHECK(ep.obs.size() == ep.actions.size());
    CHECK(ep.lstar() >= 2);
  }

  DemoDataset d2 = generate_demos(kBaseMix, 10, 77);
  CHECK(d.episodes == d2.episodes);
  DemoDataset d3 = generate_demos(kBaseMix, 10, 78);
  CHECK(!(d.episodes == d3.episodes));

  CHECK_THROWS_AS(generate_demos({}, 5, 1), ContractError);
  CHECK_THROWS_AS(generate_demos(kBaseMix, 0, 1), ContractError);
  CHECK_THROWS_AS(generate_demos({env::TaskKind::ObjNavAfford}, 5, 1), ContractError);
  CHECK_THROWS_AS(generate_demos({env::TaskKind::ObjectNav, env::TaskKind::ObjectNav}, 5, 1),
                  ContractError);
}

TEST_CASE("every stored demonstration replays to success bit-exactly") {
  DemoDataset d = generate_demos(kBaseMix, 8, 99);
  std::string why;
  for (const DemoEpisode& ep : d.episodes) {
    CHECK_MESSAGE(replay_episode(&ep == &d.episodes[0] ? ep : ep, &why), why);
  }
  // corrupting any part of a record is caught by replay
  DemoEpisode broken = d.episodes[0];
  broken.obs[0].window[20] ^= 1;
  CHECK(!replay_episode(broken, &why));
  broken = d.episodes[0];
  broken.actions.back() = 0;  // drop the terminal action
  CHECK(!replay_episode(broken, &why));
  broken = d.episodes[0];
  broken.reset_seed += 1;
  CHECK(!replay_episode(broken, &why));
}

TEST_CASE("fetch demonstrations run longer than plain navigation on average") {
  DemoDataset d =
      generate_demos({env::TaskKind::ObjectNav, env::TaskKind::Fetch}, 100, 1234);
  double nav = 0, fetch = 0;
  for (const DemoEpisode& ep : d.episodes) {
    if (ep.kind() == env::TaskKind::ObjectNav) nav += ep.lstar();
    if (ep.kind() == env::TaskKind::Fetch) fetch += ep.lstar();
  }
  CHECK(fetch / 100 > nav / 100);
}

TEST_CASE("demo datasets round-trip through disk with a guarded manifest") {
  namespace fs = std::filesystem;
  const std::string dir = "/tmp/flare_test_demos";
  fs::remove_all(dir);
  DemoDataset d = generate_demos(kBaseMix, 6, 55);
  save_demos(d, dir);

  // the manifest provably lists base kinds only
  nlohmann::json manifest;
  {
    std::ifstream f(dir + "/manifest.json");
    f >> manifest;
  }
  std::set<std::string> names;
  for (const auto& [name, n] : manifest.at("counts").items()) names.insert(name);
  CHECK(names == std::set<std::string>{"objectnav", "pickup", "fetch", "roomvisit"});
  CHECK(manifest.at("vocab_fingerprint").get<std::string>() == d.vocab_fingerprint);

  DemoDataset back = load_demos(dir);
  CHECK(back.episodes == d.episodes);
  CHECK(back.counts == d.counts);
  CHECK(back.seed == d.seed);
  CHECK(back.attempts == d.attempts);
  std::string why;
  CHECK_MESSAGE(replay_episode(back.episodes[5], &why), why);

  // tampering is rejected
  nlohmann::json evil = manifest;
  evil["vocab_fingerprint"] = "0000000000000000";
  {
    std::ofstream f(dir + "/manifest.json");
    f << evil.dump(2);
  }
  CHECK_THROWS_AS(load_demos(dir), SchemaError);
  evil = manifest;
  evil["counts"]["objectnav"] = 7;
  {
    std::ofstream f(dir + "/manifest.json");
    f << evil.dump(2);
  }
  CHECK_THROWS_AS(load_demos(dir), SchemaError);
  evil = manifest;
  evil["counts"]["objectnav_afford"] = 1;
  evil["files"]["objectnav_afford"] = "objectnav_afford.jsonl";
  {
    std::ofstream f(dir + "/manifest.json");
    f << evil.dump(2);
  }
  CHECK_THROWS_AS(load_demos(dir), SchemaError);
  CHECK_THROWS_AS(load_demos("/tmp/flare_no_such_demo_dir"), SchemaError);
  fs::remove_all(dir);
}

TEST_CASE("a fresh policy starts at the uniform-prediction loss") {
  DemoDataset d = generate_demos({env::TaskKind::ObjectNav}, 4, 7);
  auto batch = refs(d);
  for (const char* preset : {"desk", "mini"}) {
    policy::PolicyNet net(policy::PolicyConfig::preset(preset), 13);
    float loss = bc_loss(net, batch, 300);
    CHECK(loss == doctest::Approx(std::log(20.0)).epsilon(0.02));
  }
}

TEST_CASE("behavior cloning loss falls monotonically at the start") {
  DemoDataset d = generate_demos({env::TaskKind::ObjectNav}, 6, 21);
  std::vector<int> shortest(6);
  for (int i = 0; i < 6; i++) shortest[static_cast<size_t>(i)] = i;
  std::sort(shortest.begin(), shortest.end(), [&](int a, int b) {
    return d.episodes[static_cast<size_t>(a)].lstar() < d.episodes[static_cast<size_t>(b)].lstar();
  });
  auto batch = refs(d, {shortest[0], shortest[1], shortest[2]});

  policy::PolicyNet net(policy::PolicyConfig::preset("mini"), 17);
  std::vector<grad::Tensor> params = net.actor_parameters();
  grad::AdamState opt(params, 1e-3f);
  float prev = 1e9f;
  for (int s = 0; s < 20; s++) {
    float loss = bc_update(net, opt, params, batch, 300, 1.0f);
    CHECK(loss < prev);
    prev = loss;
  }
  CHECK(prev < std::log(20.0));

  CHECK_THROWS_AS(bc_update(net, opt, params, {}, 300, 1.0f), ContractError);
}

TEST_CASE("five episodes are memorized within five hundred updates") {
  DemoDataset d = generate_demos({env::TaskKind::ObjectNav}, 12, 31);
  std::vector<int> idx(12);
  for (int i = 0; i < 12; i++) idx[static_cast<size_t>(i)] = i;
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    return d.episodes[static_cast<size_t>(a)].lstar() < d.episodes[static_cast<size_t>(b)].lstar();
  });
  auto batch = refs(d, {idx[0], idx[1], idx[2], idx[3], idx[4]});

  policy::PolicyNet net(policy::PolicyConfig::preset("mini"), 19);
  std::vector<grad::Tensor> params = net.actor_parameters();
  grad::AdamState opt(params, 1e-3f);
  for (int s = 0; s < 500; s++) bc_update(net, opt, params, batch, 300, 1.0f);

  int hits = 0, total = 0;
  for (const DemoEpisode* ep : batch) {
    grad::Tensor states = net.encode_batch(ep->obs, nullptr);
    std::vector<int> prev{policy::kStartAction};
    for (size_t t = 1; t < ep->actions.size(); t++) prev.push_back(ep->actions[t - 1]);
    grad::Tensor beliefs = net.decode_sequence(
        states, prev, {0, static_cast<int>(ep->actions.size())}, {0}, nullptr);
    grad::Tensor logits = net.actor_logits(beliefs, nullptr);
    for (size_t t = 0; t < ep->actions.size(); t++) {
      int best = 0;
      for (int a = 1; a < env::kNumActions; a++)
        if (logits.at(static_cast<int64_t>(t) * env::kNumActions + a) >
            logits.at(static_cast<int64_t>(t) * env::kNumActions + best))
          best = a;
      hits += best == ep->actions[t] ? 1 : 0;
      total++;
    }
  }
  CHECK(static_cast<double>(hits) / total >= 0.99);
}

TEST_CASE("bc training config is validated") {
  BCConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  BCConfig bad = cfg;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.lr = 0.f;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.chunk_len = 301;  // past the model context
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.eval_frac = 0.f;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.preset = "galactic";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("a small cloning run logs evaluations and keeps its best checkpoint") {
  namespace fs = std::filesystem;
  DemoDataset d =
      generate_demos({env::TaskKind::ObjectNav, env::TaskKind::PickUp}, 8, 41);
  BCConfig cfg;
  cfg.preset = "mini";
  cfg.epochs = 2;
  cfg.batch_episodes = 4;
  cfg.eval_every = 2;
  cfg.eval_episodes = 2;
  cfg.eval_frac = 0.1f;
  cfg.seed = 5;

  const std::string dir1 = "/tmp/flare_test_bc1", dir2 = "/tmp/flare_test_bc2";
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  BCResult r1 = train_bc(cfg, d, dir1);
  CHECK(fs::exists(r1.ckpt_best));
  CHECK(fs::exists(r1.ckpt_last));
  CHECK(fs::exists(r1.log_csv));
  CHECK(r1.steps > 0);
  CHECK(!r1.rows.empty());
  CHECK(r1.best_mean_sr >= 0.f);

  std::string csv = slurp(r1.log_csv);
  CHECK(csv.rfind("step,loss,eval_task,eval_sr,eval_sel\n", 0) == 0);
  // final evaluation present for both tasks
  int objectnav_rows = 0, pickup_rows = 0;
  for (const BCRow& row : r1.rows) {
    if (row.eval_task == "objectnav") objectnav_rows++;
    if (row.eval_task == "pickup") pickup_rows++;
    CHECK(row.eval_sr >= 0.f);
    CHECK(row.eval_sel <= row.eval_sr + 1e-6f);
  }
  CHECK(objectnav_rows >= 1);
  CHECK(pickup_rows >= 1);
  CHECK(r1.rows.back().step == r1.steps);

  policy::Provenance prov;
  policy::PolicyNet best = policy::load_policy(r1.ckpt_best, &prov);
  CHECK(prov.phase == "bc");

  BCResult r2 = train_bc(cfg, d, dir2);
  CHECK(slurp(r1.log_csv) == slurp(r2.log_csv));
  CHECK(slurp(r1.ckpt_last) == slurp(r2.ckpt_last));
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}
