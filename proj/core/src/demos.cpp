#include "flare/im/demos.hpp"

#include <filesystem>
#include <fstream>

#include "flare/error.hpp"
#include "flare/policy/vocab.hpp"
#include "json.hpp"

namespace flare::im {

namespace {

using nlohmann::json;

// Runs the planner actions through a fresh environment, recording the
// observation stream. Returns false if the trajectory does not end in success.
bool rollout_expert(const env::House& house, const env::Instruction& instr,
                    uint64_t reset_seed, const std::vector<int>& actions,
                    std::vector<env::Observation>* obs_out) {
  env::GridHouse e(house, instr, env::TaskSpec::for_kind(instr.kind),
                   env::mask_for_embodiment(env::Embodiment::A), {});
  env::Observation obs = e.reset(reset_seed);
  bool success = false;
  for (size_t i = 0; i < actions.size(); i++) {
    if (obs_out) obs_out->push_back(obs);
    env::StepResult r = e.step(actions[i]);
    if (r.done) {
      success = r.success && i + 1 == actions.size();
      break;
    }
    obs = r.obs;
  }
  return success;
}

json obs_to_json(const env::Observation& o) {
  json row = json::array();
  for (uint8_t v : o.window) row.push_back(static_cast<int>(v));
  for (uint8_t v : o.proprio) row.push_back(static_cast<int>(v));
  for (uint8_t v : o.instr) row.push_back(static_cast<int>(v));
  return row;
}

env::Observation obs_from_json(const json& row) {
  if (!row.is_array() || row.size() != env::kWindowCells + 3 + env::kInstrLen)
    throw SchemaError("demo observation row must hold 60 tokens");
  env::Observation o;
  size_t i = 0;
  auto take = [&](int lo, int hi) {
    int v = row[i++].get<int>();
    if (v < lo || v >= hi) throw SchemaError("demo observation token out of range");
    return static_cast<uint8_t>(v);
  };
  for (int c = 0; c < env::kWindowCells; c++) o.window[static_cast<size_t>(c)] = take(0, env::kCellVocab);
  for (int c = 0; c < 3; c++) o.proprio[static_cast<size_t>(c)] = take(0, env::kProprioVocab);
  for (int c = 0; c < env::kInstrLen; c++) o.instr[static_cast<size_t>(c)] = take(0, env::kInstrVocab);
  return o;
}

}  // namespace

DemoDataset generate_demos(const std::vector<env::TaskKind>& mix, int per_task,
                           uint64_t seed) {
  if (mix.empty()) throw ContractError("generate_demos: empty task mix");
  if (per_task < 1) throw ContractError("generate_demos: need at least one episode per task");
  for (size_t i = 0; i < mix.size(); i++) {
    if (!env::task_is_base(mix[i]))
      throw ContractError(std::string("generate_demos: ") + env::task_name(mix[i]) +
                          " is not a base task");
    for (size_t j = i + 1; j < mix.size(); j++)
      if (mix[i] == mix[j]) throw ContractError("generate_demos: duplicate task in mix");
  }

  DemoDataset out;
  out.seed = seed;
  out.vocab_fingerprint = policy::vocab_fingerprint_hex();
  for (size_t ki = 0; ki < mix.size(); ki++) {
    env::TaskKind kind = mix[ki];
    Rng rng(seed, 101 + static_cast<uint64_t>(kind));
    int stored = 0;
    while (stored < per_task) {
      env::EpisodeSetup ep = env::sample_episode(kind, rng, env::kDemoHouseSeeds,
                                                 env::Embodiment::A, &out.attempts);
      DemoEpisode demo;
      demo.house_seed = ep.house_seed;
      demo.rooms = ep.house.room_count();
      demo.reset_seed = ep.reset_seed;
      demo.instr = ep.instr;
      demo.actions = ep.expert_actions;
      if (!rollout_expert(ep.house, ep.instr, ep.reset_seed, ep.expert_actions, &demo.obs))
        continue;  // counted below as a skip
      out.episodes.push_back(std::move(demo));
      out.counts[kind] += 1;
      stored++;
    }
  }
  out.skipped = out.attempts - static_cast<int>(out.episodes.size());
  if (static_cast<double>(out.episodes.size()) < 0.9 * out.attempts)
    throw GenerationError("generate_demos: planner yield below 90% (" +
                          std::to_string(out.episodes.size()) + "/" +
                          std::to_string(out.attempts) + ")");
  return out;
}

bool replay_episode(const DemoEpisode& ep, std::string* why) {
  env::House house;
  try {
    house = env::generate_house(ep.house_seed, ep.rooms);
  } catch (const Error& e) {
    if (why) *why = std::string("house regeneration failed: ") + e.what();
    return false;
  }
  std::vector<env::Observation> fresh;
  if (!rollout_expert(house, ep.instr, ep.reset_seed, ep.actions, &fresh)) {
    if (why) *why = "stored actions do not reach success";
    return false;
  }
  if (fresh.size() != ep.obs.size()) {
    if (why) *why = "observation count mismatch";
    return false;
  }
  for (size_t i = 0; i < fresh.size(); i++)
    if (!(fresh[i] == ep.obs[i])) {
      if (why) *why = "observation mismatch at step " + std::to_string(i);
      return false;
    }
  return true;
}

void save_demos(const DemoDataset& d, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json manifest;
  manifest["version"] = 1;
  manifest["seed"] = d.seed;
  manifest["vocab_fingerprint"] = d.vocab_fingerprint;
  manifest["attempts"] = d.attempts;
  manifest["skipped"] = d.skipped;
  manifest["house_seed_range"] = {env::kDemoHouseSeeds.lo, env::kDemoHouseSeeds.hi};
  json counts = json::object(), files = json::object();
  for (const auto& [kind, n] : d.counts) {
    counts[env::task_name(kind)] = n;
    files[env::task_name(kind)] = std::string(env::task_name(kind)) + ".jsonl";
  }
  manifest["counts"] = counts;
  manifest["files"] = files;
  {
    std::ofstream f(fs::path(dir) / "manifest.json");
    if (!f) throw SchemaError("cannot write demo manifest in " + dir);
    f << manifest.dump(2) << "\n";
  }
  std::map<env::TaskKind, std::ofstream> streams;
  for (const auto& [kind, n] : d.counts) {
    streams[kind].open(fs::path(dir) / (std::string(env::task_name(kind)) + ".jsonl"));
    if (!streams[kind]) throw SchemaError("cannot write demo file for " + dir);
  }
  for (const DemoEpisode& ep : d.episodes) {
    json rec;
    rec["house_seed"] = ep.house_seed;
    rec["rooms"] = ep.rooms;
    rec["reset_seed"] = ep.reset_seed;
    json instr = json::array();
    for (uint8_t t : ep.instr.tokens()) instr.push_back(static_cast<int>(t));
    rec["instr"] = instr;
    rec["actions"] = ep.actions;
    json obs = json::array();
    for (const env::Observation& o : ep.obs) obs.push_back(obs_to_json(o));
    rec["obs"] = obs;
    streams[ep.kind()] << rec.dump() << "\n";
  }
}

DemoDataset load_demos(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw SchemaError("missing demo manifest in " + dir);
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad demo manifest: ") + e.what());
  }

  DemoDataset d;
  try {
    if (manifest.at("version").get<int>() != 1)
      throw SchemaError("unsupported demo dataset version");
    d.seed = manifest.at("seed").get<uint64_t>();
    d.vocab_fingerprint = manifest.at("vocab_fingerprint").get<std::string>();
    d.attempts = manifest.at("attempts").get<int>();
    d.skipped = manifest.at("skipped").get<int>();
    if (d.vocab_fingerprint != policy::vocab_fingerprint_hex())
      throw SchemaError("demo dataset was produced with a different vocabulary");

    for (const auto& [name, n] : manifest.at("counts").items()) {
      auto kind = env::task_from_name(name);
      if (!kind || !env::task_is_base(*kind))
        throw SchemaError("demo manifest lists non-base task '" + name + "'");
      d.counts[*kind] = n.get<int>();
    }
    for (const auto& [kind, expect] : d.counts) {
      std::string fname =
          manifest.at("files").at(env::task_name(kind)).get<std::string>();
      std::ifstream f(fs::path(dir) / fname);
      if (!f) throw SchemaError("missing demo file " + fname);
      std::string line;
      int got = 0;
      while (std::getline(f, line)) {
        if (line.empty()) continue;
        json rec = json::parse(line);
        DemoEpisode ep;
        ep.house_seed = rec.at("house_seed").get<uint64_t>();
        ep.rooms = rec.at("rooms").get<int>();
        ep.reset_seed = rec.at("reset_seed").get<uint64_t>();
        std::array<uint8_t, env::kInstrLen> toks{};
        const auto& ji = rec.at("instr");
        if (!ji.is_array() || ji.size() != env::kInstrLen)
          throw SchemaError("demo instruction must hold 8 tokens");
        for (int i = 0; i < env::kInstrLen; i++)
          toks[static_cast<size_t>(i)] = static_cast<uint8_t>(ji[static_cast<size_t>(i)].get<int>());
        ep.instr = env::Instruction::from_tokens(toks);
        if (ep.instr.kind != kind)
          throw SchemaError("demo episode task does not match its file");
        ep.actions = rec.at("actions").get<std::vector<int>>();
        if (ep.actions.empty()) throw SchemaError("demo episode with no actions");
        for (int a : ep.actions)
          if (a < 0 || a >= env::kNumActions) throw SchemaError("demo action out of range");
        for (const auto& row : rec.at("obs")) ep.obs.push_back(obs_from_json(row));
        if (ep.obs.size() != ep.actions.size())
          throw SchemaError("demo episode with mismatched observation count");
        d.episodes.push_back(std::move(ep));
        got++;
      }
      if (got != expect)
        throw SchemaError("demo file " + fname + " holds " + std::to_string(got) +
                          " episodes, manifest says " + std::to_string(expect));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad demo dataset: ") + e.what());
  }
  return d;
}

}  // namespace flare::im
