#include "flare/eval/suite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "flare/error.hpp"
#include "json.hpp"

namespace flare::eval {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << text;
}

std::string render_config(const SuiteRunSpec& spec, uint64_t seed) {
  rl::TrainConfig cfg = spec.cfg;
  cfg.seed = seed;
  return rl::config_to_json(cfg, spec.init_checkpoint);
}

}  // namespace

ExperimentSuite ExperimentSuite::make(const std::string& suite_name,
                                      const rl::TrainConfig& baseline,
                                      const std::string& base_checkpoint, int n_seeds) {
  if (n_seeds < 1) throw ConfigError("suite needs at least one seed");
  ExperimentSuite s;
  s.name = suite_name;
  s.baseline = baseline;
  s.base_checkpoint = base_checkpoint;
  for (int k = 0; k < n_seeds; k++) s.seeds.push_back(baseline.seed + static_cast<uint64_t>(k));

  auto add = [&](const std::string& name, const std::string& knob, auto&& mutate,
                 const std::string& init) {
    SuiteRunSpec spec;
    spec.name = name;
    spec.knob = knob;
    spec.cfg = baseline;
    spec.init_checkpoint = init;
    mutate(spec.cfg);
    s.runs.push_back(std::move(spec));
  };
  auto keep = [](rl::TrainConfig&) {};

  add("flare", "", keep, base_checkpoint);
  if (suite_name == "ablations") {
    add("lr_x10", "lr", [&](rl::TrainConfig& c) { c.lr = baseline.lr * 10.f; },
        base_checkpoint);
    add("shared_ac", "shared_ac", [](rl::TrainConfig& c) { c.shared_ac = true; },
        base_checkpoint);
    add("eb_02", "entropy_weight",
        [](rl::TrainConfig& c) { c.entropy_weight = 0.2f; }, base_checkpoint);
    add("sac", "algo", [](rl::TrainConfig& c) { c.algo = "sac"; }, base_checkpoint);
  } else if (suite_name == "adaptation") {
    add("step_pen", "step_penalty",
        [](rl::TrainConfig& c) { c.shaping.step_penalty = true; }, base_checkpoint);
    add("coll_pen", "collision_penalty",
        [](rl::TrainConfig& c) { c.shaping.collision_penalty = true; }, base_checkpoint);
    add("embodiment_b", "embodiment",
        [](rl::TrainConfig& c) { c.embodiment = env::Embodiment::B; }, base_checkpoint);
  } else if (suite_name == "novel") {
    add("scratch", "init_checkpoint", keep, "");
  } else {
    throw ConfigError("unknown suite '" + suite_name +
                      "' (known: ablations, adaptation, novel)");
  }
  return s;
}

std::vector<std::string> config_diff_keys(const std::string& json_a,
                                          const std::string& json_b) {
  nlohmann::json a, b;
  try {
    a = nlohmann::json::parse(json_a);
    b = nlohmann::json::parse(json_b);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("config_diff_keys: unparseable config: ") + e.what());
  }
  if (!a.is_object() || !b.is_object())
    throw SchemaError("config_diff_keys: configs must be JSON objects");
  std::set<std::string> keys;
  for (auto it = a.begin(); it != a.end(); ++it) keys.insert(it.key());
  for (auto it = b.begin(); it != b.end(); ++it) keys.insert(it.key());
  std::vector<std::string> out;
  for (const std::string& k : keys)
    if (!a.contains(k) || !b.contains(k) || a[k] != b[k]) out.push_back(k);
  return out;
}

SuiteResult run_suite(const ExperimentSuite& suite, const std::string& out_dir,
                      bool parallel) {
  (void)parallel;  // runs are order-independent; a single core executes them in sequence
  if (suite.runs.empty()) throw ConfigError("suite has no runs");
  if (suite.seeds.empty()) throw ConfigError("suite has no seeds");
  if (suite.runs.front().name != "flare")
    throw ContractError("suite baseline run must come first");

  // Validate everything and pin the single-knob discipline before any compute.
  const std::string baseline_json = render_config(suite.runs.front(), suite.baseline.seed);
  for (const SuiteRunSpec& spec : suite.runs) {
    spec.cfg.validate();
    std::vector<std::string> diff =
        config_diff_keys(render_config(spec, suite.baseline.seed), baseline_json);
    std::vector<std::string> want;
    if (!spec.knob.empty()) want.push_back(spec.knob);
    if (diff != want) {
      std::string got;
      for (const std::string& k : diff) got += (got.empty() ? "" : ", ") + k;
      throw ContractError("suite run '" + spec.name + "' must change exactly [" +
                          spec.knob + "] but changes [" + got + "]");
    }
  }

  SuiteResult result;
  result.suite_dir = out_dir;
  fs::create_directories(out_dir);
  result.baseline_json = (fs::path(out_dir) / "baseline.json").string();
  write_file(result.baseline_json, baseline_json);

  nlohmann::json failures = nlohmann::json::array();
  for (const SuiteRunSpec& spec : suite.runs) {
    for (uint64_t seed : suite.seeds) {
      SuiteRunResult row;
      row.run = spec.name;
      row.seed = seed;
      row.dir = (fs::path(out_dir) / spec.name / ("seed" + std::to_string(seed))).string();
      rl::TrainConfig cfg = spec.cfg;
      cfg.seed = seed;
      try {
        rl::FinetuneResult res = rl::finetune(spec.init_checkpoint, cfg, row.dir);
        if (res.rows.empty()) throw ContractError("run produced no curve rows");
        const rl::CurveRow& last = res.rows.back();
        row.ok = true;
        row.final_eval_sr = last.eval_sr;
        row.final_eval_sel = last.eval_sel;
        row.mean_ep_len = last.mean_ep_len;
        row.mean_collisions = last.mean_collisions;
      } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
        failures.push_back({{"run", spec.name}, {"seed", seed}, {"error", row.error}});
      }
      result.rows.push_back(std::move(row));
    }
  }

  std::string csv = std::string(kComparisonHeader) + "\n";
  for (const SuiteRunResult& r : result.rows) {
    if (!r.ok) continue;
    csv += r.run + "," + std::to_string(r.seed) + "," + fmt(r.final_eval_sr) + "," +
           fmt(r.final_eval_sel) + "," + fmt(r.mean_ep_len) + "," +
           fmt(r.mean_collisions) + "\n";
  }
  result.comparison_csv = (fs::path(out_dir) / "comparison.csv").string();
  write_file(result.comparison_csv, csv);

  std::string md = "| run | final_sr | final_sel | mean_ep_len | mean_collisions |\n";
  md += "|---|---|---|---|---|\n";
  for (const SuiteRunSpec& spec : suite.runs) {
    std::vector<const SuiteRunResult*> ok_rows;
    int total = 0;
    for (const SuiteRunResult& r : result.rows)
      if (r.run == spec.name) {
        total++;
        if (r.ok) ok_rows.push_back(&r);
      }
    if (ok_rows.empty()) {
      md += "| " + spec.name + " | failed (0/" + std::to_string(total) + " seeds) || || |\n";
      continue;
    }
    auto band = [&](auto get) {
      double mean = 0, lo = 1e300, hi = -1e300;
      for (const SuiteRunResult* r : ok_rows) {
        const double v = get(*r);
        mean += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      mean /= static_cast<double>(ok_rows.size());
      return fmt3(mean) + " [" + fmt3(lo) + ", " + fmt3(hi) + "]";
    };
    md += "| " + spec.name + " | " +
          band([](const SuiteRunResult& r) { return r.final_eval_sr; }) + " | " +
          band([](const SuiteRunResult& r) { return r.final_eval_sel; }) + " | " +
          band([](const SuiteRunResult& r) { return r.mean_ep_len; }) + " | " +
          band([](const SuiteRunResult& r) { return r.mean_collisions; }) + " |\n";
  }
  result.comparison_md = (fs::path(out_dir) / "comparison.md").string();
  write_file(result.comparison_md, md);

  result.failures_json = (fs::path(out_dir) / "failures.json").string();
  write_file(result.failures_json, failures.dump(2) + "\n");
  return result;
}

}  // namespace flare::eval
