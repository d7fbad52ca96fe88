/*
 * Copyright 2026 The memdos Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "helpers.hpp"

using namespace memdos;
using memdos::test::scenario_path;

namespace
{
const char* kSmallTopology =
    "topology: {cycles_per_ms: 1000, llc_slices: 4, llc_ways: 8, llc_sets_per_slice: 128, "
    "private_cache_bytes: 16KiB, private_ways: 4}\n";

// 30 s: phased victim, two benign tenants, atomic locker from 5 s.
std::string quick_defense()
{
  return std::string("name: quick\nseed: 3\nduration_ms: 30000\n") + kSmallTopology +
         "vms:\n"
         "  - vm_id: victim\n"
         "    role: protected\n"
         "    workload: {kind: phased, phases: [{working_set: 64KiB, ops_per_request: 20, think_cycles: 600, "
         "duration_ms: 60000, locality: low}]}\n"
         "  - {vm_id: b1, workload: {kind: stream, footprint: 1KiB, locality: low, think_cycles: 20}}\n"
         "  - {vm_id: b2, workload: {kind: stream, footprint: 2KiB, locality: low, think_cycles: 40}}\n"
         "  - {vm_id: bad, role: attacker, start_ms: 5000, workload: {kind: atomic_lock, atomic: unaligned}}\n"
         "defense: {start_ms: 1000, l_r_ms: 10000}\n"
         "report: {baseline: attackers_idle}\n";
}

void expect_config_error(const std::string& yaml, const std::string& field)
{
  try {
    parse_scenario(yaml);
    FAIL() << "expected ConfigError on " << field;
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.field()).find(field), std::string::npos) << e.field() << ": " << e.what();
  }
}

int cli(const std::string& args)
{
  const std::string cmd = std::string(MEMDOS_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::filesystem::path scratch(const std::string& name)
{
  const auto p = std::filesystem::temp_directory_path() / ("memdos-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}
} // namespace

TEST(Scenario, MinimalLoadsWithDefaults)
{
  const ScenarioConfig c = load_scenario(scenario_path("minimal"));
  EXPECT_EQ(c.name, "minimal");
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.duration_ms, 100);
  ASSERT_EQ(c.vms.size(), 1u);
  EXPECT_EQ(c.vms[0].vm_id, "solo");
  EXPECT_EQ(c.vms[0].role, Role::benign);
  EXPECT_EQ(c.vms[0].workload.kind, WorkloadKind::idle);
  EXPECT_FALSE(c.defense.enabled);
  EXPECT_EQ(c.topology.llc_slices, TopologyConfig{}.llc_slices);
  EXPECT_EQ(c.defense.schedule.samples, 100u);
  EXPECT_EQ(c.report.baseline, Baseline::attackers_idle);
}

TEST(Scenario, EveryShippedScenarioLoads)
{
  for (const auto& e : std::filesystem::directory_iterator(MEMDOS_SCENARIO_DIR))
    if (e.path().extension() == ".yaml")
      EXPECT_NO_THROW(load_scenario(e.path().string())) << e.path();
}

TEST(Scenario, InvalidConfigsNameTheField)
{
  expect_config_error("duration_ms: 100\nvms:\n  - {vm_id: a, workload: {kind: idle}}\n"
                      "  - {vm_id: a, workload: {kind: idle}}\n",
                      "vm_id");
  expect_config_error("duration_ms: 100\nvms:\n  - {vm_id: a, workload: {kind: idle}}\ndefense: {enabled: true}\n",
                      "role");
  expect_config_error("duration_ms: 100\nvms:\n  - {vm_id: a, role: protected, workload: {kind: idle}}\n"
                      "  - {vm_id: b, role: protected, workload: {kind: idle}}\ndefense: {enabled: true}\n",
                      "role");
  expect_config_error("duration_ms: 100\nvms:\n  - {vm_id: a, workload: {kind: rowhammer}}\n", "workload.kind");
  expect_config_error("duration_ms: 100\ncolour: blue\nvms:\n  - {vm_id: a, workload: {kind: idle}}\n", "colour");
  expect_config_error("duration_ms: 100\nvms:\n  - {vm_id: a, start_ms: 100, workload: {kind: idle}}\n", "start_ms");
  expect_config_error("duration_ms: 100\nvms:\n  - {vm_id: a, workload: {kind: stream, footprint: lots}}\n",
                      "footprint");
  expect_config_error("duration_ms: 100\nvms:\n  - {vm_id: a, workload: {kind: stream, footprint: 4KiB, threads: 2}}\n",
                      "threads");
  expect_config_error("duration_ms: [1\n", "yaml");
  expect_config_error("duration_ms: 100\nvms: []\n", "vms");
  EXPECT_THROW(load_scenario("/nonexistent/scenario.yaml"), ConfigError);
}

TEST(Scenario, ParseBytes)
{
  EXPECT_EQ(parse_bytes("4096"), 4096u);
  EXPECT_EQ(parse_bytes("512KB"), 512u * 1024);
  EXPECT_EQ(parse_bytes("16KiB"), 16u * 1024);
  EXPECT_EQ(parse_bytes("10MiB"), 10u * 1024 * 1024);
  EXPECT_EQ(parse_bytes("2G"), 2ull << 30);
  EXPECT_THROW(parse_bytes("MiB"), std::invalid_argument);
  EXPECT_THROW(parse_bytes("3parsecs"), std::invalid_argument);
}

TEST(Scenario, RunIsDeterministic)
{
  const ScenarioConfig c = parse_scenario(quick_defense());
  RunOptions o;
  o.trace = true;
  const Report a = run_scenario(c, o);
  const Report b = run_scenario(c, o);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_EQ(a.trace.to_jsonl(), b.trace.to_jsonl());
  EXPECT_EQ(a.ground_truth, std::vector<std::string>{"bad"});
  EXPECT_EQ(a.identified, std::vector<std::string>{"bad"});
  EXPECT_EQ(a.tp, 1u);
  EXPECT_EQ(a.fp, 0u);
  EXPECT_EQ(a.fn, 0u);
  EXPECT_TRUE(a.correct_identification());
}

TEST(Scenario, TraceRecordsAreConsistent)
{
  RunOptions o;
  o.trace = true;
  o.with_baseline = false;
  const Report r = run_scenario(parse_scenario(quick_defense()), o);
  const auto dir = scratch("trace");
  const std::string path = (dir / "quick.trace.jsonl").string();
  export_trace(r, path);
  const Trace t = Trace::read(path);
  EXPECT_EQ(t.to_jsonl(), r.trace.to_jsonl());

  const std::set<std::string> kinds{"counter_sample", "ks_decision", "phase_change", "duty_change", "probe_result"};
  std::set<std::string> seen;
  double last = -1;
  std::size_t decisions = 0;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    ASSERT_TRUE(j.contains("time_ms"));
    ASSERT_TRUE(j.contains("payload"));
    const std::string kind = j["kind"];
    EXPECT_TRUE(kinds.count(kind)) << kind;
    seen.insert(kind);
    EXPECT_GE(j["time_ms"].get<double>(), last);
    last = j["time_ms"].get<double>();
    if (kind == "ks_decision") {
      ++decisions;
      const double d = j["payload"]["D"];
      EXPECT_GE(d, 0.0);
      EXPECT_LE(d, 1.0);
      const std::string v = j["payload"]["verdict"];
      EXPECT_TRUE(v == "accept" || v == "reject");
    }
  }
  EXPECT_GT(decisions, 5u);
  EXPECT_TRUE(seen.count("counter_sample"));
  EXPECT_TRUE(seen.count("duty_change"));
  EXPECT_TRUE(seen.count("phase_change"));
  EXPECT_EQ(replay_mismatches(t), 0u);
  const auto summary = summarize_trace(t);
  EXPECT_TRUE(summary.is_object());
  std::filesystem::remove_all(dir);
}

TEST(Scenario, SweepAggregates)
{
  ScenarioConfig c = parse_scenario(quick_defense());
  const SweepReport s = sweep(c, {1, 2, 3});
  ASSERT_EQ(s.runs.size(), 3u);
  double tp = 0;
  double fp = 0;
  for (const Report& r : s.runs) {
    tp += r.correct_identification() ? 1 : 0;
    fp += r.suspected() ? 1 : 0;
  }
  EXPECT_DOUBLE_EQ(s.tp_rate, tp / 3);
  EXPECT_DOUBLE_EQ(s.fp_rate, fp / 3);
  EXPECT_EQ(s.runs[1].seed, 2u);
  const auto j = s.to_json();
  EXPECT_EQ(j["per_seed"].size(), 3u);

  // No attacker: the paired baseline is the same run, so every slowdown is exactly 1.
  std::string quiet = quick_defense();
  quiet.replace(quiet.find("kind: atomic_lock, atomic: unaligned"), 36, "kind: idle");
  const SweepReport q = sweep(parse_scenario(quiet), {4, 5, 6});
  ASSERT_TRUE(q.slowdown.count("victim"));
  EXPECT_DOUBLE_EQ(q.slowdown.at("victim").first, 1.0);
  EXPECT_DOUBLE_EQ(q.slowdown.at("victim").second, 0.0);
  for (const Report& r : q.runs)
    EXPECT_TRUE(r.ground_truth.empty());
}

TEST(Scenario, LockingBeatsFloodingAcrossPackages)
{
  const ScenarioConfig atomic = load_scenario(scenario_path("cross_package"));
  ScenarioConfig flood = atomic;
  flood.vm("attacker").vcpus = 4;
  flood.vm("attacker").workload = mem_flood_workload(4, FloodMode::full);
  const Report a = run_scenario(atomic);
  const Report f = run_scenario(flood);
  ASSERT_TRUE(a.vm("victim").slowdown);
  ASSERT_TRUE(f.vm("victim").slowdown);
  EXPECT_GT(*a.vm("victim").slowdown, *f.vm("victim").slowdown);
  EXPECT_GE(*f.vm("victim").slowdown, 1.0);
}

TEST(Cli, ExitCodes)
{
  const auto dir = scratch("cli");
  const std::string out = " --out " + dir.string();
  EXPECT_EQ(cli("run " + scenario_path("minimal") + " --seed 7" + out), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "minimal-seed7.report.json"));
  EXPECT_EQ(cli("run " + scenario_path("minimal") + " --trace" + out), 0);
  EXPECT_EQ(cli("report " + (dir / "minimal-seed1.trace.jsonl").string()), 0);
  EXPECT_EQ(cli("sweep " + scenario_path("minimal") + " --seeds 1..3" + out), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "minimal.sweep.json"));

  const auto bad = dir / "dup.yaml";
  std::ofstream(bad) << "duration_ms: 100\nvms:\n  - {vm_id: a, workload: {kind: idle}}\n"
                        "  - {vm_id: a, workload: {kind: idle}}\n";
  EXPECT_EQ(cli("run " + bad.string() + out), 2);
  EXPECT_EQ(cli("run " + scenario_path("minimal") + " --seed notanumber" + out), 2);
  EXPECT_EQ(cli("frobnicate"), 2);

  const auto junk = dir / "junk.jsonl";
  std::ofstream(junk) << "{not json\n";
  EXPECT_EQ(cli("report " + junk.string()), 3);
  EXPECT_EQ(cli("report " + (dir / "missing.jsonl").string()), 3);
  std::filesystem::remove_all(dir);
}
