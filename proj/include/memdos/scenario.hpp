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

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memdos/defense.hpp"
#include "memdos/reverse_map.hpp"
#include "memdos/topology.hpp"
#include "memdos/trace.hpp"
#include "memdos/workloads.hpp"

namespace memdos
{
enum class Role : std::uint8_t { protected_vm, benign, attacker };
enum class Baseline : std::uint8_t { attackers_idle, isolated, defense_disabled, none };

const char* to_string(Role role);
const char* to_string(Baseline baseline);

struct VmSpec {
  std::string vm_id;
  std::uint32_t vcpus = 1;
  Role role = Role::benign;
  std::uint32_t package = 0;
  double start_ms = 0;
  WorkloadSpec workload;
  /// Confine the workload's lines to DRAM rows of these channels (ground-truth pinning for victims).
  std::vector<std::uint32_t> pin_channels;
};

struct DefenseConfig {
  bool enabled = false;
  double start_ms = 0;
  MonitorSchedule schedule;
};

struct ReportOptions {
  Baseline baseline = Baseline::attackers_idle;
  double series_interval_ms = 1000;
  /// Throughput is measured over [measure_from_ms, duration_ms].
  double measure_from_ms = 0;
  /// Post-mitigation throughput starts this long after mitigation.
  double settle_ms = 2000;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  double duration_ms = 1000;
  TopologyConfig topology;
  std::vector<VmSpec> vms;
  DefenseConfig defense;
  ReportOptions report;
  bool oracle_checks = false;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  [[nodiscard]] const VmSpec& vm(const std::string& id) const;
  [[nodiscard]] VmSpec& vm(const std::string& id);
};

ScenarioConfig parse_scenario(const std::string& yaml_text);
ScenarioConfig load_scenario(const std::string& path);

struct VmReport {
  std::string vm_id;
  Role role = Role::benign;
  WorkloadKind kind = WorkloadKind::idle;
  VmCounters counters;
  double throughput = 0; // completed ops per simulated ms over the measured interval
  std::optional<double> baseline_throughput;
  std::optional<double> slowdown;
  std::optional<double> post_mitigation_slowdown;
  std::shared_ptr<DiscoveryLog> discovery;

  /// 1 - throughput / baseline, or nullopt without a baseline.
  [[nodiscard]] std::optional<double> throughput_loss() const;
};

struct Report {
  std::string scenario;
  std::uint64_t seed = 0;
  double duration_ms = 0;
  Baseline baseline = Baseline::none;
  std::vector<VmReport> vms;
  bool defense_enabled = false;
  DefenseStats defense;
  std::vector<std::string> identified;
  std::vector<std::string> ground_truth;
  std::uint32_t tp = 0;
  std::uint32_t fp = 0;
  std::uint32_t fn = 0;
  double series_interval_ms = 0;
  std::vector<std::vector<std::uint64_t>> series; // per VM: cumulative completed ops at each interval mark
  std::vector<std::pair<std::string, ProbeResult>> probes;
  nlohmann::json oracle;
  Trace trace;

  [[nodiscard]] const VmReport& vm(const std::string& id) const;
  [[nodiscard]] bool correct_identification() const;
  [[nodiscard]] bool suspected() const { return defense.suspected_events > 0; }
  /// Any single monitored window rejected (what a one-test rule would flag).
  [[nodiscard]] bool single_test_alarm() const { return defense.monitor_rejects > 0; }
  [[nodiscard]] nlohmann::json to_json() const;
};

struct RunOptions {
  bool trace = false;
  bool oracle = false;
  bool with_baseline = true;
};

/// Runs the scenario (and its paired baseline) deterministically.
Report run_scenario(const ScenarioConfig& config, const RunOptions& options = {});

struct SweepReport {
  std::vector<Report> runs;
  double tp_rate = 0;
  double fp_rate = 0;
  double single_test_fp_rate = 0;
  std::map<std::string, std::pair<double, double>> slowdown; // vm_id -> (mean, stddev)

  [[nodiscard]] nlohmann::json to_json() const;
};

SweepReport sweep(const ScenarioConfig& config, const std::vector<std::uint64_t>& seeds, const RunOptions& options = {});

void export_trace(const Report& report, const std::string& path);

/// Replays counter_sample records and recomputes each ks_decision's statistic.
/// Returns the number of decisions whose logged D differs from the replay.
std::size_t replay_mismatches(const Trace& trace);

/// Summary of a trace file for the `report` subcommand.
nlohmann::json summarize_trace(const Trace& trace);

/// Byte size strings such as "10MiB", "512KB" or plain integers.
std::uint64_t parse_bytes(const std::string& text);

} // namespace memdos
