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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "memdos/ks.hpp"
#include "memdos/rng.hpp"
#include "memdos/simulator.hpp"
#include "memdos/trace.hpp"

namespace memdos
{
enum class Metric : std::uint8_t { llc_accesses, bytes };

struct MonitorSchedule {
  double w_r_ms = 1000;
  double w_m_ms = 1000;
  double l_m_ms = 2000;
  double l_r_ms = 30000;
  double jitter_fraction = 0;
  std::uint32_t samples = 100;
  double sub_window_ms = 10;
  double alpha = 0.001;
  std::uint32_t consecutive_k = 4;
  std::uint32_t reference_throttle = 1; // sixteenths
  std::uint32_t mitigation_throttle = 1;
  Metric metric = Metric::llc_accesses;

  /// Throws ConfigError naming the field.
  void validate() const;
};

enum class DefensePhase : std::uint8_t { normal, suspected, identifying, mitigated };
const char* to_string(DefensePhase phase);

/// Advances a simulator while firing periodic observers at exact cycle marks.
class Driver
{
public:
  explicit Driver(Simulator& sim) : sim_(sim) {}

  void every(Cycle period, std::function<void(Cycle)> fn);
  void run_until(Cycle t);
  [[nodiscard]] Simulator& sim() { return sim_; }
  [[nodiscard]] Cycle now() const { return sim_.now(); }

private:
  struct Tick {
    Cycle period;
    Cycle next;
    std::function<void(Cycle)> fn;
  };
  Simulator& sim_;
  std::vector<Tick> ticks_;
};

struct KsRecord {
  double time_ms = 0;
  KsDecision decision;
  std::string purpose; // monitor | retest | split | check
};

struct DefenseStats {
  std::optional<double> first_suspected_ms;
  std::optional<double> identified_ms;
  std::optional<double> mitigated_ms;
  std::vector<VmId> identified;
  std::uint32_t split_rounds = 0;
  std::uint32_t check_rounds = 0;
  std::uint32_t suspected_events = 0;
  std::uint32_t monitor_rejects = 0;
  std::uint32_t reference_windows = 0;
  std::uint32_t monitored_windows = 0;
  std::vector<std::pair<double, std::string>> phase_log;
  std::vector<KsRecord> ks;
};

/// Pseudo-isolated reference sampling, KS monitoring, binary-search attacker
/// identification and throttling mitigation for one protected VM.
class Defense
{
public:
  Defense(Driver& driver, VmId protected_vm, std::vector<VmId> co_vms, MonitorSchedule schedule, std::uint64_t seed,
          Trace* trace = nullptr);

  SampleWindow collect_reference();
  /// Reference window with only `throttled` slowed down.
  SampleWindow collect_reference(const std::vector<VmId>& throttled);
  SampleWindow collect_monitored();

  KsDecision test(const SampleWindow& monitored, const SampleWindow& reference, const std::string& purpose);

  /// Runs the monitoring loop until simulated cycle `until`.
  void run_monitor(Cycle until);
  /// Binary-search identification over the co-tenant VMs not yet mitigated.
  std::vector<VmId> identify_attackers();
  void mitigate(const std::vector<VmId>& vms);

  [[nodiscard]] DefensePhase phase() const { return phase_; }
  [[nodiscard]] const DefenseStats& stats() const { return stats_; }
  [[nodiscard]] const std::optional<SampleWindow>& reference() const { return reference_; }

private:
  SampleWindow collect(WindowKind kind, double window_ms);
  void set_phase(DefensePhase next, const std::string& reason);
  void throttle(VmId vm, DutyRatio ratio);
  std::optional<VmId> search(std::vector<VmId> vms);
  bool anomaly_with_throttled(const std::vector<VmId>& throttled, const std::string& purpose);
  void on_confirmed_rejects();
  [[nodiscard]] Cycle ms_to_cycles(double ms) const;
  [[nodiscard]] double now_ms() const;
  double jittered(double ms);

  Driver& driver_;
  Simulator& sim_;
  VmId protected_;
  std::vector<VmId> co_vms_;
  MonitorSchedule sched_;
  Rng rng_;
  Trace* trace_;

  DefensePhase phase_ = DefensePhase::normal;
  std::optional<SampleWindow> reference_;
  std::uint32_t consecutive_ = 0;
  std::uint32_t identifications_ = 0;
  std::vector<VmId> mitigated_;
  DefenseStats stats_;
};

} // namespace memdos
