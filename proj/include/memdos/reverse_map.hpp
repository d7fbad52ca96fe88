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
#include <memory>
#include <vector>

#include <json.hpp>

#include "memdos/simulator.hpp"
#include "memdos/workloads.hpp"

namespace memdos
{
/// The attacker's view of the machine: timed accesses from its own vCPUs to its
/// own contiguous allocation, plus the public geometry. Nothing else.
class ProbeInterface
{
public:
  ProbeInterface(Simulator& sim, VmId attacker, Addr base, std::uint64_t bytes);
  ~ProbeInterface();

  ProbeInterface(const ProbeInterface&) = delete;
  ProbeInterface& operator=(const ProbeInterface&) = delete;

  [[nodiscard]] const PublicGeometry& geometry() const { return geometry_; }
  [[nodiscard]] Addr base() const { return base_; }
  [[nodiscard]] std::uint64_t bytes() const { return bytes_; }
  [[nodiscard]] std::uint32_t vcpus() const;
  [[nodiscard]] std::uint64_t accesses() const { return accesses_; }

  Cycle access(Addr address, bool uncached = false, VcpuId vcpu = 0);
  /// Issues the addresses back to back and returns the elapsed cycles.
  Cycle pass(const std::vector<Addr>& addresses, bool uncached = false, VcpuId vcpu = 0);
  /// Loops over `addresses` on `vcpu` until stop_background().
  void start_background(VcpuId vcpu, std::vector<Addr> addresses, bool uncached);
  void stop_background();
  void idle(Cycle cycles);

  /// Bytes of the allocation no earlier probe has touched (carved from the top down).
  Addr fresh_block(std::uint64_t bytes);

private:
  void check(Addr a) const;

  Simulator& sim_;
  VmId vm_;
  Addr base_;
  std::uint64_t bytes_;
  PublicGeometry geometry_;
  std::uint64_t accesses_ = 0;
  Addr scratch_;
  bool bg_active_ = false;
  VcpuId bg_vcpu_ = 0;
};

struct Calibration {
  double llc_hit = 0;
  double llc_miss = 0;
  double dram_hit = 0;

  /// Per-access latency separating a cache hit from a miss.
  [[nodiscard]] Cycle conflict_threshold() const { return static_cast<Cycle>((llc_hit + llc_miss) / 2); }
};

struct ProbeResult {
  std::vector<unsigned> bank_bits;
  std::vector<unsigned> channel_bits;
  std::shared_ptr<const EvictionBuffer> slice_groups;
  std::vector<std::uint32_t> hot_channels;
  Calibration calibration;
  std::uint64_t accesses = 0;
};

nlohmann::json to_json(const ProbeResult& result);

struct ProbeOptions {
  bool slices = true;
  bool dram = true;
  /// Timed passes of thread B in channel-bit discovery.
  std::uint32_t channel_passes = 100;
  std::uint32_t channel_lines = 64;
  std::uint32_t bank_pairs = 16;
  std::uint32_t hot_passes = 4;
  double hot_margin = 0.10;
};

Calibration calibrate(ProbeInterface& probe);

/// Builds an eviction buffer from timing alone. Needs at least 2x LLC bytes.
EvictionBuffer map_llc_slices(ProbeInterface& probe, const Calibration& cal);

std::vector<unsigned> discover_bank_bits(ProbeInterface& probe, const Calibration& cal, std::uint32_t pairs = 16);

/// Needs two attacker vCPUs (thread A runs in the background on the second).
std::vector<unsigned> discover_channel_bits(ProbeInterface& probe, const std::vector<unsigned>& bank_bits,
                                            std::uint32_t passes = 100, std::uint32_t lines = 64);

/// Channel groups (ids packed from `channel_bits`) that time slower than the rest.
std::vector<std::uint32_t> discover_hot_channels(ProbeInterface& probe, const std::vector<unsigned>& channel_bits,
                                                 std::uint32_t passes = 4, double margin = 0.10);

ProbeResult run_probes(ProbeInterface& probe, const ProbeOptions& options);

} // namespace memdos
