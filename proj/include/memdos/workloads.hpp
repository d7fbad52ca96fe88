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
#include <string>
#include <vector>

#include "memdos/simulator.hpp"
#include "memdos/topology.hpp"

namespace memdos
{
enum class WorkloadKind : std::uint8_t {
  idle,
  stream,
  phased,
  llc_cleanse,
  adaptive_llc_cleanse,
  atomic_lock,
  mem_flood,
  adaptive_mem_flood,
};

enum class Locality : std::uint8_t { high, low };
enum class AtomicKind : std::uint8_t { aligned, unaligned, uncached };
enum class FloodMode : std::uint8_t { full, targeted };

std::string to_string(WorkloadKind kind);
WorkloadKind parse_workload_kind(const std::string& name);

/// Lines that exactly fill every (set, slice) of an LLC. Group labels are the
/// attacker's own and need not match hardware slice numbers.
struct EvictionBuffer {
  std::uint32_t sets = 0;
  std::uint32_t slices = 0;
  std::uint32_t ways = 0;
  std::vector<std::vector<Addr>> groups; // index: set * slices + label

  [[nodiscard]] const std::vector<Addr>& group(std::uint32_t set, std::uint32_t label) const
  {
    return groups[std::size_t{set} * slices + label];
  }
  [[nodiscard]] std::size_t line_count() const;
  /// Every group present, `ways` lines each, no line listed twice.
  [[nodiscard]] bool complete() const;
};

/// One behavior period of a phased (request/response server) workload.
struct Phase {
  std::uint64_t working_set = 0;
  std::uint32_t ops_per_request = 1; // mean; drawn uniformly from [m/2, 3m/2]
  double think_cycles = 0;           // mean of an exponential gap between requests
  double duration_ms = 1000;
  Locality locality = Locality::low;
};

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::idle;
  std::uint64_t footprint = 0;
  Locality locality = Locality::high;
  std::uint32_t threads = 1;
  /// Active cycles a stream thread computes between consecutive ops.
  Cycle think_cycles = 0;
  AtomicKind atomic = AtomicKind::unaligned;
  FloodMode mode = FloodMode::full;
  std::vector<std::uint32_t> channels;     // targeted flood: channel group ids
  std::vector<unsigned> channel_bits;      // attacker-discovered, ascending
  std::shared_ptr<const EvictionBuffer> eviction;
  std::vector<Phase> phases;
  /// Adaptive flooding: a group is hot when its time exceeds the fastest by this fraction.
  double hot_margin = 0.10;
  std::uint32_t probe_passes = 4;
  /// Adaptive kinds repeat discovery after this many ms; 0 means discover once.
  double rediscover_ms = 0;
  /// Latency that separates an LLC hit from a miss; set from calibration.
  Cycle conflict_threshold = 0;

  /// Throws ConfigError naming the offending field.
  void validate(std::uint32_t line_size) const;
};

/// What the adaptive attacks learned during their discover stage.
struct DiscoveryLog {
  bool complete = false;
  Cycle completed_at = 0;
  std::uint32_t rounds = 0;
  /// (set, group label) pairs selected by adaptive cleansing.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> victim_groups;
  std::vector<double> channel_times;
  std::vector<std::uint32_t> hot_channels;
};

struct WorkloadContext {
  Addr base = 0;
  std::uint64_t region_bytes = 0;
  PublicGeometry geometry{};
  std::uint64_t seed = 0;
  std::uint32_t vcpus = 1;
  /// When non-empty, stream and phased lines are laid out over these DRAM rows
  /// (each 2^row_offset_bits bytes) instead of contiguously from `base`.
  std::vector<Addr> rows;
};

struct WorkloadInstance {
  std::vector<std::unique_ptr<OpStream>> streams; // one per thread
  std::shared_ptr<DiscoveryLog> log;              // adaptive kinds only
};

WorkloadSpec idle_workload();
WorkloadSpec stream_workload(std::uint64_t footprint, Locality locality);
WorkloadSpec phased_workload(std::vector<Phase> phases);
WorkloadSpec llc_cleanse_workload(std::shared_ptr<const EvictionBuffer> buffer, std::uint32_t threads);
WorkloadSpec adaptive_llc_cleanse_workload(std::shared_ptr<const EvictionBuffer> buffer, std::uint32_t threads,
                                           Cycle conflict_threshold);
WorkloadSpec atomic_lock_workload(AtomicKind kind);
WorkloadSpec mem_flood_workload(std::uint32_t threads, FloodMode mode, std::vector<std::uint32_t> channels = {},
                                std::vector<unsigned> channel_bits = {});
WorkloadSpec adaptive_mem_flood_workload(std::uint32_t threads, std::vector<unsigned> channel_bits);

/// Buffer a full memory flood sweeps: 20 times the LLC.
std::uint64_t flood_buffer_bytes(const PublicGeometry& geometry);

/// Splits [0, sets) into `parts` contiguous, disjoint, covering ranges.
std::vector<std::pair<std::uint32_t, std::uint32_t>> partition_sets(std::uint32_t sets, std::uint32_t parts);

/// Bytes of the VM region the workload touches from `base`.
std::uint64_t region_requirement(const WorkloadSpec& spec, const PublicGeometry& geometry);

/// Builds one stream per thread. Throws ConfigError if threads exceed vcpus.
WorkloadInstance instantiate(const WorkloadSpec& spec, const WorkloadContext& context);

/// Groups whose time exceeds the fastest present group by more than `margin`.
std::vector<std::uint32_t> hot_groups(const std::vector<double>& times, const std::vector<bool>& present, double margin);

/// Packs `address` bits at `bits` (ascending) into a group id.
std::uint32_t bit_group(Addr address, const std::vector<unsigned>& bits);

} // namespace memdos
