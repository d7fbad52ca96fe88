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
#include <vector>

#include "memdos/types.hpp"

namespace memdos
{
/// Cycle costs of the memory hierarchy. DRAM numbers are end-to-end for an
/// uncontended request (bank access plus the channel transfer).
struct LatencyTable {
  Cycle private_hit = 4;
  Cycle llc_hit = 40;
  Cycle dram_buffer_hit = 150;
  Cycle dram_buffer_miss = 250;
  Cycle lock_stall = 1000;
  /// Cycles the channel data bus is occupied per request. A bank stays busy for
  /// the rest of the access (buffer_hit or buffer_miss minus this).
  Cycle channel_service = 100;
  /// Extra cycles per request still queued behind the one picked by a bank.
  Cycle scheduler_delay = 2;
};

struct TopologyConfig {
  std::uint32_t line_size = 64;
  std::uint32_t llc_slices = 6;
  std::uint32_t llc_ways = 20;
  std::uint32_t llc_sets_per_slice = 2048;
  /// Optional cross-check; 0 derives it from the geometry.
  std::uint64_t llc_bytes = 0;
  std::uint64_t private_cache_bytes = 256 * 1024;
  std::uint32_t private_ways = 8;
  std::uint32_t channels = 8;
  std::uint32_t banks = 1024;
  std::vector<unsigned> bank_bit_positions = {13, 14, 15, 16, 17, 18, 19, 20, 21, 22};
  std::vector<unsigned> channel_bit_positions = {13, 14, 15};
  /// Pick bank/channel bit positions from the topology seed instead of the lists above.
  bool randomize_dram_bits = false;
  /// Bits below this index select the column inside a DRAM row.
  unsigned row_offset_bits = 13;
  unsigned phys_addr_bits = 36;
  /// Bank bits are drawn below this bit when randomized (one huge page).
  unsigned hugepage_bits = 30;
  std::uint32_t packages = 1;
  LatencyTable latency;
  std::uint64_t cycles_per_ms = 100000;
  std::uint32_t duty_window_cycles = 1000;

  [[nodiscard]] std::uint64_t total_llc_bytes() const
  {
    return std::uint64_t{llc_slices} * llc_ways * llc_sets_per_slice * line_size;
  }
  [[nodiscard]] std::uint32_t private_sets() const
  {
    return static_cast<std::uint32_t>(private_cache_bytes / (std::uint64_t{line_size} * private_ways));
  }
  [[nodiscard]] Addr phys_limit() const { return Addr{1} << phys_addr_bits; }

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;
};

/// Geometry an attacker can learn from public spec sheets. Carries no
/// address-mapping secrets (no hash key, no bank/channel bit positions).
struct PublicGeometry {
  std::uint32_t line_size;
  std::uint32_t llc_slices;
  std::uint32_t llc_ways;
  std::uint32_t llc_sets_per_slice;
  std::uint64_t private_cache_bytes;
  std::uint32_t private_ways;
  std::uint32_t channels;
  std::uint32_t banks;
  unsigned row_offset_bits;
  unsigned hugepage_bits;
  std::uint64_t cycles_per_ms;

  [[nodiscard]] std::uint64_t llc_bytes() const
  {
    return std::uint64_t{llc_slices} * llc_ways * llc_sets_per_slice * line_size;
  }
  [[nodiscard]] unsigned line_bits() const;
  [[nodiscard]] unsigned set_bits() const;
};

class Simulator;
struct PlacementInfo;

/// The simulated server's geometry plus its hidden address mappings.
/// Mapping queries are private: only the simulator and the test oracle see them.
class MemoryTopology
{
public:
  MemoryTopology(TopologyConfig config, std::uint64_t seed);

  [[nodiscard]] const TopologyConfig& config() const { return config_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] PublicGeometry public_geometry() const;
  [[nodiscard]] unsigned line_bits() const { return line_bits_; }
  [[nodiscard]] unsigned set_bits() const { return set_bits_; }

private:
  friend class Simulator;
  friend PlacementInfo resolve(const MemoryTopology&, Addr);

  [[nodiscard]] std::uint32_t set_index(Addr a) const
  {
    return static_cast<std::uint32_t>((a >> line_bits_) & (config_.llc_sets_per_slice - 1));
  }
  [[nodiscard]] std::uint32_t slice_index(Addr a) const;
  [[nodiscard]] std::uint32_t bank_index(Addr a) const { return extract(a, bank_bits_); }
  [[nodiscard]] std::uint32_t channel_index(Addr a) const { return extract(a, channel_bits_); }
  [[nodiscard]] std::uint64_t row_index(Addr a) const;

  static std::uint32_t extract(Addr a, const std::vector<unsigned>& bits)
  {
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < bits.size(); ++i)
      v |= static_cast<std::uint32_t>((a >> bits[i]) & 1U) << i;
    return v;
  }

  TopologyConfig config_;
  std::uint64_t seed_;
  std::uint64_t slice_key_;
  unsigned line_bits_;
  unsigned set_bits_;
  std::vector<unsigned> bank_bits_;    // ascending
  std::vector<unsigned> channel_bits_; // ascending
  Addr row_mask_;                      // address bits that form the row
};

/// Validates `config` and materializes the seeded hidden mappings.
MemoryTopology build_topology(const TopologyConfig& config, std::uint64_t seed);

/// splitmix64 finalizer; shared by seeded components that need a stateless mix.
constexpr std::uint64_t mix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr bool is_pow2(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

constexpr unsigned log2_exact(std::uint64_t v)
{
  unsigned r = 0;
  while (v > 1) {
    v >>= 1;
    ++r;
  }
  return r;
}

} // namespace memdos
