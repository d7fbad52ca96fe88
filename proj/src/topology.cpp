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

#include "memdos/topology.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>
#include <string>

#include "memdos/oracle.hpp"

namespace memdos
{
void TopologyConfig::validate() const
{
  auto fail = [](const char* field, const std::string& why) { throw ConfigError(field, why); };

  if (!is_pow2(line_size) || line_size < 8)
    fail("line_size", "must be a power of two >= 8");
  if (llc_slices == 0)
    fail("llc_slices", "must be positive");
  if (llc_ways == 0)
    fail("llc_ways", "must be positive");
  if (!is_pow2(llc_sets_per_slice))
    fail("llc_sets_per_slice", "must be a power of two");
  if (llc_bytes != 0 && llc_bytes != total_llc_bytes())
    fail("llc_bytes", "llc_slices x llc_ways x llc_sets_per_slice x line_size = " + std::to_string(total_llc_bytes())
                          + ", not " + std::to_string(llc_bytes));
  if (private_ways == 0 || private_cache_bytes % (std::uint64_t{line_size} * private_ways) != 0
      || !is_pow2(private_sets()))
    fail("private_cache_bytes", "must divide into a power-of-two number of sets of private_ways lines");
  if (packages == 0)
    fail("packages", "must be positive");

  if (!is_pow2(banks))
    fail("banks", "must be a power of two");
  if (!is_pow2(channels))
    fail("channels", "must be a power of two");
  if (channels > banks)
    fail("channels", "cannot exceed banks");
  if (!randomize_dram_bits) {
    std::set<unsigned> bank_set(bank_bit_positions.begin(), bank_bit_positions.end());
    if (bank_set.size() != bank_bit_positions.size())
      fail("bank_bit_positions", "duplicate bit index");
    if ((std::uint64_t{1} << bank_bit_positions.size()) != banks)
      fail("bank_bit_positions", "2^|bank_bit_positions| must equal banks");
    if ((std::uint64_t{1} << channel_bit_positions.size()) != channels)
      fail("channel_bit_positions", "2^|channel_bit_positions| must equal channels");
    for (unsigned b : channel_bit_positions)
      if (!bank_set.contains(b))
        fail("channel_bit_positions", "must be a subset of bank_bit_positions (bit " + std::to_string(b) + ")");
    for (unsigned b : bank_bit_positions)
      if (b < row_offset_bits || b >= phys_addr_bits)
        fail("bank_bit_positions", "bit " + std::to_string(b) + " outside [row_offset_bits, phys_addr_bits)");
  } else {
    unsigned bank_bits = log2_exact(banks);
    if (hugepage_bits < row_offset_bits + bank_bits)
      fail("randomize_dram_bits", "not enough bits between row_offset_bits and hugepage_bits");
  }
  if (row_offset_bits < log2_exact(line_size))
    fail("row_offset_bits", "a DRAM row must hold at least one line");
  if (phys_addr_bits > 48 || phys_addr_bits < hugepage_bits + 1)
    fail("phys_addr_bits", "must be in (hugepage_bits, 48]");

  const LatencyTable& l = latency;
  if (!(l.private_hit < l.llc_hit && l.llc_hit < l.dram_buffer_hit && l.dram_buffer_hit < l.dram_buffer_miss))
    fail("latency", "must satisfy private_hit < llc_hit < dram_buffer_hit < dram_buffer_miss");
  if (l.channel_service == 0 || l.channel_service >= l.dram_buffer_hit)
    fail("latency.channel_service", "must be in (0, dram_buffer_hit)");
  if (l.lock_stall == 0)
    fail("latency.lock_stall", "must be positive");
  if (cycles_per_ms == 0)
    fail("cycles_per_ms", "must be positive");
  if (duty_window_cycles == 0)
    fail("duty_window_cycles", "must be positive");
}

unsigned PublicGeometry::line_bits() const { return log2_exact(line_size); }
unsigned PublicGeometry::set_bits() const { return log2_exact(llc_sets_per_slice); }

MemoryTopology::MemoryTopology(TopologyConfig config, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed), slice_key_(mix64(seed ^ 0x51ce51ce51ce51ceULL)),
      line_bits_(log2_exact(config_.line_size)), set_bits_(log2_exact(config_.llc_sets_per_slice))
{
  config_.validate();

  if (config_.randomize_dram_bits) {
    std::mt19937_64 rng(mix64(seed ^ 0xd2a3d2a3ULL));
    std::vector<unsigned> candidates;
    for (unsigned b = config_.row_offset_bits; b < config_.hugepage_bits; ++b)
      candidates.push_back(b);
    // Partial Fisher-Yates with raw engine output keeps this stdlib-independent.
    const unsigned nbank = log2_exact(config_.banks);
    for (unsigned i = 0; i < nbank; ++i) {
      auto j = i + static_cast<unsigned>(rng() % (candidates.size() - i));
      std::swap(candidates[i], candidates[j]);
    }
    bank_bits_.assign(candidates.begin(), candidates.begin() + nbank);
    const unsigned nchan = log2_exact(config_.channels);
    channel_bits_.assign(bank_bits_.begin(), bank_bits_.begin() + nchan);
    config_.bank_bit_positions = bank_bits_;
    config_.channel_bit_positions = channel_bits_;
    config_.randomize_dram_bits = false;
  } else {
    bank_bits_ = config_.bank_bit_positions;
    channel_bits_ = config_.channel_bit_positions;
  }
  std::sort(bank_bits_.begin(), bank_bits_.end());
  std::sort(channel_bits_.begin(), channel_bits_.end());
  std::sort(config_.bank_bit_positions.begin(), config_.bank_bit_positions.end());
  std::sort(config_.channel_bit_positions.begin(), config_.channel_bit_positions.end());

  Addr bank_mask = 0;
  for (unsigned b : bank_bits_)
    bank_mask |= Addr{1} << b;
  row_mask_ = ~((Addr{1} << config_.row_offset_bits) - 1) & ~bank_mask;
}

std::uint32_t MemoryTopology::slice_index(Addr a) const
{
  // Keyed fold of the line-address bits above the set index.
  const Addr tag = a >> (line_bits_ + set_bits_);
  return static_cast<std::uint32_t>(mix64(tag ^ slice_key_) % config_.llc_slices);
}

std::uint64_t MemoryTopology::row_index(Addr a) const { return a & row_mask_; }

PublicGeometry MemoryTopology::public_geometry() const
{
  return PublicGeometry{config_.line_size,          config_.llc_slices,   config_.llc_ways,
                        config_.llc_sets_per_slice, config_.private_cache_bytes, config_.private_ways,
                        config_.channels,           config_.banks,        config_.row_offset_bits,
                        config_.hugepage_bits,      config_.cycles_per_ms};
}

MemoryTopology build_topology(const TopologyConfig& config, std::uint64_t seed) { return MemoryTopology(config, seed); }

PlacementInfo resolve(const MemoryTopology& topology, Addr address)
{
  if (address >= topology.config().phys_limit())
    throw std::out_of_range("address beyond simulated physical range");
  return PlacementInfo{topology.set_index(address), topology.slice_index(address), topology.bank_index(address),
                       topology.channel_index(address)};
}

} // namespace memdos
