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

#include "memdos/reverse_map.hpp"

#include <algorithm>
#include <cstdio>
#include <optional>
#include <string>

namespace memdos
{
namespace
{
class LoopStream final : public OpStream
{
public:
  LoopStream(std::vector<Addr> addrs, bool uncached) : addrs_(std::move(addrs)), uncached_(uncached) {}

  Step next(Cycle) override
  {
    const Addr a = addrs_[idx_];
    idx_ = (idx_ + 1) % addrs_.size();
    return Step{MemOp{a, OpKind::read, uncached_ ? Cacheability::uncached : Cacheability::cached, Atomicity::none}, 0};
  }

private:
  std::vector<Addr> addrs_;
  bool uncached_;
  std::size_t idx_ = 0;
};

std::string hex(Addr a)
{
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(a));
  return buf;
}

} // namespace

ProbeInterface::ProbeInterface(Simulator& sim, VmId attacker, Addr base, std::uint64_t bytes)
    : sim_(sim), vm_(attacker), base_(base), bytes_(bytes), geometry_(sim.topology().public_geometry()),
      scratch_(base + bytes)
{
  if (attacker >= sim.vm_count())
    throw RuntimeError("probe: unknown attacker vm");
  if (bytes == 0 || base + bytes > sim.topology().config().phys_limit())
    throw RuntimeError("probe: allocation outside the simulated physical range");
}

ProbeInterface::~ProbeInterface()
{
  if (bg_active_)
    sim_.unbind_workload(vm_, bg_vcpu_);
}

std::uint32_t ProbeInterface::vcpus() const { return sim_.vcpu_count(vm_); }

void ProbeInterface::check(Addr a) const
{
  if (a < base_ || a >= base_ + bytes_)
    throw RuntimeError("probe: address " + hex(a) + " outside the attacker allocation");
}

Cycle ProbeInterface::access(Addr address, bool uncached, VcpuId vcpu)
{
  check(address);
  const MemOp op{address, OpKind::read, uncached ? Cacheability::uncached : Cacheability::cached, Atomicity::none};
  ++accesses_;
  return sim_.wait_for(sim_.submit(vm_, vcpu, op)).latency;
}

Cycle ProbeInterface::pass(const std::vector<Addr>& addresses, bool uncached, VcpuId vcpu)
{
  if (addresses.empty())
    return 0;
  const Cycle start = sim_.now();
  Ticket last = 0;
  for (Addr a : addresses) {
    check(a);
    last = sim_.submit(vm_, vcpu,
                       MemOp{a, OpKind::read, uncached ? Cacheability::uncached : Cacheability::cached, Atomicity::none});
  }
  accesses_ += addresses.size();
  return sim_.wait_for(last).time - start;
}

void ProbeInterface::start_background(VcpuId vcpu, std::vector<Addr> addresses, bool uncached)
{
  if (addresses.empty())
    throw RuntimeError("probe: empty background loop");
  for (Addr a : addresses)
    check(a);
  stop_background();
  sim_.bind_workload(vm_, vcpu, std::make_unique<LoopStream>(std::move(addresses), uncached));
  bg_active_ = true;
  bg_vcpu_ = vcpu;
}

void ProbeInterface::stop_background()
{
  if (!bg_active_)
    return;
  sim_.unbind_workload(vm_, bg_vcpu_);
  bg_active_ = false;
}

void ProbeInterface::idle(Cycle cycles)
{
  if (cycles > 0)
    sim_.run_for(cycles);
}

Addr ProbeInterface::fresh_block(std::uint64_t bytes)
{
  bytes = (bytes + geometry_.line_size - 1) / geometry_.line_size * geometry_.line_size;
  if (scratch_ < base_ + bytes)
    throw RuntimeError("probe: allocation exhausted");
  scratch_ -= bytes;
  return scratch_;
}

Calibration calibrate(ProbeInterface& probe)
{
  const PublicGeometry& g = probe.geometry();
  Calibration cal;

  const std::uint32_t cold = 32;
  const Addr cold_base = probe.fresh_block(std::uint64_t{cold} * g.line_size);
  Cycle total = 0;
  for (std::uint32_t i = 0; i < cold; ++i)
    total += probe.access(cold_base + Addr{i} * g.line_size);
  cal.llc_miss = static_cast<double>(total) / cold;

  // More lines than private ways in one private set: the second pass hits only in the LLC.
  const std::uint64_t private_stride = g.private_cache_bytes / g.private_ways;
  const std::uint32_t n = 2 * g.private_ways;
  const Addr hit_base = probe.fresh_block(private_stride * n);
  std::vector<Addr> lines;
  for (std::uint32_t i = 0; i < n; ++i)
    lines.push_back(hit_base + i * private_stride);
  probe.pass(lines);
  cal.llc_hit = static_cast<double>(probe.pass(lines)) / n;

  const Addr row_line = probe.fresh_block(g.line_size);
  probe.access(row_line, true);
  cal.dram_hit = static_cast<double>(probe.pass(std::vector<Addr>(16, row_line), true)) / 16;

  if (!(cal.llc_hit < cal.llc_miss) || !(cal.llc_hit < cal.dram_hit))
    throw RuntimeError("calibration inconclusive: hit and miss latencies do not separate");
  return cal;
}

EvictionBuffer map_llc_slices(ProbeInterface& probe, const Calibration& cal)
{
  const PublicGeometry& g = probe.geometry();
  const std::uint32_t sets = g.llc_sets_per_slice;
  const std::uint32_t slices = g.llc_slices;
  const std::uint32_t ways = g.llc_ways;
  const std::uint64_t stride = std::uint64_t{sets} * g.line_size;
  if (probe.bytes() < 2 * g.llc_bytes())
    throw RuntimeError("slice mapping needs an allocation of at least twice the LLC size");
  const auto candidates = static_cast<std::uint32_t>(std::min<std::uint64_t>(probe.bytes(), 4 * g.llc_bytes()) / stride);
  const std::uint64_t budget = std::uint64_t{sets} * ways * slices * 16;
  const std::uint64_t start = probe.accesses();
  const double slack = (cal.llc_miss - cal.llc_hit) / 2;

  auto conflict = [&](const std::vector<Addr>& group) {
    if (probe.accesses() - start > budget)
      throw RuntimeError("slice mapping exceeded its probe budget (noisy environment?)");
    probe.pass(group);
    const auto t = static_cast<double>(probe.pass(group));
    return t > static_cast<double>(group.size()) * cal.llc_hit + slack;
  };
  auto candidate = [&](std::uint32_t set, std::uint32_t k) { return probe.base() + k * stride + Addr{set} * g.line_size; };

  struct SetMap {
    std::vector<std::vector<Addr>> groups;
    std::vector<Addr> witnesses; // one extra same-slice line per group
  };

  auto full_map = [&](std::uint32_t set) -> std::optional<SetMap> {
    std::vector<Addr> grp;
    std::vector<Addr> pool;
    for (std::uint32_t k = 0; k < candidates; ++k) {
      const Addr c = candidate(set, k);
      if (grp.size() == std::size_t{slices} * ways) {
        pool.push_back(c);
        continue;
      }
      grp.push_back(c);
      if (conflict(grp)) {
        grp.pop_back();
        pool.push_back(c);
      }
    }
    if (grp.size() != std::size_t{slices} * ways)
      return std::nullopt;

    SetMap m;
    auto take_witness = [&](const std::vector<Addr>& rest) -> std::optional<Addr> {
      for (auto it = pool.begin(); it != pool.end(); ++it) {
        std::vector<Addr> t = rest;
        t.push_back(*it);
        if (conflict(t)) {
          const Addr w = *it;
          pool.erase(it);
          return w;
        }
      }
      return std::nullopt;
    };
    while (grp.size() > ways) {
      const auto an = take_witness(grp);
      if (!an)
        return std::nullopt;
      std::vector<Addr> same;
      for (Addr am : grp) {
        if (same.size() == ways)
          break;
        std::vector<Addr> t;
        t.reserve(grp.size());
        for (Addr x : grp)
          if (x != am)
            t.push_back(x);
        t.push_back(*an);
        if (!conflict(t))
          same.push_back(am);
      }
      if (same.size() != ways)
        return std::nullopt;
      std::erase_if(grp, [&](Addr x) { return std::find(same.begin(), same.end(), x) != same.end(); });
      m.groups.push_back(std::move(same));
      m.witnesses.push_back(*an);
    }
    const auto last = take_witness(grp);
    if (!last)
      return std::nullopt;
    m.groups.push_back(std::move(grp));
    m.witnesses.push_back(*last);
    return m;
  };

  auto verify = [&](const SetMap& m) {
    std::vector<Addr> all;
    for (const auto& grp : m.groups)
      all.insert(all.end(), grp.begin(), grp.end());
    if (conflict(all))
      return false;
    for (std::size_t i = 0; i < m.groups.size(); ++i) {
      std::vector<Addr> t = m.groups[i];
      t.push_back(m.witnesses[i]);
      if (!conflict(t))
        return false;
    }
    return true;
  };

  EvictionBuffer buf;
  buf.sets = sets;
  buf.slices = slices;
  buf.ways = ways;
  buf.groups.resize(std::size_t{sets} * slices);

  const auto first = full_map(0);
  if (!first)
    throw RuntimeError("slice mapping did not converge for set 0");
  for (std::uint32_t s = 0; s < sets; ++s) {
    SetMap m = *first;
    const Addr shift = Addr{s} * g.line_size;
    for (auto& grp : m.groups)
      for (Addr& a : grp)
        a += shift;
    for (Addr& w : m.witnesses)
      w += shift;
    if (s != 0 && !verify(m)) {
      auto redo = full_map(s);
      if (!redo)
        throw RuntimeError("slice mapping did not converge for set " + std::to_string(s));
      m = std::move(*redo);
    }
    for (std::uint32_t l = 0; l < slices; ++l)
      buf.groups[std::size_t{s} * slices + l] = std::move(m.groups[l]);
  }
  return buf;
}

std::vector<unsigned> discover_bank_bits(ProbeInterface& probe, const Calibration& cal, std::uint32_t pairs)
{
  const PublicGeometry& g = probe.geometry();
  const Addr page = Addr{1} << g.hugepage_bits;
  if ((probe.base() & (page - 1)) != 0 || probe.bytes() < page)
    throw RuntimeError("bank-bit discovery needs a whole aligned huge page");

  std::vector<double> mean(g.hugepage_bits, 0.0);
  double worst = 0;
  for (unsigned b = g.row_offset_bits; b < g.hugepage_bits; ++b) {
    const Addr a = probe.base();
    const Addr other = a + (Addr{1} << b);
    std::vector<Addr> seq;
    for (std::uint32_t i = 0; i < pairs; ++i) {
      seq.push_back(a);
      seq.push_back(other);
    }
    mean[b] = static_cast<double>(probe.pass(seq, true)) / static_cast<double>(seq.size());
    worst = std::max(worst, mean[b]);
  }
  if (worst - cal.dram_hit < 0.2 * cal.dram_hit)
    throw RuntimeError("bank-bit discovery inconclusive: same-bank and cross-bank latencies do not separate");
  const double threshold = (cal.dram_hit + worst) / 2;
  std::vector<unsigned> bits;
  for (unsigned b = g.row_offset_bits; b < g.hugepage_bits; ++b)
    if (mean[b] < threshold)
      bits.push_back(b);
  return bits;
}

std::vector<unsigned> discover_channel_bits(ProbeInterface& probe, const std::vector<unsigned>& bank_bits,
                                            std::uint32_t passes, std::uint32_t lines)
{
  if (bank_bits.empty())
    throw RuntimeError("channel-bit discovery needs a non-empty set of bank bits");
  if (probe.vcpus() < 2)
    throw RuntimeError("channel-bit discovery needs two attacker vCPUs");
  const PublicGeometry& g = probe.geometry();
  if ((std::uint64_t{lines} * g.line_size) > (std::uint64_t{1} << bank_bits.front()))
    throw RuntimeError("channel-bit discovery buffer would cross a bank bit");
  for (unsigned b : bank_bits)
    if ((probe.base() >> b) & 1U || (Addr{1} << b) >= probe.bytes())
      throw RuntimeError("channel-bit discovery: bank bit " + std::to_string(b) + " not usable in this allocation");

  std::vector<Addr> buffer_a;
  for (std::uint32_t k = 0; k < lines; ++k)
    buffer_a.push_back(probe.base() + Addr{k} * g.line_size);
  auto repeated = [&](const std::vector<Addr>& v) {
    std::vector<Addr> out;
    out.reserve(v.size() * passes);
    for (std::uint32_t p = 0; p < passes; ++p)
      out.insert(out.end(), v.begin(), v.end());
    return out;
  };
  auto buffer_b = [&](unsigned bit) {
    std::vector<Addr> b = buffer_a;
    for (Addr& a : b)
      a += Addr{1} << bit;
    return b;
  };

  const auto solo = static_cast<double>(probe.pass(repeated(buffer_b(bank_bits.front())), true));
  std::vector<double> times;
  for (unsigned bit : bank_bits) {
    probe.start_background(1, buffer_a, true);
    times.push_back(static_cast<double>(probe.pass(repeated(buffer_b(bit)), true)));
    probe.stop_background();
  }
  const double worst = *std::max_element(times.begin(), times.end());
  const double threshold = solo + std::max(0.02 * solo, (worst - solo) / 2);
  std::vector<unsigned> bits;
  for (std::size_t i = 0; i < bank_bits.size(); ++i)
    if (times[i] < threshold)
      bits.push_back(bank_bits[i]);
  return bits;
}

std::vector<std::uint32_t> discover_hot_channels(ProbeInterface& probe, const std::vector<unsigned>& channel_bits,
                                                 std::uint32_t passes, double margin)
{
  const PublicGeometry& g = probe.geometry();
  const std::size_t groups = std::size_t{1} << channel_bits.size();
  const std::uint32_t lines = 64;
  std::vector<double> times(groups, 0.0);
  std::vector<bool> present(groups, true);
  std::vector<std::vector<Addr>> probes(groups);
  for (std::size_t grp = 0; grp < groups; ++grp) {
    Addr a = probe.base();
    for (std::size_t i = 0; i < channel_bits.size(); ++i)
      if ((grp >> i) & 1U)
        a |= Addr{1} << channel_bits[i];
    if (a + Addr{lines} * g.line_size > probe.base() + probe.bytes()) {
      present[grp] = false;
      continue;
    }
    for (std::uint32_t k = 0; k < lines; ++k)
      probes[grp].push_back(a + Addr{k} * g.line_size);
  }
  for (std::uint32_t p = 0; p < passes; ++p)
    for (std::size_t grp = 0; grp < groups; ++grp)
      if (present[grp])
        times[grp] += static_cast<double>(probe.pass(probes[grp], true));
  return hot_groups(times, present, margin);
}

ProbeResult run_probes(ProbeInterface& probe, const ProbeOptions& options)
{
  ProbeResult r;
  const std::uint64_t start = probe.accesses();
  r.calibration = calibrate(probe);
  if (options.dram) {
    r.bank_bits = discover_bank_bits(probe, r.calibration, options.bank_pairs);
    r.channel_bits = discover_channel_bits(probe, r.bank_bits, options.channel_passes, options.channel_lines);
  }
  if (options.slices)
    r.slice_groups = std::make_shared<const EvictionBuffer>(map_llc_slices(probe, r.calibration));
  r.accesses = probe.accesses() - start;
  return r;
}

nlohmann::json to_json(const ProbeResult& result)
{
  nlohmann::json j;
  j["bank_bits"] = result.bank_bits;
  j["channel_bits"] = result.channel_bits;
  j["hot_channels"] = result.hot_channels;
  j["calibration"] = {{"llc_hit", result.calibration.llc_hit},
                      {"llc_miss", result.calibration.llc_miss},
                      {"dram_hit", result.calibration.dram_hit}};
  j["accesses"] = result.accesses;
  if (const auto& b = result.slice_groups) {
    nlohmann::json set0 = nlohmann::json::array();
    for (std::uint32_t l = 0; l < b->slices && b->sets > 0; ++l) {
      nlohmann::json grp = nlohmann::json::array();
      for (Addr a : b->group(0, l))
        grp.push_back(hex(a));
      set0.push_back(grp);
    }
    j["slice_groups"] = {{"sets", b->sets}, {"slices", b->slices}, {"ways", b->ways},
                         {"lines", b->line_count()}, {"set0", set0}};
  } else {
    j["slice_groups"] = nullptr;
  }
  return j;
}

} // namespace memdos
