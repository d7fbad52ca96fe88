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

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "memdos/oracle.hpp"

using namespace memdos;
using memdos::test::bind;
using memdos::test::context_for;
using memdos::test::small_topology;

namespace
{
constexpr Addr kGiB = Addr{1} << 30;

MemOp read(Addr a) { return MemOp{a, OpKind::read, Cacheability::cached, Atomicity::none}; }

double stream_throughput(std::uint64_t seed, DutyRatio ratio, Cycle cycles)
{
  Simulator sim(build_topology(small_topology(), seed));
  const VmId vm = sim.add_vm(VmConfig{1, 0, 0});
  WorkloadSpec spec = stream_workload(64 * 1024, Locality::high);
  spec.think_cycles = 20;
  bind(sim, vm, spec, context_for(sim, kGiB, kGiB, seed));
  sim.run_for(1000000);
  sim.set_duty_cycle(vm, ratio);
  sim.run_until(sim.next_frame_boundary(sim.now()));
  const auto before = sim.read_counters(vm).completed_ops;
  sim.run_for(cycles);
  return static_cast<double>(sim.read_counters(vm).completed_ops - before) / static_cast<double>(cycles);
}
} // namespace

TEST(Simulator, ColdThenPrivateHit)
{
  Simulator sim(build_topology(TopologyConfig{}, 1));
  const VmId vm = sim.add_vm(VmConfig{});
  const LatencyTable lat = sim.topology().config().latency;
  const Completion cold = sim.wait_for(sim.submit(vm, 0, read(kGiB)));
  EXPECT_EQ(cold.latency, lat.llc_hit + lat.dram_buffer_miss);
  EXPECT_TRUE(cold.llc_miss);
  const Completion warm = sim.wait_for(sim.submit(vm, 0, read(kGiB)));
  EXPECT_EQ(warm.latency, lat.private_hit);
  EXPECT_FALSE(warm.llc_access);
}

TEST(Simulator, UncachedAccessReachesDram)
{
  Simulator sim(build_topology(TopologyConfig{}, 1));
  const VmId vm = sim.add_vm(VmConfig{});
  const LatencyTable lat = sim.topology().config().latency;
  MemOp op = read(kGiB);
  op.cacheability = Cacheability::uncached;
  EXPECT_EQ(sim.wait_for(sim.submit(vm, 0, op)).latency, lat.dram_buffer_miss);
  EXPECT_EQ(sim.wait_for(sim.submit(vm, 0, op)).latency, lat.dram_buffer_hit);
  EXPECT_FALSE(sim.private_resident(vm, 0, kGiB));
}

TEST(Simulator, UnknownVmOrVcpu)
{
  Simulator sim(build_topology(TopologyConfig{}, 1));
  const VmId vm = sim.add_vm(VmConfig{2, 0, 0});
  EXPECT_THROW(sim.submit(vm + 1, 0, read(0)), RuntimeError);
  EXPECT_THROW(sim.submit(vm, 2, read(0)), RuntimeError);
  EXPECT_THROW(static_cast<void>(sim.read_counters(vm + 1)), RuntimeError);
  EXPECT_THROW(sim.advance(0), RuntimeError);
  EXPECT_THROW(DutyRatio{0}, std::invalid_argument);
  EXPECT_THROW(DutyRatio{17}, std::invalid_argument);
}

TEST(Simulator, BusLockStallsSharedAccesses)
{
  Simulator sim(build_topology(TopologyConfig{}, 1));
  const VmId locker = sim.add_vm(VmConfig{});
  const VmId victim = sim.add_vm(VmConfig{});
  const LatencyTable lat = sim.topology().config().latency;
  MemOp atomic = read(kGiB + 63);
  atomic.kind = OpKind::write;
  atomic.atomicity = Atomicity::unaligned_atomic;
  const Ticket lock = sim.submit(locker, 0, atomic);
  sim.run_for(1);
  EXPECT_TRUE(sim.bus_locked());
  const Ticket t = sim.submit(victim, 0, read(2 * kGiB));
  const auto events = sim.advance(10000);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0].ticket, lock);
  EXPECT_GE(events[0].latency, lat.lock_stall);
  EXPECT_EQ(events[1].ticket, t);
  EXPECT_GE(events[1].latency, lat.lock_stall - 1);
  EXPECT_GE(events[1].time, events[0].time + lat.llc_hit + lat.dram_buffer_miss);
  EXPECT_FALSE(sim.bus_locked());
}

TEST(Simulator, AlignedAtomicTakesNoBusLock)
{
  Simulator sim(build_topology(TopologyConfig{}, 1));
  const VmId vm = sim.add_vm(VmConfig{});
  MemOp atomic = read(kGiB);
  atomic.atomicity = Atomicity::aligned_atomic;
  sim.wait_for(sim.submit(vm, 0, atomic));
  const Completion again = sim.wait_for(sim.submit(vm, 0, atomic));
  EXPECT_EQ(again.latency, sim.topology().config().latency.private_hit);
  EXPECT_FALSE(sim.bus_locked());
}

TEST(Simulator, CountersConserveCompletions)
{
  Simulator sim(build_topology(small_topology(), 2));
  const VmId a = sim.add_vm(VmConfig{});
  const VmId b = sim.add_vm(VmConfig{});
  bind(sim, a, stream_workload(256 * 1024, Locality::low), context_for(sim, kGiB, kGiB, 1));
  bind(sim, b, stream_workload(8 * 1024, Locality::high), context_for(sim, 2 * kGiB, kGiB, 2));
  sim.run_for(10000);
  const VmCounters a0 = sim.read_counters(a);
  const VmCounters b0 = sim.read_counters(b);
  const VmCounters again = sim.read_counters(a);
  EXPECT_EQ(a0, again);
  const auto events = sim.advance(200000);
  const VmCounters a1 = sim.read_counters(a);
  const VmCounters b1 = sim.read_counters(b);
  std::size_t for_a = 0;
  std::size_t llc_a = 0;
  for (const Completion& c : events) {
    for_a += c.vm == a ? 1 : 0;
    llc_a += c.vm == a && c.llc_access ? 1 : 0;
  }
  EXPECT_EQ(for_a, a1.completed_ops - a0.completed_ops);
  EXPECT_EQ(llc_a, a1.llc_accesses - a0.llc_accesses);
  EXPECT_EQ(events.size(), (a1.completed_ops - a0.completed_ops) + (b1.completed_ops - b0.completed_ops));
  EXPECT_LE(a1.completed_ops, a1.issued_ops);
  EXPECT_TRUE(std::is_sorted(events.begin(), events.end(),
                             [](const Completion& x, const Completion& y) { return x.time < y.time; }));
}

TEST(Simulator, PrivateResidentWorkloadStopsTouchingTheLlc)
{
  Simulator sim(build_topology(small_topology(), 3));
  const VmId vm = sim.add_vm(VmConfig{});
  bind(sim, vm, stream_workload(8 * 1024, Locality::low), context_for(sim, kGiB, kGiB, 3));
  sim.run_for(100000);
  const auto before = sim.read_counters(vm);
  sim.run_for(1000000);
  const auto after = sim.read_counters(vm);
  EXPECT_GT(after.completed_ops - before.completed_ops, 100000u);
  EXPECT_EQ(after.llc_accesses, before.llc_accesses);
}

TEST(Simulator, InclusiveLlc)
{
  Simulator sim(build_topology(small_topology(), 4));
  const VmId a = sim.add_vm(VmConfig{});
  const VmId b = sim.add_vm(VmConfig{});
  bind(sim, a, stream_workload(12 * 1024, Locality::low), context_for(sim, kGiB, kGiB, 1));
  bind(sim, b, stream_workload(1024 * 1024, Locality::low), context_for(sim, 2 * kGiB, kGiB, 2));
  sim.run_for(500000);
  int checked = 0;
  for (Addr x = kGiB; x < kGiB + 12 * 1024; x += 64)
    if (sim.private_resident(a, 0, x)) {
      ++checked;
      EXPECT_TRUE(sim.llc_resident(0, x));
    }
  EXPECT_GT(checked, 0);
}

TEST(Simulator, DutyCycleScalesThroughput)
{
  const Cycle cycles = 1600000;
  const double full = stream_throughput(5, DutyRatio::full(), cycles);
  const double sixteenth = stream_throughput(5, DutyRatio{1}, cycles);
  const double quarter = stream_throughput(5, DutyRatio{4}, cycles);
  const double half = stream_throughput(5, DutyRatio{8}, cycles);
  EXPECT_GE(sixteenth, full / 16 * 0.8);
  EXPECT_LE(sixteenth, full / 16 * 1.2);
  EXPECT_GE(half, quarter);
  EXPECT_GE(full, half);
}

TEST(Simulator, RatioChangeAppliesAtFrameBoundary)
{
  Simulator sim(build_topology(small_topology(), 6));
  const VmId vm = sim.add_vm(VmConfig{});
  WorkloadSpec spec = stream_workload(4096, Locality::high);
  spec.think_cycles = 10;
  bind(sim, vm, spec, context_for(sim, kGiB, kGiB, 1));
  sim.run_for(sim.frame_cycles() / 2);
  sim.set_duty_cycle(vm, DutyRatio{1});
  EXPECT_EQ(sim.duty_cycle(vm), DutyRatio{1});
  const auto mid = sim.read_counters(vm).completed_ops;
  sim.run_until(sim.next_frame_boundary(sim.now()));
  const auto at_boundary = sim.read_counters(vm).completed_ops;
  EXPECT_GT(at_boundary - mid, 100u);
  const Cycle idle_from = sim.now() + sim.topology().config().duty_window_cycles + 50;
  sim.run_until(idle_from);
  const auto a = sim.read_counters(vm).completed_ops;
  sim.run_until(idle_from + 5000);
  EXPECT_EQ(sim.read_counters(vm).completed_ops, a);
}

TEST(Simulator, IsolatedStreamThroughputIsStableAcrossSeeds)
{
  std::vector<double> t;
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    t.push_back(stream_throughput(seed, DutyRatio::full(), 2000000));
  const double mean = (t[0] + t[1] + t[2] + t[3] + t[4]) / 5;
  for (double x : t)
    EXPECT_NEAR(x, mean, 0.05 * mean);
}

TEST(Simulator, TwoVmsOnDisjointChannelsShareFairly)
{
  Simulator sim(build_topology(small_topology(), 7));
  std::vector<Addr> low;
  std::vector<Addr> high;
  for (Addr row = kGiB; row < 2 * kGiB && (low.size() < 512 || high.size() < 512); row += 8192)
    (resolve(sim.topology(), row).channel_index < 4 ? low : high).push_back(row);
  WorkloadSpec spec = stream_workload(2 * 1024 * 1024, Locality::low);
  const VmId a = sim.add_vm(VmConfig{});
  const VmId b = sim.add_vm(VmConfig{});
  auto ctx_a = context_for(sim, kGiB, kGiB, 1);
  ctx_a.rows = low;
  auto ctx_b = context_for(sim, kGiB, kGiB, 1);
  ctx_b.rows = high;
  bind(sim, a, spec, ctx_a);
  bind(sim, b, spec, ctx_b);
  sim.run_for(10000000);
  const double ca = static_cast<double>(sim.read_counters(a).completed_ops);
  const double cb = static_cast<double>(sim.read_counters(b).completed_ops);
  EXPECT_LT(std::abs(ca - cb) / std::max(ca, cb), 0.05);
}

TEST(Simulator, Deterministic)
{
  auto run = [] {
    Simulator sim(build_topology(small_topology(), 8));
    const VmId a = sim.add_vm(VmConfig{});
    const VmId b = sim.add_vm(VmConfig{2, 0, 0});
    bind(sim, a, stream_workload(512 * 1024, Locality::low), context_for(sim, kGiB, kGiB, 1));
    bind(sim, b, mem_flood_workload(2, FloodMode::full), context_for(sim, 2 * kGiB, kGiB, 2, 2));
    sim.run_for(300000);
    return std::pair{sim.read_counters(a), sim.read_counters(b)};
  };
  EXPECT_EQ(run(), run());
}

TEST(Simulator, VcpuLimit)
{
  Simulator sim(build_topology(TopologyConfig{}, 1));
  sim.add_vm(VmConfig{60, 0, 0});
  EXPECT_THROW(sim.add_vm(VmConfig{5, 0, 0}), ConfigError);
  EXPECT_THROW(sim.add_vm(VmConfig{1, 3, 0}), ConfigError);
}
