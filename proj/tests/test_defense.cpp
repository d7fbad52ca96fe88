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
#include <set>

#include "helpers.hpp"
#include "memdos/defense.hpp"

using namespace memdos;
using memdos::test::bind;
using memdos::test::context_for;
using memdos::test::small_topology;

namespace
{
constexpr Addr kGiB = Addr{1} << 30;

struct Host {
  Simulator sim{build_topology(small_topology(), 1)};
  Driver driver{sim};
  VmId victim = 0;
  std::vector<VmId> co;

  // Protected VM, then benign quiet co-tenants, then the attackers.
  Host(std::uint32_t benign, std::vector<WorkloadSpec> attackers, Cycle attack_start = 0)
  {
    victim = sim.add_vm(VmConfig{});
    bind(sim, victim, phased_workload({Phase{64 * 1024, 20, 600, 1e9, Locality::low}}),
         context_for(sim, kGiB, kGiB, 1));
    Addr base = 2 * kGiB;
    for (std::uint32_t i = 0; i < benign; ++i, base += kGiB) {
      const VmId id = sim.add_vm(VmConfig{});
      WorkloadSpec s = stream_workload(2048, Locality::low);
      s.think_cycles = 40;
      bind(sim, id, s, context_for(sim, base, kGiB, 10 + i));
      co.push_back(id);
    }
    for (const WorkloadSpec& a : attackers) {
      const VmId id = sim.add_vm(VmConfig{1, 0, attack_start});
      bind(sim, id, a, context_for(sim, base, kGiB, 99));
      co.push_back(id);
      base += kGiB;
    }
    sim.run_for(200000);
  }
};

MonitorSchedule quick()
{
  MonitorSchedule s;
  s.l_r_ms = 10000;
  return s;
}
} // namespace

TEST(Defense, ScheduleValidation)
{
  auto expect_field = [](MonitorSchedule s, const std::string& field) {
    try {
      s.validate();
      FAIL() << "expected ConfigError for " << field;
    } catch (const ConfigError& e) {
      EXPECT_EQ(e.field(), field);
    }
  };
  EXPECT_NO_THROW(MonitorSchedule{}.validate());
  MonitorSchedule s;
  s.w_r_ms = 500;
  expect_field(s, "defense.w_r_ms");
  s = {};
  s.l_m_ms = 500;
  expect_field(s, "defense.l_m_ms");
  s = {};
  s.l_r_ms = 1000;
  expect_field(s, "defense.l_r_ms");
  s = {};
  s.alpha = 1;
  expect_field(s, "defense.alpha");
  s = {};
  s.jitter_fraction = 1;
  expect_field(s, "defense.jitter_fraction");
  s = {};
  s.consecutive_k = 0;
  expect_field(s, "defense.consecutive_k");
  s = {};
  s.reference_throttle = 17;
  expect_field(s, "defense.reference_throttle");
  s = {};
  s.samples = 1;
  expect_field(s, "defense.samples");
}

TEST(Defense, DriverFiresAtExactMarks)
{
  Simulator sim(build_topology(small_topology(), 1));
  Driver d(sim);
  std::vector<Cycle> a;
  std::vector<Cycle> b;
  d.every(300, [&](Cycle t) { a.push_back(t); });
  d.every(500, [&](Cycle t) {
    b.push_back(t);
    EXPECT_EQ(sim.now(), t);
  });
  d.run_until(1500);
  EXPECT_EQ(a, (std::vector<Cycle>{300, 600, 900, 1200, 1500}));
  EXPECT_EQ(b, (std::vector<Cycle>{500, 1000, 1500}));
  EXPECT_EQ(sim.now(), 1500u);
  EXPECT_THROW(d.every(0, [](Cycle) {}), RuntimeError);
}

TEST(Defense, ConstructorChecksVms)
{
  Host h(2, {});
  EXPECT_THROW(Defense(h.driver, 9, h.co, quick(), 1), RuntimeError);
  EXPECT_THROW(Defense(h.driver, h.victim, {h.co[0], 9}, quick(), 1), RuntimeError);
  EXPECT_THROW(Defense(h.driver, h.victim, {h.victim}, quick(), 1), ConfigError);
}

TEST(Defense, ReferenceWindowRestoresRatios)
{
  Host h(3, {});
  h.sim.set_duty_cycle(h.co[1], DutyRatio{8});
  Defense d(h.driver, h.victim, h.co, quick(), 1);
  const SampleWindow r = d.collect_reference();
  EXPECT_EQ(r.kind, WindowKind::reference);
  EXPECT_EQ(r.values.size(), 100u);
  EXPECT_EQ(h.sim.duty_cycle(h.co[0]), DutyRatio::full());
  EXPECT_EQ(h.sim.duty_cycle(h.co[1]), DutyRatio{8});
  EXPECT_EQ(h.sim.duty_cycle(h.co[2]), DutyRatio::full());
  EXPECT_EQ(h.sim.duty_cycle(h.victim), DutyRatio::full());
  EXPECT_THROW(d.collect_reference({h.victim}), RuntimeError);
}

TEST(Defense, MonitoredWindowLeavesRatiosAlone)
{
  Host h(2, {});
  Defense d(h.driver, h.victim, h.co, quick(), 1);
  const Cycle before = h.sim.now();
  const SampleWindow m = d.collect_monitored();
  EXPECT_EQ(m.kind, WindowKind::monitored);
  EXPECT_EQ(m.values.size(), 100u);
  EXPECT_GE(h.sim.now() - before, 1000u * 1000u);
  for (VmId v : h.co)
    EXPECT_EQ(h.sim.duty_cycle(v), DutyRatio::full());
  EXPECT_NO_THROW(m.validate());
}

TEST(Defense, ReferenceIgnoresTheAttacker)
{
  Host attacked(2, {atomic_lock_workload(AtomicKind::unaligned)});
  Host quiet(2, {idle_workload()});
  Defense a(attacked.driver, attacked.victim, attacked.co, quick(), 1);
  Defense q(quiet.driver, quiet.victim, quiet.co, quick(), 1);
  const KsDecision d = ks_decide(a.collect_reference(), q.collect_reference(), 0.001);
  EXPECT_FALSE(d.reject) << d.statistic;
}

TEST(Defense, AtomicAttackShiftsTheMonitoredWindow)
{
  Host h(2, {atomic_lock_workload(AtomicKind::unaligned)});
  Defense d(h.driver, h.victim, h.co, quick(), 1);
  const SampleWindow r = d.collect_reference();
  const SampleWindow m = d.collect_monitored();
  const KsDecision k = d.test(m, r, "monitor");
  EXPECT_TRUE(k.reject);
  EXPECT_GT(k.statistic, 0.276);
  ASSERT_EQ(d.stats().ks.size(), 1u);
  EXPECT_EQ(d.stats().ks[0].purpose, "monitor");
}

TEST(Defense, SingleCoTenantNeedsNoSplit)
{
  Host h(0, {atomic_lock_workload(AtomicKind::unaligned)});
  Defense d(h.driver, h.victim, h.co, quick(), 1);
  const auto found = d.identify_attackers();
  EXPECT_EQ(found, h.co);
  EXPECT_EQ(d.stats().split_rounds, 0u);
}

TEST(Defense, EightCoTenantsTakeThreeSplits)
{
  Host h(7, {atomic_lock_workload(AtomicKind::unaligned)});
  Defense d(h.driver, h.victim, h.co, quick(), 1);
  const auto found = d.identify_attackers();
  EXPECT_EQ(found, std::vector<VmId>{h.co.back()});
  EXPECT_EQ(d.stats().split_rounds, 3u);
  for (std::size_t i = 0; i + 1 < h.co.size(); ++i)
    EXPECT_EQ(h.sim.duty_cycle(h.co[i]), DutyRatio::full());
}

TEST(Defense, MitigationThrottlesAndRestoresAcceptance)
{
  Host h(3, {atomic_lock_workload(AtomicKind::unaligned)});
  Defense d(h.driver, h.victim, h.co, quick(), 1);
  d.mitigate({});
  EXPECT_EQ(d.phase(), DefensePhase::normal);
  for (VmId v : h.co)
    EXPECT_EQ(h.sim.duty_cycle(v), DutyRatio::full());
  EXPECT_THROW(d.mitigate({42}), RuntimeError);

  d.mitigate({h.co.back()});
  EXPECT_EQ(d.phase(), DefensePhase::mitigated);
  EXPECT_EQ(h.sim.duty_cycle(h.co.back()), DutyRatio{1});
  EXPECT_EQ(d.stats().identified, std::vector<VmId>{h.co.back()});
  h.driver.run_until(h.sim.now() + 1'000'000);
  const SampleWindow r = d.collect_reference();
  const SampleWindow m = d.collect_monitored();
  EXPECT_FALSE(d.test(m, r, "monitor").reject);
  EXPECT_EQ(h.sim.duty_cycle(h.co.back()), DutyRatio{1});
}

TEST(Defense, QuietHostStaysNormal)
{
  Host h(4, {});
  Defense d(h.driver, h.victim, h.co, quick(), 3);
  d.run_monitor(h.sim.now() + 60'000'000);
  EXPECT_EQ(d.phase(), DefensePhase::normal);
  EXPECT_EQ(d.stats().suspected_events, 0u);
  EXPECT_GE(d.stats().monitored_windows, 25u);
}

TEST(Defense, DetectsAndMitigatesLateAttacker)
{
  const Cycle start = 20'000'000;
  Host h(3, {atomic_lock_workload(AtomicKind::unaligned)}, start);
  MonitorSchedule s = quick();
  Defense d(h.driver, h.victim, h.co, s, 4);
  d.run_monitor(90'000'000);
  ASSERT_TRUE(d.stats().first_suspected_ms);
  const double bound = 20000 + s.consecutive_k * s.l_m_ms + s.l_r_ms;
  EXPECT_LE(*d.stats().first_suspected_ms, bound);
  EXPECT_GE(*d.stats().first_suspected_ms, 20000.0);
  EXPECT_EQ(d.stats().identified, std::vector<VmId>{h.co.back()});
  EXPECT_EQ(d.phase(), DefensePhase::mitigated);
}

TEST(Defense, JitteredScheduleKeepsOrdering)
{
  Host h(2, {});
  MonitorSchedule s = quick();
  s.jitter_fraction = 0.2;
  Defense d(h.driver, h.victim, h.co, s, 5);
  d.run_monitor(h.sim.now() + 80'000'000);
  const auto& ks = d.stats().ks;
  ASSERT_GE(ks.size(), 10u);
  std::set<long long> gaps;
  for (std::size_t i = 1; i < ks.size(); ++i) {
    const double gap = ks[i].time_ms - ks[i - 1].time_ms;
    EXPECT_GE(gap, s.w_m_ms);
    EXPECT_LE(gap, s.l_m_ms * (1 + s.jitter_fraction) + s.w_r_ms + 2);
    gaps.insert(std::llround(gap));
  }
  EXPECT_GT(gaps.size(), 3u);
  EXPECT_GE(d.stats().reference_windows, 4u);
}
