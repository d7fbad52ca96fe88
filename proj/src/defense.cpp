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

#include "memdos/defense.hpp"

#include <algorithm>
#include <cmath>

namespace memdos
{
namespace
{
bool close(double a, double b) { return std::fabs(a - b) <= 1e-9 * std::max(1.0, std::fabs(b)); }
} // namespace

void MonitorSchedule::validate() const
{
  if (samples < 2)
    throw ConfigError("defense.samples", "need at least two samples per window");
  if (!(sub_window_ms > 0))
    throw ConfigError("defense.sub_window_ms", "must be positive");
  if (!close(w_r_ms, samples * sub_window_ms))
    throw ConfigError("defense.w_r_ms", "must equal samples x sub_window_ms");
  if (!close(w_m_ms, samples * sub_window_ms))
    throw ConfigError("defense.w_m_ms", "must equal samples x sub_window_ms");
  if (l_m_ms < w_m_ms)
    throw ConfigError("defense.l_m_ms", "monitored interval shorter than the monitored window");
  if (l_r_ms < l_m_ms)
    throw ConfigError("defense.l_r_ms", "reference interval shorter than the monitored interval");
  if (!(jitter_fraction >= 0 && jitter_fraction < 1))
    throw ConfigError("defense.jitter_fraction", "must lie in [0, 1)");
  if (!(alpha > 0 && alpha < 1))
    throw ConfigError("defense.alpha", "must lie in (0, 1)");
  if (consecutive_k < 1)
    throw ConfigError("defense.consecutive_k", "must be at least 1");
  if (reference_throttle < 1 || reference_throttle > DutyRatio::kDenominator)
    throw ConfigError("defense.reference_throttle", "must be k/16 with k in [1,16]");
  if (mitigation_throttle < 1 || mitigation_throttle > DutyRatio::kDenominator)
    throw ConfigError("defense.mitigation_throttle", "must be k/16 with k in [1,16]");
}

const char* to_string(DefensePhase phase)
{
  switch (phase) {
  case DefensePhase::normal:
    return "normal";
  case DefensePhase::suspected:
    return "suspected";
  case DefensePhase::identifying:
    return "identifying";
  case DefensePhase::mitigated:
    return "mitigated";
  }
  return "unknown";
}

void Driver::every(Cycle period, std::function<void(Cycle)> fn)
{
  if (period == 0)
    throw RuntimeError("observer period must be positive");
  const Cycle next = (sim_.now() / period + 1) * period;
  ticks_.push_back(Tick{period, next, std::move(fn)});
}

void Driver::run_until(Cycle t)
{
  while (true) {
    Tick* due = nullptr;
    for (Tick& k : ticks_)
      if (k.next <= t && (!due || k.next < due->next))
        due = &k;
    if (!due)
      break;
    sim_.run_until(due->next);
    due->fn(due->next);
    due->next += due->period;
  }
  sim_.run_until(t);
}

Defense::Defense(Driver& driver, VmId protected_vm, std::vector<VmId> co_vms, MonitorSchedule schedule,
                 std::uint64_t seed, Trace* trace)
    : driver_(driver), sim_(driver.sim()), protected_(protected_vm), co_vms_(std::move(co_vms)),
      sched_(std::move(schedule)), rng_(mix64(seed ^ 0xdefe11ceULL)), trace_(trace)
{
  sched_.validate();
  if (protected_ >= sim_.vm_count())
    throw RuntimeError("defense: protected vm " + std::to_string(protected_) + " does not exist");
  for (VmId v : co_vms_) {
    if (v >= sim_.vm_count())
      throw RuntimeError("defense: co-tenant vm " + std::to_string(v) + " does not exist");
    if (v == protected_)
      throw ConfigError("defense.co_vms", "the protected VM cannot be its own co-tenant");
  }
}

Cycle Defense::ms_to_cycles(double ms) const
{
  return static_cast<Cycle>(std::llround(ms * static_cast<double>(sim_.topology().config().cycles_per_ms)));
}

double Defense::now_ms() const
{
  return static_cast<double>(sim_.now()) / static_cast<double>(sim_.topology().config().cycles_per_ms);
}

double Defense::jittered(double ms)
{
  if (sched_.jitter_fraction == 0)
    return ms;
  return ms * (1.0 - sched_.jitter_fraction + 2.0 * sched_.jitter_fraction * rng_.unit());
}

void Defense::set_phase(DefensePhase next, const std::string& reason)
{
  if (trace_)
    trace_->add(now_ms(), "phase_change", protected_,
                {{"from", to_string(phase_)}, {"to", to_string(next)}, {"reason", reason}});
  stats_.phase_log.emplace_back(now_ms(), to_string(next));
  phase_ = next;
}

void Defense::throttle(VmId vm, DutyRatio ratio)
{
  if (sim_.duty_cycle(vm) == ratio)
    return;
  sim_.set_duty_cycle(vm, ratio);
  if (trace_) {
    const double cpm = static_cast<double>(sim_.topology().config().cycles_per_ms);
    trace_->add(now_ms(), "duty_change", vm,
                {{"ratio", ratio.sixteenths()},
                 {"effective_ms", static_cast<double>(sim_.next_frame_boundary(sim_.now())) / cpm}});
  }
}

SampleWindow Defense::collect(WindowKind kind, double window_ms)
{
  const Cycle sub = ms_to_cycles(window_ms / sched_.samples);
  const Cycle start = sim_.next_frame_boundary(sim_.now());
  driver_.run_until(start);
  auto metric = [&] {
    const VmCounters c = sim_.read_counters(protected_);
    return sched_.metric == Metric::llc_accesses ? c.llc_accesses : c.bytes_transferred;
  };
  SampleWindow w;
  w.kind = kind;
  w.window_id = start;
  w.collected_ms = now_ms();
  const char* label = kind == WindowKind::reference ? "reference" : "monitored";
  std::uint64_t prev = metric();
  for (std::uint32_t i = 0; i < sched_.samples; ++i) {
    driver_.run_until(start + (i + 1) * sub);
    const std::uint64_t cur = metric();
    w.values.push_back(static_cast<double>(cur - prev));
    if (trace_)
      trace_->add(now_ms(), "counter_sample", protected_,
                  {{"window_id", start}, {"window", label}, {"index", i}, {"value", cur - prev}});
    prev = cur;
  }
  if (kind == WindowKind::reference)
    ++stats_.reference_windows;
  else
    ++stats_.monitored_windows;
  return w;
}

SampleWindow Defense::collect_reference() { return collect_reference(co_vms_); }

SampleWindow Defense::collect_reference(const std::vector<VmId>& throttled)
{
  std::vector<std::pair<VmId, DutyRatio>> prior;
  for (VmId v : throttled) {
    if (v == protected_)
      throw RuntimeError("defense: reference sampling must not throttle the protected VM");
    prior.emplace_back(v, sim_.duty_cycle(v));
    throttle(v, DutyRatio{sched_.reference_throttle});
  }
  SampleWindow w = collect(WindowKind::reference, sched_.w_r_ms);
  for (const auto& [v, r] : prior)
    throttle(v, r);
  return w;
}

SampleWindow Defense::collect_monitored() { return collect(WindowKind::monitored, sched_.w_m_ms); }

KsDecision Defense::test(const SampleWindow& monitored, const SampleWindow& reference, const std::string& purpose)
{
  const KsDecision d = ks_decide(monitored, reference, sched_.alpha);
  stats_.ks.push_back(KsRecord{now_ms(), d, purpose});
  if (trace_)
    trace_->add(now_ms(), "ks_decision", protected_,
                {{"D", d.statistic},
                 {"critical", d.critical},
                 {"alpha", d.alpha},
                 {"verdict", d.verdict()},
                 {"purpose", purpose},
                 {"monitored_window", monitored.window_id},
                 {"reference_window", reference.window_id}});
  return d;
}

void Defense::run_monitor(Cycle until)
{
  const Cycle frame = sim_.frame_cycles();
  const Cycle w_r = ms_to_cycles(sched_.w_r_ms);
  const Cycle w_m = ms_to_cycles(sched_.w_m_ms);
  Cycle next_ref = sim_.now();
  Cycle next_mon = sim_.now();
  while (true) {
    const Cycle now = sim_.now();
    const bool want_ref = !reference_ || now >= next_ref;
    if (want_ref || now >= next_mon) {
      if (now + (want_ref ? w_r : w_m) + frame > until)
        break;
      if (want_ref) {
        reference_ = collect_reference();
        next_ref = reference_->window_id + ms_to_cycles(jittered(sched_.l_r_ms));
        continue;
      }
      const SampleWindow m = collect_monitored();
      next_mon = m.window_id + ms_to_cycles(jittered(sched_.l_m_ms));
      const KsDecision d = test(m, *reference_, "monitor");
      if (d.reject) {
        ++stats_.monitor_rejects;
        ++consecutive_;
      } else {
        consecutive_ = 0;
      }
      if (consecutive_ >= sched_.consecutive_k) {
        consecutive_ = 0;
        if (now + w_r + w_m + 2 * frame > until)
          break;
        reference_ = collect_reference();
        next_ref = reference_->window_id + ms_to_cycles(jittered(sched_.l_r_ms));
        on_confirmed_rejects();
      }
      continue;
    }
    const Cycle wake = std::min(next_ref, next_mon);
    if (wake >= until)
      break;
    driver_.run_until(wake);
  }
  driver_.run_until(std::max(until, sim_.now()));
}

void Defense::on_confirmed_rejects()
{
  const SampleWindow m = collect_monitored();
  if (!test(m, *reference_, "retest").reject)
    return;
  if (phase_ == DefensePhase::mitigated && identifications_ >= 2)
    return; // anomaly outlived a second identification: hold
  const DefensePhase before = phase_;
  set_phase(DefensePhase::suspected, "deviation persisted after reference refresh");
  ++stats_.suspected_events;
  if (!stats_.first_suspected_ms)
    stats_.first_suspected_ms = now_ms();
  set_phase(DefensePhase::identifying, "selective throttling search");
  const std::vector<VmId> found = identify_attackers();
  if (found.empty()) {
    set_phase(before == DefensePhase::mitigated ? DefensePhase::mitigated : DefensePhase::normal,
              "no attacker isolated");
    return;
  }
  mitigate(found);
}

bool Defense::anomaly_with_throttled(const std::vector<VmId>& throttled, const std::string& purpose)
{
  const SampleWindow ref = collect_reference(throttled);
  const SampleWindow mon = collect_monitored();
  return test(mon, ref, purpose).reject;
}

std::optional<VmId> Defense::search(std::vector<VmId> vms)
{
  while (vms.size() > 1) {
    const std::size_t imax = vms.size() - 1;
    const std::size_t imid = (imax + 1) / 2; // ceil(imax / 2)
    std::vector<VmId> first(vms.begin(), vms.begin() + static_cast<std::ptrdiff_t>(imid));
    std::vector<VmId> second(vms.begin() + static_cast<std::ptrdiff_t>(imid), vms.end());
    ++stats_.split_rounds;
    vms = anomaly_with_throttled(first, "split") ? std::move(first) : std::move(second);
  }
  if (vms.empty())
    return std::nullopt;
  return vms.front();
}

std::vector<VmId> Defense::identify_attackers()
{
  ++identifications_;
  std::vector<VmId> candidates;
  for (VmId v : co_vms_)
    if (std::find(mitigated_.begin(), mitigated_.end(), v) == mitigated_.end())
      candidates.push_back(v);
  std::vector<VmId> found;
  const std::size_t cap = candidates.size();
  for (std::size_t pass = 0; pass < cap && !candidates.empty(); ++pass) {
    if (!found.empty()) {
      ++stats_.check_rounds;
      if (!anomaly_with_throttled(candidates, "check"))
        break;
    }
    const auto v = search(candidates);
    if (!v)
      break;
    found.push_back(*v);
    throttle(*v, DutyRatio{sched_.mitigation_throttle});
    std::erase(candidates, *v);
    // Let the protected VM's working set recover before the check round samples it.
    if (!candidates.empty())
      driver_.run_until(sim_.now() + ms_to_cycles(sched_.w_r_ms));
  }
  stats_.identified_ms = now_ms();
  return found;
}

void Defense::mitigate(const std::vector<VmId>& vms)
{
  for (VmId v : vms)
    if (v >= sim_.vm_count())
      throw RuntimeError("mitigate: unknown vm " + std::to_string(v));
  if (vms.empty())
    return;
  for (VmId v : vms) {
    throttle(v, DutyRatio{sched_.mitigation_throttle});
    if (std::find(mitigated_.begin(), mitigated_.end(), v) == mitigated_.end()) {
      mitigated_.push_back(v);
      stats_.identified.push_back(v);
    }
  }
  stats_.mitigated_ms = now_ms();
  set_phase(DefensePhase::mitigated, "attacker throttled");
}

} // namespace memdos
