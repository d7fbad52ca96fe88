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

#include "memdos/simulator.hpp"

#include <string>

namespace memdos
{
Simulator::Simulator(MemoryTopology topology)
    : topology_(std::move(topology)), lat_(topology_.config().latency),
      frame_(Cycle{topology_.config().duty_window_cycles} * DutyRatio::kDenominator),
      window_(topology_.config().duty_window_cycles), private_sets_(topology_.config().private_sets())
{
  const TopologyConfig& c = topology_.config();
  for (std::uint32_t p = 0; p < c.packages; ++p)
    llcs_.emplace_back(c.llc_sets_per_slice * c.llc_slices, c.llc_ways);
  banks_.resize(c.banks);
  channels_.resize(c.channels);
}

VmId Simulator::add_vm(const VmConfig& config)
{
  if (config.vcpus == 0)
    throw ConfigError("vcpus", "a VM needs at least one vCPU");
  if (config.package >= topology_.config().packages)
    throw ConfigError("package", "package " + std::to_string(config.package) + " does not exist");
  if (vcpus_.size() + config.vcpus > 64)
    throw ConfigError("vcpus", "at most 64 vCPUs per simulated server");

  const auto id = static_cast<VmId>(vms_.size());
  Vm vm;
  vm.config = config;
  for (std::uint32_t i = 0; i < config.vcpus; ++i) {
    vm.vcpus.push_back(static_cast<std::uint32_t>(vcpus_.size()));
    Vcpu& v = vcpus_.emplace_back();
    v.vm = id;
    v.local = i;
    v.priv = SetAssocCache(private_sets_, topology_.config().private_ways);
  }
  vms_.push_back(std::move(vm));
  return id;
}

std::uint32_t Simulator::vcpu_count(VmId vm) const
{
  if (vm >= vms_.size())
    throw RuntimeError("unknown vm " + std::to_string(vm));
  return static_cast<std::uint32_t>(vms_[vm].vcpus.size());
}

void Simulator::bind_workload(VmId vm, VcpuId vcpu, std::unique_ptr<OpStream> stream)
{
  if (vcpu >= vcpu_count(vm))
    throw RuntimeError("unknown vcpu " + std::to_string(vcpu) + " of vm " + std::to_string(vm));
  const std::uint32_t g = vms_[vm].vcpus[vcpu];
  vcpus_[g].stream = std::move(stream);
  vcpus_[g].pending.reset();
  request_wake(g, std::max(now_, vms_[vm].config.start));
}

void Simulator::unbind_workload(VmId vm, VcpuId vcpu)
{
  if (vcpu >= vcpu_count(vm))
    throw RuntimeError("unknown vcpu " + std::to_string(vcpu) + " of vm " + std::to_string(vm));
  Vcpu& c = vcpus_[vms_[vm].vcpus[vcpu]];
  c.stream.reset();
  c.pending.reset();
}

Ticket Simulator::submit(VmId vm, VcpuId vcpu, const MemOp& op)
{
  if (vcpu >= vcpu_count(vm))
    throw RuntimeError("unknown vcpu " + std::to_string(vcpu) + " of vm " + std::to_string(vm));
  if (op.address >= topology_.config().phys_limit())
    throw RuntimeError("address beyond simulated physical range");
  const std::uint32_t g = vms_[vm].vcpus[vcpu];
  if (vcpus_[g].stream)
    throw RuntimeError("vcpu has a bound workload; manual submission not allowed");
  const Ticket t = next_ticket_++;
  vcpus_[g].manual.emplace_back(t, op);
  if (!vcpus_[g].in_flight)
    request_wake(g, std::max(now_, vms_[vm].config.start));
  return t;
}

std::vector<Completion> Simulator::advance(Cycle cycles)
{
  if (cycles == 0)
    throw RuntimeError("advance() needs a positive cycle count");
  std::vector<Completion> out;
  run_loop(now_ + cycles, &out);
  return out;
}

void Simulator::run_for(Cycle cycles) { run_loop(now_ + cycles, nullptr); }

void Simulator::run_until(Cycle t)
{
  if (t > now_)
    run_loop(t, nullptr);
}

Completion Simulator::wait_for(Ticket ticket)
{
  awaited_ = ticket;
  awaited_result_.reset();
  while (!awaited_result_) {
    if (events_.empty()) {
      awaited_.reset();
      throw RuntimeError("simulator idle before ticket " + std::to_string(ticket) + " completed");
    }
    Event ev = events_.top();
    events_.pop();
    now_ = ev.t;
    dispatch(ev);
  }
  awaited_.reset();
  return *awaited_result_;
}

void Simulator::run_loop(Cycle limit, std::vector<Completion>* sink)
{
  sink_ = sink;
  while (!events_.empty() && events_.top().t <= limit) {
    Event ev = events_.top();
    events_.pop();
    now_ = ev.t;
    dispatch(ev);
  }
  now_ = limit;
  sink_ = nullptr;
}

void Simulator::schedule(Cycle t, EvKind kind, std::uint32_t arg) { events_.push(Event{t, seq_++, arg, kind}); }

void Simulator::dispatch(const Event& ev)
{
  switch (ev.kind) {
  case EvKind::wake:
    vcpus_[ev.arg].wake_scheduled = false;
    wake(ev.arg, ev.t);
    break;
  case EvKind::op_done:
    complete(ev.arg, ev.t);
    break;
  case EvKind::shared_done:
    shared_done(ev.arg, ev.t);
    break;
  case EvKind::bank_arrive:
    bank_arrive(ev.arg, ev.t);
    break;
  case EvKind::data_ready:
    data_ready(ev.arg, ev.t);
    break;
  case EvKind::xfer_done:
    transfer_done(ev.arg, ev.t);
    break;
  case EvKind::lock_release:
    release_lock(ev.t);
    break;
  }
}

// --- duty-cycle modulation -------------------------------------------------

void Simulator::set_duty_cycle(VmId vm, DutyRatio ratio)
{
  if (vm >= vms_.size())
    throw RuntimeError("unknown vm " + std::to_string(vm));
  Vm& v = vms_[vm];
  v.ratio_before = ratio_at(v, now_);
  v.ratio_after = ratio;
  v.switch_at = next_frame_boundary(now_);
}

DutyRatio Simulator::duty_cycle(VmId vm) const
{
  if (vm >= vms_.size())
    throw RuntimeError("unknown vm " + std::to_string(vm));
  return vms_[vm].ratio_after;
}

bool Simulator::in_duty(const Vm& vm, Cycle t) const
{
  const unsigned k = ratio_at(vm, t).sixteenths();
  return k == DutyRatio::kDenominator || (t % frame_) / window_ < k;
}

Cycle Simulator::next_active(const Vm& vm, Cycle t) const
{
  if (in_duty(vm, t))
    return t;
  // Window 0 of every frame is active for any ratio.
  return (t / frame_ + 1) * frame_;
}

Cycle Simulator::active_deadline(const Vm& vm, Cycle t, Cycle active) const
{
  if (active == 0)
    return t;
  const unsigned k = ratio_at(vm, t).sixteenths();
  if (k == DutyRatio::kDenominator)
    return t + active;
  const Cycle span = window_ * k;
  Cycle frame_start = t - t % frame_;
  const Cycle pos = t - frame_start;
  if (pos < span) {
    const Cycle avail = span - pos;
    if (active <= avail)
      return t + active;
    active -= avail;
  }
  frame_start += frame_;
  const Cycle full = active / span;
  const Cycle rem = active % span;
  if (rem == 0)
    return frame_start + (full - 1) * frame_ + span;
  return frame_start + full * frame_ + rem;
}

// --- vCPU issue path --------------------------------------------------------

void Simulator::request_wake(std::uint32_t v, Cycle t)
{
  Vcpu& c = vcpus_[v];
  if (c.wake_scheduled || c.in_flight)
    return;
  c.wake_scheduled = true;
  schedule(t, EvKind::wake, v);
}

void Simulator::wake(std::uint32_t v, Cycle t)
{
  Vcpu& c = vcpus_[v];
  const Vm& vm = vms_[c.vm];
  if (c.in_flight)
    return;
  if (t < vm.config.start) {
    request_wake(v, vm.config.start);
    return;
  }
  if (!in_duty(vm, t)) {
    request_wake(v, next_active(vm, t));
    return;
  }
  if (c.pending) {
    MemOp op = *c.pending;
    c.pending.reset();
    issue(v, op, c.pending_ticket, t);
    return;
  }
  if (!c.stream) {
    if (c.manual.empty())
      return; // parked until submit()
    auto [ticket, op] = c.manual.front();
    c.manual.pop_front();
    issue(v, op, ticket, t);
    return;
  }
  Step step = c.stream->next(t);
  if (!step.op && step.think == kNever)
    return; // parked for good
  if (step.think == 0 && step.op) {
    issue(v, *step.op, 0, t);
    return;
  }
  c.pending = step.op;
  c.pending_ticket = 0;
  request_wake(v, active_deadline(vm, t, std::max<Cycle>(step.think, 1)));
}

void Simulator::issue(std::uint32_t v, const MemOp& op, Ticket ticket, Cycle t)
{
  Vcpu& c = vcpus_[v];
  Vm& vm = vms_[c.vm];
  if (op.address >= topology_.config().phys_limit())
    throw RuntimeError("workload issued an address beyond the simulated physical range");
  ++vm.counters.issued_ops;
  c.in_flight = true;
  c.cur = op;
  c.cur_ticket = ticket;
  c.cur_issue = t;
  c.cur_llc = c.cur_miss = c.cur_dram = false;

  if (op.locks_bus() || op.uncached()) {
    enter_shared(v, t);
    return;
  }
  const Addr line = op.address >> topology_.line_bits();
  if (c.priv.find(static_cast<std::uint32_t>(line & (private_sets_ - 1)), line)) {
    schedule(t + lat_.private_hit, EvKind::op_done, v);
    return;
  }
  enter_shared(v, t);
}

std::uint32_t Simulator::llc_set(Addr address) const
{
  return topology_.slice_index(address) * topology_.config().llc_sets_per_slice + topology_.set_index(address);
}

void Simulator::enter_shared(std::uint32_t v, Cycle t)
{
  if (lock_held_ || lock_pending_) {
    blocked_.push_back(v);
    return;
  }
  Vcpu& c = vcpus_[v];
  const MemOp& op = c.cur;
  if (op.locks_bus()) {
    lock_pending_ = v;
    if (shared_in_flight_ == 0)
      grant_lock(t);
    return;
  }
  ++shared_in_flight_;
  if (op.uncached()) {
    c.cur_dram = true;
    dram_request(v, op.address, t);
    return;
  }

  c.cur_llc = true;
  const Addr line = op.address >> topology_.line_bits();
  SetAssocCache& llc = llcs_[vms_[c.vm].config.package];
  const std::uint32_t set = llc_set(op.address);
  const std::uint64_t bit = std::uint64_t{1} << v;
  if (SetAssocCache::Line* hit = llc.find(set, line)) {
    hit->sharers |= bit;
    fill_private(v, line);
    schedule(t + lat_.llc_hit, EvKind::shared_done, v);
    return;
  }
  c.cur_miss = true;
  c.cur_dram = true;
  if (auto evicted = llc.insert(set, line, bit))
    back_invalidate(evicted->line, evicted->sharers);
  fill_private(v, line);
  dram_request(v, op.address, t + lat_.llc_hit);
}

void Simulator::fill_private(std::uint32_t v, Addr line)
{
  // Private evictions are silent; a stale sharer bit only costs a no-op invalidate.
  vcpus_[v].priv.insert(static_cast<std::uint32_t>(line & (private_sets_ - 1)), line);
}

void Simulator::back_invalidate(Addr line, std::uint64_t sharers)
{
  const auto pset = static_cast<std::uint32_t>(line & (private_sets_ - 1));
  while (sharers != 0) {
    const int i = __builtin_ctzll(sharers);
    sharers &= sharers - 1;
    vcpus_[static_cast<std::size_t>(i)].priv.invalidate(pset, line);
  }
}

void Simulator::shared_done(std::uint32_t v, Cycle t)
{
  --shared_in_flight_;
  if (lock_pending_ && !lock_held_ && shared_in_flight_ == 0)
    grant_lock(t);
  complete(v, t);
}

void Simulator::complete(std::uint32_t v, Cycle t)
{
  Vcpu& c = vcpus_[v];
  Vm& vm = vms_[c.vm];
  VmCounters& k = vm.counters;
  ++k.completed_ops;
  k.llc_accesses += c.cur_llc;
  k.llc_misses += c.cur_miss;
  k.dram_requests += c.cur_dram;
  if (c.cur_dram)
    k.bytes_transferred += topology_.config().line_size;
  c.in_flight = false;

  const Cycle latency = t - c.cur_issue;
  if (sink_ || (awaited_ && c.cur_ticket == *awaited_)) {
    Completion done{t, c.vm, c.local, c.cur_ticket, latency, c.cur, c.cur_llc, c.cur_miss, c.cur_dram};
    if (awaited_ && c.cur_ticket == *awaited_)
      awaited_result_ = done;
    if (sink_)
      sink_->push_back(done);
  }
  if (c.stream)
    c.stream->on_complete(c.cur, latency, t);
  wake(v, t);
}

// --- bus lock ---------------------------------------------------------------

void Simulator::grant_lock(Cycle t)
{
  lock_held_ = true;
  lock_holder_ = *lock_pending_;
  lock_pending_.reset();
  schedule(t + lat_.lock_stall, EvKind::lock_release, lock_holder_);
}

void Simulator::release_lock(Cycle t)
{
  lock_held_ = false;
  const std::uint32_t holder = lock_holder_;
  std::deque<std::uint32_t> drained;
  drained.swap(blocked_);
  for (std::uint32_t v : drained)
    enter_shared(v, t);
  complete(holder, t);
}

// --- DRAM -------------------------------------------------------------------

void Simulator::dram_request(std::uint32_t v, Addr address, Cycle arrive)
{
  std::uint32_t id;
  if (!free_reqs_.empty()) {
    id = free_reqs_.back();
    free_reqs_.pop_back();
  } else {
    id = static_cast<std::uint32_t>(reqs_.size());
    reqs_.emplace_back();
  }
  reqs_[id] = DramReq{v, topology_.bank_index(address), topology_.channel_index(address), topology_.row_index(address)};
  if (arrive > now_)
    schedule(arrive, EvKind::bank_arrive, id);
  else
    bank_arrive(id, arrive);
}

void Simulator::bank_arrive(std::uint32_t req, Cycle t)
{
  Bank& b = banks_[reqs_[req].bank];
  b.queue.push_back(req);
  if (!b.busy)
    bank_pick(reqs_[req].bank, t);
}

void Simulator::bank_pick(std::uint32_t bank, Cycle t)
{
  Bank& b = banks_[bank];
  // FR-FCFS: oldest row-buffer hit, otherwise oldest request.
  std::size_t pick = 0;
  for (std::size_t i = 0; i < b.queue.size(); ++i) {
    if (reqs_[b.queue[i]].row == b.open_row) {
      pick = i;
      break;
    }
  }
  const std::uint32_t req = b.queue[pick];
  b.queue.erase(b.queue.begin() + static_cast<std::ptrdiff_t>(pick));
  const bool row_hit = reqs_[req].row == b.open_row;
  b.open_row = reqs_[req].row;
  b.busy = true;
  const Cycle access = (row_hit ? lat_.dram_buffer_hit : lat_.dram_buffer_miss) - lat_.channel_service;
  schedule(t + access + lat_.scheduler_delay * b.queue.size(), EvKind::data_ready, req);
}

void Simulator::data_ready(std::uint32_t req, Cycle t)
{
  const DramReq& r = reqs_[req];
  Bank& b = banks_[r.bank];
  b.busy = false;
  if (!b.queue.empty())
    bank_pick(r.bank, t);
  Channel& ch = channels_[r.channel];
  ch.ready.push_back(req);
  if (!ch.busy)
    start_transfer(r.channel, t);
}

void Simulator::start_transfer(std::uint32_t channel, Cycle t)
{
  Channel& ch = channels_[channel];
  const std::uint32_t req = ch.ready.front();
  ch.ready.pop_front();
  ch.busy = true;
  schedule(t + lat_.channel_service, EvKind::xfer_done, req);
}

void Simulator::transfer_done(std::uint32_t req, Cycle t)
{
  const DramReq r = reqs_[req];
  free_reqs_.push_back(req);
  Channel& ch = channels_[r.channel];
  ch.busy = false;
  if (!ch.ready.empty())
    start_transfer(r.channel, t);
  shared_done(r.vcpu, t);
}

// --- inspection -------------------------------------------------------------

VmCounters Simulator::read_counters(VmId vm) const
{
  if (vm >= vms_.size())
    throw RuntimeError("unknown vm " + std::to_string(vm));
  return vms_[vm].counters;
}

bool Simulator::llc_resident(std::uint32_t package, Addr address) const
{
  return llcs_.at(package).peek(llc_set(address), address >> topology_.line_bits()) != nullptr;
}

bool Simulator::private_resident(VmId vm, VcpuId vcpu, Addr address) const
{
  const std::uint32_t g = vms_.at(vm).vcpus.at(vcpu);
  const Addr line = address >> topology_.line_bits();
  return vcpus_[g].priv.peek(static_cast<std::uint32_t>(line & (private_sets_ - 1)), line) != nullptr;
}

std::vector<Addr> Simulator::llc_set_contents(std::uint32_t package, std::uint32_t set, std::uint32_t slice) const
{
  return llcs_.at(package).contents(slice * topology_.config().llc_sets_per_slice + set);
}

} // namespace memdos
