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
#include <deque>
#include <memory>
#include <optional>
#include <queue>
#include <vector>

#include "memdos/cache.hpp"
#include "memdos/topology.hpp"
#include "memdos/types.hpp"

namespace memdos
{
/// One unit of work from a vCPU's instruction stream: spend `think` active
/// cycles computing, then issue `op` (if any).
struct Step {
  std::optional<MemOp> op;
  Cycle think = 0;

  static Step park() { return Step{std::nullopt, kNever}; }
};

/// Source of memory operations bound to a vCPU. Implementations receive
/// timing feedback only for their own operations.
class OpStream
{
public:
  virtual ~OpStream() = default;
  virtual Step next(Cycle now) = 0;
  virtual void on_complete(const MemOp& /*op*/, Cycle /*latency*/, Cycle /*now*/) {}
};

/// Cumulative per-VM counters (the PMU analog).
struct VmCounters {
  std::uint64_t issued_ops = 0;
  std::uint64_t completed_ops = 0;
  std::uint64_t llc_accesses = 0;
  std::uint64_t llc_misses = 0;
  std::uint64_t dram_requests = 0;
  std::uint64_t bytes_transferred = 0;

  friend bool operator==(const VmCounters&, const VmCounters&) = default;
};

struct Completion {
  Cycle time = 0;
  VmId vm = 0;
  VcpuId vcpu = 0;
  Ticket ticket = 0; // 0 for ops produced by a bound OpStream
  Cycle latency = 0;
  MemOp op;
  bool llc_access = false;
  bool llc_miss = false;
  bool dram = false;
};

struct VmConfig {
  std::uint32_t vcpus = 1;
  std::uint32_t package = 0;
  Cycle start = 0;
};

/// Deterministic discrete-event model of one server: private caches per vCPU,
/// an inclusive sliced LLC per package, FR-FCFS banks, FCFS channels, a global
/// bus lock, and per-VM duty-cycle modulation. Single-owner, single-threaded.
class Simulator
{
public:
  explicit Simulator(MemoryTopology topology);

  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  VmId add_vm(const VmConfig& config);
  /// Binds (or replaces) the stream driving a vCPU.
  void bind_workload(VmId vm, VcpuId vcpu, std::unique_ptr<OpStream> stream);
  /// Detaches the stream; an op already in flight still completes.
  void unbind_workload(VmId vm, VcpuId vcpu);

  /// Queues `op` on a vCPU that has no bound stream; issued in FIFO order.
  Ticket submit(VmId vm, VcpuId vcpu, const MemOp& op);

  /// Advances the clock by `cycles` (> 0) and returns every completion in order.
  std::vector<Completion> advance(Cycle cycles);
  /// Same as advance() without collecting completions.
  void run_for(Cycle cycles);
  void run_until(Cycle t);
  /// Runs until the op behind `ticket` completes; throws if the system idles first.
  Completion wait_for(Ticket ticket);

  /// Takes effect at the next duty-frame boundary.
  void set_duty_cycle(VmId vm, DutyRatio ratio);
  [[nodiscard]] DutyRatio duty_cycle(VmId vm) const;

  [[nodiscard]] VmCounters read_counters(VmId vm) const;

  [[nodiscard]] Cycle now() const { return now_; }
  [[nodiscard]] Cycle frame_cycles() const { return frame_; }
  [[nodiscard]] Cycle next_frame_boundary(Cycle t) const { return (t + frame_ - 1) / frame_ * frame_; }
  [[nodiscard]] const MemoryTopology& topology() const { return topology_; }
  [[nodiscard]] std::size_t vm_count() const { return vms_.size(); }
  [[nodiscard]] std::uint32_t vcpu_count(VmId vm) const;

  // Ground-truth inspection for tests and `--oracle` runs.
  [[nodiscard]] bool llc_resident(std::uint32_t package, Addr address) const;
  [[nodiscard]] bool private_resident(VmId vm, VcpuId vcpu, Addr address) const;
  [[nodiscard]] bool bus_locked() const { return lock_held_; }
  /// Lines of one (set, slice) from LRU to MRU.
  [[nodiscard]] std::vector<Addr> llc_set_contents(std::uint32_t package, std::uint32_t set,
                                                   std::uint32_t slice) const;

private:
  enum class EvKind : std::uint8_t { wake, op_done, shared_done, bank_arrive, data_ready, xfer_done, lock_release };

  struct Event {
    Cycle t;
    std::uint64_t seq;
    std::uint32_t arg;
    EvKind kind;
    bool operator>(const Event& o) const { return t != o.t ? t > o.t : seq > o.seq; }
  };

  struct Vcpu {
    VmId vm = 0;
    VcpuId local = 0;
    SetAssocCache priv;
    std::unique_ptr<OpStream> stream;
    std::deque<std::pair<Ticket, MemOp>> manual;
    bool wake_scheduled = false;
    bool in_flight = false;
    std::optional<MemOp> pending;
    Ticket pending_ticket = 0;
    MemOp cur;
    Ticket cur_ticket = 0;
    Cycle cur_issue = 0;
    bool cur_llc = false;
    bool cur_miss = false;
    bool cur_dram = false;
  };

  struct Vm {
    VmConfig config;
    std::vector<std::uint32_t> vcpus; // global vCPU indices
    DutyRatio ratio_before;
    DutyRatio ratio_after;
    Cycle switch_at = 0;
    VmCounters counters;
  };

  struct DramReq {
    std::uint32_t vcpu;
    std::uint32_t bank;
    std::uint32_t channel;
    std::uint64_t row;
  };

  struct Bank {
    std::vector<std::uint32_t> queue; // arrival order
    std::uint64_t open_row = ~std::uint64_t{0};
    bool busy = false;
  };

  struct Channel {
    std::deque<std::uint32_t> ready;
    bool busy = false;
  };

  void schedule(Cycle t, EvKind kind, std::uint32_t arg);
  void dispatch(const Event& ev);
  void run_loop(Cycle limit, std::vector<Completion>* sink);

  [[nodiscard]] DutyRatio ratio_at(const Vm& vm, Cycle t) const { return t >= vm.switch_at ? vm.ratio_after : vm.ratio_before; }
  [[nodiscard]] bool in_duty(const Vm& vm, Cycle t) const;
  [[nodiscard]] Cycle next_active(const Vm& vm, Cycle t) const;
  [[nodiscard]] Cycle active_deadline(const Vm& vm, Cycle t, Cycle active) const;

  void wake(std::uint32_t v, Cycle t);
  void request_wake(std::uint32_t v, Cycle t);
  void issue(std::uint32_t v, const MemOp& op, Ticket ticket, Cycle t);
  void enter_shared(std::uint32_t v, Cycle t);
  void shared_done(std::uint32_t v, Cycle t);
  void complete(std::uint32_t v, Cycle t);
  void grant_lock(Cycle t);
  void release_lock(Cycle t);

  void fill_private(std::uint32_t v, Addr line);
  void back_invalidate(Addr line, std::uint64_t sharers);
  void dram_request(std::uint32_t v, Addr address, Cycle arrive);
  void bank_arrive(std::uint32_t req, Cycle t);
  void bank_pick(std::uint32_t bank, Cycle t);
  void data_ready(std::uint32_t req, Cycle t);
  void start_transfer(std::uint32_t channel, Cycle t);
  void transfer_done(std::uint32_t req, Cycle t);

  [[nodiscard]] std::uint32_t llc_set(Addr address) const;

  MemoryTopology topology_;
  const LatencyTable lat_;
  Cycle frame_;
  Cycle window_;
  Cycle now_ = 0;
  std::uint64_t seq_ = 0;
  Ticket next_ticket_ = 1;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;

  std::vector<Vm> vms_;
  std::vector<Vcpu> vcpus_;
  std::vector<SetAssocCache> llcs_; // one per package
  std::uint32_t private_sets_;

  std::vector<DramReq> reqs_;
  std::vector<std::uint32_t> free_reqs_;
  std::vector<Bank> banks_;
  std::vector<Channel> channels_;

  bool lock_held_ = false;
  std::optional<std::uint32_t> lock_pending_;
  std::uint32_t lock_holder_ = 0;
  std::uint32_t shared_in_flight_ = 0;
  std::deque<std::uint32_t> blocked_;

  std::vector<Completion>* sink_ = nullptr;
  std::optional<Ticket> awaited_;
  std::optional<Completion> awaited_result_;
};

} // namespace memdos
