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

#include "memdos/workloads.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

#include "memdos/rng.hpp"

namespace memdos
{
namespace
{
MemOp read_at(Addr a) { return MemOp{a, OpKind::read, Cacheability::cached, Atomicity::none}; }
MemOp uncached_read_at(Addr a) { return MemOp{a, OpKind::read, Cacheability::uncached, Atomicity::none}; }

struct Layout {
  Addr base;
  std::vector<Addr> rows;
  std::uint32_t per_row;
  std::uint32_t line_size;

  [[nodiscard]] Addr line(std::uint64_t k) const
  {
    if (rows.empty())
      return base + k * line_size;
    return rows[(k / per_row) % rows.size()] + (k % per_row) * line_size;
  }
};

class IdleStream final : public OpStream
{
public:
  Step next(Cycle) override { return Step::park(); }
};

class CopyStream final : public OpStream
{
public:
  CopyStream(Layout layout, std::uint64_t footprint, Locality locality, std::uint64_t seed, Cycle think)
      : layout_(std::move(layout)), half_(footprint / 2 / layout_.line_size), think_(think)
  {
    const auto lines = static_cast<std::uint32_t>(half_);
    order_.resize(lines);
    std::iota(order_.begin(), order_.end(), 0U);
    if (locality == Locality::low) {
      Rng rng(seed);
      for (std::size_t i = order_.size(); i > 1; --i)
        std::swap(order_[i - 1], order_[rng.below(i)]);
    }
  }

  Step next(Cycle) override
  {
    const std::uint64_t k = order_[idx_];
    if (!write_) {
      write_ = true;
      return Step{read_at(layout_.line(k)), think_};
    }
    write_ = false;
    idx_ = (idx_ + 1) % order_.size();
    return Step{MemOp{layout_.line(half_ + k), OpKind::write, Cacheability::cached, Atomicity::none}, think_};
  }

private:
  Layout layout_;
  std::uint64_t half_;
  Cycle think_;
  std::vector<std::uint32_t> order_;
  std::size_t idx_ = 0;
  bool write_ = false;
};

class PhasedStream final : public OpStream
{
public:
  PhasedStream(Layout layout, std::vector<Phase> phases, std::uint64_t cycles_per_ms, std::uint64_t seed)
      : layout_(std::move(layout)), phases_(std::move(phases)), rng_(seed)
  {
    for (const Phase& p : phases_) {
      const auto len = static_cast<Cycle>(p.duration_ms * static_cast<double>(cycles_per_ms));
      ends_.push_back((ends_.empty() ? 0 : ends_.back()) + std::max<Cycle>(len, 1));
    }
    cursor_.assign(phases_.size(), 0);
  }

  Step next(Cycle now) override
  {
    if (!started_) {
      started_ = true;
      start_ = now;
    }
    const Cycle pos = (now - start_) % ends_.back();
    const auto p = static_cast<std::size_t>(std::upper_bound(ends_.begin(), ends_.end(), pos) - ends_.begin());
    const Phase& ph = phases_[p];
    const std::uint64_t lines = std::max<std::uint64_t>(ph.working_set / layout_.line_size, 1);

    Cycle think = 0;
    if (remaining_ == 0) {
      const std::uint32_t m = ph.ops_per_request;
      const std::uint32_t lo = std::max<std::uint32_t>(m / 2, 1);
      remaining_ = lo + static_cast<std::uint32_t>(rng_.below(std::max<std::uint32_t>(m + m / 2, lo) - lo + 1));
      if (ph.think_cycles > 0)
        think = static_cast<Cycle>(rng_.exponential(ph.think_cycles));
    }
    --remaining_;
    std::uint64_t line;
    if (ph.locality == Locality::high) {
      line = cursor_[p];
      cursor_[p] = (cursor_[p] + 1) % lines;
    } else {
      line = rng_.below(lines);
    }
    return Step{read_at(layout_.line(line)), think};
  }

private:
  Layout layout_;
  std::vector<Phase> phases_;
  Rng rng_;
  std::vector<Cycle> ends_;
  std::vector<std::uint64_t> cursor_;
  std::uint32_t remaining_ = 0;
  bool started_ = false;
  Cycle start_ = 0;
};

class CleanseStream final : public OpStream
{
public:
  CleanseStream(std::shared_ptr<const EvictionBuffer> buffer, std::uint32_t lo, std::uint32_t hi)
      : buf_(std::move(buffer)), lo_(lo), hi_(hi), set_(lo)
  {
  }

  Step next(Cycle) override
  {
    const Addr a = buf_->group(set_, label_)[way_];
    if (++way_ == buf_->ways) {
      way_ = 0;
      if (++label_ == buf_->slices) {
        label_ = 0;
        if (++set_ == hi_)
          set_ = lo_;
      }
    }
    return Step{read_at(a), 0};
  }

private:
  std::shared_ptr<const EvictionBuffer> buf_;
  std::uint32_t lo_;
  std::uint32_t hi_;
  std::uint32_t set_;
  std::uint32_t label_ = 0;
  std::uint32_t way_ = 0;
};

/// Prime every owned group, probe them back in reverse, then cleanse only the
/// groups where fewer than `ways` lines survived.
class AdaptiveCleanseStream final : public OpStream
{
public:
  AdaptiveCleanseStream(std::shared_ptr<const EvictionBuffer> buffer, std::uint32_t lo, std::uint32_t hi,
                        Cycle threshold, Cycle rediscover, std::shared_ptr<DiscoveryLog> log,
                        std::shared_ptr<std::uint32_t> finished, std::uint32_t threads)
      : buf_(std::move(buffer)), lo_(lo), hi_(hi), threshold_(threshold), rediscover_(rediscover),
        log_(std::move(log)), finished_(std::move(finished)), threads_(threads)
  {
    for (std::uint32_t s = lo_; s < hi_; ++s)
      for (std::uint32_t g = 0; g < buf_->slices; ++g)
        owned_.emplace_back(s, g);
  }

  Step next(Cycle now) override
  {
    if (stage_ == Stage::attack && rediscover_ != 0 && now - attack_since_ >= rediscover_)
      restart();
    switch (stage_) {
    case Stage::prime: {
      const auto [s, g] = owned_[pos_];
      const Addr a = buf_->group(s, g)[way_];
      if (++way_ == buf_->ways) {
        way_ = 0;
        if (++pos_ == owned_.size()) {
          stage_ = Stage::probe;
          pos_ = 0;
        }
      }
      return Step{read_at(a), 0};
    }
    case Stage::probe: {
      const auto [s, g] = owned_[owned_.size() - 1 - pos_];
      probing_ = true;
      return Step{read_at(buf_->group(s, g)[buf_->ways - 1 - way_]), 0};
    }
    case Stage::attack: {
      if (targets_.empty())
        return rediscover_ == 0 ? Step::park() : Step{std::nullopt, rediscover_};
      const auto [s, g] = targets_[pos_];
      const Addr a = buf_->group(s, g)[way_];
      if (++way_ == buf_->ways) {
        way_ = 0;
        pos_ = (pos_ + 1) % targets_.size();
      }
      return Step{read_at(a), 0};
    }
    }
    return Step::park();
  }

  void on_complete(const MemOp&, Cycle latency, Cycle now) override
  {
    if (!probing_)
      return;
    probing_ = false;
    if (latency < threshold_)
      ++fast_;
    if (++way_ < buf_->ways)
      return;
    if (fast_ < buf_->ways)
      targets_.push_back(owned_[owned_.size() - 1 - pos_]);
    way_ = 0;
    fast_ = 0;
    if (++pos_ == owned_.size()) {
      std::sort(targets_.begin(), targets_.end());
      log_->victim_groups.insert(log_->victim_groups.end(), targets_.begin(), targets_.end());
      if (++*finished_ == threads_) {
        std::sort(log_->victim_groups.begin(), log_->victim_groups.end());
        log_->complete = true;
        log_->completed_at = now;
        ++log_->rounds;
        *finished_ = 0;
      }
      stage_ = Stage::attack;
      attack_since_ = now;
      pos_ = 0;
    }
  }

private:
  enum class Stage : std::uint8_t { prime, probe, attack };

  void restart()
  {
    stage_ = Stage::prime;
    pos_ = way_ = fast_ = 0;
    probing_ = false;
    for (const auto& t : targets_)
      std::erase(log_->victim_groups, t);
    targets_.clear();
  }

  std::shared_ptr<const EvictionBuffer> buf_;
  std::uint32_t lo_;
  std::uint32_t hi_;
  Cycle threshold_;
  Cycle rediscover_;
  std::shared_ptr<DiscoveryLog> log_;
  std::shared_ptr<std::uint32_t> finished_;
  std::uint32_t threads_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> owned_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> targets_;
  Stage stage_ = Stage::prime;
  std::size_t pos_ = 0;
  std::uint32_t way_ = 0;
  std::uint32_t fast_ = 0;
  bool probing_ = false;
  Cycle attack_since_ = 0;
};

class AtomicStream final : public OpStream
{
public:
  AtomicStream(AtomicKind kind, Addr base, std::uint32_t line_size)
  {
    switch (kind) {
    case AtomicKind::aligned:
      op_ = MemOp{base, OpKind::write, Cacheability::cached, Atomicity::aligned_atomic};
      break;
    case AtomicKind::unaligned:
      op_ = MemOp{base + line_size - 1, OpKind::write, Cacheability::cached, Atomicity::unaligned_atomic};
      break;
    case AtomicKind::uncached:
      op_ = MemOp{base, OpKind::write, Cacheability::uncached, Atomicity::uncached_atomic};
      break;
    }
  }

  Step next(Cycle) override { return Step{op_, 0}; }

private:
  MemOp op_;
};

class SweepStream final : public OpStream
{
public:
  SweepStream(Addr base, std::uint64_t lines, std::uint64_t start, std::uint32_t line_size)
      : base_(base), lines_(lines), idx_(start % lines), line_size_(line_size)
  {
  }

  Step next(Cycle) override
  {
    const Addr a = base_ + idx_ * line_size_;
    idx_ = (idx_ + 1) % lines_;
    return Step{read_at(a), 0};
  }

private:
  Addr base_;
  std::uint64_t lines_;
  std::uint64_t idx_;
  std::uint32_t line_size_;
};

/// Rows (2^row_offset_bits chunks) of the VM region grouped by discovered channel bits.
std::vector<std::vector<Addr>> channel_rows(const WorkloadContext& ctx, const std::vector<unsigned>& bits)
{
  const Addr row = Addr{1} << ctx.geometry.row_offset_bits;
  const std::uint64_t span = std::min<std::uint64_t>(ctx.region_bytes, std::uint64_t{1} << ctx.geometry.hugepage_bits);
  std::vector<std::vector<Addr>> rows(std::size_t{1} << bits.size());
  for (Addr a = ctx.base; a + row <= ctx.base + span; a += row)
    rows[bit_group(a, bits)].push_back(a);
  return rows;
}

class RowFloodStream final : public OpStream
{
public:
  RowFloodStream(std::vector<Addr> rows, std::size_t start, std::uint32_t lines_per_row, std::uint32_t line_size)
      : rows_(std::move(rows)), row_(rows_.empty() ? 0 : start % rows_.size()), per_row_(lines_per_row),
        line_size_(line_size)
  {
  }

  void reset(std::vector<Addr> rows, std::size_t start)
  {
    rows_ = std::move(rows);
    row_ = rows_.empty() ? 0 : start % rows_.size();
    line_ = 0;
  }

  [[nodiscard]] bool empty() const { return rows_.empty(); }

  Step next(Cycle) override
  {
    if (rows_.empty())
      return Step::park();
    const Addr a = rows_[row_] + Addr{line_} * line_size_;
    if (++line_ == per_row_) {
      line_ = 0;
      row_ = (row_ + 1) % rows_.size();
    }
    return Step{uncached_read_at(a), 0};
  }

private:
  std::vector<Addr> rows_;
  std::size_t row_;
  std::uint32_t line_ = 0;
  std::uint32_t per_row_;
  std::uint32_t line_size_;
};

struct FloodShared {
  std::vector<std::vector<Addr>> rows; // by channel group
  std::shared_ptr<DiscoveryLog> log;
  std::uint64_t epoch = 0; // bumped each time discovery finishes
};

/// Thread 0 times each channel group, then every thread floods the hot ones.
class AdaptiveFloodStream final : public OpStream
{
public:
  static constexpr std::uint32_t kProbeLines = 64;
  static constexpr Cycle kPoll = 1000;

  AdaptiveFloodStream(std::shared_ptr<FloodShared> shared, std::uint32_t thread, std::uint32_t threads,
                      std::uint32_t passes, double margin, Cycle rediscover, std::uint32_t lines_per_row,
                      std::uint32_t line_size)
      : sh_(std::move(shared)), thread_(thread), threads_(threads), passes_(passes), margin_(margin),
        rediscover_(rediscover), line_size_(line_size), flood_({}, 0, lines_per_row, line_size)
  {
    times_.assign(sh_->rows.size(), 0.0);
  }

  Step next(Cycle now) override
  {
    if (thread_ == 0 && discovering_) {
      while (group_ < sh_->rows.size() && sh_->rows[group_].empty())
        advance_probe();
      if (group_ == sh_->rows.size()) {
        finish(now);
        return Step{std::nullopt, kPoll};
      }
      return Step{uncached_read_at(sh_->rows[group_].front() + Addr{line_} * line_size_), 0};
    }
    if (seen_epoch_ != sh_->epoch) {
      seen_epoch_ = sh_->epoch;
      std::vector<Addr> rows;
      for (std::uint32_t g : sh_->log->hot_channels)
        rows.insert(rows.end(), sh_->rows[g].begin(), sh_->rows[g].end());
      std::sort(rows.begin(), rows.end());
      const std::size_t n = rows.size();
      flood_.reset(std::move(rows), n * thread_ / threads_);
      since_ = now;
    }
    if (thread_ == 0 && rediscover_ != 0 && sh_->epoch != 0 && now - since_ >= rediscover_) {
      start_discovery();
      return next(now);
    }
    if (sh_->epoch == 0 || flood_.empty())
      return Step{std::nullopt, kPoll};
    return flood_.next(now);
  }

  void on_complete(const MemOp&, Cycle latency, Cycle now) override
  {
    if (thread_ != 0 || !discovering_)
      return;
    times_[group_] += static_cast<double>(latency);
    advance_probe();
    if (group_ == sh_->rows.size())
      finish(now);
  }

private:
  void advance_probe()
  {
    if (++line_ < kProbeLines && group_ < sh_->rows.size() && !sh_->rows[group_].empty())
      return;
    line_ = 0;
    if (++group_ == sh_->rows.size() && ++pass_ < passes_)
      group_ = 0;
  }

  void start_discovery()
  {
    discovering_ = true;
    group_ = line_ = pass_ = 0;
    std::fill(times_.begin(), times_.end(), 0.0);
  }

  void finish(Cycle now)
  {
    discovering_ = false;
    DiscoveryLog& log = *sh_->log;
    log.channel_times = times_;
    std::vector<bool> present(times_.size());
    for (std::size_t g = 0; g < times_.size(); ++g)
      present[g] = !sh_->rows[g].empty();
    log.hot_channels = hot_groups(times_, present, margin_);
    log.complete = true;
    log.completed_at = now;
    ++log.rounds;
    ++sh_->epoch;
  }

  std::shared_ptr<FloodShared> sh_;
  std::uint32_t thread_;
  std::uint32_t threads_;
  std::uint32_t passes_;
  double margin_;
  Cycle rediscover_;
  std::uint32_t line_size_;
  RowFloodStream flood_;
  std::vector<double> times_;
  bool discovering_ = true;
  std::size_t group_ = 0;
  std::uint32_t line_ = 0;
  std::uint32_t pass_ = 0;
  std::uint64_t seen_epoch_ = 0;
  Cycle since_ = 0;
};

bool needs_footprint(WorkloadKind k) { return k == WorkloadKind::stream; }

} // namespace

std::string to_string(WorkloadKind kind)
{
  switch (kind) {
  case WorkloadKind::idle:
    return "idle";
  case WorkloadKind::stream:
    return "stream";
  case WorkloadKind::phased:
    return "phased";
  case WorkloadKind::llc_cleanse:
    return "llc_cleanse";
  case WorkloadKind::adaptive_llc_cleanse:
    return "adaptive_llc_cleanse";
  case WorkloadKind::atomic_lock:
    return "atomic_lock";
  case WorkloadKind::mem_flood:
    return "mem_flood";
  case WorkloadKind::adaptive_mem_flood:
    return "adaptive_mem_flood";
  }
  return "unknown";
}

WorkloadKind parse_workload_kind(const std::string& name)
{
  for (auto k : {WorkloadKind::idle, WorkloadKind::stream, WorkloadKind::phased, WorkloadKind::llc_cleanse,
                 WorkloadKind::adaptive_llc_cleanse, WorkloadKind::atomic_lock, WorkloadKind::mem_flood,
                 WorkloadKind::adaptive_mem_flood})
    if (to_string(k) == name)
      return k;
  throw ConfigError("workload.kind", "unknown workload kind '" + name + "'");
}

std::size_t EvictionBuffer::line_count() const
{
  std::size_t n = 0;
  for (const auto& g : groups)
    n += g.size();
  return n;
}

bool EvictionBuffer::complete() const
{
  if (groups.size() != std::size_t{sets} * slices)
    return false;
  std::unordered_set<Addr> seen;
  for (const auto& g : groups) {
    if (g.size() != ways)
      return false;
    for (Addr a : g)
      if (!seen.insert(a).second)
        return false;
  }
  return true;
}

void WorkloadSpec::validate(std::uint32_t line_size) const
{
  if (threads < 1)
    throw ConfigError("workload.threads", "must be at least 1");
  if (needs_footprint(kind) && footprint < 2ULL * line_size)
    throw ConfigError("workload.footprint", "stream needs at least two lines");
  if (kind == WorkloadKind::phased) {
    if (phases.empty())
      throw ConfigError("workload.phases", "phased workload needs at least one phase");
    for (const Phase& p : phases) {
      if (p.working_set < line_size)
        throw ConfigError("workload.phases.working_set", "must be at least one line");
      if (p.ops_per_request < 1)
        throw ConfigError("workload.phases.ops_per_request", "must be at least 1");
      if (!(p.duration_ms > 0))
        throw ConfigError("workload.phases.duration_ms", "must be positive");
      if (p.think_cycles < 0)
        throw ConfigError("workload.phases.think_cycles", "must be non-negative");
    }
  }
  if (kind == WorkloadKind::mem_flood && mode == FloodMode::targeted && channels.empty())
    throw ConfigError("workload.channels", "targeted flooding needs a non-empty channel set");
  if (!(hot_margin >= 0))
    throw ConfigError("workload.hot_margin", "must be non-negative");
  if (probe_passes < 1)
    throw ConfigError("workload.probe_passes", "must be at least 1");
  if (rediscover_ms < 0)
    throw ConfigError("workload.rediscover_ms", "must be non-negative");
}

WorkloadSpec idle_workload() { return WorkloadSpec{}; }

WorkloadSpec stream_workload(std::uint64_t footprint, Locality locality)
{
  WorkloadSpec s;
  s.kind = WorkloadKind::stream;
  s.footprint = footprint;
  s.locality = locality;
  s.validate(1);
  if (footprint < 128)
    throw ConfigError("workload.footprint", "stream needs at least two 64-byte lines");
  return s;
}

WorkloadSpec phased_workload(std::vector<Phase> phases)
{
  WorkloadSpec s;
  s.kind = WorkloadKind::phased;
  s.phases = std::move(phases);
  s.validate(1);
  return s;
}

WorkloadSpec llc_cleanse_workload(std::shared_ptr<const EvictionBuffer> buffer, std::uint32_t threads)
{
  if (!buffer || !buffer->complete())
    throw ConfigError("workload.eviction", "eviction buffer is missing or incomplete");
  WorkloadSpec s;
  s.kind = WorkloadKind::llc_cleanse;
  s.eviction = std::move(buffer);
  s.threads = threads;
  s.validate(1);
  return s;
}

WorkloadSpec adaptive_llc_cleanse_workload(std::shared_ptr<const EvictionBuffer> buffer, std::uint32_t threads,
                                           Cycle conflict_threshold)
{
  WorkloadSpec s = llc_cleanse_workload(std::move(buffer), threads);
  s.kind = WorkloadKind::adaptive_llc_cleanse;
  s.conflict_threshold = conflict_threshold;
  return s;
}

WorkloadSpec atomic_lock_workload(AtomicKind kind)
{
  WorkloadSpec s;
  s.kind = WorkloadKind::atomic_lock;
  s.atomic = kind;
  return s;
}

WorkloadSpec mem_flood_workload(std::uint32_t threads, FloodMode mode, std::vector<std::uint32_t> channels,
                                std::vector<unsigned> channel_bits)
{
  WorkloadSpec s;
  s.kind = WorkloadKind::mem_flood;
  s.threads = threads;
  s.mode = mode;
  s.channels = std::move(channels);
  s.channel_bits = std::move(channel_bits);
  s.validate(1);
  return s;
}

WorkloadSpec adaptive_mem_flood_workload(std::uint32_t threads, std::vector<unsigned> channel_bits)
{
  WorkloadSpec s;
  s.kind = WorkloadKind::adaptive_mem_flood;
  s.threads = threads;
  s.channel_bits = std::move(channel_bits);
  s.validate(1);
  return s;
}

std::uint64_t flood_buffer_bytes(const PublicGeometry& geometry) { return 20 * geometry.llc_bytes(); }

std::vector<std::pair<std::uint32_t, std::uint32_t>> partition_sets(std::uint32_t sets, std::uint32_t parts)
{
  if (parts == 0 || parts > sets)
    throw ConfigError("workload.threads", "cannot split " + std::to_string(sets) + " sets into " +
                                              std::to_string(parts) + " ranges");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  for (std::uint32_t i = 0; i < parts; ++i)
    out.emplace_back(static_cast<std::uint32_t>(std::uint64_t{sets} * i / parts),
                     static_cast<std::uint32_t>(std::uint64_t{sets} * (i + 1) / parts));
  return out;
}

std::uint64_t region_requirement(const WorkloadSpec& spec, const PublicGeometry& geometry)
{
  const std::uint64_t row = std::uint64_t{1} << geometry.row_offset_bits;
  switch (spec.kind) {
  case WorkloadKind::stream:
    return spec.footprint;
  case WorkloadKind::phased: {
    std::uint64_t m = 0;
    for (const Phase& p : spec.phases)
      m = std::max(m, p.working_set);
    return m;
  }
  case WorkloadKind::atomic_lock:
    return 2ULL * geometry.line_size;
  case WorkloadKind::mem_flood:
    if (spec.mode == FloodMode::full)
      return flood_buffer_bytes(geometry) + spec.threads * row;
    return std::uint64_t{1} << geometry.hugepage_bits;
  case WorkloadKind::adaptive_mem_flood:
    return std::uint64_t{1} << geometry.hugepage_bits;
  case WorkloadKind::llc_cleanse:
  case WorkloadKind::adaptive_llc_cleanse:
    return 2 * geometry.llc_bytes();
  case WorkloadKind::idle:
    break;
  }
  return 0;
}

std::vector<std::uint32_t> hot_groups(const std::vector<double>& times, const std::vector<bool>& present, double margin)
{
  double fastest = -1;
  for (std::size_t g = 0; g < times.size(); ++g)
    if (present[g] && (fastest < 0 || times[g] < fastest))
      fastest = times[g];
  std::vector<std::uint32_t> hot;
  for (std::size_t g = 0; g < times.size(); ++g)
    if (present[g] && times[g] > fastest * (1.0 + margin))
      hot.push_back(static_cast<std::uint32_t>(g));
  return hot;
}

std::uint32_t bit_group(Addr address, const std::vector<unsigned>& bits)
{
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < bits.size(); ++i)
    v |= static_cast<std::uint32_t>((address >> bits[i]) & 1U) << i;
  return v;
}

WorkloadInstance instantiate(const WorkloadSpec& spec, const WorkloadContext& ctx)
{
  const PublicGeometry& g = ctx.geometry;
  spec.validate(g.line_size);
  if (spec.threads > ctx.vcpus)
    throw ConfigError("workload.threads", std::to_string(spec.threads) + " threads exceed the VM's " +
                                              std::to_string(ctx.vcpus) + " vCPUs");
  if (region_requirement(spec, g) > ctx.region_bytes)
    throw ConfigError("workload.footprint", "workload does not fit in the VM's memory region");

  WorkloadInstance inst;
  const std::uint32_t n = spec.threads;
  const std::uint32_t per_row = static_cast<std::uint32_t>((std::uint64_t{1} << g.row_offset_bits) / g.line_size);
  const Layout layout{ctx.base, ctx.rows, per_row, g.line_size};
  switch (spec.kind) {
  case WorkloadKind::idle:
    for (std::uint32_t i = 0; i < n; ++i)
      inst.streams.push_back(std::make_unique<IdleStream>());
    break;
  case WorkloadKind::stream:
    for (std::uint32_t i = 0; i < n; ++i)
      inst.streams.push_back(std::make_unique<CopyStream>(layout, spec.footprint, spec.locality, mix64(ctx.seed + i),
                                                          spec.think_cycles));
    break;
  case WorkloadKind::phased:
    for (std::uint32_t i = 0; i < n; ++i)
      inst.streams.push_back(
          std::make_unique<PhasedStream>(layout, spec.phases, g.cycles_per_ms, mix64(ctx.seed + i)));
    break;
  case WorkloadKind::llc_cleanse:
  case WorkloadKind::adaptive_llc_cleanse: {
    if (!spec.eviction || !spec.eviction->complete())
      throw ConfigError("workload.eviction", "eviction buffer is missing or incomplete");
    const auto ranges = partition_sets(spec.eviction->sets, n);
    if (spec.kind == WorkloadKind::llc_cleanse) {
      for (const auto& [lo, hi] : ranges)
        inst.streams.push_back(std::make_unique<CleanseStream>(spec.eviction, lo, hi));
      break;
    }
    if (spec.conflict_threshold == 0)
      throw RuntimeError("adaptive cleansing: no calibrated conflict threshold (discovery cannot time accesses)");
    inst.log = std::make_shared<DiscoveryLog>();
    auto finished = std::make_shared<std::uint32_t>(0);
    const auto rediscover = static_cast<Cycle>(spec.rediscover_ms * static_cast<double>(g.cycles_per_ms));
    for (const auto& [lo, hi] : ranges)
      inst.streams.push_back(std::make_unique<AdaptiveCleanseStream>(spec.eviction, lo, hi, spec.conflict_threshold,
                                                                     rediscover, inst.log, finished, n));
    break;
  }
  case WorkloadKind::atomic_lock:
    for (std::uint32_t i = 0; i < n; ++i)
      inst.streams.push_back(std::make_unique<AtomicStream>(spec.atomic, ctx.base, g.line_size));
    break;
  case WorkloadKind::mem_flood: {
    if (spec.mode == FloodMode::full) {
      const std::uint64_t lines = flood_buffer_bytes(g) / g.line_size;
      for (std::uint32_t i = 0; i < n; ++i)
        inst.streams.push_back(
            std::make_unique<SweepStream>(ctx.base, lines, lines * i / n + std::uint64_t{i} * per_row, g.line_size));
      break;
    }
    if (spec.channel_bits.empty())
      throw ConfigError("workload.channel_bits", "targeted flooding needs discovered channel bits");
    const auto rows = channel_rows(ctx, spec.channel_bits);
    std::vector<Addr> chosen;
    for (std::uint32_t c : spec.channels) {
      if (c >= rows.size())
        throw ConfigError("workload.channels", "channel group " + std::to_string(c) + " out of range");
      chosen.insert(chosen.end(), rows[c].begin(), rows[c].end());
    }
    std::sort(chosen.begin(), chosen.end());
    for (std::uint32_t i = 0; i < n; ++i)
      inst.streams.push_back(std::make_unique<RowFloodStream>(chosen, chosen.size() * i / n, per_row, g.line_size));
    break;
  }
  case WorkloadKind::adaptive_mem_flood: {
    if (spec.channel_bits.empty())
      throw ConfigError("workload.channel_bits", "adaptive flooding needs discovered channel bits");
    auto shared = std::make_shared<FloodShared>();
    shared->rows = channel_rows(ctx, spec.channel_bits);
    shared->log = inst.log = std::make_shared<DiscoveryLog>();
    const auto rediscover = static_cast<Cycle>(spec.rediscover_ms * static_cast<double>(g.cycles_per_ms));
    for (std::uint32_t i = 0; i < n; ++i)
      inst.streams.push_back(std::make_unique<AdaptiveFloodStream>(shared, i, n, spec.probe_passes, spec.hot_margin,
                                                                   rediscover, per_row, g.line_size));
    break;
  }
  }
  return inst;
}

} // namespace memdos
