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

#include "memdos/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "memdos/oracle.hpp"

namespace memdos
{
namespace
{
// ---------------------------------------------------------------- parsing

using Keys = std::initializer_list<const char*>;

void only_keys(const YAML::Node& node, const std::string& where, Keys allowed)
{
  if (!node.IsMap())
    throw ConfigError(where, "expected a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return key == k; }))
      throw ConfigError(where.empty() ? key : where + "." + key, "unknown key");
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where)
{
  const YAML::Node v = node[key];
  if (!v)
    return;
  try {
    out = v.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(where.empty() ? key : where + "." + key, "invalid value");
  }
}

void read_bytes(const YAML::Node& node, const char* key, std::uint64_t& out, const std::string& where)
{
  const YAML::Node v = node[key];
  if (!v)
    return;
  try {
    out = parse_bytes(v.as<std::string>());
  } catch (const std::exception&) {
    throw ConfigError(where + "." + key, "invalid byte size");
  }
}

Locality parse_locality(const std::string& s, const std::string& field)
{
  if (s == "high")
    return Locality::high;
  if (s == "low")
    return Locality::low;
  throw ConfigError(field, "locality must be high or low");
}

TopologyConfig parse_topology(const YAML::Node& n)
{
  TopologyConfig t;
  if (!n)
    return t;
  const std::string w = "topology";
  only_keys(n, w,
            {"line_size", "llc_slices", "llc_ways", "llc_sets_per_slice", "llc_bytes", "private_cache_bytes",
             "private_ways", "channels", "banks", "bank_bit_positions", "channel_bit_positions",
             "randomize_dram_bits", "row_offset_bits", "phys_addr_bits", "hugepage_bits", "packages",
             "cycles_per_ms", "duty_window_cycles", "latency"});
  read(n, "line_size", t.line_size, w);
  read(n, "llc_slices", t.llc_slices, w);
  read(n, "llc_ways", t.llc_ways, w);
  read(n, "llc_sets_per_slice", t.llc_sets_per_slice, w);
  read_bytes(n, "llc_bytes", t.llc_bytes, w);
  read_bytes(n, "private_cache_bytes", t.private_cache_bytes, w);
  read(n, "private_ways", t.private_ways, w);
  read(n, "channels", t.channels, w);
  read(n, "banks", t.banks, w);
  read(n, "bank_bit_positions", t.bank_bit_positions, w);
  read(n, "channel_bit_positions", t.channel_bit_positions, w);
  read(n, "randomize_dram_bits", t.randomize_dram_bits, w);
  read(n, "row_offset_bits", t.row_offset_bits, w);
  read(n, "phys_addr_bits", t.phys_addr_bits, w);
  read(n, "hugepage_bits", t.hugepage_bits, w);
  read(n, "packages", t.packages, w);
  read(n, "cycles_per_ms", t.cycles_per_ms, w);
  read(n, "duty_window_cycles", t.duty_window_cycles, w);
  if (const YAML::Node l = n["latency"]) {
    const std::string lw = "topology.latency";
    only_keys(l, lw,
              {"private_hit", "llc_hit", "dram_buffer_hit", "dram_buffer_miss", "lock_stall", "channel_service",
               "scheduler_delay"});
    read(l, "private_hit", t.latency.private_hit, lw);
    read(l, "llc_hit", t.latency.llc_hit, lw);
    read(l, "dram_buffer_hit", t.latency.dram_buffer_hit, lw);
    read(l, "dram_buffer_miss", t.latency.dram_buffer_miss, lw);
    read(l, "lock_stall", t.latency.lock_stall, lw);
    read(l, "channel_service", t.latency.channel_service, lw);
    read(l, "scheduler_delay", t.latency.scheduler_delay, lw);
  }
  return t;
}

WorkloadSpec parse_workload(const YAML::Node& n, const std::string& w)
{
  WorkloadSpec s;
  if (!n)
    return s;
  only_keys(n, w,
            {"kind", "footprint", "locality", "threads", "think_cycles", "atomic", "mode", "channels", "phases",
             "hot_margin", "probe_passes", "rediscover_ms"});
  std::string kind = "idle";
  read(n, "kind", kind, w);
  s.kind = parse_workload_kind(kind);
  read_bytes(n, "footprint", s.footprint, w);
  if (n["locality"])
    s.locality = parse_locality(n["locality"].as<std::string>(), w + ".locality");
  read(n, "threads", s.threads, w);
  read(n, "think_cycles", s.think_cycles, w);
  if (n["atomic"]) {
    const auto a = n["atomic"].as<std::string>();
    if (a == "aligned")
      s.atomic = AtomicKind::aligned;
    else if (a == "unaligned")
      s.atomic = AtomicKind::unaligned;
    else if (a == "uncached")
      s.atomic = AtomicKind::uncached;
    else
      throw ConfigError(w + ".atomic", "must be aligned, unaligned or uncached");
  }
  if (n["mode"]) {
    const auto m = n["mode"].as<std::string>();
    if (m == "full")
      s.mode = FloodMode::full;
    else if (m == "targeted")
      s.mode = FloodMode::targeted;
    else
      throw ConfigError(w + ".mode", "must be full or targeted");
  }
  read(n, "channels", s.channels, w);
  read(n, "hot_margin", s.hot_margin, w);
  read(n, "probe_passes", s.probe_passes, w);
  read(n, "rediscover_ms", s.rediscover_ms, w);
  if (const YAML::Node ps = n["phases"]) {
    if (!ps.IsSequence())
      throw ConfigError(w + ".phases", "expected a list");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const std::string pw = w + ".phases[" + std::to_string(i) + "]";
      only_keys(ps[i], pw, {"working_set", "ops_per_request", "think_cycles", "duration_ms", "locality"});
      Phase p;
      read_bytes(ps[i], "working_set", p.working_set, pw);
      read(ps[i], "ops_per_request", p.ops_per_request, pw);
      read(ps[i], "think_cycles", p.think_cycles, pw);
      read(ps[i], "duration_ms", p.duration_ms, pw);
      if (ps[i]["locality"])
        p.locality = parse_locality(ps[i]["locality"].as<std::string>(), pw + ".locality");
      s.phases.push_back(p);
    }
  }
  return s;
}

Role parse_role(const std::string& r, const std::string& field)
{
  if (r == "protected")
    return Role::protected_vm;
  if (r == "benign")
    return Role::benign;
  if (r == "attacker")
    return Role::attacker;
  throw ConfigError(field, "role must be protected, benign or attacker");
}

Baseline parse_baseline(const std::string& b)
{
  for (auto v : {Baseline::attackers_idle, Baseline::isolated, Baseline::defense_disabled, Baseline::none})
    if (b == to_string(v))
      return v;
  throw ConfigError("report.baseline", "must be attackers_idle, isolated, defense_disabled or none");
}

// ---------------------------------------------------------------- execution

nlohmann::json topology_json(const TopologyConfig& t)
{
  const LatencyTable& l = t.latency;
  return {{"line_size", t.line_size},
          {"llc_slices", t.llc_slices},
          {"llc_ways", t.llc_ways},
          {"llc_sets_per_slice", t.llc_sets_per_slice},
          {"private_cache_bytes", t.private_cache_bytes},
          {"private_ways", t.private_ways},
          {"channels", t.channels},
          {"banks", t.banks},
          {"bank_bit_positions", t.bank_bit_positions},
          {"channel_bit_positions", t.channel_bit_positions},
          {"randomize_dram_bits", t.randomize_dram_bits},
          {"row_offset_bits", t.row_offset_bits},
          {"phys_addr_bits", t.phys_addr_bits},
          {"hugepage_bits", t.hugepage_bits},
          {"packages", t.packages},
          {"cycles_per_ms", t.cycles_per_ms},
          {"duty_window_cycles", t.duty_window_cycles},
          {"latency",
           {{"private_hit", l.private_hit},
            {"llc_hit", l.llc_hit},
            {"dram_buffer_hit", l.dram_buffer_hit},
            {"dram_buffer_miss", l.dram_buffer_miss},
            {"lock_stall", l.lock_stall},
            {"channel_service", l.channel_service},
            {"scheduler_delay", l.scheduler_delay}}}};
}

struct Region {
  Addr base;
  std::uint64_t bytes;
};

std::vector<Region> layout_regions(const ScenarioConfig& cfg, const PublicGeometry& g)
{
  const std::uint64_t page = std::uint64_t{1} << g.hugepage_bits;
  const Addr limit = cfg.topology.phys_limit();
  std::vector<Region> out;
  Addr cursor = page;
  for (const VmSpec& v : cfg.vms) {
    std::uint64_t need = region_requirement(v.workload, g);
    if (!v.pin_channels.empty())
      need = need / v.pin_channels.size() * g.channels + (std::uint64_t{g.channels} << g.row_offset_bits);
    const std::uint64_t bytes = std::max<std::uint64_t>(page, (need + page - 1) / page * page);
    if (cursor + bytes > limit)
      throw ConfigError("vms", "VM memory regions exceed the simulated physical address range");
    out.push_back(Region{cursor, bytes});
    cursor += bytes;
  }
  return out;
}

bool needs_slices(const WorkloadSpec& w)
{
  return w.kind == WorkloadKind::llc_cleanse || w.kind == WorkloadKind::adaptive_llc_cleanse;
}

bool needs_dram(const WorkloadSpec& w)
{
  return (w.kind == WorkloadKind::mem_flood && w.mode == FloodMode::targeted) ||
         w.kind == WorkloadKind::adaptive_mem_flood;
}

/// Attacker preparation on a quiescent machine with the same topology and seed.
ProbeResult prepare(const ScenarioConfig& cfg, const Region& r, bool slices, bool dram)
{
  static std::mutex mu;
  static std::map<std::string, ProbeResult> memo;
  const std::string key = topology_json(cfg.topology).dump() + "|" + std::to_string(cfg.seed) + "|" +
                          std::to_string(r.base) + "|" + std::to_string(r.bytes) + "|" + std::to_string(slices) +
                          std::to_string(dram);
  {
    std::lock_guard lock(mu);
    if (auto it = memo.find(key); it != memo.end())
      return it->second;
  }
  Simulator quiet(build_topology(cfg.topology, cfg.seed));
  const VmId vm = quiet.add_vm(VmConfig{2, 0, 0});
  ProbeInterface probe(quiet, vm, r.base, r.bytes);
  ProbeOptions opt;
  opt.slices = slices;
  opt.dram = dram;
  ProbeResult res = run_probes(probe, opt);
  std::lock_guard lock(mu);
  memo.emplace(key, res);
  return res;
}

nlohmann::json oracle_check(const MemoryTopology& topo, const ProbeResult& p)
{
  nlohmann::json j;
  const TopologyConfig& c = topo.config();
  std::vector<unsigned> bank = c.bank_bit_positions;
  std::vector<unsigned> chan = c.channel_bit_positions;
  std::sort(bank.begin(), bank.end());
  std::sort(chan.begin(), chan.end());
  if (!p.bank_bits.empty() || !p.channel_bits.empty()) {
    j["bank_bits_exact"] = p.bank_bits == bank;
    j["channel_bits_exact"] = p.channel_bits == chan;
  }
  if (p.slice_groups) {
    std::size_t impure = 0;
    const EvictionBuffer& b = *p.slice_groups;
    for (std::uint32_t s = 0; s < b.sets; ++s)
      for (std::uint32_t l = 0; l < b.slices; ++l) {
        const auto& grp = b.group(s, l);
        const PlacementInfo first = resolve(topo, grp.front());
        for (Addr a : grp) {
          const PlacementInfo pi = resolve(topo, a);
          if (pi.set_index != s || pi.slice_index != first.slice_index) {
            ++impure;
            break;
          }
        }
      }
    j["slice_groups_complete"] = b.complete();
    j["impure_groups"] = impure;
  }
  return j;
}

struct RawRun {
  std::vector<VmCounters> counters;
  std::vector<std::vector<std::uint64_t>> series; // per VM
  std::vector<std::uint64_t> at_measure;           // completed ops at measure_from
  DefenseStats defense;
  std::vector<std::pair<std::string, ProbeResult>> probes;
  std::vector<std::shared_ptr<DiscoveryLog>> discovery;
  nlohmann::json oracle = nlohmann::json::object();
  Trace trace;
};

RawRun execute(const ScenarioConfig& cfg, const std::vector<Region>& regions, bool trace_on, bool oracle_on)
{
  RawRun out;
  const MemoryTopology topo = build_topology(cfg.topology, cfg.seed);
  const PublicGeometry g = topo.public_geometry();
  const double cpm = static_cast<double>(cfg.topology.cycles_per_ms);
  auto cycles = [&](double ms) { return static_cast<Cycle>(std::llround(ms * cpm)); };
  Trace* trace = trace_on ? &out.trace : nullptr;

  Simulator sim(topo);
  std::vector<VmId> ids;
  for (const VmSpec& v : cfg.vms)
    ids.push_back(sim.add_vm(VmConfig{v.vcpus, v.package, cycles(v.start_ms)}));

  out.discovery.resize(cfg.vms.size());
  const std::uint64_t row = std::uint64_t{1} << g.row_offset_bits;
  for (std::size_t i = 0; i < cfg.vms.size(); ++i) {
    const VmSpec& v = cfg.vms[i];
    WorkloadSpec spec = v.workload;
    const bool sl = needs_slices(spec);
    const bool dr = needs_dram(spec);
    if (sl || dr) {
      ProbeResult p = prepare(cfg, regions[i], sl, dr);
      if (sl) {
        spec.eviction = p.slice_groups;
        spec.conflict_threshold = p.calibration.conflict_threshold();
      }
      if (dr)
        spec.channel_bits = p.channel_bits;
      if (trace)
        trace->add(0, "probe_result", ids[i], to_json(p));
      if (oracle_on)
        out.oracle[v.vm_id] = oracle_check(topo, p);
      out.probes.emplace_back(v.vm_id, std::move(p));
    }
    WorkloadContext ctx;
    ctx.base = regions[i].base;
    ctx.region_bytes = regions[i].bytes;
    ctx.geometry = g;
    ctx.seed = mix64(cfg.seed * 0x100000001b3ULL + i);
    ctx.vcpus = v.vcpus;
    if (!v.pin_channels.empty()) {
      for (Addr a = ctx.base; a + row <= ctx.base + ctx.region_bytes; a += row)
        if (std::find(v.pin_channels.begin(), v.pin_channels.end(), resolve(topo, a).channel_index) !=
            v.pin_channels.end())
          ctx.rows.push_back(a);
    }
    WorkloadInstance inst = instantiate(spec, ctx);
    out.discovery[i] = inst.log;
    for (std::size_t t = 0; t < inst.streams.size(); ++t)
      sim.bind_workload(ids[i], static_cast<VcpuId>(t), std::move(inst.streams[t]));
  }

  Driver driver(sim);
  out.series.resize(cfg.vms.size());
  driver.every(cycles(cfg.report.series_interval_ms), [&](Cycle) {
    for (std::size_t i = 0; i < ids.size(); ++i)
      out.series[i].push_back(sim.read_counters(ids[i]).completed_ops);
  });
  out.at_measure.assign(cfg.vms.size(), 0);
  if (cfg.report.measure_from_ms > 0) {
    auto fired = std::make_shared<bool>(false);
    driver.every(cycles(cfg.report.measure_from_ms), [&, fired](Cycle) {
      if (*fired)
        return;
      *fired = true;
      for (std::size_t i = 0; i < ids.size(); ++i)
        out.at_measure[i] = sim.read_counters(ids[i]).completed_ops;
    });
  }

  const Cycle end = cycles(cfg.duration_ms);
  if (cfg.defense.enabled) {
    VmId prot = 0;
    std::vector<VmId> co;
    for (std::size_t i = 0; i < cfg.vms.size(); ++i) {
      if (cfg.vms[i].role == Role::protected_vm)
        prot = ids[i];
      else
        co.push_back(ids[i]);
    }
    driver.run_until(std::min(end, cycles(cfg.defense.start_ms)));
    Defense defense(driver, prot, co, cfg.defense.schedule, cfg.seed, trace);
    defense.run_monitor(end);
    out.defense = defense.stats();
  } else {
    driver.run_until(end);
  }

  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.counters.push_back(sim.read_counters(ids[i]));
    const auto& log = out.discovery[i];
    if (trace && log && log->complete) {
      nlohmann::json p = {{"stage", "discover"}, {"rounds", log->rounds}};
      if (cfg.vms[i].workload.kind == WorkloadKind::adaptive_llc_cleanse)
        p["victim_groups"] = log->victim_groups.size();
      else {
        p["hot_channels"] = log->hot_channels;
        p["channel_times"] = log->channel_times;
      }
      trace->add(static_cast<double>(log->completed_at) / cpm, "probe_result", ids[i], p);
    }
  }
  return out;
}

ScenarioConfig baseline_variant(const ScenarioConfig& cfg)
{
  ScenarioConfig b = cfg;
  switch (cfg.report.baseline) {
  case Baseline::attackers_idle:
    for (VmSpec& v : b.vms)
      if (v.role == Role::attacker)
        v.workload = idle_workload();
    break;
  case Baseline::isolated:
    for (VmSpec& v : b.vms)
      if (v.role != Role::protected_vm)
        v.workload = idle_workload();
    break;
  case Baseline::defense_disabled:
    b.defense.enabled = false;
    break;
  case Baseline::none:
    break;
  }
  return b;
}

double window_rate(const std::vector<std::uint64_t>& series, std::size_t from_tick, double interval_ms)
{
  // series[k] is the cumulative count at (k + 1) * interval.
  if (series.empty() || from_tick + 1 >= series.size())
    return -1;
  const std::size_t last = series.size() - 1;
  return static_cast<double>(series[last] - series[from_tick]) / (static_cast<double>(last - from_tick) * interval_ms);
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

} // namespace

// ---------------------------------------------------------------- public API

const char* to_string(Role role)
{
  switch (role) {
  case Role::protected_vm:
    return "protected";
  case Role::benign:
    return "benign";
  case Role::attacker:
    return "attacker";
  }
  return "unknown";
}

const char* to_string(Baseline baseline)
{
  switch (baseline) {
  case Baseline::attackers_idle:
    return "attackers_idle";
  case Baseline::isolated:
    return "isolated";
  case Baseline::defense_disabled:
    return "defense_disabled";
  case Baseline::none:
    return "none";
  }
  return "unknown";
}

std::uint64_t parse_bytes(const std::string& text)
{
  std::size_t pos = 0;
  const std::string s = text;
  while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos])))
    ++pos;
  if (pos == 0)
    throw std::invalid_argument("byte size must start with digits: '" + text + "'");
  const std::uint64_t n = std::stoull(s.substr(0, pos));
  std::string unit = s.substr(pos);
  unit.erase(std::remove(unit.begin(), unit.end(), ' '), unit.end());
  std::uint64_t mult = 1;
  if (unit.empty() || unit == "B")
    mult = 1;
  else if (unit == "KB" || unit == "KiB" || unit == "K")
    mult = 1ULL << 10;
  else if (unit == "MB" || unit == "MiB" || unit == "M")
    mult = 1ULL << 20;
  else if (unit == "GB" || unit == "GiB" || unit == "G")
    mult = 1ULL << 30;
  else
    throw std::invalid_argument("unknown byte unit '" + unit + "'");
  return n * mult;
}

void ScenarioConfig::validate() const
{
  topology.validate();
  if (!(duration_ms > 0))
    throw ConfigError("duration_ms", "must be positive");
  if (vms.empty())
    throw ConfigError("vms", "at least one VM is required");
  std::set<std::string> seen;
  std::uint32_t vcpus = 0;
  std::size_t protected_count = 0;
  for (std::size_t i = 0; i < vms.size(); ++i) {
    const VmSpec& v = vms[i];
    const std::string w = "vms[" + std::to_string(i) + "]";
    if (v.vm_id.empty())
      throw ConfigError("vm_id", w + " has an empty vm_id");
    if (!seen.insert(v.vm_id).second)
      throw ConfigError("vm_id", "duplicate vm_id '" + v.vm_id + "'");
    if (v.vcpus < 1)
      throw ConfigError(w + ".vcpus", "must be at least 1");
    vcpus += v.vcpus;
    if (v.package >= topology.packages)
      throw ConfigError(w + ".package", "package does not exist");
    if (v.start_ms < 0 || v.start_ms >= duration_ms)
      throw ConfigError(w + ".start_ms", "start time must lie in [0, duration_ms)");
    v.workload.validate(topology.line_size);
    if (v.workload.threads > v.vcpus)
      throw ConfigError(w + ".workload.threads", "threads exceed the VM's vCPUs");
    if (needs_dram(v.workload) && v.vcpus < 2)
      throw ConfigError(w + ".vcpus", "channel discovery needs at least two vCPUs");
    for (std::uint32_t c : v.pin_channels)
      if (c >= topology.channels)
        throw ConfigError(w + ".pin_channels", "channel out of range");
    if (v.workload.kind == WorkloadKind::mem_flood && v.workload.mode == FloodMode::targeted)
      for (std::uint32_t c : v.workload.channels)
        if (c >= topology.channels)
          throw ConfigError(w + ".workload.channels", "channel group out of range");
    if (v.role == Role::protected_vm)
      ++protected_count;
  }
  if (vcpus > 64)
    throw ConfigError("vms", "at most 64 vCPUs in total");
  if (defense.enabled) {
    if (protected_count != 1)
      throw ConfigError("role", "defense needs exactly one protected VM, found " + std::to_string(protected_count));
    defense.schedule.validate();
    if (defense.start_ms < 0 || defense.start_ms >= duration_ms)
      throw ConfigError("defense.start_ms", "must lie in [0, duration_ms)");
  }
  if (!(report.series_interval_ms > 0))
    throw ConfigError("report.series_interval_ms", "must be positive");
  if (report.measure_from_ms < 0 || report.measure_from_ms >= duration_ms)
    throw ConfigError("report.measure_from_ms", "must lie in [0, duration_ms)");
  if (report.settle_ms < 0)
    throw ConfigError("report.settle_ms", "must be non-negative");
}

const VmSpec& ScenarioConfig::vm(const std::string& id) const
{
  for (const VmSpec& v : vms)
    if (v.vm_id == id)
      return v;
  throw ConfigError("vm_id", "no VM named '" + id + "'");
}

VmSpec& ScenarioConfig::vm(const std::string& id)
{
  return const_cast<VmSpec&>(std::as_const(*this).vm(id));
}

ScenarioConfig parse_scenario(const std::string& yaml_text)
{
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("yaml", e.what());
  }
  if (!root || !root.IsMap())
    throw ConfigError("yaml", "scenario must be a mapping");
  only_keys(root, "", {"name", "seed", "duration_ms", "topology", "vms", "defense", "report", "oracle_checks"});
  ScenarioConfig c;
  read(root, "name", c.name, "");
  read(root, "seed", c.seed, "");
  read(root, "duration_ms", c.duration_ms, "");
  read(root, "oracle_checks", c.oracle_checks, "");
  c.topology = parse_topology(root["topology"]);

  const YAML::Node vms = root["vms"];
  if (!vms || !vms.IsSequence())
    throw ConfigError("vms", "expected a list of VMs");
  for (std::size_t i = 0; i < vms.size(); ++i) {
    const std::string w = "vms[" + std::to_string(i) + "]";
    only_keys(vms[i], w, {"vm_id", "vcpus", "role", "package", "start_ms", "workload", "pin_channels"});
    VmSpec v;
    read(vms[i], "vm_id", v.vm_id, w);
    read(vms[i], "vcpus", v.vcpus, w);
    if (vms[i]["role"])
      v.role = parse_role(vms[i]["role"].as<std::string>(), w + ".role");
    read(vms[i], "package", v.package, w);
    read(vms[i], "start_ms", v.start_ms, w);
    read(vms[i], "pin_channels", v.pin_channels, w);
    v.workload = parse_workload(vms[i]["workload"], w + ".workload");
    c.vms.push_back(std::move(v));
  }

  if (const YAML::Node d = root["defense"]) {
    const std::string w = "defense";
    only_keys(d, w,
              {"enabled", "start_ms", "w_r_ms", "w_m_ms", "l_m_ms", "l_r_ms", "jitter_fraction", "samples",
               "sub_window_ms", "alpha", "consecutive_k", "reference_throttle", "mitigation_throttle", "metric"});
    c.defense.enabled = true;
    read(d, "enabled", c.defense.enabled, w);
    read(d, "start_ms", c.defense.start_ms, w);
    MonitorSchedule& s = c.defense.schedule;
    read(d, "w_r_ms", s.w_r_ms, w);
    read(d, "w_m_ms", s.w_m_ms, w);
    read(d, "l_m_ms", s.l_m_ms, w);
    read(d, "l_r_ms", s.l_r_ms, w);
    read(d, "jitter_fraction", s.jitter_fraction, w);
    read(d, "samples", s.samples, w);
    read(d, "sub_window_ms", s.sub_window_ms, w);
    read(d, "alpha", s.alpha, w);
    read(d, "consecutive_k", s.consecutive_k, w);
    read(d, "reference_throttle", s.reference_throttle, w);
    read(d, "mitigation_throttle", s.mitigation_throttle, w);
    if (d["metric"]) {
      const auto m = d["metric"].as<std::string>();
      if (m == "llc_accesses")
        s.metric = Metric::llc_accesses;
      else if (m == "bytes")
        s.metric = Metric::bytes;
      else
        throw ConfigError("defense.metric", "must be llc_accesses or bytes");
    }
  }
  if (const YAML::Node r = root["report"]) {
    only_keys(r, "report", {"baseline", "series_interval_ms", "measure_from_ms", "settle_ms"});
    if (r["baseline"])
      c.report.baseline = parse_baseline(r["baseline"].as<std::string>());
    read(r, "series_interval_ms", c.report.series_interval_ms, "report");
    read(r, "measure_from_ms", c.report.measure_from_ms, "report");
    read(r, "settle_ms", c.report.settle_ms, "report");
  }
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::string& path)
{
  std::ifstream f(path);
  if (!f)
    throw ConfigError("path", "cannot open scenario file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_scenario(ss.str());
}

std::optional<double> VmReport::throughput_loss() const
{
  if (!baseline_throughput || *baseline_throughput <= 0)
    return std::nullopt;
  return 1.0 - throughput / *baseline_throughput;
}

const VmReport& Report::vm(const std::string& id) const
{
  for (const VmReport& v : vms)
    if (v.vm_id == id)
      return v;
  throw RuntimeError("report has no VM named '" + id + "'");
}

bool Report::correct_identification() const
{
  std::vector<std::string> a = identified;
  std::vector<std::string> b = ground_truth;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

Report run_scenario(const ScenarioConfig& config, const RunOptions& options)
{
  config.validate();
  const PublicGeometry g = build_topology(config.topology, config.seed).public_geometry();
  const std::vector<Region> regions = layout_regions(config, g);
  const bool oracle_on = options.oracle || config.oracle_checks;
  RawRun run = execute(config, regions, options.trace, oracle_on);

  std::optional<RawRun> base;
  if (options.with_baseline && config.report.baseline != Baseline::none)
    base = execute(baseline_variant(config), regions, false, false);

  Report r;
  r.scenario = config.name;
  r.seed = config.seed;
  r.duration_ms = config.duration_ms;
  r.baseline = options.with_baseline ? config.report.baseline : Baseline::none;
  r.defense_enabled = config.defense.enabled;
  r.defense = run.defense;
  r.series_interval_ms = config.report.series_interval_ms;
  r.series = run.series;
  r.probes = std::move(run.probes);
  r.oracle = std::move(run.oracle);
  r.trace = std::move(run.trace);

  const double span = config.duration_ms - config.report.measure_from_ms;
  std::optional<std::size_t> settle_tick;
  if (run.defense.mitigated_ms) {
    const double from = *run.defense.mitigated_ms + config.report.settle_ms;
    settle_tick = static_cast<std::size_t>(std::ceil(from / config.report.series_interval_ms)) - 1;
  }
  for (std::size_t i = 0; i < config.vms.size(); ++i) {
    const VmSpec& v = config.vms[i];
    VmReport vr;
    vr.vm_id = v.vm_id;
    vr.role = v.role;
    vr.kind = v.workload.kind;
    vr.counters = run.counters[i];
    vr.discovery = run.discovery[i];
    vr.throughput = static_cast<double>(run.counters[i].completed_ops - run.at_measure[i]) / span;
    if (base) {
      vr.baseline_throughput = static_cast<double>(base->counters[i].completed_ops - base->at_measure[i]) / span;
      if (vr.throughput > 0)
        vr.slowdown = *vr.baseline_throughput / vr.throughput;
      if (settle_tick) {
        const double a = window_rate(run.series[i], *settle_tick, r.series_interval_ms);
        const double b = window_rate(base->series[i], *settle_tick, r.series_interval_ms);
        if (a > 0 && b >= 0)
          vr.post_mitigation_slowdown = b / a;
      }
    }
    r.vms.push_back(std::move(vr));
    if (v.role == Role::attacker && v.workload.kind != WorkloadKind::idle)
      r.ground_truth.push_back(v.vm_id);
  }
  for (VmId id : run.defense.identified)
    r.identified.push_back(config.vms[id].vm_id);
  for (const auto& id : r.identified)
    (std::find(r.ground_truth.begin(), r.ground_truth.end(), id) != r.ground_truth.end() ? r.tp : r.fp) += 1;
  for (const auto& id : r.ground_truth)
    if (std::find(r.identified.begin(), r.identified.end(), id) == r.identified.end())
      ++r.fn;
  return r;
}

nlohmann::json Report::to_json() const
{
  nlohmann::json j;
  j["scenario"] = scenario;
  j["seed"] = seed;
  j["duration_ms"] = duration_ms;
  j["baseline"] = to_string(baseline);
  nlohmann::json vj = nlohmann::json::array();
  for (const VmReport& v : vms) {
    nlohmann::json e = {{"vm_id", v.vm_id},
                        {"role", to_string(v.role)},
                        {"workload", to_string(v.kind)},
                        {"throughput_ops_per_ms", v.throughput},
                        {"baseline_throughput_ops_per_ms", opt_json(v.baseline_throughput)},
                        {"slowdown", opt_json(v.slowdown)},
                        {"post_mitigation_slowdown", opt_json(v.post_mitigation_slowdown)},
                        {"counters",
                         {{"issued_ops", v.counters.issued_ops},
                          {"completed_ops", v.counters.completed_ops},
                          {"llc_accesses", v.counters.llc_accesses},
                          {"llc_misses", v.counters.llc_misses},
                          {"dram_requests", v.counters.dram_requests},
                          {"bytes_transferred", v.counters.bytes_transferred}}}};
    if (v.discovery) {
      e["discovery"] = {{"complete", v.discovery->complete},
                        {"rounds", v.discovery->rounds},
                        {"victim_groups", v.discovery->victim_groups.size()},
                        {"hot_channels", v.discovery->hot_channels},
                        {"channel_times", v.discovery->channel_times}};
    }
    vj.push_back(std::move(e));
  }
  j["vms"] = std::move(vj);

  nlohmann::json d;
  d["enabled"] = defense_enabled;
  if (defense_enabled) {
    d["timeline"] = {{"suspected_ms", opt_json(defense.first_suspected_ms)},
                     {"identified_ms", opt_json(defense.identified_ms)},
                     {"mitigated_ms", opt_json(defense.mitigated_ms)}};
    nlohmann::json phases = nlohmann::json::array();
    for (const auto& [t, p] : defense.phase_log)
      phases.push_back({{"time_ms", t}, {"phase", p}});
    d["phases"] = std::move(phases);
    d["identified"] = identified;
    d["ground_truth"] = ground_truth;
    d["tp"] = tp;
    d["fp"] = fp;
    d["fn"] = fn;
    d["correct_identification"] = correct_identification();
    d["split_rounds"] = defense.split_rounds;
    d["check_rounds"] = defense.check_rounds;
    d["suspected_events"] = defense.suspected_events;
    d["monitor_rejects"] = defense.monitor_rejects;
    d["reference_windows"] = defense.reference_windows;
    d["monitored_windows"] = defense.monitored_windows;
    nlohmann::json ks = nlohmann::json::array();
    for (const KsRecord& k : defense.ks)
      ks.push_back({{"time_ms", k.time_ms},
                    {"D", k.decision.statistic},
                    {"critical", k.decision.critical},
                    {"verdict", k.decision.verdict()},
                    {"purpose", k.purpose}});
    d["ks_series"] = std::move(ks);
  }
  j["defense"] = std::move(d);

  nlohmann::json s = {{"interval_ms", series_interval_ms}};
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t i = 0; i < vms.size() && i < series.size(); ++i)
    per[vms[i].vm_id] = series[i];
  s["completed_ops"] = std::move(per);
  j["series"] = std::move(s);

  nlohmann::json pj = nlohmann::json::object();
  for (const auto& [id, p] : probes)
    pj[id] = memdos::to_json(p);
  j["probes"] = std::move(pj);
  if (!oracle.is_null() && !oracle.empty())
    j["oracle"] = oracle;
  return j;
}

SweepReport sweep(const ScenarioConfig& config, const std::vector<std::uint64_t>& seeds, const RunOptions& options)
{
  if (seeds.empty())
    throw ConfigError("seeds", "sweep needs at least one seed");
  SweepReport s;
  std::map<std::string, std::vector<double>> slow;
  for (std::uint64_t seed : seeds) {
    ScenarioConfig c = config;
    c.seed = seed;
    Report r = run_scenario(c, options);
    for (const VmReport& v : r.vms)
      if (v.slowdown)
        slow[v.vm_id].push_back(*v.slowdown);
    s.runs.push_back(std::move(r));
  }
  const auto n = static_cast<double>(s.runs.size());
  for (const Report& r : s.runs) {
    s.tp_rate += r.correct_identification() ? 1 : 0;
    s.fp_rate += r.suspected() ? 1 : 0;
    s.single_test_fp_rate += r.single_test_alarm() ? 1 : 0;
  }
  s.tp_rate /= n;
  s.fp_rate /= n;
  s.single_test_fp_rate /= n;
  for (const auto& [id, xs] : slow) {
    double mean = 0;
    for (double x : xs)
      mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0;
    for (double x : xs)
      var += (x - mean) * (x - mean);
    const double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
    s.slowdown[id] = {mean, sd};
  }
  return s;
}

nlohmann::json SweepReport::to_json() const
{
  nlohmann::json j;
  j["runs"] = runs.size();
  j["tp_rate"] = tp_rate;
  j["fp_rate"] = fp_rate;
  j["single_test_fp_rate"] = single_test_fp_rate;
  nlohmann::json sd = nlohmann::json::object();
  for (const auto& [id, ms] : slowdown)
    sd[id] = {{"mean", ms.first}, {"stddev", ms.second}};
  j["slowdown"] = std::move(sd);
  nlohmann::json per = nlohmann::json::array();
  for (const Report& r : runs) {
    nlohmann::json e = {{"seed", r.seed},
                        {"suspected", r.suspected()},
                        {"single_test_alarm", r.single_test_alarm()},
                        {"correct_identification", r.correct_identification()},
                        {"identified", r.identified}};
    nlohmann::json sl = nlohmann::json::object();
    for (const VmReport& v : r.vms)
      sl[v.vm_id] = opt_json(v.slowdown);
    e["slowdown"] = std::move(sl);
    per.push_back(std::move(e));
  }
  j["per_seed"] = std::move(per);
  return j;
}

void export_trace(const Report& report, const std::string& path) { report.trace.write(path); }

std::size_t replay_mismatches(const Trace& trace)
{
  std::map<std::uint64_t, std::vector<double>> windows;
  for (const TraceRecord& r : trace.records()) {
    if (r.kind != "counter_sample")
      continue;
    auto& w = windows[r.payload.at("window_id").get<std::uint64_t>()];
    const auto idx = r.payload.at("index").get<std::size_t>();
    if (w.size() <= idx)
      w.resize(idx + 1, 0.0);
    w[idx] = r.payload.at("value").get<double>();
  }
  std::size_t bad = 0;
  for (const TraceRecord& r : trace.records()) {
    if (r.kind != "ks_decision")
      continue;
    const auto m = windows.find(r.payload.at("monitored_window").get<std::uint64_t>());
    const auto ref = windows.find(r.payload.at("reference_window").get<std::uint64_t>());
    if (m == windows.end() || ref == windows.end()) {
      ++bad;
      continue;
    }
    const double d = ks_statistic(std::span<const double>(m->second), std::span<const double>(ref->second));
    if (d != r.payload.at("D").get<double>())
      ++bad;
  }
  return bad;
}

nlohmann::json summarize_trace(const Trace& trace)
{
  nlohmann::json j;
  std::map<std::string, std::size_t> kinds;
  std::size_t rejects = 0;
  double first = 0;
  double last = 0;
  bool monotone = true;
  nlohmann::json phases = nlohmann::json::array();
  for (std::size_t i = 0; i < trace.records().size(); ++i) {
    const TraceRecord& r = trace.records()[i];
    ++kinds[r.kind];
    if (i == 0)
      first = r.time_ms;
    else if (r.time_ms < last)
      monotone = false;
    last = r.time_ms;
    if (r.kind == "ks_decision" && r.payload.value("verdict", "") == "reject")
      ++rejects;
    if (r.kind == "phase_change")
      phases.push_back({{"time_ms", r.time_ms}, {"to", r.payload.value("to", "")}});
  }
  j["records"] = trace.records().size();
  j["kinds"] = kinds;
  j["ks_rejects"] = rejects;
  j["first_ms"] = first;
  j["last_ms"] = last;
  j["timestamps_monotone"] = monotone;
  j["phase_changes"] = std::move(phases);
  j["replay_mismatches"] = replay_mismatches(trace);
  return j;
}

} // namespace memdos
