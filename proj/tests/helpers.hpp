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

#include <memory>
#include <string>

#include "memdos/scenario.hpp"
#include "memdos/simulator.hpp"
#include "memdos/topology.hpp"
#include "memdos/workloads.hpp"

namespace memdos::test
{

// 4 slices x 8 ways x 128 sets; 16 KiB private caches.
inline TopologyConfig small_topology()
{
  TopologyConfig c;
  c.llc_slices = 4;
  c.llc_ways = 8;
  c.llc_sets_per_slice = 128;
  c.private_cache_bytes = 16 * 1024;
  c.private_ways = 4;
  c.cycles_per_ms = 1000;
  return c;
}

inline WorkloadContext context_for(const Simulator& sim, Addr base, std::uint64_t bytes, std::uint64_t seed,
                                   std::uint32_t vcpus = 1)
{
  WorkloadContext ctx;
  ctx.base = base;
  ctx.region_bytes = bytes;
  ctx.geometry = sim.topology().public_geometry();
  ctx.seed = seed;
  ctx.vcpus = vcpus;
  return ctx;
}

inline void bind(Simulator& sim, VmId vm, const WorkloadSpec& spec, const WorkloadContext& ctx)
{
  WorkloadInstance inst = instantiate(spec, ctx);
  for (std::size_t i = 0; i < inst.streams.size(); ++i)
    sim.bind_workload(vm, static_cast<VcpuId>(i), std::move(inst.streams[i]));
}

inline std::string scenario_path(const std::string& name)
{
  return std::string(MEMDOS_SCENARIO_DIR) + "/" + name + ".yaml";
}

} // namespace memdos::test
