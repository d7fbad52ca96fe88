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

// Ground-truth address placement. Test and `--oracle` builds only: attacker-side
// code (reverse_map, workloads) must never include this header.

#include <cstdint>

#include "memdos/topology.hpp"

namespace memdos
{
struct PlacementInfo {
  std::uint32_t set_index;
  std::uint32_t slice_index;
  std::uint32_t bank_index;
  std::uint32_t channel_index;

  friend bool operator==(const PlacementInfo&, const PlacementInfo&) = default;
};

/// Throws std::out_of_range for addresses beyond the simulated physical range.
PlacementInfo resolve(const MemoryTopology& topology, Addr address);

} // namespace memdos
