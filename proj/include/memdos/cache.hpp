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
#include <optional>
#include <vector>

#include "memdos/types.hpp"

namespace memdos
{
/// Set-associative, true-LRU tag store keyed by line address. Each line carries
/// a sharer mask so an inclusive level can back-invalidate private copies.
class SetAssocCache
{
public:
  struct Line {
    Addr line = 0;
    std::uint64_t stamp = 0;
    std::uint64_t sharers = 0;
    bool valid = false;
  };

  SetAssocCache() = default;
  SetAssocCache(std::uint32_t sets, std::uint32_t ways);

  [[nodiscard]] std::uint32_t sets() const { return sets_; }
  [[nodiscard]] std::uint32_t ways() const { return ways_; }

  /// Returns the matching line (and refreshes its LRU position when `touch`).
  Line* find(std::uint32_t set, Addr line, bool touch = true);
  [[nodiscard]] const Line* peek(std::uint32_t set, Addr line) const;

  /// Inserts `line` as MRU; returns the evicted valid line, if any.
  std::optional<Line> insert(std::uint32_t set, Addr line, std::uint64_t sharers = 0);

  bool invalidate(std::uint32_t set, Addr line);

  /// Lines of one set ordered from LRU to MRU.
  [[nodiscard]] std::vector<Addr> contents(std::uint32_t set) const;
  [[nodiscard]] std::size_t occupancy() const;

private:
  std::uint32_t sets_ = 0;
  std::uint32_t ways_ = 0;
  std::uint64_t clock_ = 0;
  std::vector<Line> lines_;
};

} // namespace memdos
