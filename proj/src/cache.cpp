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

#include "memdos/cache.hpp"

#include <algorithm>

namespace memdos
{
SetAssocCache::SetAssocCache(std::uint32_t sets, std::uint32_t ways)
    : sets_(sets), ways_(ways), lines_(std::size_t{sets} * ways)
{
}

SetAssocCache::Line* SetAssocCache::find(std::uint32_t set, Addr line, bool touch)
{
  Line* base = &lines_[std::size_t{set} * ways_];
  for (std::uint32_t w = 0; w < ways_; ++w) {
    if (base[w].valid && base[w].line == line) {
      if (touch)
        base[w].stamp = ++clock_;
      return &base[w];
    }
  }
  return nullptr;
}

const SetAssocCache::Line* SetAssocCache::peek(std::uint32_t set, Addr line) const
{
  const Line* base = &lines_[std::size_t{set} * ways_];
  for (std::uint32_t w = 0; w < ways_; ++w)
    if (base[w].valid && base[w].line == line)
      return &base[w];
  return nullptr;
}

std::optional<SetAssocCache::Line> SetAssocCache::insert(std::uint32_t set, Addr line, std::uint64_t sharers)
{
  Line* base = &lines_[std::size_t{set} * ways_];
  Line* victim = base;
  for (std::uint32_t w = 0; w < ways_; ++w) {
    if (!base[w].valid) {
      victim = &base[w];
      break;
    }
    if (base[w].stamp < victim->stamp)
      victim = &base[w];
  }
  std::optional<Line> evicted;
  if (victim->valid)
    evicted = *victim;
  *victim = Line{line, ++clock_, sharers, true};
  return evicted;
}

bool SetAssocCache::invalidate(std::uint32_t set, Addr line)
{
  if (Line* l = find(set, line, false)) {
    l->valid = false;
    return true;
  }
  return false;
}

std::vector<Addr> SetAssocCache::contents(std::uint32_t set) const
{
  std::vector<const Line*> live;
  const Line* base = &lines_[std::size_t{set} * ways_];
  for (std::uint32_t w = 0; w < ways_; ++w)
    if (base[w].valid)
      live.push_back(&base[w]);
  std::sort(live.begin(), live.end(), [](const Line* a, const Line* b) { return a->stamp < b->stamp; });
  std::vector<Addr> out;
  out.reserve(live.size());
  for (const Line* l : live)
    out.push_back(l->line);
  return out;
}

std::size_t SetAssocCache::occupancy() const
{
  return static_cast<std::size_t>(std::count_if(lines_.begin(), lines_.end(), [](const Line& l) { return l.valid; }));
}

} // namespace memdos
