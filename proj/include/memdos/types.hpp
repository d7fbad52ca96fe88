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
#include <stdexcept>
#include <string>

namespace memdos
{
using Cycle = std::uint64_t;
using Addr = std::uint64_t;
using VmId = std::uint32_t;
using VcpuId = std::uint32_t;
using Ticket = std::uint64_t;

inline constexpr Cycle kNever = ~Cycle{0};

enum class OpKind : std::uint8_t { read, write };
enum class Cacheability : std::uint8_t { cached, uncached };
enum class Atomicity : std::uint8_t { none, aligned_atomic, unaligned_atomic, uncached_atomic };

struct MemOp {
  Addr address = 0;
  OpKind kind = OpKind::read;
  Cacheability cacheability = Cacheability::cached;
  Atomicity atomicity = Atomicity::none;

  /// Exotic atomics take the global bus lock instead of a cache-line lock.
  [[nodiscard]] bool locks_bus() const
  {
    return atomicity == Atomicity::unaligned_atomic || atomicity == Atomicity::uncached_atomic;
  }
  [[nodiscard]] bool uncached() const { return cacheability == Cacheability::uncached; }

  friend bool operator==(const MemOp&, const MemOp&) = default;
};

/// Duty-cycle ratio k/16, k in [1, 16].
class DutyRatio
{
public:
  static constexpr unsigned kDenominator = 16;

  constexpr DutyRatio() = default;
  explicit DutyRatio(unsigned sixteenths)
  {
    if (sixteenths < 1 || sixteenths > kDenominator)
      throw std::invalid_argument("duty ratio must be k/16 with k in [1,16], got k=" + std::to_string(sixteenths));
    k_ = sixteenths;
  }

  static DutyRatio full() { return DutyRatio{kDenominator}; }
  static DutyRatio minimum() { return DutyRatio{1}; }

  [[nodiscard]] constexpr unsigned sixteenths() const { return k_; }
  [[nodiscard]] constexpr double fraction() const { return static_cast<double>(k_) / kDenominator; }

  friend constexpr bool operator==(DutyRatio, DutyRatio) = default;
  friend constexpr auto operator<=>(DutyRatio, DutyRatio) = default;

private:
  unsigned k_ = kDenominator;
};

/// Invalid configuration; `field()` names the violated clause or key.
class ConfigError : public std::runtime_error
{
public:
  ConfigError(std::string field, const std::string& what) : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  [[nodiscard]] const std::string& field() const { return field_; }

private:
  std::string field_;
};

/// Failure while running a simulation, a probe, or the defense pipeline.
class RuntimeError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

} // namespace memdos
