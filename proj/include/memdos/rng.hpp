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

#include <cmath>
#include <cstdint>
#include <random>

namespace memdos
{
/// mt19937_64 with distribution helpers whose output does not depend on the
/// standard library implementation.
class Rng
{
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n)
  {
    if (n <= 1)
      return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do
      x = engine_();
    while (x >= limit);
    return x % n;
  }

  /// Uniform real in [0, 1).
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double exponential(double mean) { return -mean * std::log1p(-unit()); }

  double normal(double mean, double stddev)
  {
    // Box-Muller; one draw per call keeps the stream position simple.
    const double u1 = 1.0 - unit();
    const double u2 = unit();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

private:
  std::mt19937_64 engine_;
};

} // namespace memdos
