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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace memdos
{
enum class WindowKind : std::uint8_t { reference, monitored };

/// n counter readings of the protected VM, one per sub-window.
struct SampleWindow {
  std::vector<double> values;
  WindowKind kind = WindowKind::monitored;
  double collected_ms = 0;
  /// Start cycle of the first sub-window (used to label trace records).
  std::uint64_t window_id = 0;

  /// Throws std::invalid_argument unless there are >= 2 finite, non-negative values.
  void validate() const;
};

/// Empirical distribution function: F(x) = #{v <= x} / n.
class Ecdf
{
public:
  explicit Ecdf(std::vector<double> values);

  double operator()(double x) const;
  /// Left limit F(x-) = #{v < x} / n.
  [[nodiscard]] double left(double x) const;
  [[nodiscard]] std::size_t size() const { return sorted_.size(); }

private:
  std::vector<double> sorted_;
};

struct KsDecision {
  double statistic = 0;
  double critical = 0;
  double alpha = 0;
  bool reject = false;

  [[nodiscard]] const char* verdict() const { return reject ? "reject" : "accept"; }
};

/// sup_x |F_a(x) - F_b(x)| evaluated exactly over the union of sample points.
double ks_statistic(std::span<const double> a, std::span<const double> b);
double ks_statistic(const SampleWindow& monitored, const SampleWindow& reference);

/// sqrt((n_m + n_r) / (n_m n_r)) * sqrt(-ln(alpha / 2) / 2).
double ks_critical(std::size_t n_m, std::size_t n_r, double alpha);

KsDecision ks_decide(const SampleWindow& monitored, const SampleWindow& reference, double alpha);
KsDecision ks_decide(std::span<const double> monitored, std::span<const double> reference, double alpha);

} // namespace memdos
