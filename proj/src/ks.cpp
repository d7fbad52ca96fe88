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

#include "memdos/ks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace memdos
{
namespace
{
void check(std::span<const double> v, const char* what)
{
  if (v.empty())
    throw std::invalid_argument(std::string(what) + ": empty sample");
  for (double x : v)
    if (!std::isfinite(x))
      throw std::invalid_argument(std::string(what) + ": non-finite value");
}
} // namespace

void SampleWindow::validate() const
{
  if (values.size() < 2)
    throw std::invalid_argument("sample window needs at least two values");
  for (double v : values)
    if (!std::isfinite(v) || v < 0)
      throw std::invalid_argument("sample window values must be finite and non-negative");
}

Ecdf::Ecdf(std::vector<double> values) : sorted_(std::move(values))
{
  check(sorted_, "ecdf");
  std::sort(sorted_.begin(), sorted_.end());
}

double Ecdf::operator()(double x) const
{
  const auto k = std::upper_bound(sorted_.begin(), sorted_.end(), x) - sorted_.begin();
  return static_cast<double>(k) / static_cast<double>(sorted_.size());
}

double Ecdf::left(double x) const
{
  const auto k = std::lower_bound(sorted_.begin(), sorted_.end(), x) - sorted_.begin();
  return static_cast<double>(k) / static_cast<double>(sorted_.size());
}

double ks_statistic(std::span<const double> a, std::span<const double> b)
{
  check(a, "ks_statistic");
  check(b, "ks_statistic");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const auto n = static_cast<double>(x.size());
  const auto m = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0;
  // Both ECDFs only jump at sample points; consuming every tie before
  // comparing evaluates F at the point and the previous step gives F(x-).
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v)
      ++i;
    while (j < y.size() && y[j] == v)
      ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  return d;
}

double ks_statistic(const SampleWindow& monitored, const SampleWindow& reference)
{
  monitored.validate();
  reference.validate();
  return ks_statistic(std::span<const double>(monitored.values), std::span<const double>(reference.values));
}

double ks_critical(std::size_t n_m, std::size_t n_r, double alpha)
{
  if (n_m < 1 || n_r < 1)
    throw std::invalid_argument("ks_critical: sample sizes must be >= 1");
  if (!(alpha > 0 && alpha < 1))
    throw std::invalid_argument("ks_critical: alpha must lie in (0, 1)");
  const auto a = static_cast<double>(n_m);
  const auto b = static_cast<double>(n_r);
  return std::sqrt((a + b) / (a * b)) * std::sqrt(-0.5 * std::log(alpha / 2));
}

KsDecision ks_decide(std::span<const double> monitored, std::span<const double> reference, double alpha)
{
  KsDecision k;
  k.alpha = alpha;
  k.critical = ks_critical(monitored.size(), reference.size(), alpha);
  k.statistic = ks_statistic(monitored, reference);
  k.reject = k.statistic > k.critical;
  return k;
}

KsDecision ks_decide(const SampleWindow& monitored, const SampleWindow& reference, double alpha)
{
  monitored.validate();
  reference.validate();
  return ks_decide(std::span<const double>(monitored.values), std::span<const double>(reference.values), alpha);
}

} // namespace memdos
