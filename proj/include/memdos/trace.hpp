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
#include <string>
#include <vector>

#include <json.hpp>

#include "memdos/types.hpp"

namespace memdos
{
struct TraceRecord {
  double time_ms = 0;
  std::string kind; // counter_sample | ks_decision | phase_change | duty_change | probe_result
  std::optional<VmId> vm;
  nlohmann::json payload;
};

/// In-memory event log, exported as one JSON object per line.
class Trace
{
public:
  void add(double time_ms, std::string kind, std::optional<VmId> vm, nlohmann::json payload);
  [[nodiscard]] const std::vector<TraceRecord>& records() const { return records_; }
  [[nodiscard]] bool empty() const { return records_.empty(); }

  /// Records ordered by time (stable for equal times).
  [[nodiscard]] std::string to_jsonl() const;
  void write(const std::string& path) const;
  static Trace parse(const std::string& text);
  static Trace read(const std::string& path);

private:
  std::vector<TraceRecord> records_;
};

} // namespace memdos
