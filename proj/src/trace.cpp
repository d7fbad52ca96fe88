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

#include "memdos/trace.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace memdos
{
void Trace::add(double time_ms, std::string kind, std::optional<VmId> vm, nlohmann::json payload)
{
  records_.push_back(TraceRecord{time_ms, std::move(kind), vm, std::move(payload)});
}

std::string Trace::to_jsonl() const
{
  std::vector<const TraceRecord*> order;
  order.reserve(records_.size());
  for (const auto& r : records_)
    order.push_back(&r);
  std::stable_sort(order.begin(), order.end(),
                   [](const TraceRecord* a, const TraceRecord* b) { return a->time_ms < b->time_ms; });
  std::string out;
  for (const TraceRecord* r : order) {
    nlohmann::ordered_json line;
    line["time_ms"] = r->time_ms;
    line["kind"] = r->kind;
    if (r->vm)
      line["vm_id"] = *r->vm;
    line["payload"] = r->payload;
    out += line.dump();
    out += '\n';
  }
  return out;
}

void Trace::write(const std::string& path) const
{
  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw RuntimeError("cannot open trace file '" + path + "' for writing");
  f << to_jsonl();
  if (!f)
    throw RuntimeError("failed writing trace file '" + path + "'");
}

Trace Trace::parse(const std::string& text)
{
  Trace t;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty())
      continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw RuntimeError("trace line " + std::to_string(n) + ": " + e.what());
    }
    if (!j.contains("time_ms") || !j.contains("kind") || !j.contains("payload"))
      throw RuntimeError("trace line " + std::to_string(n) + ": missing time_ms, kind or payload");
    std::optional<VmId> vm;
    if (j.contains("vm_id"))
      vm = j["vm_id"].get<VmId>();
    t.add(j["time_ms"].get<double>(), j["kind"].get<std::string>(), vm, j["payload"]);
  }
  return t;
}

Trace Trace::read(const std::string& path)
{
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw RuntimeError("cannot open trace file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

} // namespace memdos
