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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "memdos/scenario.hpp"

namespace fs = std::filesystem;

namespace
{

std::vector<std::uint64_t> parse_seed_range(const std::string& text)
{
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos)
      return {std::stoull(text)};
    const std::uint64_t a = std::stoull(text.substr(0, dots));
    const std::uint64_t b = std::stoull(text.substr(dots + 2));
    if (b < a)
      throw memdos::ConfigError("seeds", "empty range '" + text + "'");
    std::vector<std::uint64_t> out;
    for (std::uint64_t s = a; s <= b; ++s)
      out.push_back(s);
    return out;
  } catch (const std::logic_error&) {
    throw memdos::ConfigError("seeds", "expected A..B, got '" + text + "'");
  }
}

fs::path output_dir(const std::string& flag)
{
  if (!flag.empty())
    return flag;
  if (const char* env = std::getenv("MEMDOS_OUT_DIR"); env && *env)
    return env;
  return "out";
}

void write_json(const fs::path& path, const nlohmann::json& j)
{
  std::ofstream f(path);
  if (!f)
    throw memdos::RuntimeError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

std::string stem(const memdos::ScenarioConfig& c, const std::string& path)
{
  return c.name.empty() ? fs::path(path).stem().string() : c.name;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"memdos: shared-memory contention simulator, attacks and KS-based defense"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_flag;
  std::optional<std::uint64_t> seed;
  bool trace = false;
  bool oracle = false;
  bool no_baseline = false;

  auto* run = app.add_subcommand("run", "run one scenario and write a JSON report");
  run->add_option("scenario", scenario_path, "scenario YAML file")->required();
  run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--out", out_flag, "output directory (default $MEMDOS_OUT_DIR or ./out)");
  run->add_flag("--trace", trace, "write a JSON-lines trace next to the report");
  run->add_flag("--oracle", oracle, "check attacker discoveries against the hidden topology");
  run->add_flag("--no-baseline", no_baseline, "skip the baseline run");

  std::string seeds_text;
  auto* sw = app.add_subcommand("sweep", "run a scenario over a seed range and aggregate");
  sw->add_option("scenario", scenario_path, "scenario YAML file")->required();
  sw->add_option("--seeds", seeds_text, "seed range A..B")->required();
  sw->add_option("--out", out_flag, "output directory (default $MEMDOS_OUT_DIR or ./out)");
  sw->add_flag("--no-baseline", no_baseline, "skip baseline runs");

  std::string trace_path;
  auto* rep = app.add_subcommand("report", "summarize a trace and replay its KS decisions");
  rep->add_option("trace", trace_path, "trace file (.jsonl)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      memdos::ScenarioConfig cfg = memdos::load_scenario(scenario_path);
      if (seed)
        cfg.seed = *seed;
      memdos::RunOptions opt;
      opt.trace = trace;
      opt.oracle = oracle;
      opt.with_baseline = !no_baseline;
      const memdos::Report r = memdos::run_scenario(cfg, opt);
      const fs::path dir = output_dir(out_flag);
      fs::create_directories(dir);
      const std::string base = stem(cfg, scenario_path) + "-seed" + std::to_string(cfg.seed);
      write_json(dir / (base + ".report.json"), r.to_json());
      std::cout << "report: " << (dir / (base + ".report.json")).string() << '\n';
      if (trace) {
        memdos::export_trace(r, (dir / (base + ".trace.jsonl")).string());
        std::cout << "trace: " << (dir / (base + ".trace.jsonl")).string() << '\n';
      }
      for (const auto& v : r.vms) {
        std::cout << v.vm_id << " (" << memdos::to_string(v.role) << ") throughput=" << v.throughput << " ops/ms";
        if (v.slowdown)
          std::cout << " slowdown=" << *v.slowdown;
        std::cout << '\n';
      }
      if (r.defense_enabled)
        std::cout << "suspected=" << (r.suspected() ? "yes" : "no") << " identified=" << r.identified.size()
                  << " tp=" << r.tp << " fp=" << r.fp << " fn=" << r.fn << '\n';
    } else if (*sw) {
      const memdos::ScenarioConfig cfg = memdos::load_scenario(scenario_path);
      memdos::RunOptions opt;
      opt.with_baseline = !no_baseline;
      const memdos::SweepReport s = memdos::sweep(cfg, parse_seed_range(seeds_text), opt);
      const fs::path dir = output_dir(out_flag);
      fs::create_directories(dir);
      const fs::path path = dir / (stem(cfg, scenario_path) + ".sweep.json");
      write_json(path, s.to_json());
      std::cout << "sweep: " << path.string() << "\nruns=" << s.runs.size() << " tp_rate=" << s.tp_rate
                << " fp_rate=" << s.fp_rate << " single_test_fp_rate=" << s.single_test_fp_rate << '\n';
    } else if (*rep) {
      const memdos::Trace t = memdos::Trace::read(trace_path);
      std::cout << memdos::summarize_trace(t).dump(2) << '\n';
    }
  } catch (const memdos::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
