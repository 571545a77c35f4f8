/* Copyright 2026 The oojit Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// oojit: command-line driver for the simulator, tuner and comparison harness.
//
// Exit codes: 0 ok, 1 usage, 2 invalid input, 3 a --assert failed.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "oojit/autotuner.hpp"
#include "oojit/engine.hpp"

namespace fs = std::filesystem;
using namespace oojit;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitAssert = 3;

struct SimFlags {
  std::string workload;
  std::string profile = "v100";
  std::string tuning_table;
  std::string model_library;
  std::optional<double> pad_budget;
  std::optional<double> max_delay_fraction;
  std::optional<double> straggler_threshold;
  std::uint64_t seed = 0;
  std::string out = ".";
  std::vector<std::string> asserts;
};

void add_sim_flags(CLI::App* cmd, SimFlags& f) {
  cmd->add_option("--workload", f.workload, "Workload JSON file")->required();
  cmd->add_option("--profile", f.profile, "Device preset name or profile JSON")
      ->capture_default_str();
  cmd->add_option("--tuning-table", f.tuning_table, "Tuning table from `tune`");
  cmd->add_option("--model-library", f.model_library,
                  "Extra model library JSON merged over the bundled one");
  cmd->add_option("--pad-budget", f.pad_budget, "Padding-waste bound for coalescing");
  cmd->add_option("--max-delay-fraction", f.max_delay_fraction,
                  "Withhold only while slack exceeds this fraction of the SLO");
  cmd->add_option("--straggler-threshold", f.straggler_threshold,
                  "p99 observed/predicted ratio that triggers eviction");
  cmd->add_option("--seed", f.seed, "Simulation seed")->capture_default_str();
  cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
  cmd->add_option("--assert", f.asserts,
                  "Check a global metric, e.g. \"slo_attainment>=0.99\"");
}

ModelLibrary library_for(const std::string& extra) {
  ModelLibrary lib = ModelLibrary::bundled();
  if (!extra.empty()) lib.merge(ModelLibrary::from_file(extra));
  return lib;
}

RunOptions options_for(const SimFlags& f, PolicyKind policy,
                       const TuningTable* table) {
  RunOptions o;
  o.policy = SchedulerPolicy::make(policy);
  if (f.pad_budget) o.policy.params.pad_budget = *f.pad_budget;
  if (f.max_delay_fraction) o.policy.params.max_delay_fraction = *f.max_delay_fraction;
  if (f.straggler_threshold) o.policy.params.straggler_threshold = *f.straggler_threshold;
  o.policy.validate();
  o.tuning = table;
  o.seed = f.seed;
  return o;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << text;
}

void write_run(const fs::path& dir, const RunResult& r) {
  write_file(dir / "metrics.json", metrics_to_json(r.metrics, r.meta).dump(2) + "\n");
  write_file(dir / "metrics.csv", metrics_csv(r.metrics));
  write_file(dir / "trace.ndjson", trace_ndjson(r));
}

double metric_value(const StreamMetrics& m, const std::string& name) {
  if (name == "completed") return double(m.completed);
  if (name == "pending") return double(m.pending);
  if (name == "evicted") return double(m.evicted);
  if (name == "throughput_rps") return m.throughput_rps;
  if (name == "throughput_flops") return m.throughput_flops;
  if (name == "latency_p50_ns") return double(m.latency_p50);
  if (name == "latency_p90_ns") return double(m.latency_p90);
  if (name == "latency_p99_ns") return double(m.latency_p99);
  if (name == "slo_attainment") return m.slo_attainment;
  if (name == "utilization") return m.utilization;
  if (name == "flop_efficiency") return m.flop_efficiency;
  throw ValidationError("--assert: unknown metric '" + name + "'");
}

// Returns false (and reports) when any assertion does not hold.
bool check_asserts(const std::vector<std::string>& asserts,
                   const StreamMetrics& m, const std::string& label) {
  static const std::regex re(R"(^\s*([a-z0-9_]+)\s*(>=|<=|==|>|<)\s*([-+0-9.eE]+)\s*$)");
  bool ok = true;
  for (const auto& a : asserts) {
    std::smatch match;
    if (!std::regex_match(a, match, re)) {
      throw ValidationError("--assert: cannot parse '" + a + "'");
    }
    const double lhs = metric_value(m, match[1]);
    const double rhs = std::stod(match[3]);
    const std::string op = match[2];
    const bool holds = op == ">=" ? lhs >= rhs
                       : op == "<=" ? lhs <= rhs
                       : op == "==" ? lhs == rhs
                       : op == ">"  ? lhs > rhs
                                    : lhs < rhs;
    if (!holds) {
      std::cerr << "assertion failed" << label << ": " << a << " (actual "
                << lhs << ")\n";
      ok = false;
    }
  }
  return ok;
}

std::vector<PolicyKind> parse_policies(const std::string& list) {
  std::vector<PolicyKind> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_policy(item));
  }
  if (out.empty()) throw ValidationError("--policies: no policy given");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oojit: multi-tenant GPU kernel scheduling simulator"};
  app.require_subcommand(1);

  SimFlags run_flags;
  std::string run_policy = "ooo";
  auto* run_cmd = app.add_subcommand("run", "Simulate one policy");
  add_sim_flags(run_cmd, run_flags);
  run_cmd->add_option("--policy", run_policy, "fifo|edf|ooo|time-mux|space-mux")
      ->capture_default_str();

  SimFlags cmp_flags;
  std::string cmp_policies = "time-mux,space-mux,ooo";
  int jobs = 1;
  auto* cmp_cmd = app.add_subcommand("compare", "Run several policies on the same arrivals");
  add_sim_flags(cmp_cmd, cmp_flags);
  cmp_cmd->add_option("--policies", cmp_policies, "Comma-separated; the first is the baseline")
      ->capture_default_str();
  cmp_cmd->add_option("--jobs", jobs, "Parallel simulations")->check(CLI::PositiveNumber);

  std::vector<std::string> tune_shapes;
  std::string tune_workload;
  std::string tune_profile = "v100";
  std::string tune_models;
  int tune_tenancy = 4;
  int tune_budget = 0;
  int tune_jobs = 1;
  std::uint64_t tune_seed = 0;
  std::string tune_out = "tuning.json";
  auto* tune_cmd = app.add_subcommand("tune", "Build a tuning table");
  tune_cmd->add_option("--shape", tune_shapes, "Key such as gemm:fp32:128x128x1152");
  tune_cmd->add_option("--workload", tune_workload, "Tune every kernel shape of a workload");
  tune_cmd->add_option("--profile", tune_profile)->capture_default_str();
  tune_cmd->add_option("--model-library", tune_models);
  tune_cmd->add_option("--max-tenancy", tune_tenancy)->check(CLI::PositiveNumber)
      ->capture_default_str();
  tune_cmd->add_option("--budget", tune_budget, "Evaluations per search (0 = full grid)");
  tune_cmd->add_option("--seed", tune_seed)->capture_default_str();
  tune_cmd->add_option("--jobs", tune_jobs)->check(CLI::PositiveNumber);
  tune_cmd->add_option("--out", tune_out)->capture_default_str();

  std::string gen_workload;
  std::string gen_models;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("workload-gen",
                                     "Freeze sampled arrivals into a fixed-schedule workload");
  gen_cmd->add_option("--workload", gen_workload)->required();
  gen_cmd->add_option("--model-library", gen_models);
  gen_cmd->add_option("--seed", gen_seed)->capture_default_str();
  gen_cmd->add_option("--out", gen_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << e.what() << "\n\n";
    const auto chosen = app.get_subcommands();
    std::cerr << (chosen.empty() ? app.help() : chosen.front()->help());
    return kExitUsage;
  }

  try {
    if (*run_cmd) {
      const auto lib = library_for(run_flags.model_library);
      const auto profile = load_profile(run_flags.profile);
      std::optional<TuningTable> table;
      if (!run_flags.tuning_table.empty()) table = TuningTable::from_file(run_flags.tuning_table);
      const auto workload = Workload::generate(WorkloadSpec::from_file(run_flags.workload),
                                               lib, run_flags.seed);
      const auto opts = options_for(run_flags, parse_policy(run_policy),
                                    table ? &*table : nullptr);
      const auto result = run(workload, profile, opts);
      write_run(run_flags.out, result);
      return check_asserts(run_flags.asserts, result.metrics.global, "") ? 0 : kExitAssert;
    }
    if (*cmp_cmd) {
      const auto lib = library_for(cmp_flags.model_library);
      const auto profile = load_profile(cmp_flags.profile);
      std::optional<TuningTable> table;
      if (!cmp_flags.tuning_table.empty()) table = TuningTable::from_file(cmp_flags.tuning_table);
      const auto policies = parse_policies(cmp_policies);
      const auto workload = Workload::generate(WorkloadSpec::from_file(cmp_flags.workload),
                                               lib, cmp_flags.seed);
      const auto opts = options_for(cmp_flags, policies.front(), table ? &*table : nullptr);
      const auto cmp = compare(workload, profile, policies, opts, jobs);
      const fs::path dir = cmp_flags.out;
      bool ok = true;
      for (std::size_t i = 0; i < cmp.runs.size(); ++i) {
        write_run(dir / cmp.policies[i], cmp.runs[i]);
        ok = check_asserts(cmp_flags.asserts, cmp.runs[i].metrics.global,
                           " [" + cmp.policies[i] + "]") && ok;
      }
      write_file(dir / "comparison.csv", comparison_csv(cmp));
      write_file(dir / "ratios.csv", ratio_csv(cmp));
      write_file(dir / "comparison.json", comparison_json(cmp).dump(2) + "\n");
      return ok ? 0 : kExitAssert;
    }
    if (*tune_cmd) {
      const auto profile = load_profile(tune_profile);
      std::set<std::string> keys(tune_shapes.begin(), tune_shapes.end());
      for (const auto& k : tune_shapes) parse_tune_key(k);
      if (!tune_workload.empty()) {
        const auto lib = library_for(tune_models);
        const auto spec = WorkloadSpec::from_file(tune_workload);
        spec.validate(lib);
        for (const auto& s : spec.streams) {
          for (const auto& k : lower_model(lib, s.model_name, s.batch)) {
            keys.insert(tune_key(k.shape, k.dtype));
          }
        }
      }
      if (keys.empty()) {
        std::cerr << "tune: give --shape or --workload\n" << tune_cmd->help();
        return kExitUsage;
      }
      std::int64_t budget = tune_budget;
      if (budget == 0) {
        const auto tiles = TuningModel::bundled().tile_sizes.size();
        budget = static_cast<std::int64_t>(tune_tenancy * tiles * tiles);
      }
      const auto table = build_table({keys.begin(), keys.end()}, tune_tenancy, profile,
                                     budget, tune_seed, tune_jobs);
      write_file(tune_out, table.to_json().dump(2) + "\n");
      return 0;
    }
    if (*gen_cmd) {
      const auto lib = library_for(gen_models);
      const auto spec = WorkloadSpec::from_file(gen_workload);
      spec.validate(lib);
      write_file(gen_out, freeze_arrivals(spec, gen_seed).to_json().dump(2) + "\n");
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitUsage;
}
