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

#ifndef OOJIT_ENGINE_HPP_
#define OOJIT_ENGINE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "oojit/autotuner.hpp"
#include "oojit/device_model.hpp"
#include "oojit/metrics.hpp"
#include "oojit/scheduler.hpp"
#include "oojit/workload.hpp"

namespace oojit {

// A workload spec together with the requests generated from it.
struct Workload {
  WorkloadSpec spec;
  std::vector<InferenceRequest> requests;

  static Workload generate(const WorkloadSpec& spec, const ModelLibrary& library,
                           std::uint64_t seed = 0);
};

struct RunOptions {
  SchedulerPolicy policy = SchedulerPolicy::make(PolicyKind::kOooCoalesce);
  const TuningTable* tuning = nullptr;
  std::uint64_t seed = 0;
  // Multiplicative prediction noise: predicted = actual * (1 + U[-x, x]).
  double prediction_noise = 0.0;
  bool evict_stragglers = true;
  bool record_trace = true;
};

// One dispatched (super)kernel on the device timeline.
struct TimelineEntry {
  std::int64_t entry_id = 0;
  Nanos start = 0;
  Nanos end = 0;
  int sm_allocation = 0;
  std::int64_t context_id = kMergedContext;
  std::vector<KernelId> kernels;
  Nanos predicted_duration = 0;
  bool cancelled = false;  // cut short by an eviction
  bool infeasible = false;
};

struct TraceEvent {
  Nanos time = 0;
  std::string kind;  // arrival|dispatch|complete|withhold|evict|context_switch
  nlohmann::json payload;
};

struct RunResult {
  Metrics metrics;
  std::vector<TimelineEntry> timeline;
  std::vector<TraceEvent> trace;
  std::vector<RequestOutcome> requests;
  // Member lists of every withheld cluster, with the time it was withheld.
  std::vector<std::pair<Nanos, std::vector<KernelId>>> withheld;
  std::vector<StreamId> evicted_streams;
  RunMetadata meta;
};

// Deterministic discrete-event simulation of one policy on one device.
RunResult run(const Workload& workload, const DeviceProfile& profile,
              const RunOptions& options);

// Sorted-key NDJSON, one event per line.
std::string trace_ndjson(const RunResult& result);

struct Comparison {
  std::vector<std::string> policies;
  std::vector<RunResult> runs;  // same order as policies
};

// Runs every policy on the same requests. Independent runs may execute on
// up to `jobs` threads; results are stored by policy index.
Comparison compare(const Workload& workload, const DeviceProfile& profile,
                   const std::vector<PolicyKind>& policies,
                   const RunOptions& base, int jobs = 1);

// policy x metric matrix, one row per policy.
std::string comparison_csv(const Comparison& cmp);
// Ratio of each policy's headline metrics to the first policy's.
std::string ratio_csv(const Comparison& cmp);
nlohmann::json comparison_json(const Comparison& cmp);

}  // namespace oojit

#endif  // OOJIT_ENGINE_HPP_
