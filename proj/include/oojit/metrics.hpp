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

#ifndef OOJIT_METRICS_HPP_
#define OOJIT_METRICS_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "oojit/common.hpp"
#include "oojit/device_model.hpp"

namespace oojit {

// Nearest rank: element ceil(p * n) (1-based) of the sorted samples.
// Throws DomainError on an empty sample set or p outside [0, 1].
Nanos percentile(std::vector<Nanos> samples, double p);

struct StreamMetrics {
  StreamId stream_id = -1;  // -1 for the global row
  std::int64_t arrived = 0;
  std::int64_t completed = 0;
  std::int64_t pending = 0;  // incomplete at the horizon
  std::int64_t evicted = 0;
  std::int64_t met = 0;      // completed by the deadline
  double throughput_rps = 0.0;
  double throughput_flops = 0.0;  // useful FLOP/s, padding excluded
  Nanos latency_p50 = 0;
  Nanos latency_p90 = 0;
  Nanos latency_p99 = 0;
  double latency_mean = 0.0;
  double slo_attainment = 0.0;
  double utilization = 0.0;
  double flop_efficiency = 0.0;
  std::int64_t useful_flops = 0;
  double busy_sm_ns = 0.0;
};

struct Metrics {
  StreamMetrics global;
  std::vector<StreamMetrics> streams;  // ascending stream id
  Nanos duration = 0;
  Nanos span_start = 0;
  Nanos span_end = 0;
  std::int64_t padded_flops = 0;
  std::int64_t withheld = 0;
  std::int64_t context_switches = 0;
  std::int64_t infeasible_dispatches = 0;
  std::int64_t evictions = 0;

  const StreamMetrics& stream(StreamId id) const;
};

enum class RequestStatus { kCompleted, kEvicted, kPending };

struct RequestOutcome {
  RequestId request_id = 0;
  StreamId stream_id = 0;
  Nanos arrival = 0;
  Nanos deadline = kNever;
  RequestStatus status = RequestStatus::kPending;
  Nanos finish = 0;
};

// One timeline entry as seen by the accounting.
struct EntryUsage {
  Nanos start = 0;
  Nanos end = 0;
  int sm_allocation = 0;
  double peak_flops = 0.0;  // device peak for the entry's dtype
  std::int64_t padded_flops = 0;
  // Flops of member kernels per stream, used to split busy time.
  std::map<StreamId, std::int64_t> member_flops;
  // Flops of member kernels that completed, per stream.
  std::map<StreamId, std::int64_t> useful_flops;
};

Metrics compute_metrics(const std::vector<RequestOutcome>& requests,
                        const std::vector<EntryUsage>& entries,
                        const std::vector<StreamId>& streams,
                        const DeviceProfile& profile, Nanos duration);

struct RunMetadata {
  std::uint64_t seed = 0;
  std::string policy;
  std::string profile;
};

nlohmann::json metrics_to_json(const Metrics& metrics, const RunMetadata& meta);

// Header plus one global row and one row per stream.
std::string metrics_csv(const Metrics& metrics);
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& scope, const StreamMetrics& row);

}  // namespace oojit

#endif  // OOJIT_METRICS_HPP_
