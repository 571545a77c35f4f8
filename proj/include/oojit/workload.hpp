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

#ifndef OOJIT_WORKLOAD_HPP_
#define OOJIT_WORKLOAD_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "oojit/common.hpp"
#include "oojit/kernel_ir.hpp"

namespace oojit {

enum class ArrivalKind { kPoisson, kBurst, kFixed };

struct ArrivalSpec {
  ArrivalKind kind = ArrivalKind::kFixed;
  double rate_per_s = 0.0;
  // fixed: explicit schedule, or start + period * i for i < count.
  std::vector<Nanos> schedule_ns;
  // burst: rate is multiplied inside [j * period, j * period + burst) windows.
  double burst_multiplier = 4.0;
  Nanos period_ns = 0;
  Nanos burst_ns = 0;
  std::uint64_t seed = 0;
};

struct StreamSpec {
  StreamId stream_id = 0;
  std::string model_name;
  std::int64_t batch = 1;
  LatencyConstraint constraint;
  ArrivalSpec arrival;
  // Fault injection: multiplies this stream's kernel durations under the
  // multiplexing baselines. 1.0 means nominal.
  double degradation = 1.0;
};

struct WorkloadSpec {
  std::vector<StreamSpec> streams;
  Nanos duration = 0;
  int max_tenancy = 64;

  // Rates > 0, duration > 0, unique stream ids, known models.
  void validate(const ModelLibrary& library) const;

  static WorkloadSpec from_json(const nlohmann::json& doc);
  static WorkloadSpec from_file(const std::string& path);
  nlohmann::json to_json() const;

  const StreamSpec& stream(StreamId id) const;
};

// Arrival instants of one stream inside [0, duration), sorted.
std::vector<Nanos> sample_arrivals(const ArrivalSpec& arrival, Nanos duration,
                                   std::uint64_t seed);

// Requests of every stream ordered by (arrival, stream id). Request and
// kernel ids are assigned consecutively in that order.
std::vector<InferenceRequest> generate_workload(const WorkloadSpec& spec,
                                                const ModelLibrary& library,
                                                std::uint64_t seed = 0);

// Same spec with every stream turned into a fixed schedule of the sampled
// arrivals.
WorkloadSpec freeze_arrivals(const WorkloadSpec& spec, std::uint64_t seed = 0);

}  // namespace oojit

#endif  // OOJIT_WORKLOAD_HPP_
