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

#ifndef OOJIT_SCHEDULER_HPP_
#define OOJIT_SCHEDULER_HPP_

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oojit/coalescer.hpp"
#include "oojit/common.hpp"
#include "oojit/device_model.hpp"
#include "oojit/kernel_ir.hpp"
#include "oojit/rng.hpp"

namespace oojit {

class TuningTable;

enum class PolicyKind { kFifo, kEdf, kOooCoalesce, kTimeMux, kSpaceMux };

std::string_view to_string(PolicyKind kind);
// Accepts the CLI names: fifo, edf, ooo, time-mux, space-mux.
PolicyKind parse_policy(std::string_view name);

struct PolicyParams {
  // A cluster is only withheld while every member keeps more slack than
  // this fraction of its SLO.
  double max_delay_fraction = 0.5;
  double pad_budget = 0.25;
  double straggler_threshold = 2.0;
  int straggler_window = 32;
  // Space-multiplexing interference model (synthetic).
  double jitter_width = 0.15;
  double contention_per_tenant = 0.1;
};

struct SchedulerPolicy {
  PolicyKind variant = PolicyKind::kOooCoalesce;
  PolicyParams params;

  // Default parameters, interference constants taken from the preset file.
  static SchedulerPolicy make(PolicyKind kind);

  void validate() const;
};

// deadline - now - predicted_remaining. Negative means already infeasible.
// A kernel without a deadline has unbounded slack (returns kNever).
Nanos slack(const KernelSpec& kernel, Nanos now, Nanos predicted_remaining);

// A dispatchable kernel plus what the scheduler needs to reason about it.
struct ReadyKernel {
  KernelSpec spec;
  Nanos slo = kNever;  // relative budget of the owning request
  // Critical-path prediction of this kernel and its unscheduled successors.
  Nanos predicted_remaining = 0;
  // Predicted solo duration of this kernel alone.
  Nanos predicted_duration = 0;
};

struct RunningEntry {
  std::int64_t entry_id = 0;
  Nanos start = 0;
  Nanos end = 0;
  int sm_allocation = 0;
  std::int64_t context_id = kMergedContext;
  StreamId stream_id = -1;  // owning stream for per-tenant contexts
};

// SMs held back for a withheld cluster. Nothing else may use them until the
// cluster is dispatched.
struct Reservation {
  std::vector<KernelId> members;
  OpShape padded;
  ClusterKey key;
  int sm_allocation = 0;
  // Earliest instant at which some member's slack reaches its threshold.
  Nanos wake = kNever;
};

struct DeviceState {
  int sm_count = 0;
  int free_sms = 0;
  std::vector<RunningEntry> running;
  std::vector<Reservation> reservations;
  std::optional<std::int64_t> last_context;
  StreamId last_stream = -1;  // round-robin cursor for time multiplexing

  static DeviceState idle(const DeviceProfile& profile);
  int reserved_sms() const;
};

struct Dispatch {
  std::vector<KernelId> kernels;
  Nanos start = 0;
  Nanos duration = 0;
  // What the cost model predicts for this entry (no jitter).
  Nanos predicted_duration = 0;
  int sm_allocation = 0;
  std::int64_t context_id = kMergedContext;
  bool context_switch = false;
  bool infeasible = false;
  std::int64_t padded_flops = 0;
  std::int64_t useful_flops = 0;
  int co_tenancy = 1;
  double interference = 1.0;
};

struct StepResult {
  std::vector<Dispatch> dispatches;
  // Replacement reservation set (only the OOO policy produces any).
  std::vector<Reservation> reservations;
  // Member lists of clusters newly withheld this step.
  std::vector<std::vector<KernelId>> withheld;
  Nanos wakeup = kNever;
};

struct SchedulerContext {
  const DeviceProfile* profile = nullptr;
  const TuningTable* tuning = nullptr;
  int max_tenancy = 64;
  Rng* rng = nullptr;  // jitter source for space multiplexing
};

// Smallest SM count at which a superkernel still runs at its full-device
// duration: enough SMs for its blocks and enough bandwidth share for its
// bytes.
int min_allocation(const CostEstimate& cost, const DeviceProfile& profile);

// One scheduling decision point. `ready` holds every kernel whose arrival
// has passed and whose dependencies completed, not yet dispatched.
StepResult schedule_step(std::span<const ReadyKernel> ready,
                         const DeviceState& device,
                         const SchedulerPolicy& policy, Nanos now,
                         SchedulerContext& ctx);

// Round-robin across streams, one kernel resident at a time on the whole
// device, context switch cost charged whenever the context changes.
StepResult dispatch_time_mux(std::span<const ReadyKernel> ready,
                             const DeviceState& device, Nanos now,
                             SchedulerContext& ctx);

// Concurrent admission with an equal SM share per active tenant and a
// seeded interference factor on every admitted kernel.
StepResult dispatch_space_mux(std::span<const ReadyKernel> ready,
                              const DeviceState& device, Nanos now,
                              const PolicyParams& params,
                              SchedulerContext& ctx, Rng& rng);

// contention(t) * (1 + jitter), jitter ~ U[0, w(t)], w(t) = w0 * (1 + odd(t)).
// A lone tenant sees exactly 1.
double interference_factor(int co_tenants, const PolicyParams& params,
                           Rng& rng);
double contention(int co_tenants, const PolicyParams& params);
double jitter_width(int co_tenants, const PolicyParams& params);

// Sliding window of observed/predicted duration ratios per stream.
class StragglerMonitor {
 public:
  StragglerMonitor(double threshold, int window);

  void record(StreamId stream, double ratio);
  // p99 (nearest rank) over a full window exceeds the threshold.
  bool degraded(StreamId stream) const;
  double p99_ratio(StreamId stream) const;

 private:
  double threshold_;
  std::size_t window_;
  std::map<StreamId, std::deque<double>> ratios_;
};

}  // namespace oojit

#endif  // OOJIT_SCHEDULER_HPP_
