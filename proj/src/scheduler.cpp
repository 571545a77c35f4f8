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

#include "oojit/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "oojit/autotuner.hpp"

namespace oojit {

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kFifo:
      return "fifo";
    case PolicyKind::kEdf:
      return "edf";
    case PolicyKind::kOooCoalesce:
      return "ooo";
    case PolicyKind::kTimeMux:
      return "time-mux";
    case PolicyKind::kSpaceMux:
      return "space-mux";
  }
  return "?";
}

PolicyKind parse_policy(std::string_view name) {
  for (auto k : {PolicyKind::kFifo, PolicyKind::kEdf, PolicyKind::kOooCoalesce,
                 PolicyKind::kTimeMux, PolicyKind::kSpaceMux}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("unknown policy '" + std::string(name) + "'");
}

SchedulerPolicy SchedulerPolicy::make(PolicyKind kind) {
  SchedulerPolicy p;
  p.variant = kind;
  const auto& model = bundled_presets().at("interference_model");
  p.params.jitter_width = model.at("jitter_width").get<double>();
  p.params.contention_per_tenant =
      model.at("contention_per_tenant").get<double>();
  return p;
}

void SchedulerPolicy::validate() const {
  const auto& p = params;
  if (!(p.max_delay_fraction >= 0.0) || p.max_delay_fraction > 1.0) {
    throw ValidationError("max_delay_fraction must lie in [0, 1]");
  }
  if (!(p.pad_budget >= 0.0) || p.pad_budget >= 1.0) {
    throw ValidationError("pad budget must lie in [0, 1)");
  }
  if (!(p.straggler_threshold > 0.0)) {
    throw ValidationError("straggler threshold must be > 0");
  }
  if (p.straggler_window < 1) {
    throw ValidationError("straggler window must be >= 1");
  }
  if (!(p.jitter_width >= 0.0) || !(p.contention_per_tenant >= 0.0)) {
    throw ValidationError("interference parameters must be >= 0");
  }
}

Nanos slack(const KernelSpec& kernel, Nanos now, Nanos predicted_remaining) {
  if (kernel.deadline == kNever) return kNever;
  return kernel.deadline - now - predicted_remaining;
}

DeviceState DeviceState::idle(const DeviceProfile& profile) {
  DeviceState d;
  d.sm_count = profile.sm_count;
  d.free_sms = profile.sm_count;
  return d;
}

int DeviceState::reserved_sms() const {
  int total = 0;
  for (const auto& r : reservations) total += r.sm_allocation;
  return total;
}

int min_allocation(const CostEstimate& cost, const DeviceProfile& profile) {
  const std::int64_t by_blocks =
      (cost.block_count + profile.blocks_per_sm - 1) / profile.blocks_per_sm;
  std::int64_t by_bytes = 1;
  if (cost.duration > 0 && cost.bytes > 0) {
    const double share = static_cast<double>(cost.bytes) * 1e9 /
                         (profile.mem_bandwidth * cost.duration);
    by_bytes =
        static_cast<std::int64_t>(std::ceil(share * profile.sm_count - 1e-9));
  }
  return static_cast<int>(std::clamp<std::int64_t>(
      std::max(by_blocks, by_bytes), 1, profile.sm_count));
}

namespace {

TuningConfig config_for(const SchedulerContext& ctx, const OpShape& shape,
                        DType dtype, int co_tenancy) {
  if (ctx.tuning == nullptr) return TuningConfig::default_config();
  return ctx.tuning->lookup_or_default(tune_key(shape, dtype), co_tenancy);
}

Nanos slack_of(const ReadyKernel& k, Nanos now) {
  return slack(k.spec, now, k.predicted_remaining);
}

// Slack a kernel must keep to stay withheld; kNever for batch kernels.
Nanos hold_threshold(const ReadyKernel& k, const PolicyParams& params) {
  if (k.slo == kNever || k.spec.deadline == kNever) return kNever;
  return static_cast<Nanos>(
      std::floor(params.max_delay_fraction * static_cast<double>(k.slo)));
}

// Time at which the kernel's slack falls to its hold threshold.
Nanos wake_of(const ReadyKernel& k, const PolicyParams& params) {
  const Nanos thr = hold_threshold(k, params);
  if (thr == kNever) return kNever;
  return k.spec.deadline - k.predicted_remaining - thr;
}

bool any_infeasible(const std::vector<const ReadyKernel*>& members, Nanos now) {
  return std::any_of(members.begin(), members.end(), [&](const auto* k) {
    return slack_of(*k, now) < 0;
  });
}

// Exclusive single-kernel dispatch used by fifo and edf.
Dispatch solo_dispatch(const ReadyKernel& k, Nanos now,
                       const SchedulerContext& ctx, std::int64_t context) {
  const auto& profile = *ctx.profile;
  const auto cost =
      kernel_cost(k.spec, config_for(ctx, k.spec.shape, k.spec.dtype, 1), profile);
  Dispatch d;
  d.kernels = {k.spec.kernel_id};
  d.start = now;
  d.duration = cost.duration;
  d.predicted_duration = cost.duration;
  d.sm_allocation = profile.sm_count;
  d.context_id = context;
  d.infeasible = slack_of(k, now) < 0;
  d.padded_flops = cost.flops;
  d.useful_flops = cost.flops;
  return d;
}

StepResult serial_step(std::span<const ReadyKernel> ready,
                       const DeviceState& device, bool by_deadline, Nanos now,
                       SchedulerContext& ctx) {
  StepResult out;
  if (ready.empty() || !device.running.empty()) return out;
  auto key = [&](const ReadyKernel& k) {
    return by_deadline
               ? std::make_tuple(k.spec.deadline, k.spec.arrival,
                                 k.spec.request_id, k.spec.kernel_id)
               : std::make_tuple(k.spec.arrival, k.spec.request_id,
                                 k.spec.deadline, k.spec.kernel_id);
  };
  const auto& best = *std::min_element(
      ready.begin(), ready.end(),
      [&](const auto& a, const auto& b) { return key(a) < key(b); });
  out.dispatches.push_back(solo_dispatch(best, now, ctx, kMergedContext));
  return out;
}

struct Group {
  ClusterKey key;
  OpShape padded;
  std::vector<const ReadyKernel*> members;
  std::int64_t member_flops = 0;
};

OpShape max_dims(const OpShape& a, const OpShape& b) {
  OpShape out = a;
  for (std::size_t i = 0; i < 3; ++i) out.dims[i] = std::max(a.dims[i], b.dims[i]);
  return out;
}

ShapeCluster to_cluster(const Group& g) {
  ShapeCluster c;
  c.key = g.key;
  c.padded = g.padded;
  c.member_flops = g.member_flops;
  for (const auto* m : g.members) {
    c.members.push_back(m->spec.kernel_id);
    c.earliest_deadline = std::min(c.earliest_deadline, m->spec.deadline);
  }
  c.waste = pad_cost(c);
  return c;
}

double occupancy_of(const SuperKernel& sk, const DeviceProfile& profile) {
  return std::min(1.0, static_cast<double>(sk.cost.block_count) /
                           static_cast<double>(profile.block_capacity()));
}

Dispatch superkernel_dispatch(const SuperKernel& sk, int alloc, Nanos now,
                              bool infeasible, int co_tenancy) {
  Dispatch d;
  d.kernels = sk.members;
  d.start = now;
  d.duration = sk.cost.duration;
  d.predicted_duration = sk.cost.duration;
  d.sm_allocation = alloc;
  d.context_id = kMergedContext;
  d.infeasible = infeasible;
  d.padded_flops = sk.flops;
  d.useful_flops = sk.useful_flops;
  d.co_tenancy = co_tenancy;
  return d;
}

StepResult ooo_step(std::span<const ReadyKernel> ready,
                    const DeviceState& device, const PolicyParams& params,
                    Nanos now, SchedulerContext& ctx) {
  const auto& profile = *ctx.profile;
  StepResult out;
  std::unordered_map<KernelId, const ReadyKernel*> by_id;
  for (const auto& k : ready) by_id.emplace(k.spec.kernel_id, &k);

  std::set<KernelId> taken;
  int unreserved = device.free_sms - device.reserved_sms();
  int co_tenancy = static_cast<int>(device.running.size()) + 1;

  // Reserved members stay out of the free pool below.
  for (const auto& res : device.reservations) {
    for (auto id : res.members) {
      if (by_id.count(id)) taken.insert(id);
    }
  }

  // Candidates for absorption, in clustering order.
  std::vector<const ReadyKernel*> pool_order;
  for (const auto& k : ready) pool_order.push_back(&k);
  std::sort(pool_order.begin(), pool_order.end(), [](const auto* a, const auto* b) {
    const auto& x = a->spec;
    const auto& y = b->spec;
    if (x.shape.kind != y.shape.kind) return x.shape.kind < y.shape.kind;
    if (x.dtype != y.dtype) return x.dtype < y.dtype;
    if (x.shape.dims != y.shape.dims) return x.shape.dims > y.shape.dims;
    return x.kernel_id < y.kernel_id;
  });

  std::vector<Reservation> held(device.reservations.begin(),
                                device.reservations.end());
  std::sort(held.begin(), held.end(), [](const auto& a, const auto& b) {
    if (a.wake != b.wake) return a.wake < b.wake;
    return a.members < b.members;
  });

  for (auto& res : held) {
    Group g;
    g.key = res.key;
    for (auto id : res.members) {
      auto it = by_id.find(id);
      if (it == by_id.end()) continue;  // evicted while held
      const auto* k = it->second;
      g.padded = g.members.empty() ? k->spec.shape : max_dims(g.padded, k->spec.shape);
      g.members.push_back(k);
      g.member_flops += k->spec.flops();
    }
    if (g.members.empty()) {
      unreserved += res.sm_allocation;
      continue;
    }
    int reserved = res.sm_allocation;
    auto sk = form_superkernel(to_cluster(g), ctx.tuning, co_tenancy, profile);
    int need = min_allocation(sk.cost, profile);

    // Absorb compatible newcomers while the padding budget and the SMs allow.
    // Joining a saturated superkernel still beats waiting behind it.
    for (const auto* cand : pool_order) {
      const auto id = cand->spec.kernel_id;
      if (taken.count(id) || cand->spec.shape.kind != g.key.kind ||
          cand->spec.dtype != g.key.dtype) {
        continue;
      }
      Group trial = g;
      trial.padded = max_dims(g.padded, cand->spec.shape);
      trial.members.push_back(cand);
      trial.member_flops += cand->spec.flops();
      const auto cluster = to_cluster(trial);
      if (cluster.waste > params.pad_budget) continue;
      auto trial_sk = form_superkernel(cluster, ctx.tuning, co_tenancy, profile);
      const int trial_need = min_allocation(trial_sk.cost, profile);
      if (trial_need > reserved + unreserved) continue;
      g = std::move(trial);
      sk = std::move(trial_sk);
      need = trial_need;
      taken.insert(id);
    }
    if (need > reserved) {
      unreserved -= need - reserved;
      reserved = need;
    }

    Nanos wake = kNever;
    for (const auto* m : g.members) wake = std::min(wake, wake_of(*m, params));
    const bool release = occupancy_of(sk, profile) >= 1.0 || now >= wake;
    if (release) {
      unreserved += reserved - need;
      out.dispatches.push_back(superkernel_dispatch(
          sk, need, now, any_infeasible(g.members, now), co_tenancy));
      ++co_tenancy;
    } else {
      Reservation kept;
      kept.key = g.key;
      kept.padded = g.padded;
      kept.sm_allocation = reserved;
      kept.wake = wake;
      for (const auto* m : g.members) kept.members.push_back(m->spec.kernel_id);
      out.wakeup = std::min(out.wakeup, wake);
      out.reservations.push_back(std::move(kept));
    }
  }

  std::vector<KernelSpec> pool;
  for (const auto& k : ready) {
    if (!taken.count(k.spec.kernel_id)) pool.push_back(k.spec);
  }
  auto clusters = cluster_shapes(pool, params.pad_budget);

  struct Candidate {
    ShapeCluster cluster;
    std::vector<const ReadyKernel*> members;
    bool infeasible = false;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(clusters.size());
  for (auto& c : clusters) {
    Candidate cand;
    for (auto id : c.members) cand.members.push_back(by_id.at(id));
    cand.infeasible = any_infeasible(cand.members, now);
    cand.cluster = std::move(c);
    candidates.push_back(std::move(cand));
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.infeasible != b.infeasible) return a.infeasible;
              if (a.cluster.earliest_deadline != b.cluster.earliest_deadline) {
                return a.cluster.earliest_deadline < b.cluster.earliest_deadline;
              }
              return a.cluster.members.front() < b.cluster.members.front();
            });

  for (const auto& cand : candidates) {
    const auto sk =
        form_superkernel(cand.cluster, ctx.tuning, co_tenancy, profile);
    const int need = min_allocation(sk.cost, profile);
    if (need > unreserved) break;  // strict priority, no backfill

    bool has_deadline = false;
    bool all_slack = true;
    Nanos wake = kNever;
    for (const auto* m : cand.members) {
      const Nanos thr = hold_threshold(*m, params);
      if (thr == kNever) continue;
      has_deadline = true;
      if (!(slack_of(*m, now) > thr)) all_slack = false;
      wake = std::min(wake, wake_of(*m, params));
    }
    // A lone ready kernel has nobody to wait with.
    const bool withhold = ready.size() > 1 && occupancy_of(sk, profile) < 1.0 &&
                          has_deadline && all_slack;
    unreserved -= need;
    if (withhold) {
      Reservation res;
      res.key = cand.cluster.key;
      res.padded = cand.cluster.padded;
      res.members = cand.cluster.members;
      res.sm_allocation = need;
      res.wake = wake;
      out.withheld.push_back(res.members);
      out.wakeup = std::min(out.wakeup, wake);
      out.reservations.push_back(std::move(res));
      continue;
    }
    out.dispatches.push_back(
        superkernel_dispatch(sk, need, now, cand.infeasible, co_tenancy));
    ++co_tenancy;
  }
  return out;
}

}  // namespace

double contention(int co_tenants, const PolicyParams& params) {
  return 1.0 + params.contention_per_tenant * std::max(0, co_tenants - 1);
}

double jitter_width(int co_tenants, const PolicyParams& params) {
  if (co_tenants < 2) return 0.0;
  return params.jitter_width * (1.0 + (co_tenants % 2 == 1 ? 1.0 : 0.0));
}

double interference_factor(int co_tenants, const PolicyParams& params,
                           Rng& rng) {
  const double w = jitter_width(co_tenants, params);
  const double jitter = w > 0.0 ? rng.uniform(0.0, w) : 0.0;
  return contention(co_tenants, params) * (1.0 + jitter);
}

StepResult dispatch_time_mux(std::span<const ReadyKernel> ready,
                             const DeviceState& device, Nanos now,
                             SchedulerContext& ctx) {
  StepResult out;
  if (ready.empty() || !device.running.empty()) return out;
  std::set<StreamId> streams;
  for (const auto& k : ready) streams.insert(k.spec.stream_id);
  auto next = streams.upper_bound(device.last_stream);
  const StreamId stream = next == streams.end() ? *streams.begin() : *next;

  const ReadyKernel* pick = nullptr;
  for (const auto& k : ready) {
    if (k.spec.stream_id != stream) continue;
    if (pick == nullptr ||
        std::tie(k.spec.arrival, k.spec.request_id, k.spec.kernel_id) <
            std::tie(pick->spec.arrival, pick->spec.request_id,
                     pick->spec.kernel_id)) {
      pick = &k;
    }
  }
  auto d = solo_dispatch(*pick, now, ctx, stream);
  if (device.last_context && *device.last_context != stream) {
    d.context_switch = true;
    d.start = now + ctx.profile->context_switch_cost;
  }
  out.dispatches.push_back(std::move(d));
  return out;
}

StepResult dispatch_space_mux(std::span<const ReadyKernel> ready,
                              const DeviceState& device, Nanos now,
                              const PolicyParams& params,
                              SchedulerContext& ctx, Rng& rng) {
  const auto& profile = *ctx.profile;
  StepResult out;
  std::set<StreamId> resident;
  for (const auto& e : device.running) resident.insert(e.stream_id);
  std::set<StreamId> active = resident;
  for (const auto& k : ready) active.insert(k.spec.stream_id);
  const int tenants = std::min(static_cast<int>(active.size()),
                               std::max(1, ctx.max_tenancy));
  if (tenants == 0) return out;

  // Head-of-stream kernel for every stream without a resident kernel.
  std::map<StreamId, const ReadyKernel*> heads;
  for (const auto& k : ready) {
    if (resident.count(k.spec.stream_id)) continue;
    auto& h = heads[k.spec.stream_id];
    if (h == nullptr ||
        std::tie(k.spec.arrival, k.spec.request_id, k.spec.kernel_id) <
            std::tie(h->spec.arrival, h->spec.request_id, h->spec.kernel_id)) {
      h = &k;
    }
  }
  std::vector<const ReadyKernel*> order;
  for (const auto& [s, k] : heads) order.push_back(k);
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    return std::tie(a->spec.arrival, a->spec.stream_id, a->spec.kernel_id) <
           std::tie(b->spec.arrival, b->spec.stream_id, b->spec.kernel_id);
  });

  int free = device.free_sms;
  int resident_count = static_cast<int>(resident.size());
  for (const auto* k : order) {
    if (resident_count >= tenants) break;
    const auto config = config_for(ctx, k->spec.shape, k->spec.dtype, tenants);
    const double share = std::min(config.sm_footprint, 1.0 / tenants);
    const int alloc = std::max(
        1, static_cast<int>(std::floor(share * profile.sm_count + 1e-9)));
    if (alloc > free) break;
    const auto cost =
        shape_cost(k->spec.shape, k->spec.dtype, 1, config, profile, alloc);
    const double factor = interference_factor(tenants, params, rng);
    Dispatch d;
    d.kernels = {k->spec.kernel_id};
    d.start = now;
    d.duration = ceil_ns(static_cast<double>(cost.duration) * factor);
    d.predicted_duration = ceil_ns(static_cast<double>(cost.duration) *
                                   contention(tenants, params));
    d.sm_allocation = alloc;
    d.context_id = k->spec.stream_id;
    d.infeasible = slack_of(*k, now) < 0;
    d.padded_flops = cost.flops;
    d.useful_flops = cost.flops;
    d.co_tenancy = tenants;
    d.interference = factor;
    out.dispatches.push_back(std::move(d));
    free -= alloc;
    ++resident_count;
  }
  return out;
}

StepResult schedule_step(std::span<const ReadyKernel> ready,
                         const DeviceState& device,
                         const SchedulerPolicy& policy, Nanos now,
                         SchedulerContext& ctx) {
  switch (policy.variant) {
    case PolicyKind::kFifo:
      return serial_step(ready, device, false, now, ctx);
    case PolicyKind::kEdf:
      return serial_step(ready, device, true, now, ctx);
    case PolicyKind::kOooCoalesce:
      return ooo_step(ready, device, policy.params, now, ctx);
    case PolicyKind::kTimeMux:
      return dispatch_time_mux(ready, device, now, ctx);
    case PolicyKind::kSpaceMux: {
      Rng fallback(0);
      return dispatch_space_mux(ready, device, now, policy.params, ctx,
                                ctx.rng != nullptr ? *ctx.rng : fallback);
    }
  }
  return {};
}

StragglerMonitor::StragglerMonitor(double threshold, int window)
    : threshold_(threshold), window_(static_cast<std::size_t>(window)) {}

void StragglerMonitor::record(StreamId stream, double ratio) {
  auto& q = ratios_[stream];
  q.push_back(ratio);
  while (q.size() > window_) q.pop_front();
}

double StragglerMonitor::p99_ratio(StreamId stream) const {
  auto it = ratios_.find(stream);
  if (it == ratios_.end() || it->second.empty()) return 0.0;
  std::vector<double> v(it->second.begin(), it->second.end());
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(
      std::ceil(0.99 * static_cast<double>(v.size())));
  return v[std::max<std::size_t>(rank, 1) - 1];
}

bool StragglerMonitor::degraded(StreamId stream) const {
  auto it = ratios_.find(stream);
  if (it == ratios_.end() || it->second.size() < window_) return false;
  return p99_ratio(stream) > threshold_;
}

}  // namespace oojit
