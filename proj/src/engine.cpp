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

#include "oojit/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>
#include <unordered_map>

#include "oojit/rng.hpp"

namespace oojit {

Workload Workload::generate(const WorkloadSpec& spec, const ModelLibrary& library,
                            std::uint64_t seed) {
  return Workload{spec, generate_workload(spec, library, seed)};
}

namespace {

using nlohmann::json;

// Equal timestamps: completions, then arrivals, then wakeups.
enum class EventKind { kComplete = 0, kArrival = 1, kWakeup = 2 };

struct Event {
  Nanos time;
  EventKind kind;
  std::int64_t id;
  friend bool operator>(const Event& a, const Event& b) {
    return std::tie(a.time, a.kind, a.id) > std::tie(b.time, b.kind, b.id);
  }
};

enum class KernelPhase { kWaiting, kReady, kRunning, kDone, kCancelled };

struct KernelState {
  const KernelSpec* spec = nullptr;
  std::size_t request = 0;
  int pending_deps = 0;
  std::vector<KernelId> successors;
  Nanos predicted_duration = 0;
  Nanos predicted_remaining = 0;
  KernelPhase phase = KernelPhase::kWaiting;
};

struct RequestState {
  const InferenceRequest* request = nullptr;
  std::size_t remaining = 0;
  RequestStatus status = RequestStatus::kPending;
  bool arrived = false;
  Nanos finish = 0;
};

struct LiveEntry {
  std::size_t index = 0;  // into timeline / usage
  std::set<StreamId> streams;
  Nanos duration = 0;
  Nanos predicted = 0;
};

bool is_mux(PolicyKind kind) {
  return kind == PolicyKind::kTimeMux || kind == PolicyKind::kSpaceMux;
}

class Simulation {
 public:
  Simulation(const Workload& workload, const DeviceProfile& profile,
             const RunOptions& options)
      : workload_(workload),
        profile_(profile),
        options_(options),
        device_(DeviceState::idle(profile)),
        monitor_(options.policy.params.straggler_threshold,
                 options.policy.params.straggler_window),
        jitter_rng_(mix_seed(options.seed, 0x6A6974746572ULL)) {}

  RunResult run() {
    options_.policy.validate();
    setup();
    for (std::size_t i = 0; i < requests_.size(); ++i) {
      const auto* r = requests_[i].request;
      events_.push({r->arrival, EventKind::kArrival, r->request_id});
    }
    const Nanos horizon = workload_.spec.duration;
    while (!events_.empty() && events_.top().time <= horizon) {
      const Nanos now = events_.top().time;
      while (!events_.empty() && events_.top().time == now) {
        const auto ev = events_.top();
        events_.pop();
        switch (ev.kind) {
          case EventKind::kComplete:
            on_complete(ev.id, now);
            break;
          case EventKind::kArrival:
            on_arrival(ev.id, now);
            break;
          case EventKind::kWakeup:
            wakeups_.erase(now);
            break;
        }
      }
      schedule(now);
    }
    return finish();
  }

 private:
  void setup() {
    for (const auto& s : workload_.spec.streams) {
      degradation_[s.stream_id] = s.degradation;
      streams_.insert(s.stream_id);
    }
    Rng noise(mix_seed(options_.seed, 0x6E6F697365ULL));
    requests_.reserve(workload_.requests.size());
    for (const auto& req : workload_.requests) {
      req.validate();
      const std::size_t index = requests_.size();
      request_index_[req.request_id] = index;
      streams_.insert(req.stream_id);
      requests_.push_back({&req, req.kernels.size()});
      for (const auto& k : req.kernels) {
        auto& ks = kernels_[k.kernel_id];
        ks.spec = &k;
        ks.request = index;
        ks.pending_deps = static_cast<int>(k.deps.size());
        auto cost = kernel_cost(k, solo_config(k), profile_);
        double pred = static_cast<double>(cost.duration);
        if (options_.prediction_noise > 0.0) {
          pred *= 1.0 + noise.uniform(-options_.prediction_noise,
                                      options_.prediction_noise);
        }
        ks.predicted_duration = std::max<Nanos>(1, ceil_ns(pred));
      }
      for (const auto& k : req.kernels) {
        for (auto d : k.deps) kernels_.at(d).successors.push_back(k.kernel_id);
      }
      // Critical-path tail: this kernel plus its longest chain of successors.
      std::function<Nanos(KernelId)> tail = [&](KernelId id) -> Nanos {
        auto& ks = kernels_.at(id);
        if (ks.predicted_remaining > 0) return ks.predicted_remaining;
        Nanos best = 0;
        for (auto s : ks.successors) best = std::max(best, tail(s));
        ks.predicted_remaining = ks.predicted_duration + best;
        return ks.predicted_remaining;
      };
      for (const auto& k : req.kernels) tail(k.kernel_id);
    }
  }

  TuningConfig solo_config(const KernelSpec& k) const {
    if (options_.tuning == nullptr) return TuningConfig::default_config();
    return options_.tuning->lookup_or_default(tune_key(k.shape, k.dtype), 1);
  }

  void emit(Nanos time, const char* kind, json payload) {
    if (!options_.record_trace) return;
    trace_.push_back({time, kind, std::move(payload)});
  }

  void make_ready(KernelId id) {
    auto& ks = kernels_.at(id);
    ks.phase = KernelPhase::kReady;
    const auto& req = *requests_[ks.request].request;
    ReadyKernel rk;
    rk.spec = *ks.spec;
    rk.slo = req.constraint.finite() ? req.constraint.slo : kNever;
    rk.predicted_remaining = ks.predicted_remaining;
    rk.predicted_duration = ks.predicted_duration;
    ready_.emplace(id, std::move(rk));
  }

  void on_arrival(RequestId id, Nanos now) {
    auto& rs = requests_.at(request_index_.at(id));
    rs.arrived = true;
    const auto& req = *rs.request;
    emit(now, "arrival",
         {{"request", id},
          {"stream", req.stream_id},
          {"kernels", req.kernels.size()},
          {"deadline", req.constraint.deadline_after(req.arrival)}});
    if (evicted_.count(req.stream_id)) {
      rs.status = RequestStatus::kEvicted;
      for (const auto& k : req.kernels) kernels_.at(k.kernel_id).phase = KernelPhase::kCancelled;
      emit(now, "evict", {{"request", id}, {"stream", req.stream_id}});
      return;
    }
    for (const auto& k : req.kernels) {
      if (k.deps.empty()) make_ready(k.kernel_id);
    }
  }

  void release_device(std::int64_t entry_id) {
    auto it = std::find_if(device_.running.begin(), device_.running.end(),
                           [&](const auto& e) { return e.entry_id == entry_id; });
    device_.free_sms += it->sm_allocation;
    device_.running.erase(it);
  }

  void on_complete(std::int64_t entry_id, Nanos now) {
    auto live_it = live_.find(entry_id);
    if (live_it == live_.end()) return;  // cancelled by an eviction
    const LiveEntry live = live_it->second;
    live_.erase(live_it);
    release_device(entry_id);

    const auto& entry = timeline_[live.index];
    auto& usage = usage_[live.index];
    json done = json::array();
    for (auto id : entry.kernels) {
      auto& ks = kernels_.at(id);
      ks.phase = KernelPhase::kDone;
      usage.useful_flops[ks.spec->stream_id] += ks.spec->flops();
      auto& rs = requests_[ks.request];
      if (rs.status != RequestStatus::kPending) continue;
      for (auto s : ks.successors) {
        if (--kernels_.at(s).pending_deps == 0) make_ready(s);
      }
      if (--rs.remaining == 0) {
        rs.status = RequestStatus::kCompleted;
        rs.finish = now;
        done.push_back(rs.request->request_id);
      }
    }
    emit(now, "complete",
         {{"entry", entry_id}, {"kernels", entry.kernels}, {"requests", done}});

    const double ratio = live.predicted > 0
                             ? static_cast<double>(live.duration) / live.predicted
                             : 1.0;
    for (auto s : live.streams) monitor_.record(s, ratio);
    if (!options_.evict_stragglers) return;
    for (auto s : live.streams) {
      if (!evicted_.count(s) && monitor_.degraded(s)) evict(s, now);
    }
  }

  void evict(StreamId stream, Nanos now) {
    evicted_.insert(stream);
    evicted_order_.push_back(stream);
    emit(now, "evict", {{"stream", stream}, {"p99_ratio", monitor_.p99_ratio(stream)}});

    // Cancel in-flight entries that carry only this stream's work.
    std::vector<std::int64_t> cancel;
    for (const auto& [id, live] : live_) {
      if (live.streams.size() == 1 && *live.streams.begin() == stream) cancel.push_back(id);
    }
    for (auto id : cancel) {
      const auto live = live_.at(id);
      live_.erase(id);
      release_device(id);
      auto& entry = timeline_[live.index];
      entry.cancelled = true;
      entry.end = std::max(entry.start, now);
      usage_[live.index].end = entry.end;
      for (auto k : entry.kernels) kernels_.at(k).phase = KernelPhase::kCancelled;
    }
    for (auto it = ready_.begin(); it != ready_.end();) {
      if (it->second.spec.stream_id == stream) {
        kernels_.at(it->first).phase = KernelPhase::kCancelled;
        it = ready_.erase(it);
      } else {
        ++it;
      }
    }
    auto& held = device_.reservations;
    for (auto& r : held) {
      std::erase_if(r.members, [&](KernelId k) { return !ready_.count(k); });
    }
    std::erase_if(held, [](const auto& r) { return r.members.empty(); });

    for (auto& rs : requests_) {
      if (rs.request->stream_id != stream || !rs.arrived ||
          rs.status != RequestStatus::kPending) {
        continue;
      }
      rs.status = RequestStatus::kEvicted;
      emit(now, "evict", {{"request", rs.request->request_id}, {"stream", stream}});
    }
  }

  void schedule(Nanos now) {
    if (ready_.empty()) return;
    std::vector<ReadyKernel> ready;
    ready.reserve(ready_.size());
    for (const auto& [id, rk] : ready_) ready.push_back(rk);

    SchedulerContext ctx;
    ctx.profile = &profile_;
    ctx.tuning = options_.tuning;
    ctx.max_tenancy = workload_.spec.max_tenancy;
    ctx.rng = &jitter_rng_;
    auto step = schedule_step(ready, device_, options_.policy, now, ctx);
    device_.reservations = std::move(step.reservations);

    for (auto& members : step.withheld) {
      emit(now, "withhold", {{"kernels", members}});
      withheld_kernels_ += static_cast<std::int64_t>(members.size());
      withheld_.emplace_back(now, std::move(members));
    }
    for (const auto& d : step.dispatches) apply(d, now);
    if (step.wakeup != kNever && step.wakeup > now && !wakeups_.count(step.wakeup)) {
      wakeups_.insert(step.wakeup);
      events_.push({step.wakeup, EventKind::kWakeup, next_wakeup_++});
    }
  }

  void apply(const Dispatch& d, Nanos now) {
    const std::int64_t entry_id = next_entry_++;
    const auto& first = *kernels_.at(d.kernels.front()).spec;
    Nanos duration = d.duration;
    if (is_mux(options_.policy.variant)) {
      const auto it = degradation_.find(first.stream_id);
      if (it != degradation_.end() && it->second != 1.0) {
        duration = ceil_ns(static_cast<double>(duration) * it->second);
      }
    }
    if (d.context_switch) {
      ++context_switches_;
      emit(now, "context_switch",
           {{"from", *device_.last_context}, {"to", d.context_id},
            {"cost", d.start - now}});
    }

    TimelineEntry entry;
    entry.entry_id = entry_id;
    entry.start = d.start;
    entry.end = d.start + duration;
    entry.sm_allocation = d.sm_allocation;
    entry.context_id = d.context_id;
    entry.kernels = d.kernels;
    entry.predicted_duration = d.predicted_duration;
    entry.infeasible = d.infeasible;

    EntryUsage usage;
    usage.start = entry.start;
    usage.end = entry.end;
    usage.sm_allocation = d.sm_allocation;
    usage.peak_flops = profile_.peak(compute_path(first.dtype));
    usage.padded_flops = d.padded_flops;

    LiveEntry live;
    live.index = timeline_.size();
    live.duration = duration;
    live.predicted = d.predicted_duration;
    for (auto id : d.kernels) {
      auto& ks = kernels_.at(id);
      ks.phase = KernelPhase::kRunning;
      ready_.erase(id);
      usage.member_flops[ks.spec->stream_id] += ks.spec->flops();
      live.streams.insert(ks.spec->stream_id);
    }
    if (d.infeasible) ++infeasible_;

    RunningEntry running;
    running.entry_id = entry_id;
    running.start = entry.start;
    running.end = entry.end;
    running.sm_allocation = d.sm_allocation;
    running.context_id = d.context_id;
    running.stream_id = first.stream_id;
    device_.running.push_back(running);
    device_.free_sms -= d.sm_allocation;
    device_.last_context = d.context_id;
    device_.last_stream = first.stream_id;

    emit(now, "dispatch",
         {{"entry", entry_id},
          {"kernels", d.kernels},
          {"start", entry.start},
          {"end", entry.end},
          {"sm_allocation", d.sm_allocation},
          {"context", d.context_id},
          {"infeasible", d.infeasible},
          {"co_tenancy", d.co_tenancy}});
    events_.push({entry.end, EventKind::kComplete, entry_id});
    live_.emplace(entry_id, live);
    timeline_.push_back(std::move(entry));
    usage_.push_back(std::move(usage));
  }

  RunResult finish() {
    RunResult out;
    for (const auto& rs : requests_) {
      RequestOutcome o;
      o.request_id = rs.request->request_id;
      o.stream_id = rs.request->stream_id;
      o.arrival = rs.request->arrival;
      o.deadline = rs.request->constraint.deadline_after(rs.request->arrival);
      o.status = rs.status;
      o.finish = rs.finish;
      out.requests.push_back(o);
    }
    // Entries cancelled before they began leave no footprint.
    std::vector<TimelineEntry> timeline;
    std::vector<EntryUsage> usage;
    for (std::size_t i = 0; i < timeline_.size(); ++i) {
      if (timeline_[i].end <= timeline_[i].start) continue;
      timeline.push_back(std::move(timeline_[i]));
      usage.push_back(std::move(usage_[i]));
    }
    std::vector<StreamId> streams(streams_.begin(), streams_.end());
    out.metrics = compute_metrics(out.requests, usage, streams, profile_,
                                  workload_.spec.duration);
    out.metrics.withheld = withheld_kernels_;
    out.metrics.context_switches = context_switches_;
    out.metrics.infeasible_dispatches = infeasible_;
    out.metrics.evictions = static_cast<std::int64_t>(evicted_order_.size());
    out.timeline = std::move(timeline);
    out.trace = std::move(trace_);
    out.withheld = std::move(withheld_);
    out.evicted_streams = evicted_order_;
    out.meta.seed = options_.seed;
    out.meta.policy = std::string(to_string(options_.policy.variant));
    out.meta.profile = profile_.name;
    return out;
  }

  const Workload& workload_;
  const DeviceProfile& profile_;
  RunOptions options_;
  DeviceState device_;
  StragglerMonitor monitor_;
  Rng jitter_rng_;

  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
  std::set<Nanos> wakeups_;
  std::int64_t next_wakeup_ = 0;
  std::int64_t next_entry_ = 0;

  std::vector<RequestState> requests_;
  std::unordered_map<RequestId, std::size_t> request_index_;
  std::unordered_map<KernelId, KernelState> kernels_;
  std::map<KernelId, ReadyKernel> ready_;
  std::map<std::int64_t, LiveEntry> live_;
  std::map<StreamId, double> degradation_;
  std::set<StreamId> streams_;
  std::set<StreamId> evicted_;
  std::vector<StreamId> evicted_order_;

  std::vector<TimelineEntry> timeline_;
  std::vector<EntryUsage> usage_;
  std::vector<TraceEvent> trace_;
  std::vector<std::pair<Nanos, std::vector<KernelId>>> withheld_;
  std::int64_t withheld_kernels_ = 0;
  std::int64_t context_switches_ = 0;
  std::int64_t infeasible_ = 0;
};

}  // namespace

RunResult run(const Workload& workload, const DeviceProfile& profile,
              const RunOptions& options) {
  profile.validate();
  return Simulation(workload, profile, options).run();
}

std::string trace_ndjson(const RunResult& result) {
  std::string out;
  for (const auto& ev : result.trace) {
    json line = ev.payload;
    line["time"] = ev.time;
    line["kind"] = ev.kind;
    out += line.dump();
    out += '\n';
  }
  return out;
}

Comparison compare(const Workload& workload, const DeviceProfile& profile,
                   const std::vector<PolicyKind>& policies,
                   const RunOptions& base, int jobs) {
  Comparison cmp;
  cmp.runs.resize(policies.size());
  for (auto p : policies) cmp.policies.emplace_back(to_string(p));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < policies.size(); i = next++) {
      RunOptions opts = base;
      opts.policy.variant = policies[i];
      cmp.runs[i] = run(workload, profile, opts);
    }
  };
  const auto threads = static_cast<std::size_t>(
      std::clamp<int>(jobs, 1, static_cast<int>(std::max<std::size_t>(1, policies.size()))));
  if (threads == 1) {
    worker();
    return cmp;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return cmp;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

struct Headline {
  const char* name;
  double (*get)(const StreamMetrics&);
};

const std::vector<Headline>& headlines() {
  static const std::vector<Headline> h = {
      {"throughput_rps", [](const StreamMetrics& m) { return m.throughput_rps; }},
      {"throughput_flops", [](const StreamMetrics& m) { return m.throughput_flops; }},
      {"latency_p50_ns", [](const StreamMetrics& m) { return double(m.latency_p50); }},
      {"latency_p99_ns", [](const StreamMetrics& m) { return double(m.latency_p99); }},
      {"slo_attainment", [](const StreamMetrics& m) { return m.slo_attainment; }},
      {"utilization", [](const StreamMetrics& m) { return m.utilization; }},
      {"flop_efficiency", [](const StreamMetrics& m) { return m.flop_efficiency; }},
  };
  return h;
}

// 0/0 counts as parity; x/0 has no finite ratio.
std::optional<double> ratio(double v, double base) {
  if (base == 0.0) return v == 0.0 ? std::optional<double>(1.0) : std::nullopt;
  return v / base;
}

}  // namespace

std::string comparison_csv(const Comparison& cmp) {
  std::string header = metrics_csv_header();
  std::string out = "policy," + header.substr(header.find(',') + 1) + "\n";
  for (std::size_t i = 0; i < cmp.runs.size(); ++i) {
    const auto row = metrics_csv_row(cmp.policies[i], cmp.runs[i].metrics.global);
    out += row + "\n";
  }
  return out;
}

std::string ratio_csv(const Comparison& cmp) {
  std::string out = "policy";
  for (const auto& h : headlines()) out += std::string(",") + h.name + "_ratio";
  out += "\n";
  if (cmp.runs.empty()) return out;
  const auto& base = cmp.runs.front().metrics.global;
  for (std::size_t i = 0; i < cmp.runs.size(); ++i) {
    out += cmp.policies[i];
    for (const auto& h : headlines()) {
      const auto r = ratio(h.get(cmp.runs[i].metrics.global), h.get(base));
      out += ",";
      if (r) out += fmt(*r);
    }
    out += "\n";
  }
  return out;
}

json comparison_json(const Comparison& cmp) {
  json out;
  out["baseline"] = cmp.policies.empty() ? "" : cmp.policies.front();
  out["runs"] = json::array();
  for (std::size_t i = 0; i < cmp.runs.size(); ++i) {
    json row;
    row["policy"] = cmp.policies[i];
    row["metrics"] = metrics_to_json(cmp.runs[i].metrics, cmp.runs[i].meta);
    json ratios;
    for (const auto& h : headlines()) {
      const auto r = ratio(h.get(cmp.runs[i].metrics.global),
                           h.get(cmp.runs.front().metrics.global));
      ratios[h.name] = r ? json(*r) : json(nullptr);
    }
    row["ratios"] = ratios;
    out["runs"].push_back(std::move(row));
  }
  return out;
}

}  // namespace oojit
