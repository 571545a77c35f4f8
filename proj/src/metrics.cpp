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

#include "oojit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace oojit {

Nanos percentile(std::vector<Nanos> samples, double p) {
  if (samples.empty()) throw DomainError("percentile of an empty sample set");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("percentile p must lie in [0, 1]");
  std::sort(samples.begin(), samples.end());
  const auto n = static_cast<double>(samples.size());
  auto rank = static_cast<std::size_t>(std::ceil(p * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, samples.size());
  return samples[rank - 1];
}

const StreamMetrics& Metrics::stream(StreamId id) const {
  for (const auto& s : streams) {
    if (s.stream_id == id) return s;
  }
  throw ValidationError("metrics: no stream " + std::to_string(id));
}

namespace {

void finish_latency(StreamMetrics& m, std::vector<Nanos>& latencies) {
  if (latencies.empty()) return;
  m.latency_p50 = percentile(latencies, 0.50);
  m.latency_p90 = percentile(latencies, 0.90);
  m.latency_p99 = percentile(latencies, 0.99);
  const double sum = std::accumulate(latencies.begin(), latencies.end(), 0.0);
  m.latency_mean = sum / static_cast<double>(latencies.size());
}

}  // namespace

Metrics compute_metrics(const std::vector<RequestOutcome>& requests,
                        const std::vector<EntryUsage>& entries,
                        const std::vector<StreamId>& streams,
                        const DeviceProfile& profile, Nanos duration) {
  Metrics out;
  out.duration = duration;
  std::map<StreamId, StreamMetrics> rows;
  std::map<StreamId, std::vector<Nanos>> latencies;
  for (auto s : streams) rows[s].stream_id = s;
  std::vector<Nanos> all_latencies;

  Nanos first_arrival = kNever;
  Nanos last_finish = 0;
  for (const auto& r : requests) {
    auto& row = rows[r.stream_id];
    row.stream_id = r.stream_id;
    ++row.arrived;
    first_arrival = std::min(first_arrival, r.arrival);
    switch (r.status) {
      case RequestStatus::kCompleted:
        ++row.completed;
        if (r.finish <= r.deadline) ++row.met;
        latencies[r.stream_id].push_back(r.finish - r.arrival);
        all_latencies.push_back(r.finish - r.arrival);
        last_finish = std::max(last_finish, r.finish);
        break;
      case RequestStatus::kEvicted:
        ++row.evicted;
        break;
      case RequestStatus::kPending:
        ++row.pending;
        break;
    }
  }

  // Busy time is clipped to the horizon; useful flops only count kernels
  // that completed.
  std::map<StreamId, double> capacity;
  double global_capacity = 0.0;
  double global_busy = 0.0;
  for (const auto& e : entries) {
    const Nanos start = std::min(e.start, duration);
    const Nanos end = std::min(e.end, duration);
    const double busy = static_cast<double>(end - start) * e.sm_allocation;
    const double cap = e.peak_flops * e.sm_allocation / profile.sm_count *
                       static_cast<double>(end - start) * 1e-9;
    global_busy += busy;
    global_capacity += cap;
    out.padded_flops += e.padded_flops;
    std::int64_t total = 0;
    for (const auto& [s, f] : e.member_flops) total += f;
    for (const auto& [s, f] : e.member_flops) {
      const double share = total > 0 ? static_cast<double>(f) / total
                                     : 1.0 / e.member_flops.size();
      rows[s].busy_sm_ns += busy * share;
      capacity[s] += cap * share;
    }
    for (const auto& [s, f] : e.useful_flops) {
      rows[s].useful_flops += f;
      out.global.useful_flops += f;
    }
  }

  if (last_finish > 0 && first_arrival != kNever && last_finish > first_arrival) {
    out.span_start = first_arrival;
    out.span_end = last_finish;
  }
  const double span_s = static_cast<double>(out.span_end - out.span_start) * 1e-9;
  const double window = static_cast<double>(profile.sm_count) * duration;

  auto fill = [&](StreamMetrics& m, double cap, std::vector<Nanos>& lat) {
    if (span_s > 0.0) {
      m.throughput_rps = static_cast<double>(m.completed) / span_s;
      m.throughput_flops = static_cast<double>(m.useful_flops) / span_s;
    }
    const auto judged = m.completed + m.evicted;
    m.slo_attainment = judged > 0 ? static_cast<double>(m.met) / judged : 0.0;
    m.utilization = window > 0.0 ? m.busy_sm_ns / window : 0.0;
    m.flop_efficiency =
        cap > 0.0 ? std::min(1.0, static_cast<double>(m.useful_flops) / cap) : 0.0;
    finish_latency(m, lat);
  };

  for (auto& [s, row] : rows) {
    fill(row, capacity[s], latencies[s]);
    out.global.arrived += row.arrived;
    out.global.completed += row.completed;
    out.global.pending += row.pending;
    out.global.evicted += row.evicted;
    out.global.met += row.met;
    out.streams.push_back(row);
  }
  out.global.busy_sm_ns = global_busy;
  fill(out.global, global_capacity, all_latencies);
  return out;
}

namespace {

nlohmann::json row_json(const StreamMetrics& m) {
  return {
      {"stream_id", m.stream_id},
      {"arrived", m.arrived},
      {"completed", m.completed},
      {"pending", m.pending},
      {"evicted", m.evicted},
      {"met", m.met},
      {"throughput_rps", m.throughput_rps},
      {"throughput_flops", m.throughput_flops},
      {"latency_p50_ns", m.latency_p50},
      {"latency_p90_ns", m.latency_p90},
      {"latency_p99_ns", m.latency_p99},
      {"latency_mean_ns", m.latency_mean},
      {"slo_attainment", m.slo_attainment},
      {"utilization", m.utilization},
      {"flop_efficiency", m.flop_efficiency},
      {"useful_flops", m.useful_flops},
      {"busy_sm_ns", m.busy_sm_ns},
  };
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

nlohmann::json metrics_to_json(const Metrics& metrics, const RunMetadata& meta) {
  nlohmann::json out;
  out["seed"] = meta.seed;
  out["policy"] = meta.policy;
  out["profile"] = meta.profile;
  out["duration_ns"] = metrics.duration;
  out["span_start_ns"] = metrics.span_start;
  out["span_end_ns"] = metrics.span_end;
  out["padded_flops"] = metrics.padded_flops;
  out["withheld"] = metrics.withheld;
  out["context_switches"] = metrics.context_switches;
  out["infeasible_dispatches"] = metrics.infeasible_dispatches;
  out["evictions"] = metrics.evictions;
  out["global"] = row_json(metrics.global);
  out["streams"] = nlohmann::json::array();
  for (const auto& s : metrics.streams) out["streams"].push_back(row_json(s));
  return out;
}

std::string metrics_csv_header() {
  return "scope,stream_id,completed,pending,evicted,throughput_rps,"
         "throughput_flops,latency_p50_ns,latency_p90_ns,latency_p99_ns,"
         "slo_attainment,utilization,flop_efficiency";
}

std::string metrics_csv_row(const std::string& scope, const StreamMetrics& m) {
  std::ostringstream os;
  os << scope << ',' << m.stream_id << ',' << m.completed << ',' << m.pending
     << ',' << m.evicted << ',' << fmt(m.throughput_rps) << ','
     << fmt(m.throughput_flops) << ',' << m.latency_p50 << ',' << m.latency_p90
     << ',' << m.latency_p99 << ',' << fmt(m.slo_attainment) << ','
     << fmt(m.utilization) << ',' << fmt(m.flop_efficiency);
  return os.str();
}

std::string metrics_csv(const Metrics& metrics) {
  std::string out = metrics_csv_header() + "\n";
  out += metrics_csv_row("global", metrics.global) + "\n";
  for (const auto& s : metrics.streams) out += metrics_csv_row("stream", s) + "\n";
  return out;
}

}  // namespace oojit
