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

#include "oojit/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "oojit/rng.hpp"

namespace oojit {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ParseError(where + ": unknown field '" + key + "'");
    }
  }
}

const json& need(const json& obj, const char* field, const std::string& where) {
  if (!obj.contains(field)) {
    throw ParseError(where + ": missing field '" + field + "'");
  }
  return obj.at(field);
}

template <typename T>
T as(const json& value, const std::string& where, const char* field) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw ParseError(where + ": field '" + field + "' has the wrong type");
  }
}

std::int64_t as_int(const json& value, const std::string& where,
                    const char* field) {
  if (!value.is_number_integer()) {
    throw ParseError(where + ": field '" + field + "' must be an integer");
  }
  return value.get<std::int64_t>();
}

std::string_view kind_name(ArrivalKind kind) {
  switch (kind) {
    case ArrivalKind::kPoisson:
      return "poisson";
    case ArrivalKind::kBurst:
      return "burst";
    case ArrivalKind::kFixed:
      return "fixed";
  }
  return "?";
}

ArrivalSpec parse_arrival(const json& obj, const std::string& where) {
  reject_unknown(obj,
                 {"kind", "rate_per_s", "schedule_ns", "start_ns", "period_ns",
                  "count", "burst_multiplier", "burst_ns", "seed"},
                 where);
  ArrivalSpec a;
  const auto kind = as<std::string>(need(obj, "kind", where), where, "kind");
  if (kind == "poisson") {
    a.kind = ArrivalKind::kPoisson;
  } else if (kind == "burst") {
    a.kind = ArrivalKind::kBurst;
  } else if (kind == "fixed") {
    a.kind = ArrivalKind::kFixed;
  } else {
    throw ParseError(where + ": unknown arrival kind '" + kind + "'");
  }
  if (obj.contains("seed")) {
    a.seed = as<std::uint64_t>(obj.at("seed"), where, "seed");
  }
  if (a.kind == ArrivalKind::kFixed) {
    if (obj.contains("schedule_ns")) {
      for (const auto& t : obj.at("schedule_ns")) {
        a.schedule_ns.push_back(as_int(t, where, "schedule_ns"));
      }
    } else {
      const Nanos start =
          obj.contains("start_ns") ? as_int(obj.at("start_ns"), where, "start_ns") : 0;
      const Nanos period = as_int(need(obj, "period_ns", where), where, "period_ns");
      const auto count = as_int(need(obj, "count", where), where, "count");
      if (period < 0 || count < 0) {
        throw ValidationError(where + ": period_ns and count must be >= 0");
      }
      for (std::int64_t i = 0; i < count; ++i) a.schedule_ns.push_back(start + i * period);
    }
    return a;
  }
  a.rate_per_s = as<double>(need(obj, "rate_per_s", where), where, "rate_per_s");
  if (a.kind == ArrivalKind::kBurst) {
    a.period_ns = as_int(need(obj, "period_ns", where), where, "period_ns");
    a.burst_ns = as_int(need(obj, "burst_ns", where), where, "burst_ns");
    if (obj.contains("burst_multiplier")) {
      a.burst_multiplier =
          as<double>(obj.at("burst_multiplier"), where, "burst_multiplier");
    }
  }
  return a;
}

json arrival_to_json(const ArrivalSpec& a) {
  json out;
  out["kind"] = kind_name(a.kind);
  out["seed"] = a.seed;
  if (a.kind == ArrivalKind::kFixed) {
    out["schedule_ns"] = a.schedule_ns;
    return out;
  }
  out["rate_per_s"] = a.rate_per_s;
  if (a.kind == ArrivalKind::kBurst) {
    out["period_ns"] = a.period_ns;
    out["burst_ns"] = a.burst_ns;
    out["burst_multiplier"] = a.burst_multiplier;
  }
  return out;
}

// Exponential gap in ns for the given rate.
double exp_gap(Rng& rng, double rate_per_s) {
  return -std::log1p(-rng.uniform()) / rate_per_s * 1e9;
}

}  // namespace

void WorkloadSpec::validate(const ModelLibrary& library) const {
  if (duration <= 0) throw ValidationError("workload: duration_ns must be > 0");
  if (max_tenancy < 1) throw ValidationError("workload: max_tenancy must be >= 1");
  std::set<StreamId> ids;
  for (const auto& s : streams) {
    const auto where = "stream " + std::to_string(s.stream_id);
    if (!ids.insert(s.stream_id).second) {
      throw ValidationError("workload: duplicate stream_id " +
                            std::to_string(s.stream_id));
    }
    if (s.stream_id < 0) throw ValidationError(where + ": stream_id must be >= 0");
    if (!library.contains(s.model_name)) {
      throw ValidationError(where + ": unknown model '" + s.model_name + "'");
    }
    if (s.batch < 1) throw ValidationError(where + ": batch must be >= 1");
    if (!(s.degradation > 0.0)) {
      throw ValidationError(where + ": degradation must be > 0");
    }
    const auto& a = s.arrival;
    if (a.kind == ArrivalKind::kFixed) {
      if (std::any_of(a.schedule_ns.begin(), a.schedule_ns.end(),
                      [](Nanos t) { return t < 0; })) {
        throw ValidationError(where + ": arrival times must be >= 0");
      }
      continue;
    }
    if (!(a.rate_per_s > 0.0) || !std::isfinite(a.rate_per_s)) {
      throw ValidationError(where + ": rate_per_s must be > 0");
    }
    if (a.kind == ArrivalKind::kBurst) {
      if (a.period_ns <= 0 || a.burst_ns < 0 || a.burst_ns > a.period_ns) {
        throw ValidationError(where + ": need 0 <= burst_ns <= period_ns, period_ns > 0");
      }
      if (!(a.burst_multiplier >= 1.0)) {
        throw ValidationError(where + ": burst_multiplier must be >= 1");
      }
    }
  }
}

WorkloadSpec WorkloadSpec::from_json(const json& doc) {
  const std::string where = "workload";
  reject_unknown(doc, {"duration_ns", "max_tenancy", "streams"}, where);
  WorkloadSpec spec;
  spec.duration = as_int(need(doc, "duration_ns", where), where, "duration_ns");
  if (doc.contains("max_tenancy")) {
    spec.max_tenancy = static_cast<int>(as_int(doc.at("max_tenancy"), where, "max_tenancy"));
  }
  const auto& streams = need(doc, "streams", where);
  if (!streams.is_array()) throw ParseError(where + ": 'streams' must be an array");
  for (std::size_t i = 0; i < streams.size(); ++i) {
    const auto& obj = streams[i];
    const auto at = where + ".streams[" + std::to_string(i) + "]";
    reject_unknown(obj,
                   {"stream_id", "model_name", "batch", "slo_ns", "slo_class",
                    "arrival", "degradation"},
                   at);
    StreamSpec s;
    s.stream_id = as_int(need(obj, "stream_id", at), at, "stream_id");
    s.model_name = as<std::string>(need(obj, "model_name", at), at, "model_name");
    if (obj.contains("batch")) s.batch = as_int(obj.at("batch"), at, "batch");
    const auto cls = obj.contains("slo_class")
                         ? as<std::string>(obj.at("slo_class"), at, "slo_class")
                         : std::string("interactive");
    if (cls == "batch") {
      s.constraint = LatencyConstraint::batch();
    } else if (cls == "interactive") {
      try {
        s.constraint = LatencyConstraint::interactive(
            as_int(need(obj, "slo_ns", at), at, "slo_ns"));
      } catch (const DomainError& e) {
        throw ValidationError(at + ": " + e.what());
      }
    } else {
      throw ParseError(at + ": unknown slo_class '" + cls + "'");
    }
    s.arrival = parse_arrival(need(obj, "arrival", at), at + ".arrival");
    if (obj.contains("degradation")) {
      s.degradation = as<double>(obj.at("degradation"), at, "degradation");
    }
    spec.streams.push_back(std::move(s));
  }
  return spec;
}

WorkloadSpec WorkloadSpec::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open workload file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("workload file '" + path + "': " + e.what());
  }
  return from_json(doc);
}

json WorkloadSpec::to_json() const {
  json out;
  out["duration_ns"] = duration;
  out["max_tenancy"] = max_tenancy;
  out["streams"] = json::array();
  for (const auto& s : streams) {
    json obj;
    obj["stream_id"] = s.stream_id;
    obj["model_name"] = s.model_name;
    obj["batch"] = s.batch;
    if (s.constraint.finite()) {
      obj["slo_class"] = "interactive";
      obj["slo_ns"] = s.constraint.slo;
    } else {
      obj["slo_class"] = "batch";
    }
    obj["arrival"] = arrival_to_json(s.arrival);
    if (s.degradation != 1.0) obj["degradation"] = s.degradation;
    out["streams"].push_back(std::move(obj));
  }
  return out;
}

const StreamSpec& WorkloadSpec::stream(StreamId id) const {
  for (const auto& s : streams) {
    if (s.stream_id == id) return s;
  }
  throw ValidationError("workload: no stream " + std::to_string(id));
}

std::vector<Nanos> sample_arrivals(const ArrivalSpec& arrival, Nanos duration,
                                   std::uint64_t seed) {
  std::vector<Nanos> out;
  if (arrival.kind == ArrivalKind::kFixed) {
    for (Nanos t : arrival.schedule_ns) {
      if (t >= 0 && t < duration) out.push_back(t);
    }
    std::sort(out.begin(), out.end());
    return out;
  }
  Rng rng(seed);
  const double peak = arrival.kind == ArrivalKind::kBurst
                          ? arrival.rate_per_s * arrival.burst_multiplier
                          : arrival.rate_per_s;
  double t = 0.0;
  while (true) {
    t += exp_gap(rng, peak);
    if (t >= static_cast<double>(duration)) break;
    const auto at = static_cast<Nanos>(t);
    if (arrival.kind == ArrivalKind::kBurst) {
      // Thinning: accept with probability rate(t) / peak.
      const bool in_burst = (at % arrival.period_ns) < arrival.burst_ns;
      const double keep = in_burst ? 1.0 : 1.0 / arrival.burst_multiplier;
      if (rng.uniform() >= keep) continue;
    }
    out.push_back(at);
  }
  return out;
}

namespace {

std::uint64_t stream_seed(const StreamSpec& s, std::uint64_t seed) {
  return mix_seed(seed ^ s.arrival.seed, static_cast<std::uint64_t>(s.stream_id));
}

}  // namespace

std::vector<InferenceRequest> generate_workload(const WorkloadSpec& spec,
                                                const ModelLibrary& library,
                                                std::uint64_t seed) {
  spec.validate(library);
  struct Pending {
    Nanos arrival;
    StreamId stream;
    const StreamSpec* spec;
  };
  std::vector<Pending> pending;
  for (const auto& s : spec.streams) {
    for (Nanos t : sample_arrivals(s.arrival, spec.duration, stream_seed(s, seed))) {
      pending.push_back({t, s.stream_id, &s});
    }
  }
  std::stable_sort(pending.begin(), pending.end(), [](const auto& a, const auto& b) {
    return std::tie(a.arrival, a.stream) < std::tie(b.arrival, b.stream);
  });

  std::vector<InferenceRequest> out;
  out.reserve(pending.size());
  KernelId next_kernel = 0;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    const auto& p = pending[i];
    InferenceRequest req;
    req.request_id = static_cast<RequestId>(i);
    req.stream_id = p.stream;
    req.arrival = p.arrival;
    req.constraint = p.spec->constraint;
    auto chain = lower_model(library, p.spec->model_name, p.spec->batch);
    const KernelId base = next_kernel;
    for (auto& k : chain) {
      k.kernel_id += base;
      for (auto& d : k.deps) d += base;
      k.stream_id = p.stream;
      k.request_id = req.request_id;
      k.arrival = p.arrival;
      k.deadline = req.constraint.deadline_after(p.arrival);
    }
    next_kernel += static_cast<KernelId>(chain.size());
    req.kernels = std::move(chain);
    out.push_back(std::move(req));
  }
  return out;
}

WorkloadSpec freeze_arrivals(const WorkloadSpec& spec, std::uint64_t seed) {
  WorkloadSpec out = spec;
  for (auto& s : out.streams) {
    auto times = sample_arrivals(s.arrival, spec.duration, stream_seed(s, seed));
    s.arrival = ArrivalSpec{};
    s.arrival.kind = ArrivalKind::kFixed;
    s.arrival.schedule_ns = std::move(times);
  }
  return out;
}

}  // namespace oojit
