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

// Acceptance gate: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria (0 when everything holds).

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "oojit/autotuner.hpp"
#include "oojit/coalescer.hpp"
#include "oojit/engine.hpp"
#include "oracles.hpp"

using namespace oojit;
namespace fs = std::filesystem;

namespace {

constexpr Nanos kMs = 1'000'000;
constexpr Nanos kUs = 1'000;

// Tolerances and targets.
constexpr double kMuxOverTime = 3.0;
constexpr double kMuxOverSpace = 1.5;
constexpr double kGemvOverTime = 1.5;
constexpr double kSoloLow = 0.7, kSoloHigh = 0.9;
constexpr double kCollabGain = 1.25;
constexpr double kLinearR2 = 0.99;
constexpr int kUnfairSeeds = 10, kUnfairNeeded = 9;
constexpr int kPropertyCases = 1000;
constexpr double kPresetTolerance = 1.0;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

const ModelLibrary& lib() { return ModelLibrary::bundled(); }
const DeviceProfile& v100() {
  static const DeviceProfile p = load_profile("v100");
  return p;
}

Workload bundled(const std::string& name, std::uint64_t seed = 0) {
  return Workload::generate(WorkloadSpec::from_file(oracle::scenario(name)), lib(), seed);
}

RunOptions with(PolicyKind kind, std::uint64_t seed = 0) {
  RunOptions o;
  o.policy = SchedulerPolicy::make(kind);
  o.seed = seed;
  return o;
}

double throughput(const Workload& w, PolicyKind kind) {
  return run(w, v100(), with(kind)).metrics.global.throughput_flops;
}

Verdict multiplexing_ordering() {
  const auto w = bundled("gemm16");
  const double tm = throughput(w, PolicyKind::kTimeMux);
  const double sm = throughput(w, PolicyKind::kSpaceMux);
  const double ooo = throughput(w, PolicyKind::kOooCoalesce);
  const bool ok = ooo > sm && sm > tm && ooo / tm >= kMuxOverTime && ooo / sm >= kMuxOverSpace;
  return {ok, fmt("ooo/time-mux=%.2f ooo/space-mux=%.2f space-mux/time-mux=%.2f", ooo / tm, ooo / sm, sm / tm)};
}

Verdict gemv_coalescing() {
  const auto w = bundled("gemv8");
  const double tm = throughput(w, PolicyKind::kTimeMux);
  const double ooo = throughput(w, PolicyKind::kOooCoalesce);
  return {ooo > tm && ooo / tm >= kGemvOverTime, fmt("ooo/time-mux=%.2f", ooo / tm)};
}

Verdict autotuner_pattern() {
  const auto shape = OpShape::gemm(128, 128, 1152);
  const std::int64_t budget = 1 << 20;
  const auto greedy = tune(shape, DType::kFp32, 1, v100(), budget, 0);
  const auto collab = tune(shape, DType::kFp32, 2, v100(), budget, 0);
  auto eval = [&](const TuningConfig& c, int t) { return evaluate_config(shape, DType::kFp32, c, t, v100()); };
  const double solo = eval(collab, 1).solo_throughput / eval(greedy, 1).solo_throughput;
  const double duo = eval(collab, 2).aggregate_throughput / eval(greedy, 2).aggregate_throughput;
  const bool ok = solo >= kSoloLow && solo <= kSoloHigh && duo >= kCollabGain;
  return {ok, fmt("solo ratio=%.3f two-tenant aggregate ratio=%.3f", solo, duo)};
}

Verdict time_mux_linearity() {
  std::vector<double> x, y;
  for (int r = 1; r <= 15; ++r) {
    WorkloadSpec spec;
    spec.duration = 10'000 * kMs;
    for (int s = 0; s < r; ++s) {
      StreamSpec st;
      st.stream_id = s;
      st.model_name = "resnet50_like";
      st.constraint = LatencyConstraint::interactive(10'000 * kMs);
      st.arrival.kind = ArrivalKind::kFixed;
      st.arrival.schedule_ns = {0};
      spec.streams.push_back(st);
    }
    const auto res = run(Workload::generate(spec, lib()), v100(), with(PolicyKind::kTimeMux));
    if (res.metrics.global.completed != r) return {false, "replica run did not complete"};
    x.push_back(r);
    y.push_back(res.metrics.global.latency_mean);
  }
  const double r2 = oracle::r_squared(x, y);
  return {r2 > kLinearR2, fmt("R^2=%.5f", r2)};
}

double mean_tenant_cov(const Workload& w, std::uint64_t seed) {
  const auto r = run(w, v100(), with(PolicyKind::kSpaceMux, seed));
  std::vector<double> per;
  for (const auto& s : r.metrics.streams) {
    std::vector<double> lat;
    for (const auto& q : r.requests) {
      if (q.stream_id == s.stream_id && q.status == RequestStatus::kCompleted) {
        lat.push_back(static_cast<double>(q.finish - q.arrival));
      }
    }
    per.push_back(oracle::cov(lat));
  }
  return oracle::mean(per);
}

Verdict odd_tenant_variability() {
  const auto duo = bundled("unfair_2");
  const auto trio = bundled("unfair_3");
  int wins = 0;
  for (int seed = 0; seed < kUnfairSeeds; ++seed) {
    wins += mean_tenant_cov(trio, seed) > mean_tenant_cov(duo, seed);
  }
  return {wins >= kUnfairNeeded, fmt("3-tenant CoV above 2-tenant in %.0f of %.0f seeds", wins, kUnfairSeeds)};
}

int misses(const RunResult& r) {
  int n = 0;
  for (const auto& q : r.requests) n += q.status != RequestStatus::kCompleted || q.finish > q.deadline;
  return n;
}

Verdict slo_reordering() {
  const auto w = bundled("adversarial");
  // Brute force: serial execution in either order, solo costs.
  int best = 2;
  std::vector<std::size_t> order = {0, 1};
  do {
    Nanos t = 0;
    int m = 0;
    for (auto i : order) {
      for (const auto& k : w.requests[i].kernels) t += kernel_cost(k, TuningConfig::default_config(), v100()).duration;
      m += t > w.requests[i].kernels.back().deadline;
    }
    best = std::min(best, m);
  } while (std::next_permutation(order.begin(), order.end()));
  const int fifo = misses(run(w, v100(), with(PolicyKind::kFifo)));
  const int edf = misses(run(w, v100(), with(PolicyKind::kEdf)));
  const int ooo = misses(run(w, v100(), with(PolicyKind::kOooCoalesce)));
  const bool ok = fifo == 1 && edf == 0 && ooo == 0 && best == 0;
  return {ok, fmt("misses fifo=%.0f edf=%.0f ooo=%.0f", fifo, edf, ooo) +
                  fmt(" brute-force optimum=%.0f", best)};
}

// --- property suites -------------------------------------------------------

KernelSpec bare(KernelId id, OpShape shape, DType dtype = DType::kFp32) {
  KernelSpec k;
  k.kernel_id = id;
  k.shape = shape;
  k.dtype = dtype;
  return k;
}

Workload random_workload(std::mt19937_64& gen) {
  std::uniform_int_distribution<int> streams(1, 6), reqs(1, 4), chain(1, 3), kind(0, 2);
  std::uniform_int_distribution<std::int64_t> dim(16, 512);
  std::uniform_int_distribution<Nanos> at(0, 2 * kMs), budget(10 * kMs, 40 * kMs);
  std::bernoulli_distribution batch(0.2), half(0.5);
  oracle::Builder b(50 * kMs, 1 + static_cast<int>(gen() % 8));
  const int n = streams(gen);
  for (int s = 0; s < n; ++s) {
    const auto c = batch(gen) ? LatencyConstraint::batch() : LatencyConstraint::interactive(budget(gen));
    const int m = reqs(gen);
    for (int r = 0; r < m; ++r) {
      std::vector<OpShape> shapes;
      const int len = chain(gen);
      for (int i = 0; i < len; ++i) {
        const int k = kind(gen);
        shapes.push_back(k == 0 ? OpShape::gemm(dim(gen), dim(gen), dim(gen))
                         : k == 1 ? OpShape::gemv(dim(gen), dim(gen))
                                  : OpShape::elementwise(dim(gen) * 64));
      }
      b.add(s, at(gen), c, shapes, half(gen) ? DType::kFp16 : DType::kFp32);
    }
  }
  // Builder ids follow insertion; the engine expects arrival order.
  auto w = b.build();
  std::stable_sort(w.requests.begin(), w.requests.end(), [](const auto& x, const auto& y) {
    return std::tie(x.arrival, x.stream_id) < std::tie(y.arrival, y.stream_id);
  });
  std::map<KernelId, KernelId> remap;
  KernelId next = 0;
  for (std::size_t i = 0; i < w.requests.size(); ++i) {
    auto& q = w.requests[i];
    q.request_id = static_cast<RequestId>(i);
    for (auto& k : q.kernels) {
      remap[k.kernel_id] = next;
      k.kernel_id = next++;
      k.request_id = q.request_id;
      for (auto& d : k.deps) d = remap.at(d);
    }
  }
  return w;
}

constexpr PolicyKind kAllPolicies[] = {PolicyKind::kFifo, PolicyKind::kEdf, PolicyKind::kOooCoalesce,
                                       PolicyKind::kTimeMux, PolicyKind::kSpaceMux};

std::string capacity_and_causality(int cases) {
  std::mt19937_64 gen(7001);
  for (int i = 0; i < cases; ++i) {
    const auto w = random_workload(gen);
    const auto kind = kAllPolicies[i % 5];
    const auto r = run(w, v100(), with(kind, i));
    const int peak = oracle::peak_allocation(r.timeline);
    if (peak > v100().sm_count) return "capacity: case " + std::to_string(i) + " peak " + std::to_string(peak);
    std::string why;
    if (!oracle::causal(w, r, &why)) return "causality: case " + std::to_string(i) + " " + why;
  }
  return "";
}

std::string padding_waste(int cases) {
  std::mt19937_64 gen(7002);
  std::uniform_int_distribution<int> count(1, 24), pick(0, 2), dim(1, 64);
  std::uniform_real_distribution<double> eps_dist(0.0, 0.9);
  for (int i = 0; i < cases; ++i) {
    std::vector<KernelSpec> ks;
    const int n = count(gen);
    for (int j = 0; j < n; ++j) {
      const int kind = pick(gen);
      const OpShape s = kind == 0   ? OpShape::gemm(dim(gen), dim(gen), dim(gen))
                        : kind == 1 ? OpShape::gemv(dim(gen), dim(gen))
                                    : OpShape::elementwise(dim(gen));
      ks.push_back(bare(j, s, pick(gen) == 0 ? DType::kFp16 : DType::kFp32));
    }
    const double eps = eps_dist(gen);
    std::size_t covered = 0;
    for (const auto& c : cluster_shapes(ks, eps)) {
      if (c.waste > eps + 1e-12 || c.waste < 0.0) return "case " + std::to_string(i) + " waste above epsilon";
      covered += c.members.size();
    }
    if (covered != ks.size()) return "case " + std::to_string(i) + " clusters do not partition the input";
  }
  return "";
}

std::string coalescing_speedup(int cases) {
  std::mt19937_64 gen(7003);
  std::uniform_int_distribution<std::int64_t> mdim(16, 256), kdim(256, 4096);
  std::uniform_int_distribution<int> bdist(2, 16);
  const auto& p = v100();
  int checked = 0;
  while (checked < cases) {
    const auto shape = OpShape::gemm(mdim(gen), mdim(gen), kdim(gen));
    const int b = bdist(gen);
    const auto solo = kernel_cost(bare(0, shape), TuningConfig::default_config(), p);
    const double compute = solo.flops / (p.peak_flops_scalar * solo.efficiency);
    const double memory = solo.bytes / p.mem_bandwidth;
    if (!(solo.efficiency < 1.0) || compute <= memory) continue;  // only sub-saturating members
    std::vector<KernelSpec> ks;
    for (int i = 0; i < b; ++i) ks.push_back(bare(i, shape));
    const auto sk = form_superkernel(cluster_shapes(ks, 0.0)[0], nullptr, 1, p);
    if (!(sk.cost.duration < b * solo.duration)) return shape.to_string() + " x" + std::to_string(b);
    ++checked;
  }
  return "";
}

std::string flop_oracle(int cases) {
  std::mt19937_64 gen(7004);
  std::uniform_int_distribution<std::int64_t> d(1, 8);
  for (int i = 0; i < cases; ++i) {
    const OpShape shapes[] = {OpShape::gemm(d(gen), d(gen), d(gen)), OpShape::gemv(d(gen), d(gen)),
                              OpShape::elementwise(d(gen))};
    for (const auto& s : shapes) {
      if (s.flops() != oracle::loop_flops(s) || s.elements() != oracle::loop_elements(s)) return s.to_string();
    }
  }
  return "";
}

std::string delay_bound(int cases) {
  std::mt19937_64 gen(7005);
  std::uniform_int_distribution<int> streams(2, 10);
  // Arrivals land on a few shared instants so partners exist.
  std::uniform_int_distribution<Nanos> slot(0, 5), budget(10 * kMs, 40 * kMs);
  int withheld = 0;
  for (int i = 0; i < cases; ++i) {
    oracle::Builder b(200 * kMs);
    const int n = streams(gen);
    std::vector<std::pair<Nanos, Nanos>> arrivals;  // (arrival, slo)
    for (int s = 0; s < n; ++s) arrivals.emplace_back(slot(gen) * kMs, budget(gen));
    std::sort(arrivals.begin(), arrivals.end());
    for (int s = 0; s < n; ++s) {
      b.add(s, arrivals[s].first, LatencyConstraint::interactive(arrivals[s].second), {OpShape::gemv(1024, 1024)});
    }
    const auto w = b.build();
    const auto r = run(w, v100(), with(PolicyKind::kOooCoalesce));
    std::map<KernelId, Nanos> start;
    for (const auto& e : r.timeline) for (auto k : e.kernels) start[k] = e.start;
    for (const auto& [when, members] : r.withheld) {
      for (auto k : members) {
        const auto& q = w.requests[static_cast<std::size_t>(k)];  // one kernel per request
        const Nanos rem = kernel_cost(q.kernels[0], TuningConfig::default_config(), v100()).duration;
        if (!start.count(k)) continue;  // still withheld at the horizon: no dispatch to check
        if (q.kernels[0].deadline - start[k] - rem < 0) return "case " + std::to_string(i) + " kernel " + std::to_string(k);
        ++withheld;
      }
    }
  }
  if (withheld == 0) return "no kernel was ever withheld";
  return "";
}

std::string grid_optimality(int cases) {
  const auto& model = TuningModel::bundled();
  std::mt19937_64 gen(7006);
  std::uniform_int_distribution<std::int64_t> dim(1, 2048);
  std::uniform_int_distribution<int> ten(1, 8);
  const DeviceProfile devices[] = {load_profile("v100"), load_profile("k80")};
  for (int i = 0; i < cases; ++i) {
    const auto shape = OpShape::gemm(dim(gen), dim(gen), dim(gen));
    const int t = ten(gen);
    const auto& dev = devices[i % 2];
    const auto best = tune(shape, DType::kFp32, t, dev, 1 << 20, 0);
    double want = 0.0;
    for (const auto& g : oracle::exhaustive_grid(shape, DType::kFp32, t, dev, model)) want = std::max(want, g.aggregate);
    const double got = evaluate_config(shape, DType::kFp32, best, t, dev).aggregate_throughput;
    if (std::abs(got - want) > want * 1e-9) return shape.to_string() + " t=" + std::to_string(t);
  }
  return "";
}

Verdict property_suites() {
  const std::vector<std::pair<std::string, std::function<std::string(int)>>> suites = {
      {"capacity+causality", capacity_and_causality}, {"padding-waste", padding_waste},
      {"coalescing-speedup", coalescing_speedup},    {"flop-oracle", flop_oracle},
      {"delay-bound", delay_bound},                  {"grid-optimality", grid_optimality},
  };
  std::string failed;
  for (const auto& [name, suite] : suites) {
    const auto err = suite(kPropertyCases);
    if (!err.empty()) failed += " " + name + "(" + err + ")";
  }
  if (!failed.empty()) return {false, "failing:" + failed};
  return {true, std::to_string(kPropertyCases) + " cases per suite"};
}

int cli(const std::string& args) {
  const std::string cmd = std::string(OOJIT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  int checked = 0;
  std::string bad;
  for (const auto& entry : fs::directory_iterator(fs::path(OOJIT_DATA_DIR) / "scenarios")) {
    const auto name = entry.path().stem().string();
    const auto w = bundled(name, 11);
    for (auto kind : kAllPolicies) {
      const auto a = run(w, v100(), with(kind, 11));
      const auto b = run(w, v100(), with(kind, 11));
      if (trace_ndjson(a) != trace_ndjson(b) ||
          metrics_to_json(a.metrics, a.meta).dump(2) != metrics_to_json(b.metrics, b.meta).dump(2)) {
        bad += " " + name + "/" + std::string(to_string(kind));
      }
      ++checked;
    }
    // The written artifacts, end to end.
    const auto root = fs::temp_directory_path() / ("oojit_accept_" + std::to_string(::getpid()));
    std::string files[2][2];
    for (int i = 0; i < 2; ++i) {
      const auto out = root / std::to_string(i);
      fs::remove_all(out);
      if (cli("run --workload " + entry.path().string() + " --seed 11 --out " + out.string()) != 0) {
        bad += " " + name + "/cli-exit";
      }
      files[i][0] = slurp(out / "trace.ndjson");
      files[i][1] = slurp(out / "metrics.json");
    }
    fs::remove_all(root);
    if (files[0][0] != files[1][0] || files[0][1] != files[1][1] || files[0][0].empty()) bad += " " + name + "/cli";
  }
  if (!bad.empty()) return {false, "differs:" + bad};
  return {checked > 0, std::to_string(checked) + " scenario/policy pairs plus CLI artifacts identical"};
}

Verdict preset_fidelity() {
  const std::pair<const char*, double> want[] = {
      {"v100", 139}, {"k80", 18}, {"tpu_v2_like", 300}, {"inferentia_like", 500}};
  bool ok = true;
  std::string detail;
  for (const auto& [name, ratio] : want) {
    const double got = op_byte_ratio(load_profile(name));
    ok = ok && std::abs(got - ratio) <= kPresetTolerance;
    detail += std::string(detail.empty() ? "" : " ") + name + fmt("=%.2f", got);
  }
  return {ok, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"multiplexing ordering", multiplexing_ordering},
      {"gemv coalescing", gemv_coalescing},
      {"autotuner pattern", autotuner_pattern},
      {"time-mux linearity", time_mux_linearity},
      {"odd-tenant variability", odd_tenant_variability},
      {"slo reordering", slo_reordering},
      {"property suites", property_suites},
      {"determinism", determinism},
      {"preset fidelity", preset_fidelity},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("criterion %zu %s: %s (%s)\n", i + 1, v.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                v.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
