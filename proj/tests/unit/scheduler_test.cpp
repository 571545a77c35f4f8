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

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "oojit/engine.hpp"
#include "oojit/scheduler.hpp"
#include "oracles.hpp"

using namespace oojit;

namespace {

constexpr Nanos kMs = 1'000'000;
constexpr Nanos kUs = 1'000;

// One SM, one block, 1 TFLOP/s and effectively unlimited bandwidth, so
// gemm(1, 1, 500 * D) runs for exactly D ns.
DeviceProfile serial_profile(Nanos switch_cost = 0) {
  DeviceProfile p;
  p.name = "serial";
  p.sm_count = 1;
  p.blocks_per_sm = 1;
  p.peak_flops_dense = 1e12;
  p.peak_flops_scalar = 1e12;
  p.mem_bandwidth = 1e18;
  p.context_switch_cost = switch_cost;
  return p;
}

OpShape lasting(Nanos ns) { return OpShape::gemm(1, 1, ns * 500); }

LatencyConstraint slo(Nanos ns) { return LatencyConstraint::interactive(ns, SloBounds{1, kNever}); }

RunOptions with(PolicyKind kind) {
  RunOptions o;
  o.policy = SchedulerPolicy::make(kind);
  return o;
}

const TimelineEntry& entry_of(const RunResult& r, KernelId k) {
  for (const auto& e : r.timeline) {
    if (std::find(e.kernels.begin(), e.kernels.end(), k) != e.kernels.end()) return e;
  }
  throw std::runtime_error("kernel never dispatched");
}

// Misses when single-kernel requests of duration d run back to back in `order`.
int misses_in_order(const std::vector<Nanos>& deadlines, const std::vector<int>& order, Nanos d) {
  int misses = 0;
  Nanos t = 0;
  for (int i : order) {
    t += d;
    misses += t > deadlines[i];
  }
  return misses;
}

Nanos lateness_in_order(const std::vector<Nanos>& deadlines, const std::vector<int>& order,
                        Nanos d) {
  Nanos worst = std::numeric_limits<Nanos>::min();
  Nanos t = 0;
  for (int i : order) {
    t += d;
    worst = std::max(worst, t - deadlines[i]);
  }
  return worst;
}

Nanos max_lateness(const RunResult& r) {
  Nanos worst = std::numeric_limits<Nanos>::min();
  for (const auto& q : r.requests) worst = std::max(worst, q.finish - q.deadline);
  return worst;
}

}  // namespace

TEST(Slack, Arithmetic) {
  KernelSpec k;
  k.deadline = 10 * kMs;
  EXPECT_EQ(slack(k, 2 * kMs, 3 * kMs), 5 * kMs);
  EXPECT_EQ(slack(k, 10 * kMs, 0), 0);
  k.deadline = kNever;
  EXPECT_EQ(slack(k, 5, 5), kNever);
}

TEST(Slack, ChainCriticalPathCanBeNegative) {
  // Three dependent 1 ms kernels, 2 ms budget: brute-force critical path.
  const std::vector<Nanos> durations = {kMs, kMs, kMs};
  const Nanos remaining = std::accumulate(durations.begin(), durations.end(), Nanos{0});
  KernelSpec first;
  first.arrival = 0;
  first.deadline = 2 * kMs;
  EXPECT_EQ(slack(first, 0, remaining), 2 * kMs - remaining);
  EXPECT_EQ(slack(first, 0, remaining), -kMs);
}

TEST(Slack, EngineFeedsCriticalPathPrediction) {
  oracle::Builder b(100 * kMs);
  b.add(0, 0, slo(2 * kMs), {lasting(kMs), lasting(kMs), lasting(kMs)});
  const auto r = run(b.build(), serial_profile(), with(PolicyKind::kEdf));
  // The head kernel already has -1 ms slack, so its dispatch is flagged.
  EXPECT_TRUE(r.timeline.front().infeasible);
  EXPECT_EQ(r.metrics.global.completed, 1);
  EXPECT_EQ(r.metrics.global.met, 0);
}

TEST(SchedulerPolicy, ParseAndValidate) {
  EXPECT_EQ(parse_policy("time-mux"), PolicyKind::kTimeMux);
  EXPECT_EQ(parse_policy("ooo"), PolicyKind::kOooCoalesce);
  EXPECT_THROW(parse_policy("lottery"), ValidationError);
  auto p = SchedulerPolicy::make(PolicyKind::kOooCoalesce);
  EXPECT_DOUBLE_EQ(p.params.max_delay_fraction, 0.5);
  EXPECT_DOUBLE_EQ(p.params.pad_budget, 0.25);
  EXPECT_DOUBLE_EQ(p.params.straggler_threshold, 2.0);
  EXPECT_EQ(p.params.straggler_window, 32);
  EXPECT_NO_THROW(p.validate());
  p.params.pad_budget = 1.0;
  EXPECT_THROW(p.validate(), ValidationError);
  p = SchedulerPolicy::make(PolicyKind::kFifo);
  p.params.straggler_threshold = 0;
  EXPECT_THROW(p.validate(), ValidationError);
}

TEST(EdfVersusFifo, TwoRequestsBruteForce) {
  const Nanos d = 3 * kMs;
  const std::vector<Nanos> deadlines = {10 * kMs, 5 * kMs};  // request 0 is FIFO-first
  const int best = std::min(misses_in_order(deadlines, {0, 1}, d),
                            misses_in_order(deadlines, {1, 0}, d));
  ASSERT_EQ(best, 0);
  ASSERT_EQ(misses_in_order(deadlines, {0, 1}, d), 1);

  oracle::Builder b(100 * kMs);
  b.add(0, 0, slo(10 * kMs), {lasting(d)});
  b.add(1, 0, slo(5 * kMs), {lasting(d)});
  const auto w = b.build();
  const auto fifo = run(w, serial_profile(), with(PolicyKind::kFifo));
  const auto edf = run(w, serial_profile(), with(PolicyKind::kEdf));
  EXPECT_EQ(fifo.metrics.global.completed - fifo.metrics.global.met, 1);
  EXPECT_EQ(edf.metrics.global.completed - edf.metrics.global.met, best);
  EXPECT_EQ(fifo.requests[1].finish, 6 * kMs);
}

TEST(SingleKernel, EveryPolicyDispatchesImmediately) {
  for (auto kind : {PolicyKind::kFifo, PolicyKind::kEdf, PolicyKind::kOooCoalesce,
                    PolicyKind::kTimeMux, PolicyKind::kSpaceMux}) {
    oracle::Builder b(100 * kMs);
    b.add(0, 5 * kUs, slo(50 * kMs), {OpShape::gemm(64, 3136, 576)});
    const auto r = run(b.build(), load_profile("v100"), with(kind));
    ASSERT_EQ(r.timeline.size(), 1u) << to_string(kind);
    EXPECT_EQ(r.timeline[0].start, 5 * kUs) << to_string(kind);
    EXPECT_TRUE(r.withheld.empty());
  }
}

// Adapted: 8 x GEMM(64, 3136, 576) already saturates v100, so the partner
// scenario uses a GEMM whose 8-wide batch stays below capacity.
TEST(OooCoalesce, WithholdsThenDispatchesSixteenWide) {
  const auto v100 = load_profile("v100");
  const auto shape = OpShape::gemm(64, 1024, 4096);  // 16 blocks each
  oracle::Builder b(50 * kMs);
  for (int s = 0; s < 8; ++s) b.add(s, 0, slo(200 * kMs), {shape});
  for (int s = 0; s < 8; ++s) b.add(s, 100 * kUs, slo(200 * kMs), {shape});
  const auto w = b.build();
  const auto ooo = run(w, v100, with(PolicyKind::kOooCoalesce));
  ASSERT_EQ(ooo.withheld.size(), 1u);
  EXPECT_EQ(ooo.withheld[0].first, 0);
  EXPECT_EQ(ooo.withheld[0].second.size(), 8u);
  ASSERT_EQ(ooo.timeline.size(), 1u);
  EXPECT_EQ(ooo.timeline[0].start, 100 * kUs);
  EXPECT_EQ(ooo.timeline[0].kernels.size(), 16u);

  const auto fifo = run(w, v100, with(PolicyKind::kFifo));
  EXPECT_LT(ooo.metrics.span_end, fifo.metrics.span_end);
}

TEST(OooCoalesce, TightSlackIsNeverWithheld) {
  const auto v100 = load_profile("v100");
  const auto shape = OpShape::gemm(64, 1024, 4096);
  oracle::Builder b(50 * kMs);
  // slack at arrival is ~ slo - 342 us, below half of a 0.6 ms budget.
  for (int s = 0; s < 4; ++s) b.add(s, 0, slo(600 * kUs), {shape});
  const auto r = run(b.build(), v100, with(PolicyKind::kOooCoalesce));
  EXPECT_TRUE(r.withheld.empty());
  EXPECT_EQ(r.timeline.front().start, 0);
}

TEST(OooCoalesce, BatchOnlyClustersAreNotWithheld) {
  oracle::Builder b(50 * kMs);
  for (int s = 0; s < 3; ++s) b.add(s, 0, LatencyConstraint::batch(), {OpShape::gemv(1024, 1024)});
  const auto r = run(b.build(), load_profile("v100"), with(PolicyKind::kOooCoalesce));
  EXPECT_TRUE(r.withheld.empty());
  ASSERT_EQ(r.timeline.size(), 1u);
  EXPECT_EQ(r.timeline[0].kernels.size(), 3u);
}

TEST(OooCoalesce, WithheldClusterReleasedAtWake) {
  const auto v100 = load_profile("v100");
  const auto shape = OpShape::gemv(1024, 1024);
  oracle::Builder b(500 * kMs);
  b.add(0, 0, slo(20 * kMs), {shape});
  b.add(1, 0, slo(30 * kMs), {shape});
  const auto w = b.build();
  const auto r = run(w, v100, with(PolicyKind::kOooCoalesce));
  ASSERT_EQ(r.withheld.size(), 1u);
  ASSERT_EQ(r.timeline.size(), 1u);
  EXPECT_EQ(r.timeline[0].kernels.size(), 2u);
  const Nanos predicted = kernel_cost(w.requests[0].kernels[0], TuningConfig::default_config(), v100).duration;
  // wake: the tighter member's slack falls to half its SLO
  EXPECT_EQ(r.timeline[0].start, 20 * kMs - predicted - 10 * kMs);
  EXPECT_LE(r.timeline[0].end, 20 * kMs);
}

TEST(FifoEdf, ExclusiveMergedContext) {
  oracle::Builder b(100 * kMs);
  for (int s = 0; s < 4; ++s) b.add(s, 0, slo(50 * kMs), {OpShape::gemm(64, 3136, 576)});
  const auto r = run(b.build(), load_profile("v100"), with(PolicyKind::kFifo));
  ASSERT_EQ(r.timeline.size(), 4u);
  for (std::size_t i = 0; i < r.timeline.size(); ++i) {
    EXPECT_EQ(r.timeline[i].sm_allocation, 80);
    EXPECT_EQ(r.timeline[i].context_id, kMergedContext);
    if (i > 0) EXPECT_EQ(r.timeline[i].start, r.timeline[i - 1].end);
  }
  EXPECT_EQ(r.metrics.context_switches, 0);
}

TEST(TimeMux, TwoStreamsPayOneSwitch) {
  const Nanos cs = 10 * kUs;
  oracle::Builder b(100 * kMs);
  b.add(0, 0, slo(50 * kMs), {lasting(kMs)});
  b.add(1, 0, slo(50 * kMs), {lasting(kMs)});
  const auto r = run(b.build(), serial_profile(cs), with(PolicyKind::kTimeMux));
  EXPECT_EQ(r.metrics.span_end, 2 * kMs + cs);
  EXPECT_EQ(r.metrics.context_switches, 1);
}

TEST(TimeMux, OneStreamNeverSwitches) {
  oracle::Builder b(100 * kMs);
  for (int i = 0; i < 5; ++i) b.add(0, i * kUs, slo(50 * kMs), {lasting(kMs), lasting(kMs)});
  const auto r = run(b.build(), serial_profile(10 * kUs), with(PolicyKind::kTimeMux));
  EXPECT_EQ(r.metrics.context_switches, 0);
  EXPECT_EQ(r.metrics.span_end, 10 * kMs);
}

TEST(TimeMux, FifteenStreamsCompleteLinearly) {
  const Nanos cs = 10 * kUs, d = kMs;
  oracle::Builder b(100 * kMs);
  for (int s = 0; s < 15; ++s) b.add(s, 0, slo(90 * kMs), {lasting(d)});
  const auto r = run(b.build(), serial_profile(cs), with(PolicyKind::kTimeMux));
  for (int s = 0; s < 15; ++s) {
    EXPECT_EQ(r.requests[s].finish, (s + 1) * d + s * cs) << s;
  }
  for (int s = 1; s < 15; ++s) {
    EXPECT_EQ(r.requests[s].finish - r.requests[s - 1].finish, d + cs);
  }
}

TEST(TimeMux, RoundRobinAcrossStreams) {
  oracle::Builder b(100 * kMs);
  for (int i = 0; i < 3; ++i) {
    for (int s = 0; s < 3; ++s) b.add(s, 0, slo(90 * kMs), {lasting(kMs)});
  }
  const auto r = run(b.build(), serial_profile(kUs), with(PolicyKind::kTimeMux));
  for (std::size_t i = 0; i < r.timeline.size(); ++i) {
    EXPECT_EQ(r.timeline[i].context_id, static_cast<std::int64_t>(i % 3));
  }
}

TEST(SpaceMux, LoneTenantRunsAtSoloCost) {
  const auto v100 = load_profile("v100");
  oracle::Builder b(100 * kMs);
  b.add(0, 0, slo(50 * kMs), {OpShape::gemm(1024, 1024, 1024)});
  const auto w = b.build();
  const auto r = run(w, v100, with(PolicyKind::kSpaceMux));
  Rng rng(1);
  EXPECT_DOUBLE_EQ(interference_factor(1, PolicyParams{}, rng), 1.0);
  const auto solo = kernel_cost(w.requests[0].kernels[0], TuningConfig::default_config(), v100);
  EXPECT_EQ(r.timeline[0].end - r.timeline[0].start, solo.duration);
  EXPECT_EQ(r.timeline[0].sm_allocation, 80);
}

TEST(SpaceMux, TwoTenantsHalfSmsNoJitter) {
  const auto v100 = load_profile("v100");
  auto opts = with(PolicyKind::kSpaceMux);
  opts.policy.params.jitter_width = 0.0;
  oracle::Builder b(100 * kMs);
  const auto shape = OpShape::gemm(1024, 1024, 1024);
  b.add(0, 0, slo(50 * kMs), {shape});
  b.add(1, 0, slo(50 * kMs), {shape});
  const auto r = run(b.build(), v100, opts);
  ASSERT_EQ(r.timeline.size(), 2u);
  const auto half = shape_cost(shape, DType::kFp32, 1, TuningConfig::default_config(), v100, 40);
  EXPECT_DOUBLE_EQ(half.efficiency, 0.5);
  for (const auto& e : r.timeline) {
    EXPECT_EQ(e.sm_allocation, 40);
    EXPECT_EQ(e.start, 0);
    EXPECT_EQ(e.end, ceil_ns(half.duration * contention(2, opts.policy.params)));
  }
  EXPECT_EQ(r.timeline[0].end, r.timeline[1].end);
}

TEST(SpaceMux, InterferenceModel) {
  PolicyParams p;
  EXPECT_DOUBLE_EQ(jitter_width(1, p), 0.0);
  EXPECT_DOUBLE_EQ(jitter_width(2, p), 0.15);
  EXPECT_DOUBLE_EQ(jitter_width(3, p), 0.30);
  EXPECT_DOUBLE_EQ(jitter_width(4, p), 0.15);
  EXPECT_DOUBLE_EQ(contention(1, p), 1.0);
  EXPECT_DOUBLE_EQ(contention(3, p), 1.2);
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double f = interference_factor(3, p, rng);
    ASSERT_GE(f, 1.2);
    ASSERT_LE(f, 1.2 * 1.3);
  }
}

TEST(SpaceMux, ThreeTenantsVaryMoreThanTwo) {
  const auto v100 = load_profile("v100");
  const auto& lib = ModelLibrary::bundled();
  const auto duo = Workload::generate(WorkloadSpec::from_file(oracle::scenario("unfair_2")), lib);
  const auto trio = Workload::generate(WorkloadSpec::from_file(oracle::scenario("unfair_3")), lib);
  auto cov_of = [&](const Workload& w) {
    auto opts = with(PolicyKind::kSpaceMux);
    opts.seed = 4;
    const auto r = run(w, v100, opts);
    std::vector<double> per;
    for (const auto& s : r.metrics.streams) {
      std::vector<double> lat;
      for (const auto& q : r.requests) {
        if (q.stream_id == s.stream_id) lat.push_back(double(q.finish - q.arrival));
      }
      per.push_back(oracle::cov(lat));
    }
    return oracle::mean(per);
  };
  EXPECT_GT(cov_of(trio), cov_of(duo));
}

TEST(MinAllocation, BlocksAndBandwidth) {
  const auto v100 = load_profile("v100");
  CostEstimate c;
  c.block_count = 49;
  c.duration = 48'088;
  c.bytes = 8'175'616;
  EXPECT_EQ(min_allocation(c, v100), 25);  // ceil(49 / 2) beats the bandwidth share
  c.block_count = 10'000;
  EXPECT_EQ(min_allocation(c, v100), 80);
  c.block_count = 1;
  c.bytes = static_cast<std::int64_t>(900e9 * 48'088e-9);  // needs all bandwidth
  EXPECT_EQ(min_allocation(c, v100), 80);
}

TEST(StragglerMonitor, ThresholdCrossing) {
  StragglerMonitor m(2.0, 32);
  for (int i = 0; i < 31; ++i) m.record(0, 3.0);
  EXPECT_FALSE(m.degraded(0));  // window not full yet
  m.record(0, 3.0);
  EXPECT_TRUE(m.degraded(0));
  for (int i = 0; i < 32; ++i) m.record(1, 1.2);
  EXPECT_FALSE(m.degraded(1));
  EXPECT_DOUBLE_EQ(m.p99_ratio(1), 1.2);
}

TEST(StragglerEviction, NominalStreamsStay) {
  const auto& lib = ModelLibrary::bundled();
  auto spec = WorkloadSpec::from_file(oracle::scenario("straggler"));
  for (auto& s : spec.streams) s.degradation = 1.0;
  const auto r = run(Workload::generate(spec, lib), load_profile("v100"), with(PolicyKind::kSpaceMux));
  EXPECT_TRUE(r.evicted_streams.empty());
  EXPECT_EQ(r.metrics.global.evicted, 0);
}

TEST(StragglerEviction, DegradedTenantIsEvicted) {
  const auto& lib = ModelLibrary::bundled();
  const auto w = Workload::generate(WorkloadSpec::from_file(oracle::scenario("straggler")), lib);
  const auto r = run(w, load_profile("v100"), with(PolicyKind::kSpaceMux));
  ASSERT_EQ(r.evicted_streams, std::vector<StreamId>{3});
  const auto& s3 = r.metrics.stream(3);
  EXPECT_GT(s3.evicted, 0);
  EXPECT_EQ(s3.completed + s3.evicted + s3.pending, s3.arrived);
  EXPECT_LT(s3.slo_attainment, 1.0);
  for (const auto& e : r.timeline) EXPECT_LT(e.start, e.end);
}

TEST(EdfLateness, NoWorseThanFifoOnAllPermutations) {
  const Nanos d = kMs;
  std::mt19937_64 gen(8);
  std::uniform_int_distribution<Nanos> dl(1, 8 * kMs);
  for (int n = 1; n <= 6; ++n) {
    std::vector<Nanos> deadlines(n);
    for (auto& x : deadlines) x = dl(gen);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Nanos best = std::numeric_limits<Nanos>::max();
    do {
      best = std::min(best, lateness_in_order(deadlines, perm, d));
    } while (std::next_permutation(perm.begin(), perm.end()));
    std::iota(perm.begin(), perm.end(), 0);
    do {
      // The permutation is the arrival (request id) order FIFO follows.
      oracle::Builder b(100 * kMs);
      for (int i : perm) b.add(i, 0, slo(deadlines[i]), {lasting(d)});
      const auto w = b.build();
      const auto fifo = run(w, serial_profile(), with(PolicyKind::kFifo));
      const auto edf = run(w, serial_profile(), with(PolicyKind::kEdf));
      ASSERT_EQ(max_lateness(fifo), lateness_in_order(deadlines, perm, d));
      ASSERT_LE(max_lateness(edf), max_lateness(fifo));
      ASSERT_EQ(max_lateness(edf), best);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST(CoalescingDominance, OooMakespanAtMostTimeMux) {
  const auto v100 = load_profile("v100");
  std::mt19937_64 gen(13);
  std::uniform_int_distribution<std::int64_t> dim(16, 512);
  std::uniform_int_distribution<int> tenants(1, 16);
  std::uniform_int_distribution<Nanos> gap(0, 200 * kUs);
  for (int trial = 0; trial < 200; ++trial) {
    const auto shape = OpShape::gemm(dim(gen), dim(gen), dim(gen));
    oracle::Builder b(10'000 * kMs);
    const int t = tenants(gen);
    Nanos at = 0;
    for (int s = 0; s < t; ++s) {
      b.add(s, at, LatencyConstraint::batch(), {shape});
      at += gap(gen);
    }
    const auto w = b.build();
    const auto ooo = run(w, v100, with(PolicyKind::kOooCoalesce));
    const auto tm = run(w, v100, with(PolicyKind::kTimeMux));
    ASSERT_LE(ooo.metrics.span_end, tm.metrics.span_end) << shape.to_string() << " x" << t;
  }
}

TEST(DelayBound, WithheldKernelsDispatchWithSlack) {
  const auto v100 = load_profile("v100");
  std::mt19937_64 gen(99);
  std::uniform_int_distribution<int> streams(2, 10);
  // Arrivals land on a few shared instants so partners exist.
  std::uniform_int_distribution<Nanos> slot(0, 5), budget(10 * kMs, 40 * kMs);
  int withheld_total = 0;
  for (int trial = 0; trial < 100; ++trial) {
    oracle::Builder b(200 * kMs);
    const int n = streams(gen);
    for (int s = 0; s < n; ++s) b.add(s, slot(gen) * kMs, slo(budget(gen)), {OpShape::gemv(1024, 1024)});
    const auto w = b.build();
    const auto r = run(w, v100, with(PolicyKind::kOooCoalesce));
    for (const auto& [when, members] : r.withheld) {
      for (auto k : members) {
        const auto& e = entry_of(r, k);
        const auto& req = *std::find_if(w.requests.begin(), w.requests.end(), [&](const auto& q) {
          return q.kernels[0].kernel_id == k;
        });
        const Nanos remaining = kernel_cost(req.kernels[0], TuningConfig::default_config(), v100).duration;
        ASSERT_GE(req.kernels[0].deadline - when - remaining, req.constraint.slo / 2);
        ASSERT_GE(req.kernels[0].deadline - e.start - remaining, 0);
        ++withheld_total;
      }
    }
  }
  EXPECT_GT(withheld_total, 0);
}
