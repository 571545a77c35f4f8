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

#include "oojit/coalescer.hpp"

#include <algorithm>
#include <numeric>

#include "oojit/autotuner.hpp"

namespace oojit {
namespace {

OpShape elementwise_max(const OpShape& a, const OpShape& b) {
  OpShape out = a;
  for (std::size_t i = 0; i < out.dims.size(); ++i) {
    out.dims[i] = std::max(a.dims[i], b.dims[i]);
  }
  return out;
}

double waste_of(std::int64_t member_flops, std::int64_t members,
                const OpShape& padded) {
  const long double padded_total =
      static_cast<long double>(members) * padded.flops();
  return static_cast<double>(1.0L - member_flops / padded_total);
}

}  // namespace

std::vector<ShapeCluster> cluster_shapes(std::span<const KernelSpec> pending,
                                         double epsilon) {
  if (!(epsilon >= 0.0) || epsilon >= 1.0) {
    throw DomainError("cluster_shapes: epsilon must lie in [0, 1)");
  }
  std::vector<std::size_t> order(pending.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = pending[a];
    const auto& y = pending[b];
    if (x.shape.kind != y.shape.kind) return x.shape.kind < y.shape.kind;
    if (x.dtype != y.dtype) return x.dtype < y.dtype;
    if (x.shape.dims != y.shape.dims) return x.shape.dims > y.shape.dims;
    return x.kernel_id < y.kernel_id;
  });

  std::vector<ShapeCluster> clusters;
  std::vector<bool> assigned(pending.size(), false);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const auto seed_index = order[oi];
    if (assigned[seed_index]) continue;
    const auto& seed = pending[seed_index];
    ShapeCluster cluster;
    cluster.key = {seed.shape.kind, seed.dtype};
    cluster.padded = seed.shape;
    cluster.members.push_back(seed.kernel_id);
    cluster.member_flops = seed.flops();
    cluster.earliest_deadline = seed.deadline;
    assigned[seed_index] = true;

    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const auto cand_index = order[oj];
      if (assigned[cand_index]) continue;
      const auto& cand = pending[cand_index];
      if (cand.shape.kind != cluster.key.kind || cand.dtype != cluster.key.dtype) {
        break;  // sorted by key: nothing further can match
      }
      const OpShape padded = elementwise_max(cluster.padded, cand.shape);
      const auto flops = cluster.member_flops + cand.flops();
      const double waste = waste_of(flops, cluster.size() + 1, padded);
      if (waste <= epsilon) {
        cluster.padded = padded;
        cluster.members.push_back(cand.kernel_id);
        cluster.member_flops = flops;
        cluster.earliest_deadline =
            std::min(cluster.earliest_deadline, cand.deadline);
        cluster.waste = waste;
        assigned[cand_index] = true;
      }
    }
    clusters.push_back(std::move(cluster));
  }
  return clusters;
}

double pad_cost(const ShapeCluster& cluster) {
  if (cluster.members.empty()) {
    throw DomainError("pad_cost: empty cluster");
  }
  return waste_of(cluster.member_flops, cluster.size(), cluster.padded);
}

SuperKernel form_superkernel(const ShapeCluster& cluster,
                             const TuningTable* tuning, int co_tenancy,
                             const DeviceProfile& profile) {
  SuperKernel sk;
  sk.members = cluster.members;
  sk.padded = cluster.padded;
  sk.dtype = cluster.key.dtype;
  sk.batch = cluster.size();
  sk.useful_flops = cluster.member_flops;
  sk.earliest_deadline = cluster.earliest_deadline;
  sk.tuning = TuningConfig::default_config();
  if (tuning != nullptr) {
    if (auto hit = tuning->lookup(tune_key(cluster.padded, cluster.key.dtype),
                                  co_tenancy)) {
      sk.tuning = *hit;
    }
  }
  sk.cost = shape_cost(sk.padded, sk.dtype, sk.batch, sk.tuning, profile,
                       profile.sm_count);
  sk.flops = sk.cost.flops;
  sk.bytes = sk.cost.bytes;
  return sk;
}

}  // namespace oojit
