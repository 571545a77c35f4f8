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

#ifndef OOJIT_COALESCER_HPP_
#define OOJIT_COALESCER_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "oojit/device_model.hpp"
#include "oojit/kernel_ir.hpp"

namespace oojit {

class TuningTable;

// Kernels may only coalesce with kernels of the same operator and dtype.
struct ClusterKey {
  OpKind kind = OpKind::kGemm;
  DType dtype = DType::kFp32;

  friend bool operator==(const ClusterKey&, const ClusterKey&) = default;
  friend auto operator<=>(const ClusterKey&, const ClusterKey&) = default;
};

struct ShapeCluster {
  ClusterKey key;
  // Per-dimension maxima over the members.
  OpShape padded;
  std::vector<KernelId> members;
  std::int64_t member_flops = 0;
  Nanos earliest_deadline = kNever;
  // Fraction of padded FLOPs that are padding.
  double waste = 0.0;

  std::int64_t size() const { return static_cast<std::int64_t>(members.size()); }
};

struct SuperKernel {
  std::int64_t super_id = 0;
  std::vector<KernelId> members;
  OpShape padded;
  DType dtype = DType::kFp32;
  std::int64_t batch = 0;
  std::int64_t flops = 0;         // batch * flops(padded)
  std::int64_t useful_flops = 0;  // sum of member flops
  std::int64_t bytes = 0;         // members billed at padded size
  Nanos earliest_deadline = kNever;
  TuningConfig tuning;
  CostEstimate cost;
};

// Greedy shape clustering. Kernels are sorted by (op kind, dtype, dims
// descending, kernel id); each unassigned kernel opens a cluster and later
// candidates of the same key join while the recomputed waste stays <= epsilon.
std::vector<ShapeCluster> cluster_shapes(std::span<const KernelSpec> pending,
                                         double epsilon);

// 1 - member_flops / (|members| * flops(padded)).
double pad_cost(const ShapeCluster& cluster);

// Batched, padded execution of the cluster. Tuning is looked up for the
// padded shape at `co_tenancy`; without a table (or on a miss) the default
// configuration applies.
SuperKernel form_superkernel(const ShapeCluster& cluster,
                             const TuningTable* tuning, int co_tenancy,
                             const DeviceProfile& profile);

}  // namespace oojit

#endif  // OOJIT_COALESCER_HPP_
