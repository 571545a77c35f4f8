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

#ifndef OOJIT_KERNEL_IR_HPP_
#define OOJIT_KERNEL_IR_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "oojit/common.hpp"
#include "oojit/device_model.hpp"
#include "oojit/tuning_config.hpp"

namespace oojit {

enum class OpKind { kGemm, kGemv, kElementwise };
enum class DType { kFp32, kFp16 };

std::string_view to_string(OpKind kind);
std::string_view to_string(DType dtype);
OpKind parse_op_kind(std::string_view name);  // throws ValidationError
DType parse_dtype(std::string_view name);     // throws ValidationError

std::int64_t dtype_size(DType dtype);
ComputePath compute_path(DType dtype);

// Operator plus problem dimensions.
//   GEMM        C[m,n] = A[m,k] * B[k,n]   dims = {m, n, k}
//   GEMV        y[m]   = A[m,n] * x[n]     dims = {m, n, 1}
//   ELEMENTWISE y[n]   = f(x[n])           dims = {n, 1, 1}
// Unused trailing dims are fixed at 1 so per-dimension padding works
// uniformly across kinds.
struct OpShape {
  OpKind kind = OpKind::kGemm;
  std::array<std::int64_t, 3> dims = {1, 1, 1};

  static OpShape gemm(std::int64_t m, std::int64_t n, std::int64_t k);
  static OpShape gemv(std::int64_t m, std::int64_t n);
  static OpShape elementwise(std::int64_t n);

  // Throws ValidationError when any dim is < 1.
  void validate() const;

  std::int64_t flops() const;
  // Operand plus result element counts (each operand counted once).
  std::int64_t elements() const;
  // Rows x cols of the output grid that thread blocks tile.
  std::array<std::int64_t, 2> output_grid() const;

  std::string to_string() const;  // e.g. "gemm:64x3136x576"

  friend bool operator==(const OpShape&, const OpShape&) = default;
  friend auto operator<=>(const OpShape&, const OpShape&) = default;
};

enum class SloClass { kInteractive, kBatch };

struct SloBounds {
  Nanos min = 10'000'000;         // 10 ms
  Nanos max = 10'000'000'000;     // 10 s
};

struct LatencyConstraint {
  SloClass slo_class = SloClass::kBatch;
  Nanos slo = kNever;

  static LatencyConstraint interactive(Nanos slo, SloBounds bounds = {});
  static LatencyConstraint batch();

  bool finite() const { return slo_class == SloClass::kInteractive; }
  Nanos deadline_after(Nanos arrival) const {
    return finite() ? arrival + slo : kNever;
  }
};

struct KernelSpec {
  KernelId kernel_id = 0;
  StreamId stream_id = 0;
  RequestId request_id = 0;
  OpShape shape;
  DType dtype = DType::kFp32;
  // Kernel ids within the same request that must finish first.
  std::vector<KernelId> deps;
  Nanos arrival = 0;
  Nanos deadline = kNever;

  std::int64_t flops() const { return shape.flops(); }
  std::int64_t bytes() const { return shape.elements() * dtype_size(dtype); }
};

struct InferenceRequest {
  RequestId request_id = 0;
  StreamId stream_id = 0;
  std::vector<KernelSpec> kernels;
  Nanos arrival = 0;
  LatencyConstraint constraint;

  // Checks the request-level invariants: deadline = arrival + slo on every
  // kernel, deps local to the request and acyclic.
  void validate() const;
};

// Declarative submission: operator, inputs and latency constraint only.
// No blocking or tiling is attached; that is bound by the scheduler.
KernelSpec submit(OpShape shape, DType dtype, LatencyConstraint constraint,
                  StreamId stream_id, Nanos arrival = 0, KernelId kernel_id = 0);

struct ConvParams {
  std::int64_t c_in = 1, c_out = 1, h = 1, w = 1;
  std::int64_t kernel = 1, stride = 1, pad = 0;
};

// One layer of a model description before lowering. Convolution layers
// keep their parameters and are lowered to GEMM per batch size.
struct ModelLayer {
  OpShape shape;
  DType dtype = DType::kFp32;
  std::optional<ConvParams> conv;
};

// im2col lowering: m = c_out, n = batch * h_out * w_out,
// k = c_in * kernel^2.
OpShape im2col_gemm(const ConvParams& conv, std::int64_t batch);

class ModelLibrary {
 public:
  static const ModelLibrary& bundled();
  static ModelLibrary from_json(const nlohmann::json& doc);
  static ModelLibrary from_file(const std::string& path);

  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;
  bool synthetic(const std::string& name) const;
  const std::vector<ModelLayer>& layers(const std::string& name) const;

  // Merges `other` on top of this library (other wins on name clashes).
  void merge(const ModelLibrary& other);

 private:
  struct Model {
    std::vector<ModelLayer> layers;
    bool synthetic = false;
  };
  std::map<std::string, Model> models_;
};

// Lowers a model to a linear dependency chain. Kernel ids are 0..n-1 local
// to the chain; stream, arrival and deadline are left for the caller.
std::vector<KernelSpec> lower_model(const ModelLibrary& library,
                                    const std::string& model_name,
                                    std::int64_t batch);

// Thread-block grid implied by the tiles; tiles larger than the output are
// clamped to it.
std::int64_t block_count(const OpShape& shape, const TuningConfig& tuning);

// Cost of `batch` copies of a shape executed as one kernel on
// `sm_allocation` SMs (bandwidth scales with the allocated share).
CostEstimate shape_cost(const OpShape& shape, DType dtype, std::int64_t batch,
                        const TuningConfig& tuning,
                        const DeviceProfile& profile, int sm_allocation);

// Full-device cost of a single kernel.
CostEstimate kernel_cost(const KernelSpec& spec, const TuningConfig& tuning,
                         const DeviceProfile& profile);

}  // namespace oojit

#endif  // OOJIT_KERNEL_IR_HPP_
