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

#ifndef OOJIT_DEVICE_MODEL_HPP_
#define OOJIT_DEVICE_MODEL_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "oojit/common.hpp"

namespace oojit {

// Which peak a kernel runs against: dense is the tensor/accelerated path
// (fp16), scalar is plain fp32.
enum class ComputePath { kDense, kScalar };

// Analytical GPU. All rates are per second; the device is treated as
// `sm_count` identical SMs each holding `blocks_per_sm` resident blocks.
struct DeviceProfile {
  std::string name;
  int sm_count = 0;
  int blocks_per_sm = 0;
  double peak_flops_dense = 0.0;   // FLOP/s
  double peak_flops_scalar = 0.0;  // FLOP/s
  double mem_bandwidth = 0.0;      // bytes/s
  Nanos context_switch_cost = 0;

  double peak(ComputePath path) const {
    return path == ComputePath::kDense ? peak_flops_dense : peak_flops_scalar;
  }
  std::int64_t block_capacity() const {
    return static_cast<std::int64_t>(sm_count) * blocks_per_sm;
  }

  // Throws ValidationError naming the first offending field.
  void validate() const;

  friend bool operator==(const DeviceProfile&, const DeviceProfile&) = default;
};

struct CostEstimate {
  std::int64_t flops = 0;
  std::int64_t bytes = 0;
  std::int64_t block_count = 0;
  // Fraction of full-device peak the kernel attains, in (0, 1].
  double efficiency = 1.0;
  Nanos duration = 0;
};

// Resolves a preset name ("v100", "k80", "tpu_v2_like", "inferentia_like")
// or a path to a profile JSON file.
DeviceProfile load_profile(std::string_view source);

DeviceProfile profile_from_json(const nlohmann::json& doc);
nlohmann::json profile_to_json(const DeviceProfile& profile);

std::vector<std::string> preset_names();

// The versioned preset document shipped with the library (device presets,
// tuning-space model, interference model constants).
const nlohmann::json& bundled_presets();

double op_byte_ratio(const DeviceProfile& profile);

// max(compute time, memory time), rounded up to whole nanoseconds.
// `bandwidth_share` scales the memory bandwidth available to the kernel
// (1.0 = whole device).
Nanos roofline_duration(const DeviceProfile& profile, std::int64_t flops,
                        std::int64_t bytes, double efficiency, ComputePath path,
                        double bandwidth_share = 1.0);

// min(1, block_count / (sm_count * blocks_per_sm)) * tuning_factor.
double occupancy_efficiency(const DeviceProfile& profile,
                            std::int64_t block_count, double tuning_factor);

// Efficiency of a kernel confined to `sm_allocation` SMs, expressed as a
// fraction of the full-device peak. Equals occupancy_efficiency when the
// allocation is the whole device.
double partition_efficiency(const DeviceProfile& profile,
                            std::int64_t block_count, double tuning_factor,
                            int sm_allocation);

}  // namespace oojit

#endif  // OOJIT_DEVICE_MODEL_HPP_
