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

#ifndef OOJIT_TUNING_CONFIG_HPP_
#define OOJIT_TUNING_CONFIG_HPP_

namespace oojit {

// Blocking parameters bound to a kernel at dispatch time.
struct TuningConfig {
  int tile_m = 64;
  int tile_n = 64;
  // Fraction of device SMs the kernel claims when co-scheduled.
  double sm_footprint = 1.0;
  double efficiency_factor = 1.0;

  // Full-footprint 64x64 configuration used whenever no tuning table
  // applies.
  static TuningConfig default_config() { return {}; }

  void validate() const;

  friend bool operator==(const TuningConfig&, const TuningConfig&) = default;
};

}  // namespace oojit

#endif  // OOJIT_TUNING_CONFIG_HPP_
