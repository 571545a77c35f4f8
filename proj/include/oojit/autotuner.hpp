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

#ifndef OOJIT_AUTOTUNER_HPP_
#define OOJIT_AUTOTUNER_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "oojit/device_model.hpp"
#include "oojit/kernel_ir.hpp"
#include "oojit/tuning_config.hpp"

namespace oojit {

// Tuning-space model: how a configuration's footprint and tile fit map to
// its efficiency factor. Constants come from the preset file.
struct TuningModel {
  double efficiency_base = 0.6;
  double efficiency_slope = 0.4;
  std::vector<int> tile_sizes = {16, 32, 64, 128};
  int version = 1;

  static const TuningModel& bundled();

  // (base + slope * footprint) * tile-fit penalty. The penalty is the
  // fraction of each tile that lies inside the output grid when the tile
  // exceeds it, so oversized tiles never tie with fitting ones.
  double efficiency_factor(const OpShape& shape, int tile_m, int tile_n,
                           double sm_footprint) const;
};

// Table key: "<op>:<dtype>:<dims>", e.g. "gemm:fp32:64x3136x576".
std::string tune_key(const OpShape& shape, DType dtype);
std::pair<OpShape, DType> parse_tune_key(const std::string& key);

struct TuningEvaluation {
  double solo_throughput = 0.0;       // FLOP/s of one instance alone
  double aggregate_throughput = 0.0;  // FLOP/s of `co_tenancy` instances
  int sm_allocation = 0;
  int concurrency = 0;  // instances resident at once
  Nanos duration = 0;   // one instance at its allocation
};

// Models `co_tenancy` simultaneous instances, each claiming
// floor(sm_footprint * sm_count) SMs. Instances that do not fit run in
// later waves.
TuningEvaluation evaluate_config(const OpShape& shape, DType dtype,
                                 const TuningConfig& config, int co_tenancy,
                                 const DeviceProfile& profile);

// Grid over tile_m, tile_n in tile_sizes and sm_footprint in
// {1/t : t = 1..co_tenancy}; efficiency factors filled from the model.
std::vector<TuningConfig> tuning_grid(const OpShape& shape, int co_tenancy,
                                      const TuningModel& model);

// Exhaustive grid search maximising aggregate throughput; ties go to the
// larger footprint, then the larger tile. Throws DomainError when `budget`
// is smaller than the grid.
TuningConfig tune(const OpShape& shape, DType dtype, int co_tenancy,
                  const DeviceProfile& profile, std::int64_t budget,
                  std::uint64_t seed,
                  const TuningModel& model = TuningModel::bundled());

struct TuningProvenance {
  std::int64_t budget = 0;
  std::uint64_t seed = 0;
  int model_version = 1;
  std::string profile;
};

class TuningTable {
 public:
  TuningTable() = default;
  explicit TuningTable(int max_tenancy, TuningProvenance provenance = {});

  int max_tenancy() const { return max_tenancy_; }
  const TuningProvenance& provenance() const { return provenance_; }

  void insert(const std::string& key, int co_tenancy, TuningConfig config);

  // Tenancy above max_tenancy clamps to the max_tenancy entry. A key that
  // was never tuned is an explicit miss.
  std::optional<TuningConfig> lookup(const std::string& key,
                                     int co_tenancy) const;
  TuningConfig lookup_or_default(const std::string& key, int co_tenancy) const;

  std::vector<std::string> keys() const;

  nlohmann::json to_json() const;
  static TuningTable from_json(const nlohmann::json& doc);
  static TuningTable from_file(const std::string& path);

 private:
  int max_tenancy_ = 1;
  TuningProvenance provenance_;
  std::map<std::string, std::map<int, TuningConfig>> entries_;
};

// Tunes every (key, tenancy in 1..max_tenancy) pair. Searches run on up to
// `jobs` threads; results are merged by key.
TuningTable build_table(const std::vector<std::string>& keys, int max_tenancy,
                        const DeviceProfile& profile, std::int64_t budget,
                        std::uint64_t seed, int jobs = 1);

}  // namespace oojit

#endif  // OOJIT_AUTOTUNER_HPP_
