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

#include "oojit/device_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "embedded_data.hpp"

namespace oojit {

Nanos ceil_ns(double ns) {
  // Tolerate representation error on values that are integral in exact
  // arithmetic.
  return static_cast<Nanos>(std::ceil(ns - 1e-6));
}

void DeviceProfile::validate() const {
  auto fail = [this](const char* field) {
    throw ValidationError("device profile '" + name + "': field '" +
                          field + "' must be strictly positive");
  };
  if (sm_count <= 0) fail("sm_count");
  if (blocks_per_sm <= 0) fail("blocks_per_sm");
  if (!(peak_flops_dense > 0.0)) fail("peak_flops_dense");
  if (!(peak_flops_scalar > 0.0)) fail("peak_flops_scalar");
  if (!(mem_bandwidth > 0.0)) fail("mem_bandwidth");
  if (context_switch_cost < 0) {
    throw ValidationError("device profile '" + name +
                          "': field 'context_switch_cost' must be >= 0");
  }
}

const nlohmann::json& bundled_presets() {
  static const nlohmann::json doc =
      nlohmann::json::parse(detail::presets_json());
  return doc;
}

namespace {

const std::set<std::string>& profile_fields() {
  static const std::set<std::string> fields = {
      "name",          "sm_count",          "blocks_per_sm",
      "peak_flops_dense", "peak_flops_scalar", "mem_bandwidth",
      "context_switch_cost"};
  return fields;
}

template <typename T>
T required(const nlohmann::json& doc, const std::string& field) {
  if (!doc.contains(field)) {
    throw ParseError("device profile: missing field '" + field + "'");
  }
  try {
    return doc.at(field).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError("device profile: field '" + field +
                     "' has the wrong type");
  }
}

}  // namespace

DeviceProfile profile_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("device profile: expected an object");
  for (const auto& [key, value] : doc.items()) {
    if (!profile_fields().count(key)) {
      throw ParseError("device profile: unknown field '" + key + "'");
    }
  }
  DeviceProfile p;
  p.name = required<std::string>(doc, "name");
  p.sm_count = required<int>(doc, "sm_count");
  p.blocks_per_sm = required<int>(doc, "blocks_per_sm");
  p.peak_flops_dense = required<double>(doc, "peak_flops_dense");
  p.peak_flops_scalar = required<double>(doc, "peak_flops_scalar");
  p.mem_bandwidth = required<double>(doc, "mem_bandwidth");
  p.context_switch_cost = required<Nanos>(doc, "context_switch_cost");
  p.validate();
  return p;
}

nlohmann::json profile_to_json(const DeviceProfile& p) {
  return {{"name", p.name},
          {"sm_count", p.sm_count},
          {"blocks_per_sm", p.blocks_per_sm},
          {"peak_flops_dense", p.peak_flops_dense},
          {"peak_flops_scalar", p.peak_flops_scalar},
          {"mem_bandwidth", p.mem_bandwidth},
          {"context_switch_cost", p.context_switch_cost}};
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [key, value] : bundled_presets().at("devices").items()) {
    names.push_back(key);
  }
  return names;
}

DeviceProfile load_profile(std::string_view source) {
  const auto& devices = bundled_presets().at("devices");
  const std::string key(source);
  if (devices.contains(key)) return profile_from_json(devices.at(key));

  std::ifstream in(key);
  if (!in) {
    throw ValidationError("unknown device preset or unreadable file: '" +
                          key + "'");
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("device profile '" + key + "': " + e.what());
  }
  return profile_from_json(doc);
}

double op_byte_ratio(const DeviceProfile& profile) {
  return profile.peak_flops_dense / profile.mem_bandwidth;
}

Nanos roofline_duration(const DeviceProfile& profile, std::int64_t flops,
                        std::int64_t bytes, double efficiency, ComputePath path,
                        double bandwidth_share) {
  if (!(efficiency > 0.0) || efficiency > 1.0) {
    throw DomainError("roofline_duration: efficiency must lie in (0, 1]");
  }
  if (flops < 0 || bytes < 0) {
    throw DomainError("roofline_duration: negative work");
  }
  if (!(bandwidth_share > 0.0) || bandwidth_share > 1.0) {
    throw DomainError("roofline_duration: bandwidth share must lie in (0, 1]");
  }
  const double compute_ns =
      static_cast<double>(flops) * 1e9 / (profile.peak(path) * efficiency);
  const double memory_ns = static_cast<double>(bytes) * 1e9 /
                           (profile.mem_bandwidth * bandwidth_share);
  return ceil_ns(std::max(compute_ns, memory_ns));
}

double occupancy_efficiency(const DeviceProfile& profile,
                            std::int64_t block_count, double tuning_factor) {
  return partition_efficiency(profile, block_count, tuning_factor,
                              profile.sm_count);
}

double partition_efficiency(const DeviceProfile& profile,
                            std::int64_t block_count, double tuning_factor,
                            int sm_allocation) {
  if (block_count < 1) {
    throw DomainError("occupancy_efficiency: block_count must be >= 1");
  }
  if (!(tuning_factor > 0.0) || tuning_factor > 1.0) {
    throw DomainError("occupancy_efficiency: tuning factor must lie in (0, 1]");
  }
  if (sm_allocation < 1 || sm_allocation > profile.sm_count) {
    throw DomainError("partition_efficiency: allocation outside [1, sm_count]");
  }
  const double slots =
      static_cast<double>(sm_allocation) * profile.blocks_per_sm;
  const double occupancy =
      std::min(1.0, static_cast<double>(block_count) / slots);
  const double share =
      static_cast<double>(sm_allocation) / profile.sm_count;
  return share * occupancy * tuning_factor;
}

}  // namespace oojit
