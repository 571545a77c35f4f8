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

#include "oojit/autotuner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace oojit {

const TuningModel& TuningModel::bundled() {
  static const TuningModel model = [] {
    const auto& doc = bundled_presets().at("tuning_model");
    TuningModel m;
    m.efficiency_base = doc.at("efficiency_base").get<double>();
    m.efficiency_slope = doc.at("efficiency_slope").get<double>();
    m.tile_sizes = doc.at("tile_sizes").get<std::vector<int>>();
    m.version = doc.at("version").get<int>();
    return m;
  }();
  return model;
}

double TuningModel::efficiency_factor(const OpShape& shape, int tile_m,
                                      int tile_n, double sm_footprint) const {
  const auto [rows, cols] = shape.output_grid();
  double fit = 1.0;
  if (tile_m > rows) fit *= static_cast<double>(rows) / tile_m;
  if (tile_n > cols) fit *= static_cast<double>(cols) / tile_n;
  return std::clamp((efficiency_base + efficiency_slope * sm_footprint) * fit,
                    1e-9, 1.0);
}

std::string tune_key(const OpShape& shape, DType dtype) {
  const auto text = shape.to_string();
  const auto colon = text.find(':');
  return text.substr(0, colon) + ":" + std::string(to_string(dtype)) +
         text.substr(colon);
}

std::pair<OpShape, DType> parse_tune_key(const std::string& key) {
  const auto first = key.find(':');
  const auto second = key.find(':', first + 1);
  if (first == std::string::npos || second == std::string::npos) {
    throw ParseError("tuning key '" + key + "': expected op:dtype:dims");
  }
  const auto kind = parse_op_kind(key.substr(0, first));
  const auto dtype = parse_dtype(key.substr(first + 1, second - first - 1));
  std::vector<std::int64_t> dims;
  std::stringstream in(key.substr(second + 1));
  std::string part;
  while (std::getline(in, part, 'x')) {
    try {
      dims.push_back(std::stoll(part));
    } catch (const std::exception&) {
      throw ParseError("tuning key '" + key + "': bad dimension");
    }
  }
  OpShape shape;
  switch (kind) {
    case OpKind::kGemm:
      if (dims.size() != 3) throw ParseError("tuning key '" + key + "'");
      shape = OpShape::gemm(dims[0], dims[1], dims[2]);
      break;
    case OpKind::kGemv:
      if (dims.size() != 2) throw ParseError("tuning key '" + key + "'");
      shape = OpShape::gemv(dims[0], dims[1]);
      break;
    case OpKind::kElementwise:
      if (dims.size() != 1) throw ParseError("tuning key '" + key + "'");
      shape = OpShape::elementwise(dims[0]);
      break;
  }
  shape.validate();
  return {shape, dtype};
}

TuningEvaluation evaluate_config(const OpShape& shape, DType dtype,
                                 const TuningConfig& config, int co_tenancy,
                                 const DeviceProfile& profile) {
  if (co_tenancy < 1) throw DomainError("co_tenancy must be >= 1");
  TuningEvaluation ev;
  ev.sm_allocation = std::max(
      1, static_cast<int>(std::floor(config.sm_footprint * profile.sm_count +
                                     1e-9)));
  ev.concurrency =
      std::min(co_tenancy, std::max(1, profile.sm_count / ev.sm_allocation));
  const int waves = (co_tenancy + ev.concurrency - 1) / ev.concurrency;
  const auto cost =
      shape_cost(shape, dtype, 1, config, profile, ev.sm_allocation);
  ev.duration = cost.duration;
  const double flops = static_cast<double>(cost.flops);
  ev.solo_throughput = flops * 1e9 / static_cast<double>(ev.duration);
  ev.aggregate_throughput = co_tenancy * flops * 1e9 /
                            (static_cast<double>(waves) * ev.duration);
  return ev;
}

std::vector<TuningConfig> tuning_grid(const OpShape& shape, int co_tenancy,
                                      const TuningModel& model) {
  if (co_tenancy < 1) throw DomainError("co_tenancy must be >= 1");
  std::vector<TuningConfig> grid;
  for (int t = 1; t <= co_tenancy; ++t) {
    const double footprint = 1.0 / t;
    for (int tm : model.tile_sizes) {
      for (int tn : model.tile_sizes) {
        TuningConfig c;
        c.tile_m = tm;
        c.tile_n = tn;
        c.sm_footprint = footprint;
        c.efficiency_factor = model.efficiency_factor(shape, tm, tn, footprint);
        grid.push_back(c);
      }
    }
  }
  return grid;
}

namespace {

// True when `a` should replace the incumbent `b` at equal throughput.
bool preferred_on_tie(const TuningConfig& a, const TuningConfig& b) {
  if (a.sm_footprint != b.sm_footprint) return a.sm_footprint > b.sm_footprint;
  const long area_a = static_cast<long>(a.tile_m) * a.tile_n;
  const long area_b = static_cast<long>(b.tile_m) * b.tile_n;
  if (area_a != area_b) return area_a > area_b;
  return a.tile_m > b.tile_m;
}

}  // namespace

TuningConfig tune(const OpShape& shape, DType dtype, int co_tenancy,
                  const DeviceProfile& profile, std::int64_t budget,
                  std::uint64_t /*seed*/, const TuningModel& model) {
  shape.validate();
  const auto grid = tuning_grid(shape, co_tenancy, model);
  if (budget < static_cast<std::int64_t>(grid.size())) {
    throw DomainError("tune: budget " + std::to_string(budget) +
                      " is smaller than the grid (" +
                      std::to_string(grid.size()) + " points)");
  }
  // The grid is exhaustive and evaluation is deterministic, so the seed
  // only feeds provenance.
  const TuningConfig* best = nullptr;
  double best_value = -1.0;
  for (const auto& c : grid) {
    const double v =
        evaluate_config(shape, dtype, c, co_tenancy, profile).aggregate_throughput;
    const double tol = 1e-12 * std::max(v, best_value);
    if (best == nullptr || v > best_value + tol ||
        (std::abs(v - best_value) <= tol && preferred_on_tie(c, *best))) {
      best = &c;
      best_value = v;
    }
  }
  return *best;
}

TuningTable::TuningTable(int max_tenancy, TuningProvenance provenance)
    : max_tenancy_(max_tenancy), provenance_(std::move(provenance)) {
  if (max_tenancy < 1) throw ValidationError("max_tenancy must be >= 1");
}

void TuningTable::insert(const std::string& key, int co_tenancy,
                         TuningConfig config) {
  if (co_tenancy < 1 || co_tenancy > max_tenancy_) {
    throw ValidationError("tuning table: tenancy outside [1, max_tenancy]");
  }
  config.validate();
  entries_[key][co_tenancy] = config;
}

std::optional<TuningConfig> TuningTable::lookup(const std::string& key,
                                                int co_tenancy) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  const int tenancy = std::clamp(co_tenancy, 1, max_tenancy_);
  auto cfg = it->second.find(tenancy);
  if (cfg == it->second.end()) return std::nullopt;
  return cfg->second;
}

TuningConfig TuningTable::lookup_or_default(const std::string& key,
                                            int co_tenancy) const {
  return lookup(key, co_tenancy).value_or(TuningConfig::default_config());
}

std::vector<std::string> TuningTable::keys() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : entries_) out.push_back(key);
  return out;
}

nlohmann::json TuningTable::to_json() const {
  nlohmann::json table = nlohmann::json::object();
  for (const auto& [key, by_tenancy] : entries_) {
    nlohmann::json row = nlohmann::json::object();
    for (const auto& [tenancy, c] : by_tenancy) {
      row[std::to_string(tenancy)] = {{"tile_m", c.tile_m},
                                      {"tile_n", c.tile_n},
                                      {"sm_footprint", c.sm_footprint},
                                      {"efficiency_factor", c.efficiency_factor}};
    }
    table[key] = row;
  }
  return {{"provenance",
           {{"budget", provenance_.budget},
            {"seed", provenance_.seed},
            {"model_version", provenance_.model_version},
            {"profile", provenance_.profile}}},
          {"max_tenancy", max_tenancy_},
          {"table", table}};
}

TuningTable TuningTable::from_json(const nlohmann::json& doc) {
  try {
    for (const auto& [k, v] : doc.items()) {
      if (k != "provenance" && k != "max_tenancy" && k != "table") {
        throw ParseError("tuning table: unknown field '" + k + "'");
      }
    }
    TuningProvenance prov;
    const auto& p = doc.at("provenance");
    prov.budget = p.at("budget").get<std::int64_t>();
    prov.seed = p.at("seed").get<std::uint64_t>();
    prov.model_version = p.at("model_version").get<int>();
    prov.profile = p.at("profile").get<std::string>();
    TuningTable table(doc.at("max_tenancy").get<int>(), prov);
    for (const auto& [key, row] : doc.at("table").items()) {
      parse_tune_key(key);
      for (const auto& [tenancy, c] : row.items()) {
        TuningConfig cfg;
        cfg.tile_m = c.at("tile_m").get<int>();
        cfg.tile_n = c.at("tile_n").get<int>();
        cfg.sm_footprint = c.at("sm_footprint").get<double>();
        cfg.efficiency_factor = c.at("efficiency_factor").get<double>();
        table.insert(key, std::stoi(tenancy), cfg);
      }
    }
    return table;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("tuning table: ") + e.what());
  }
}

TuningTable TuningTable::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read tuning table '" + path + "'");
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("tuning table '" + path + "': " + e.what());
  }
}

TuningTable build_table(const std::vector<std::string>& keys, int max_tenancy,
                        const DeviceProfile& profile, std::int64_t budget,
                        std::uint64_t seed, int jobs) {
  TuningProvenance prov{budget, seed, TuningModel::bundled().version,
                        profile.name};
  TuningTable table(max_tenancy, prov);

  std::vector<std::vector<TuningConfig>> results(keys.size());
  std::mutex error_mutex;
  std::exception_ptr error;
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < keys.size(); i += stride) {
      try {
        const auto [shape, dtype] = parse_tune_key(keys[i]);
        for (int t = 1; t <= max_tenancy; ++t) {
          results[i].push_back(tune(shape, dtype, t, profile, budget, seed));
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, jobs));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    for (int t = 1; t <= max_tenancy; ++t) {
      table.insert(keys[i], t, results[i][static_cast<std::size_t>(t - 1)]);
    }
  }
  return table;
}

}  // namespace oojit
