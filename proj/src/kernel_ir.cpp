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

#include "oojit/kernel_ir.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "embedded_data.hpp"

namespace oojit {

void TuningConfig::validate() const {
  if (tile_m < 1 || tile_n < 1) {
    throw ValidationError("tuning config: tiles must be >= 1");
  }
  if (!(sm_footprint > 0.0) || sm_footprint > 1.0) {
    throw ValidationError("tuning config: sm_footprint must lie in (0, 1]");
  }
  if (!(efficiency_factor > 0.0) || efficiency_factor > 1.0) {
    throw ValidationError(
        "tuning config: efficiency_factor must lie in (0, 1]");
  }
}

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::kGemm:
      return "gemm";
    case OpKind::kGemv:
      return "gemv";
    case OpKind::kElementwise:
      return "elementwise";
  }
  return "?";
}

std::string_view to_string(DType dtype) {
  return dtype == DType::kFp16 ? "fp16" : "fp32";
}

OpKind parse_op_kind(std::string_view name) {
  if (name == "gemm") return OpKind::kGemm;
  if (name == "gemv") return OpKind::kGemv;
  if (name == "elementwise") return OpKind::kElementwise;
  throw ValidationError("unknown op kind '" + std::string(name) + "'");
}

DType parse_dtype(std::string_view name) {
  if (name == "fp32") return DType::kFp32;
  if (name == "fp16") return DType::kFp16;
  throw ValidationError("unknown dtype '" + std::string(name) + "'");
}

std::int64_t dtype_size(DType dtype) { return dtype == DType::kFp16 ? 2 : 4; }

ComputePath compute_path(DType dtype) {
  return dtype == DType::kFp16 ? ComputePath::kDense : ComputePath::kScalar;
}

OpShape OpShape::gemm(std::int64_t m, std::int64_t n, std::int64_t k) {
  return {OpKind::kGemm, {m, n, k}};
}

OpShape OpShape::gemv(std::int64_t m, std::int64_t n) {
  return {OpKind::kGemv, {m, n, 1}};
}

OpShape OpShape::elementwise(std::int64_t n) {
  return {OpKind::kElementwise, {n, 1, 1}};
}

void OpShape::validate() const {
  for (auto d : dims) {
    if (d < 1) {
      throw ValidationError("invalid dims for " + std::string(oojit::to_string(kind)) +
                            ": every dimension must be >= 1");
    }
  }
  const bool trailing_ok =
      (kind == OpKind::kGemm) ||
      (kind == OpKind::kGemv && dims[2] == 1) ||
      (kind == OpKind::kElementwise && dims[1] == 1 && dims[2] == 1);
  if (!trailing_ok) {
    throw ValidationError("invalid dims for " + std::string(oojit::to_string(kind)));
  }
}

std::int64_t OpShape::flops() const {
  const auto [a, b, c] = dims;
  switch (kind) {
    case OpKind::kGemm:
      return 2 * a * b * c;
    case OpKind::kGemv:
      return 2 * a * b;
    case OpKind::kElementwise:
      return a;
  }
  return 0;
}

std::int64_t OpShape::elements() const {
  const auto [a, b, c] = dims;
  switch (kind) {
    case OpKind::kGemm:
      return a * c + c * b + a * b;
    case OpKind::kGemv:
      return a * b + b + a;
    case OpKind::kElementwise:
      return 2 * a;
  }
  return 0;
}

std::array<std::int64_t, 2> OpShape::output_grid() const {
  switch (kind) {
    case OpKind::kGemm:
      return {dims[0], dims[1]};
    case OpKind::kGemv:
    case OpKind::kElementwise:
      return {dims[0], 1};
  }
  return {1, 1};
}

std::string OpShape::to_string() const {
  std::ostringstream out;
  out << oojit::to_string(kind) << ':';
  switch (kind) {
    case OpKind::kGemm:
      out << dims[0] << 'x' << dims[1] << 'x' << dims[2];
      break;
    case OpKind::kGemv:
      out << dims[0] << 'x' << dims[1];
      break;
    case OpKind::kElementwise:
      out << dims[0];
      break;
  }
  return out.str();
}

LatencyConstraint LatencyConstraint::interactive(Nanos slo, SloBounds bounds) {
  if (slo < bounds.min || slo > bounds.max) {
    throw ValidationError("interactive slo " + std::to_string(slo) +
                          " ns outside [" + std::to_string(bounds.min) + ", " +
                          std::to_string(bounds.max) + "]");
  }
  return {SloClass::kInteractive, slo};
}

LatencyConstraint LatencyConstraint::batch() {
  return {SloClass::kBatch, kNever};
}

void InferenceRequest::validate() const {
  std::unordered_map<KernelId, const KernelSpec*> by_id;
  for (const auto& k : kernels) {
    k.shape.validate();
    if (!by_id.emplace(k.kernel_id, &k).second) {
      throw ValidationError("request " + std::to_string(request_id) +
                            ": duplicate kernel id");
    }
    if (k.request_id != request_id || k.stream_id != stream_id) {
      throw ValidationError("request " + std::to_string(request_id) +
                            ": kernel ownership mismatch");
    }
    if (k.arrival != arrival ||
        k.deadline != constraint.deadline_after(arrival)) {
      throw ValidationError("request " + std::to_string(request_id) +
                            ": kernel deadline must equal arrival + slo");
    }
    if (constraint.finite() && k.deadline <= k.arrival) {
      throw ValidationError("request " + std::to_string(request_id) +
                            ": deadline must follow arrival");
    }
  }
  // Kahn's algorithm; leftover kernels mean a cycle.
  std::unordered_map<KernelId, int> indegree;
  std::unordered_map<KernelId, std::vector<KernelId>> succ;
  for (const auto& k : kernels) {
    indegree.try_emplace(k.kernel_id, 0);
    for (auto d : k.deps) {
      if (!by_id.count(d)) {
        throw ValidationError("request " + std::to_string(request_id) +
                              ": dependency outside the request");
      }
      ++indegree[k.kernel_id];
      succ[d].push_back(k.kernel_id);
    }
  }
  std::vector<KernelId> frontier;
  for (const auto& [id, deg] : indegree) {
    if (deg == 0) frontier.push_back(id);
  }
  std::size_t visited = 0;
  while (!frontier.empty()) {
    const auto id = frontier.back();
    frontier.pop_back();
    ++visited;
    for (auto s : succ[id]) {
      if (--indegree[s] == 0) frontier.push_back(s);
    }
  }
  if (visited != kernels.size()) {
    throw ValidationError("request " + std::to_string(request_id) +
                          ": dependency cycle");
  }
}

KernelSpec submit(OpShape shape, DType dtype, LatencyConstraint constraint,
                  StreamId stream_id, Nanos arrival, KernelId kernel_id) {
  shape.validate();
  KernelSpec spec;
  spec.kernel_id = kernel_id;
  spec.stream_id = stream_id;
  spec.shape = shape;
  spec.dtype = dtype;
  spec.arrival = arrival;
  spec.deadline = constraint.deadline_after(arrival);
  return spec;
}

OpShape im2col_gemm(const ConvParams& conv, std::int64_t batch) {
  if (conv.c_in < 1 || conv.c_out < 1 || conv.h < 1 || conv.w < 1 ||
      conv.kernel < 1 || conv.stride < 1 || conv.pad < 0 || batch < 1) {
    throw ValidationError("conv2d: invalid parameters");
  }
  const auto h_out = (conv.h + 2 * conv.pad - conv.kernel) / conv.stride + 1;
  const auto w_out = (conv.w + 2 * conv.pad - conv.kernel) / conv.stride + 1;
  if (h_out < 1 || w_out < 1) {
    throw ValidationError("conv2d: kernel larger than padded input");
  }
  return OpShape::gemm(conv.c_out, batch * h_out * w_out,
                       conv.c_in * conv.kernel * conv.kernel);
}

namespace {

void reject_unknown(const nlohmann::json& obj,
                    const std::set<std::string>& allowed,
                    const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ParseError(where + ": unknown field '" + key + "'");
    }
  }
}

std::int64_t dim(const nlohmann::json& obj, const char* field,
                 const std::string& where, std::int64_t fallback = -1) {
  if (!obj.contains(field)) {
    if (fallback >= 0) return fallback;
    throw ParseError(where + ": missing field '" + field + "'");
  }
  if (!obj.at(field).is_number_integer()) {
    throw ParseError(where + ": field '" + field + "' must be an integer");
  }
  return obj.at(field).get<std::int64_t>();
}

ModelLayer parse_layer(const nlohmann::json& obj, const std::string& where) {
  if (!obj.is_object() || !obj.contains("op")) {
    throw ParseError(where + ": layer needs an 'op' field");
  }
  const auto op = obj.at("op").get<std::string>();
  ModelLayer layer;
  if (obj.contains("dtype")) {
    layer.dtype = parse_dtype(obj.at("dtype").get<std::string>());
  }
  if (op == "conv2d") {
    reject_unknown(obj, {"op", "dtype", "c_in", "c_out", "h", "w", "kernel",
                         "stride", "pad"},
                   where);
    ConvParams conv;
    conv.c_in = dim(obj, "c_in", where);
    conv.c_out = dim(obj, "c_out", where);
    conv.h = dim(obj, "h", where);
    conv.w = dim(obj, "w", where);
    conv.kernel = dim(obj, "kernel", where);
    conv.stride = dim(obj, "stride", where, 1);
    conv.pad = dim(obj, "pad", where, 0);
    layer.shape = im2col_gemm(conv, 1);
    layer.conv = conv;
    return layer;
  }
  const auto kind = parse_op_kind(op);
  switch (kind) {
    case OpKind::kGemm:
      reject_unknown(obj, {"op", "dtype", "m", "n", "k"}, where);
      layer.shape = OpShape::gemm(dim(obj, "m", where), dim(obj, "n", where),
                                  dim(obj, "k", where));
      break;
    case OpKind::kGemv:
      reject_unknown(obj, {"op", "dtype", "m", "n"}, where);
      layer.shape = OpShape::gemv(dim(obj, "m", where), dim(obj, "n", where));
      break;
    case OpKind::kElementwise:
      reject_unknown(obj, {"op", "dtype", "n"}, where);
      layer.shape = OpShape::elementwise(dim(obj, "n", where));
      break;
  }
  layer.shape.validate();
  return layer;
}

}  // namespace

const ModelLibrary& ModelLibrary::bundled() {
  static const ModelLibrary lib =
      from_json(nlohmann::json::parse(detail::models_json()));
  return lib;
}

ModelLibrary ModelLibrary::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("models")) {
    throw ParseError("model library: expected an object with 'models'");
  }
  reject_unknown(doc, {"version", "comment", "models"}, "model library");
  ModelLibrary lib;
  for (const auto& [name, body] : doc.at("models").items()) {
    const std::string where = "model '" + name + "'";
    if (!body.is_object() || !body.contains("layers")) {
      throw ParseError(where + ": expected an object with 'layers'");
    }
    reject_unknown(body, {"layers", "synthetic", "comment"}, where);
    Model model;
    model.synthetic = body.value("synthetic", false);
    for (const auto& layer : body.at("layers")) {
      model.layers.push_back(parse_layer(layer, where));
    }
    if (model.layers.empty()) throw ParseError(where + ": no layers");
    lib.models_[name] = std::move(model);
  }
  return lib;
}

ModelLibrary ModelLibrary::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read model library '" + path + "'");
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("model library '" + path + "': " + e.what());
  }
}

bool ModelLibrary::contains(const std::string& name) const {
  return models_.count(name) > 0;
}

std::vector<std::string> ModelLibrary::names() const {
  std::vector<std::string> out;
  for (const auto& [name, model] : models_) out.push_back(name);
  return out;
}

bool ModelLibrary::synthetic(const std::string& name) const {
  return contains(name) && models_.at(name).synthetic;
}

const std::vector<ModelLayer>& ModelLibrary::layers(
    const std::string& name) const {
  auto it = models_.find(name);
  if (it == models_.end()) {
    throw ValidationError("unknown model '" + name + "'");
  }
  return it->second.layers;
}

void ModelLibrary::merge(const ModelLibrary& other) {
  for (const auto& [name, model] : other.models_) models_[name] = model;
}

std::vector<KernelSpec> lower_model(const ModelLibrary& library,
                                    const std::string& model_name,
                                    std::int64_t batch) {
  if (batch < 1) throw ValidationError("lower_model: batch must be >= 1");
  const auto& layers = library.layers(model_name);
  std::vector<KernelSpec> chain;
  chain.reserve(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    KernelSpec spec;
    spec.kernel_id = static_cast<KernelId>(i);
    spec.dtype = layer.dtype;
    if (layer.conv) {
      spec.shape = im2col_gemm(*layer.conv, batch);
    } else {
      const auto& d = layer.shape.dims;
      switch (layer.shape.kind) {
        case OpKind::kGemm:
          spec.shape = OpShape::gemm(d[0], d[1] * batch, d[2]);
          break;
        case OpKind::kGemv:
          // A batch of matrix-vector products is a skinny GEMM.
          spec.shape = batch == 1 ? layer.shape
                                  : OpShape::gemm(d[0], batch, d[1]);
          break;
        case OpKind::kElementwise:
          spec.shape = OpShape::elementwise(d[0] * batch);
          break;
      }
    }
    if (i > 0) spec.deps.push_back(static_cast<KernelId>(i - 1));
    chain.push_back(std::move(spec));
  }
  return chain;
}

std::int64_t block_count(const OpShape& shape, const TuningConfig& tuning) {
  const auto [rows, cols] = shape.output_grid();
  const std::int64_t tm = std::min<std::int64_t>(tuning.tile_m, rows);
  const std::int64_t tn = std::min<std::int64_t>(tuning.tile_n, cols);
  return ((rows + tm - 1) / tm) * ((cols + tn - 1) / tn);
}

CostEstimate shape_cost(const OpShape& shape, DType dtype, std::int64_t batch,
                        const TuningConfig& tuning,
                        const DeviceProfile& profile, int sm_allocation) {
  tuning.validate();
  if (batch < 1) throw DomainError("shape_cost: batch must be >= 1");
  CostEstimate est;
  est.flops = batch * shape.flops();
  est.bytes = batch * shape.elements() * dtype_size(dtype);
  est.block_count = batch * block_count(shape, tuning);
  est.efficiency = partition_efficiency(profile, est.block_count,
                                        tuning.efficiency_factor,
                                        sm_allocation);
  const double bw_share =
      static_cast<double>(sm_allocation) / profile.sm_count;
  est.duration = roofline_duration(profile, est.flops, est.bytes,
                                   est.efficiency, compute_path(dtype),
                                   bw_share);
  return est;
}

CostEstimate kernel_cost(const KernelSpec& spec, const TuningConfig& tuning,
                         const DeviceProfile& profile) {
  return shape_cost(spec.shape, spec.dtype, 1, tuning, profile,
                    profile.sm_count);
}

}  // namespace oojit
