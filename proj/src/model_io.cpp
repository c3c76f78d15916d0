/* Copyright 2026 The cashew-edge Authors. All Rights Reserved.

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
#include "cashew/model_io.hpp"

#include <bit>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <string>

#include "cashew/errors.hpp"
#include "json.hpp"

namespace cashew {

namespace {

using nlohmann::json;

std::string real_to_string(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double string_to_real(const json& j) {
  const std::string s = j.get<std::string>();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw LoadError(LoadErrorKind::kBadManifest, "malformed decimal '" + s + "'");
  }
  return v;
}

int string_to_int(const json& j) {
  const std::string s = j.get<std::string>();
  std::size_t used = 0;
  const int v = std::stoi(s, &used);
  if (used != s.size()) {
    throw LoadError(LoadErrorKind::kBadManifest, "malformed integer '" + s + "'");
  }
  return v;
}

json quant_to_json(const QuantParams& p) {
  return {{"scale", real_to_string(p.scale)}, {"zero_point", std::to_string(p.zero_point)}};
}

QuantParams quant_from_json(const json& j) {
  return {string_to_real(j.at("scale")), string_to_int(j.at("zero_point"))};
}

const char* padding_name(Padding p) { return p == Padding::kValid ? "valid" : "same"; }
const char* activation_name(Activation a) { return a == Activation::kRelu6 ? "relu6" : "none"; }

Padding parse_padding(const std::string& s) {
  if (s == "same") return Padding::kSame;
  if (s == "valid") return Padding::kValid;
  throw LoadError(LoadErrorKind::kBadManifest, "unknown padding '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  if (s == "none") return Activation::kNone;
  if (s == "relu6") return Activation::kRelu6;
  throw LoadError(LoadErrorKind::kBadManifest, "unknown activation '" + s + "'");
}

DType parse_dtype(const std::string& s) {
  if (s == "float32") return DType::kFloat32;
  if (s == "int8") return DType::kInt8;
  if (s == "int32") return DType::kInt32;
  throw LoadError(LoadErrorKind::kBadManifest, "unknown dtype '" + s + "'");
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void pad_to(std::vector<std::uint8_t>& out, std::size_t start, std::size_t alignment) {
  while ((out.size() - start) % alignment != 0) out.push_back(0);
}

void append_payload(std::vector<std::uint8_t>& out, const Tensor& t) {
  switch (t.dtype()) {
    case DType::kFloat32:
      for (float v : t.floats()) put_u32(out, std::bit_cast<std::uint32_t>(v));
      break;
    case DType::kInt8:
      for (std::int8_t v : t.int8s()) out.push_back(static_cast<std::uint8_t>(v));
      break;
    case DType::kInt32:
      for (std::int32_t v : t.int32s()) put_u32(out, static_cast<std::uint32_t>(v));
      break;
  }
}

Tensor read_payload(const std::uint8_t* p, DType dtype, Shape shape,
                    const std::optional<QuantParams>& qp) {
  const std::size_t n = shape.element_count();
  switch (dtype) {
    case DType::kFloat32: {
      std::vector<float> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = std::bit_cast<float>(get_u32(p + 4 * i));
      return Tensor(std::move(shape), std::move(v));
    }
    case DType::kInt8: {
      std::vector<std::int8_t> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::int8_t>(p[i]);
      return Tensor(std::move(shape), std::move(v), qp.value());
    }
    case DType::kInt32: {
      std::vector<std::int32_t> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::int32_t>(get_u32(p + 4 * i));
      return Tensor(std::move(shape), std::move(v), qp.value());
    }
  }
  throw LoadError(LoadErrorKind::kBadManifest, "unknown dtype");
}

json build_manifest(const ModelGraph& g, const LoweredGraph& lg) {
  json m;
  m["format"] = "cshw";
  m["mode"] = numeric_mode_name(g.mode);
  m["input_shape"] = g.input_shape.dims();
  m["classes"] = g.class_labels;
  m["metadata"] = g.metadata;
  json layers = json::array();
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    layers.push_back({{"name", l.name},
                      {"kind", layer_kind_name(l.kind)},
                      {"filters", l.filters},
                      {"kernel", l.kernel},
                      {"stride", l.stride},
                      {"padding", padding_name(l.padding)},
                      {"activation", activation_name(l.activation)},
                      {"expansion", l.expansion},
                      {"residual", l.residual},
                      {"rate", real_to_string(l.rate)},
                      {"output_shape", lg.tensors[lg.layer_outputs[i]].shape.dims()}});
  }
  m["layers"] = std::move(layers);
  json acts = json::object();
  for (const auto& [name, p] : g.activation_params) acts[name] = quant_to_json(p);
  m["activations"] = std::move(acts);
  json requant = json::object();
  for (const auto& [name, fp] : g.requant_multipliers) {
    requant[name] = {{"mantissa", std::to_string(fp.mantissa)},
                     {"exponent", std::to_string(fp.exponent)}};
  }
  m["requant"] = std::move(requant);
  return m;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const ModelGraph& graph) {
  const LoweredGraph lg = lower(graph);
  json manifest = build_manifest(graph, lg);

  std::vector<std::uint8_t> blobs;
  json blob_list = json::array();
  for (const auto& [name, t] : graph.weights) {
    pad_to(blobs, 0, kBlobAlignment);
    const std::size_t offset = blobs.size();
    append_payload(blobs, t);
    json entry = {{"name", name},
                  {"dtype", dtype_name(t.dtype())},
                  {"shape", t.shape().dims()},
                  {"offset", offset},
                  {"length", blobs.size() - offset}};
    if (t.qparams()) entry["quant"] = quant_to_json(*t.qparams());
    blob_list.push_back(std::move(entry));
  }
  manifest["blobs"] = std::move(blob_list);

  const std::string text = manifest.dump();
  std::vector<std::uint8_t> out(std::begin(kModelMagic), std::end(kModelMagic));
  out.push_back(kModelVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  pad_to(out, 0, kBlobAlignment);
  out.insert(out.end(), blobs.begin(), blobs.end());
  return out;
}

ModelGraph deserialize_model(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kHeader = 9;
  if (bytes.size() >= 4 && !std::equal(std::begin(kModelMagic), std::end(kModelMagic),
                                       bytes.begin(), [](char a, std::uint8_t b) {
                                         return static_cast<std::uint8_t>(a) == b;
                                       })) {
    throw LoadError(LoadErrorKind::kBadMagic, "bad magic: not a CSHW model file");
  }
  if (bytes.size() < kHeader) {
    throw LoadError(LoadErrorKind::kTruncated, "truncated model file header");
  }
  if (bytes[4] != kModelVersion) {
    throw LoadError(LoadErrorKind::kVersionMismatch,
                    "version mismatch: file has " + std::to_string(bytes[4]) +
                        ", reader supports " + std::to_string(kModelVersion));
  }
  const std::size_t manifest_len = get_u32(bytes.data() + 5);
  if (bytes.size() < kHeader + manifest_len) {
    throw LoadError(LoadErrorKind::kTruncated, "truncated manifest");
  }
  json m;
  try {
    m = json::parse(bytes.begin() + kHeader, bytes.begin() + kHeader + manifest_len);
  } catch (const json::exception& e) {
    throw LoadError(LoadErrorKind::kBadManifest, std::string("unreadable manifest: ") + e.what());
  }
  const std::size_t blob_base =
      (kHeader + manifest_len + kBlobAlignment - 1) / kBlobAlignment * kBlobAlignment;

  try {
    ModelGraph g;
    g.input_shape = Shape(m.at("input_shape").get<std::vector<int>>());
    const std::string mode = m.at("mode").get<std::string>();
    if (mode == "int8") g.mode = NumericMode::kInt8;
    else if (mode == "float32") g.mode = NumericMode::kFloat32;
    else throw LoadError(LoadErrorKind::kBadManifest, "unknown mode '" + mode + "'");
    g.class_labels = m.at("classes").get<std::vector<std::string>>();
    g.metadata = m.at("metadata").get<std::map<std::string, std::string>>();
    for (const auto& jl : m.at("layers")) {
      LayerSpec l;
      l.name = jl.at("name").get<std::string>();
      l.kind = parse_layer_kind(jl.at("kind").get<std::string>());
      l.filters = jl.at("filters").get<int>();
      l.kernel = jl.at("kernel").get<int>();
      l.stride = jl.at("stride").get<int>();
      l.padding = parse_padding(jl.at("padding").get<std::string>());
      l.activation = parse_activation(jl.at("activation").get<std::string>());
      l.expansion = jl.at("expansion").get<int>();
      l.residual = jl.at("residual").get<bool>();
      l.rate = string_to_real(jl.at("rate"));
      g.layers.push_back(std::move(l));
    }
    for (const auto& [name, jq] : m.at("activations").items()) {
      g.activation_params[name] = quant_from_json(jq);
    }
    for (const auto& [name, jr] : m.at("requant").items()) {
      g.requant_multipliers[name] = {string_to_int(jr.at("mantissa")),
                                     string_to_int(jr.at("exponent"))};
    }

    std::size_t blob_end = blob_base;
    for (const auto& jb : m.at("blobs")) {
      const std::string name = jb.at("name").get<std::string>();
      const DType dtype = parse_dtype(jb.at("dtype").get<std::string>());
      Shape shape(jb.at("shape").get<std::vector<int>>());
      const auto offset = jb.at("offset").get<std::size_t>();
      const auto length = jb.at("length").get<std::size_t>();
      if (offset % kBlobAlignment != 0) {
        throw LoadError(LoadErrorKind::kBadManifest, "blob '" + name + "' is misaligned");
      }
      if (length != shape.element_count() * dtype_size(dtype)) {
        throw LoadError(LoadErrorKind::kLengthMismatch,
                        "blob '" + name + "' length " + std::to_string(length) +
                            " disagrees with its shape " + shape.to_string());
      }
      if (blob_base + offset + length > bytes.size()) {
        throw LoadError(LoadErrorKind::kTruncated, "truncated blob '" + name + "'");
      }
      std::optional<QuantParams> qp;
      if (jb.contains("quant")) qp = quant_from_json(jb.at("quant"));
      if (dtype != DType::kFloat32 && !qp) {
        throw LoadError(LoadErrorKind::kBadManifest, "blob '" + name + "' lacks QuantParams");
      }
      g.weights.emplace(name, read_payload(bytes.data() + blob_base + offset, dtype,
                                           std::move(shape), qp));
      blob_end = std::max(blob_end, blob_base + offset + length);
    }
    if (bytes.size() != blob_end) {
      throw LoadError(LoadErrorKind::kLengthMismatch,
                      "file has " + std::to_string(bytes.size() - std::min(bytes.size(), blob_end)) +
                          " bytes beyond the declared blobs");
    }

    const LoweredGraph lg = lower(g);
    const auto& jlayers = m.at("layers");
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
      const auto declared = jlayers[i].at("output_shape").get<std::vector<int>>();
      if (declared != lg.tensors[lg.layer_outputs[i]].shape.dims()) {
        throw LoadError(LoadErrorKind::kBadManifest,
                        "layer '" + g.layers[i].name + "' output shape disagrees with manifest");
      }
    }
    return g;
  } catch (const LoadError&) {
    throw;
  } catch (const json::exception& e) {
    throw LoadError(LoadErrorKind::kBadManifest, std::string("bad manifest: ") + e.what());
  } catch (const Error& e) {
    throw LoadError(LoadErrorKind::kBadManifest, std::string("bad manifest: ") + e.what());
  } catch (const std::logic_error& e) {
    throw LoadError(LoadErrorKind::kBadManifest, std::string("bad manifest: ") + e.what());
  }
}

void save_model(const ModelGraph& graph, const std::filesystem::path& path) {
  const auto bytes = serialize_model(graph);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ModelGraph load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

std::size_t model_file_size(const ModelGraph& graph) { return serialize_model(graph).size(); }

}  // namespace cashew
