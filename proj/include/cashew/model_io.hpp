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
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cashew/graph.hpp"

namespace cashew {

// Model file layout, all integers little-endian:
//
//   offset 0   "CSHW"
//   offset 4   version byte (0x01)
//   offset 5   uint32 manifest length M
//   offset 9   M bytes of UTF-8 JSON manifest
//   ...        zero padding up to the next multiple of 16
//   blobs      one per weight tensor, each starting at a multiple of 16
//              relative to the blob section (and therefore to the file)
//
// The manifest holds the layer table, input shape, numeric mode, class
// labels, per-tensor QuantParams and requantization multipliers (reals as
// decimal strings with 17 significant digits), and for each blob its name,
// dtype, shape, offset and length. Blob payloads are float32, int8 or
// int32 (biases of int8 models).
inline constexpr char kModelMagic[4] = {'C', 'S', 'H', 'W'};
inline constexpr std::uint8_t kModelVersion = 0x01;
inline constexpr std::size_t kBlobAlignment = 16;

std::vector<std::uint8_t> serialize_model(const ModelGraph& graph);

// Throws LoadError with a kind that distinguishes bad magic, version
// mismatch, truncation, manifest/blob length disagreement and malformed
// manifests.
ModelGraph deserialize_model(std::span<const std::uint8_t> bytes);

void save_model(const ModelGraph& graph, const std::filesystem::path& path);
ModelGraph load_model(const std::filesystem::path& path);

// Size save_model would write.
std::size_t model_file_size(const ModelGraph& graph);

}  // namespace cashew
