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
#include <optional>
#include <string>
#include <vector>

#include "cashew/tensor.hpp"

namespace cashew {

// 8-bit RGB raster, row-major, interleaved.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// Binary PPM (P6, maxval 255).
void write_ppm(const RgbImage& image, const std::filesystem::path& path);
RgbImage read_ppm(const std::filesystem::path& path);

// 1 x H x W x 3 float tensor with pixels mapped to [-1, 1] as x / 127.5 - 1.
Tensor image_to_tensor(const RgbImage& image);

struct LabeledImage {
  Tensor image;
  int label = 0;
  std::string path;
};

// Optional geotag attached to a survey image.
struct GeoTag {
  double latitude = 0.0;
  double longitude = 0.0;
};

// One line of a dataset manifest: "<relative path>\t<label>[\t<lat>\t<lon>]".
struct ManifestEntry {
  std::string path;
  std::string label;
  std::optional<GeoTag> geotag;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path);

struct Dataset {
  std::vector<std::string> class_labels;  // sorted; label index = position
  std::vector<LabeledImage> samples;
  std::vector<std::optional<GeoTag>> geotags;  // parallel to samples
};

// Loads every image listed in `manifest` (paths relative to its
// directory). Class indices follow `class_labels` when given, otherwise
// the sorted set of labels in the manifest.
Dataset load_dataset(const std::filesystem::path& manifest,
                     const std::vector<std::string>& class_labels = {});

// Parameters of the synthetic leaf-image generator.
struct SynthSpec {
  int per_class = 50;
  int image_size = 96;
  int min_lesions = 4;
  int max_lesions = 9;
  double min_lesion_radius = 6.0;  // pixels
  double max_lesion_radius = 14.0;
  std::uint64_t seed = 0;
  // When set, every image gets a geotag inside this field box, and diseased
  // images cluster around a few hotspots.
  std::optional<GeoTag> field_sw;
  std::optional<GeoTag> field_ne;
};

inline const std::vector<std::string>& synth_class_labels() {
  static const std::vector<std::string> labels = {"anthracnose", "healthy"};
  return labels;
}

// Green leaf texture; anthracnose images additionally carry dark brown
// elliptical lesions. Fully determined by the spec.
RgbImage synth_leaf(bool diseased, const SynthSpec& spec, std::uint64_t index);

// Writes <out_dir>/<label>/<label>_NNNN.ppm for both classes plus
// <out_dir>/manifest.tsv, and returns the manifest entries.
std::vector<ManifestEntry> gen_synth(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace cashew
