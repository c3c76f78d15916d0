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
#include <string>
#include <vector>

namespace cashew {

struct GeoPoint {
  double latitude = 0.0;
  double longitude = 0.0;
};

enum class DetectionLabel { kHealthy, kAnthracnose };

const char* detection_label_name(DetectionLabel label);
DetectionLabel parse_detection_label(const std::string& name);

struct DetectionRecord {
  double latitude = 0.0;
  double longitude = 0.0;
  DetectionLabel label = DetectionLabel::kHealthy;
  double confidence = 1.0;  // ingested, not used by severity
};

inline constexpr double kMetersPerDegreeLat = 110540.0;
inline constexpr double kMetersPerDegreeLonEquator = 111320.0;

// Row 0 is the southern edge, column 0 the western edge. Cells are
// half-open: [k*cell, (k+1)*cell) along each axis.
struct FieldGrid {
  GeoPoint origin;  // south-west corner
  double cell_size_m = 10.0;
  int rows = 1;
  int cols = 1;

  std::size_t cell_count() const { return static_cast<std::size_t>(rows) * cols; }
  double cell_area_ha() const { return cell_size_m * cell_size_m / 10000.0; }
  double meters_per_degree_lon() const;
};

// Local equirectangular projection about the south-west corner; rows and
// cols are the ceiling of extent / cell size.
FieldGrid grid_from_bounds(GeoPoint south_west, GeoPoint north_east, double cell_size_m);

struct SeverityMap {
  FieldGrid grid;
  std::vector<std::int64_t> total;     // row-major
  std::vector<std::int64_t> diseased;  // row-major
  std::vector<double> severity;        // diseased / total, 0 if unsampled
  std::vector<bool> sampled;
  std::int64_t out_of_bounds = 0;
  std::int64_t records = 0;
};

SeverityMap aggregate(std::span<const DetectionRecord> records, const FieldGrid& grid);

struct SprayPolicy {
  double threshold = 0.2;
  double base_rate = 2.0;  // L/ha at the threshold
  double max_rate = 6.0;   // L/ha at severity 1
};

void validate(const SprayPolicy& policy);

// Dosage for one sampled cell.
double dosage_for(double severity, const SprayPolicy& policy);

struct SprayPlan {
  FieldGrid grid;
  SprayPolicy policy;
  std::vector<double> severity;
  std::vector<bool> sampled;
  std::vector<double> dosage;  // L/ha
};

SprayPlan plan_spray(const SeverityMap& map, const SprayPolicy& policy);

struct SavingsReport {
  double area_ha = 0.0;
  double uniform_liters = 0.0;
  double variable_liters = 0.0;
  double reduction = 0.0;  // 1 - variable / uniform
};

SavingsReport compare_uniform(const SprayPlan& plan, double uniform_rate);

// Detection file: "latitude\tlongitude\tlabel\tconfidence" per line; lines
// starting with '#' are comments.
std::vector<DetectionRecord> parse_detections(const std::string& text);
std::vector<DetectionRecord> read_detections(const std::filesystem::path& path);
std::string format_detections(std::span<const DetectionRecord> records);

// Grid header, policy, then "row\tcol\tseverity\tsampled\tdosage" per cell
// in row-major order.
std::string format_spray_plan(const SprayPlan& plan);
std::string format_savings(const SavingsReport& report, const SeverityMap& map);

}  // namespace cashew
