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
#include "cashew/spray_planner.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "cashew/errors.hpp"

namespace cashew {

namespace {

// Absorbs projection round-off so points meant to sit on a cell boundary
// land on it.
constexpr double kBoundaryEps = 1e-9;

std::string real(double v, const char* fmt = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

double parse_field(const std::string& s, int line, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError("detections line " + std::to_string(line) + ": bad " + what + " '" + s + "'");
  }
}

}  // namespace

const char* detection_label_name(DetectionLabel label) {
  return label == DetectionLabel::kAnthracnose ? "anthracnose" : "healthy";
}

DetectionLabel parse_detection_label(const std::string& name) {
  if (name == "anthracnose") return DetectionLabel::kAnthracnose;
  if (name == "healthy") return DetectionLabel::kHealthy;
  throw ContractError("unknown detection label '" + name + "'");
}

double FieldGrid::meters_per_degree_lon() const {
  return kMetersPerDegreeLonEquator * std::cos(origin.latitude * std::numbers::pi / 180.0);
}

FieldGrid grid_from_bounds(GeoPoint sw, GeoPoint ne, double cell_size_m) {
  if (!(cell_size_m > 0.0) || !std::isfinite(cell_size_m)) {
    throw ContractError("cell size must be positive");
  }
  if (!(ne.latitude > sw.latitude) || !(ne.longitude > sw.longitude)) {
    throw ContractError("north-east corner must lie strictly north-east of the south-west corner");
  }
  FieldGrid g;
  g.origin = sw;
  g.cell_size_m = cell_size_m;
  const double east = (ne.longitude - sw.longitude) * g.meters_per_degree_lon();
  const double north = (ne.latitude - sw.latitude) * kMetersPerDegreeLat;
  g.cols = std::max(1, static_cast<int>(std::ceil(east / cell_size_m - kBoundaryEps)));
  g.rows = std::max(1, static_cast<int>(std::ceil(north / cell_size_m - kBoundaryEps)));
  return g;
}

SeverityMap aggregate(std::span<const DetectionRecord> records, const FieldGrid& grid) {
  if (grid.rows < 1 || grid.cols < 1 || !(grid.cell_size_m > 0.0)) {
    throw ContractError("grid must have positive size");
  }
  SeverityMap m;
  m.grid = grid;
  const std::size_t n = grid.cell_count();
  m.total.assign(n, 0);
  m.diseased.assign(n, 0);
  m.records = static_cast<std::int64_t>(records.size());
  const double mlon = grid.meters_per_degree_lon();
  for (const DetectionRecord& r : records) {
    if (!std::isfinite(r.latitude) || !std::isfinite(r.longitude)) {
      ++m.out_of_bounds;
      continue;
    }
    const double east = (r.longitude - grid.origin.longitude) * mlon;
    const double north = (r.latitude - grid.origin.latitude) * kMetersPerDegreeLat;
    const double col = std::floor(east / grid.cell_size_m + kBoundaryEps);
    const double row = std::floor(north / grid.cell_size_m + kBoundaryEps);
    if (col < 0 || row < 0 || col >= grid.cols || row >= grid.rows) {
      ++m.out_of_bounds;
      continue;
    }
    const std::size_t idx = static_cast<std::size_t>(row) * grid.cols + static_cast<std::size_t>(col);
    ++m.total[idx];
    if (r.label == DetectionLabel::kAnthracnose) ++m.diseased[idx];
  }
  m.severity.assign(n, 0.0);
  m.sampled.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (m.total[i] == 0) continue;
    m.sampled[i] = true;
    m.severity[i] = static_cast<double>(m.diseased[i]) / static_cast<double>(m.total[i]);
  }
  return m;
}

void validate(const SprayPolicy& p) {
  if (!(p.threshold >= 0.0 && p.threshold <= 1.0)) {
    throw ContractError("threshold must be in [0, 1]");
  }
  if (!(p.base_rate >= 0.0)) throw ContractError("base_rate must be nonnegative");
  if (!(p.base_rate <= p.max_rate)) throw ContractError("base_rate must not exceed max_rate");
}

double dosage_for(double severity, const SprayPolicy& p) {
  if (severity < p.threshold) return 0.0;
  if (p.threshold >= 1.0) return p.max_rate;
  const double t = std::min((severity - p.threshold) / (1.0 - p.threshold), 1.0);
  return std::min(p.base_rate + (p.max_rate - p.base_rate) * t, p.max_rate);
}

SprayPlan plan_spray(const SeverityMap& map, const SprayPolicy& policy) {
  validate(policy);
  SprayPlan plan;
  plan.grid = map.grid;
  plan.policy = policy;
  plan.severity = map.severity;
  plan.sampled = map.sampled;
  plan.dosage.assign(map.severity.size(), 0.0);
  for (std::size_t i = 0; i < map.severity.size(); ++i) {
    if (map.sampled[i]) plan.dosage[i] = dosage_for(map.severity[i], policy);
  }
  return plan;
}

SavingsReport compare_uniform(const SprayPlan& plan, double uniform_rate) {
  if (!(uniform_rate > 0.0)) throw ContractError("uniform rate must be positive");
  SavingsReport r;
  const double cell_ha = plan.grid.cell_area_ha();
  r.area_ha = cell_ha * static_cast<double>(plan.dosage.size());
  r.uniform_liters = uniform_rate * r.area_ha;
  for (double d : plan.dosage) r.variable_liters += d * cell_ha;
  r.reduction = 1.0 - r.variable_liters / r.uniform_liters;
  return r;
}

std::vector<DetectionRecord> parse_detections(const std::string& text) {
  std::vector<DetectionRecord> out;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1) {
      f.push_back(line.substr(start, tab - start));
    }
    f.push_back(line.substr(start));
    if (f.size() != 4) {
      throw IoError("detections line " + std::to_string(line_no) +
                    ": expected latitude, longitude, label, confidence");
    }
    DetectionRecord r;
    r.latitude = parse_field(f[0], line_no, "latitude");
    r.longitude = parse_field(f[1], line_no, "longitude");
    r.label = parse_detection_label(f[2]);
    r.confidence = parse_field(f[3], line_no, "confidence");
    if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) {
      throw ContractError("detections line " + std::to_string(line_no) +
                          ": confidence outside [0, 1]");
    }
    out.push_back(r);
  }
  return out;
}

std::vector<DetectionRecord> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read detections file " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_detections(os.str());
}

std::string format_detections(std::span<const DetectionRecord> records) {
  std::ostringstream os;
  os << "#latitude\tlongitude\tlabel\tconfidence\n";
  for (const auto& r : records) {
    os << real(r.latitude, "%.12f") << '\t' << real(r.longitude, "%.12f") << '\t'
       << detection_label_name(r.label) << '\t' << real(r.confidence) << '\n';
  }
  return os.str();
}

std::string format_spray_plan(const SprayPlan& plan) {
  std::ostringstream os;
  os << "origin_lat\t" << real(plan.grid.origin.latitude, "%.12f") << '\n'
     << "origin_lon\t" << real(plan.grid.origin.longitude, "%.12f") << '\n'
     << "cell_size_m\t" << real(plan.grid.cell_size_m) << '\n'
     << "rows\t" << plan.grid.rows << '\n'
     << "cols\t" << plan.grid.cols << '\n'
     << "threshold\t" << real(plan.policy.threshold) << '\n'
     << "base_rate_l_per_ha\t" << real(plan.policy.base_rate) << '\n'
     << "max_rate_l_per_ha\t" << real(plan.policy.max_rate) << '\n'
     << "row\tcol\tseverity\tsampled\tdosage_l_per_ha\n";
  for (int r = 0; r < plan.grid.rows; ++r) {
    for (int c = 0; c < plan.grid.cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * plan.grid.cols + c;
      os << r << '\t' << c << '\t' << real(plan.severity[i]) << '\t'
         << (plan.sampled[i] ? 1 : 0) << '\t' << real(plan.dosage[i]) << '\n';
    }
  }
  return os.str();
}

std::string format_savings(const SavingsReport& report, const SeverityMap& map) {
  std::int64_t sampled = 0;
  for (bool s : map.sampled) sampled += s;
  std::ostringstream os;
  os << "records            " << map.records << '\n'
     << "out_of_bounds      " << map.out_of_bounds << '\n'
     << "cells_sampled      " << sampled << " / " << map.grid.cell_count() << '\n'
     << "area_ha            " << real(report.area_ha, "%.4f") << '\n'
     << "uniform_liters     " << real(report.uniform_liters, "%.4f") << '\n'
     << "variable_liters    " << real(report.variable_liters, "%.4f") << '\n'
     << "reduction_pct      " << real(100.0 * report.reduction, "%.2f") << '\n';
  return os.str();
}

}  // namespace cashew
