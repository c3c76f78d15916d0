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

#include <iosfwd>
#include <string>
#include <vector>

namespace cashew {

// Fixed artifact names inside --workdir.
namespace files {
inline constexpr const char* kTrainManifest = "data/train/manifest.tsv";
inline constexpr const char* kTestManifest = "data/test/manifest.tsv";
inline constexpr const char* kFloatModel = "model_float.cshw";
inline constexpr const char* kInt8Model = "model_int8.cshw";
inline constexpr const char* kCalibration = "calibration.tsv";
inline constexpr const char* kTrainReport = "train_report.tsv";
inline constexpr const char* kAgreement = "eval_agreement.txt";
inline constexpr const char* kBenchText = "bench.txt";
inline constexpr const char* kBenchTsv = "bench.tsv";
inline constexpr const char* kBudget = "budget.txt";
inline constexpr const char* kFeatures = "features.tsv";
inline constexpr const char* kDetections = "detections.tsv";
inline constexpr const char* kSprayPlan = "spray_plan.txt";
inline constexpr const char* kSpraySummary = "spray_summary.txt";
}  // namespace files

// Study-area south-west corner used by the synthetic field.
inline constexpr double kFieldOriginLat = 11.558785519004267;
inline constexpr double kFieldOriginLon = 79.40239239904223;

// Exit codes: 0 success, 1 module failure, 2 usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace cashew
