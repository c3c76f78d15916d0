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
#include <span>
#include <string>
#include <vector>

#include "cashew/dataset.hpp"
#include "cashew/graph.hpp"

namespace cashew {

// counts[true][predicted].
struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::int64_t>> counts;

  std::size_t classes() const { return counts.size(); }
  std::int64_t total() const;
  std::int64_t trace() const;
  // Row-normalized rates; rows without samples stay at zero.
  std::vector<std::vector<double>> row_rates() const;
};

// Class count is labels.size() when labels are given, else one past the
// largest index seen.
ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> truths,
                                 std::vector<std::string> labels = {});

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // False when the denominator was zero and the value was reported as 0.
  bool precision_defined = true;
  bool recall_defined = true;
  bool f1_defined = true;
  std::int64_t support = 0;
};

struct ClassificationMetrics {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
};

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm);

std::string format_classification_report(const ConfusionMatrix& cm,
                                          const ClassificationMetrics& metrics);

// Header "label\tf0\t...\tf{D-1}", then one row per sample with the class
// name and the pooled feature vector.
void export_features(const ModelGraph& graph, std::span<const LabeledImage> samples,
                     const std::vector<std::string>& class_labels,
                     const std::filesystem::path& path);

struct BenchReport {
  NumericMode mode = NumericMode::kFloat32;
  std::vector<double> latencies_ms;
  double median_ms = 0.0;
  double p90_ms = 0.0;  // nearest rank
  std::size_t model_file_bytes = 0;
  std::size_t arena_bytes = 0;
  std::vector<std::size_t> labels;  // predicted class per timed run
};

// Warmup runs are discarded; timed runs use the steady clock.
BenchReport benchmark(const ModelGraph& graph, const Tensor& input, int repetitions, int warmup);

double median(std::vector<double> values);
double nearest_rank_percentile(std::vector<double> values, double pct);

struct BudgetResult {
  bool flash_ok = false;
  bool ram_ok = false;
  double flash_margin_pct = 0.0;  // (budget - used) / budget * 100
  double ram_margin_pct = 0.0;
  bool pass() const { return flash_ok && ram_ok; }
};

BudgetResult budget_check(const BenchReport& report, std::int64_t flash_budget,
                          std::int64_t ram_budget);

std::string format_budget(const BenchReport& report, const BudgetResult& result,
                          std::int64_t flash_budget, std::int64_t ram_budget);

// One column of the device-performance table.
struct BenchColumn {
  std::string name;
  BenchReport report;
  std::optional<double> accuracy;
};

// Rows: inferencing time (median, p90), peak RAM, flash, accuracy.
std::string format_bench_table(std::span<const BenchColumn> columns);
std::string format_bench_tsv(std::span<const BenchColumn> columns);

}  // namespace cashew
