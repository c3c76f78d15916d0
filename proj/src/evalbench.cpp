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
#include "cashew/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cashew/arena.hpp"
#include "cashew/errors.hpp"
#include "cashew/executor.hpp"
#include "cashew/model_io.hpp"

namespace cashew {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad_right(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

std::string pad_left(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

std::string kilo(std::size_t bytes) { return fixed(static_cast<double>(bytes) / 1024.0, 1) + " K"; }

}  // namespace

std::int64_t ConfusionMatrix::total() const {
  std::int64_t n = 0;
  for (const auto& row : counts) {
    for (auto c : row) n += c;
  }
  return n;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t n = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) n += counts[i][i];
  return n;
}

std::vector<std::vector<double>> ConfusionMatrix::row_rates() const {
  std::vector<std::vector<double>> rates(classes(), std::vector<double>(classes(), 0.0));
  for (std::size_t t = 0; t < classes(); ++t) {
    std::int64_t row = 0;
    for (auto c : counts[t]) row += c;
    if (row == 0) continue;
    for (std::size_t p = 0; p < classes(); ++p) {
      rates[t][p] = static_cast<double>(counts[t][p]) / static_cast<double>(row);
    }
  }
  return rates;
}

ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> truths,
                                 std::vector<std::string> labels) {
  if (predictions.size() != truths.size()) {
    throw ContractError("predictions and truths differ in length");
  }
  if (predictions.empty()) throw ContractError("confusion matrix needs at least one sample");
  int classes = static_cast<int>(labels.size());
  if (labels.empty()) {
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      classes = std::max({classes, predictions[i] + 1, truths[i] + 1});
    }
    for (int c = 0; c < classes; ++c) labels.push_back("class" + std::to_string(c));
  }
  ConfusionMatrix cm;
  cm.labels = std::move(labels);
  cm.counts.assign(classes, std::vector<std::int64_t>(classes, 0));
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int p = predictions[i], t = truths[i];
    if (p < 0 || p >= classes || t < 0 || t >= classes) {
      throw ContractError("class index out of range at sample " + std::to_string(i));
    }
    ++cm.counts[t][p];
  }
  return cm;
}

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total <= 0) throw ContractError("confusion matrix is empty");
  ClassificationMetrics m;
  m.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    std::int64_t predicted = 0, actual = 0;
    for (std::size_t k = 0; k < cm.classes(); ++k) {
      predicted += cm.counts[k][c];
      actual += cm.counts[c][k];
    }
    const auto tp = static_cast<double>(cm.counts[c][c]);
    ClassMetrics cls;
    cls.support = actual;
    cls.precision_defined = predicted > 0;
    cls.recall_defined = actual > 0;
    cls.precision = predicted > 0 ? tp / static_cast<double>(predicted) : 0.0;
    cls.recall = actual > 0 ? tp / static_cast<double>(actual) : 0.0;
    const double denom = cls.precision + cls.recall;
    cls.f1_defined = cls.precision_defined && cls.recall_defined && denom > 0.0;
    cls.f1 = denom > 0.0 ? 2.0 * cls.precision * cls.recall / denom : 0.0;
    m.per_class.push_back(cls);
  }
  return m;
}

std::string format_classification_report(const ConfusionMatrix& cm,
                                          const ClassificationMetrics& metrics) {
  std::size_t w = 10;
  for (const auto& l : cm.labels) w = std::max(w, l.size() + 2);
  std::ostringstream os;
  os << "confusion matrix (rows = true, columns = predicted)\n";
  os << pad_right("", w);
  for (const auto& l : cm.labels) os << pad_left(l, w);
  os << '\n';
  const auto rates = cm.row_rates();
  for (std::size_t t = 0; t < cm.classes(); ++t) {
    os << pad_right(cm.labels[t], w);
    for (std::size_t p = 0; p < cm.classes(); ++p) {
      os << pad_left(std::to_string(cm.counts[t][p]) + " (" + fixed(100.0 * rates[t][p], 1) + "%)",
                     w);
    }
    os << '\n';
  }
  os << '\n' << pad_right("class", w) << pad_left("precision", 11) << pad_left("recall", 9)
     << pad_left("f1", 7) << pad_left("support", 9) << '\n';
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    const ClassMetrics& k = metrics.per_class[c];
    const auto cell = [](double v, bool defined, int width) {
      return pad_left(fixed(v, 4) + (defined ? "" : "*"), width);
    };
    os << pad_right(cm.labels[c], w) << cell(k.precision, k.precision_defined, 11)
       << cell(k.recall, k.recall_defined, 9) << cell(k.f1, k.f1_defined, 7)
       << pad_left(std::to_string(k.support), 9) << '\n';
  }
  os << "\naccuracy " << fixed(metrics.accuracy, 4) << " (" << cm.trace() << "/" << cm.total()
     << ")\n";
  bool any_undefined = false;
  for (const auto& k : metrics.per_class) {
    any_undefined |= !(k.precision_defined && k.recall_defined && k.f1_defined);
  }
  if (any_undefined) os << "* undefined (zero denominator), reported as 0\n";
  return os.str();
}

void export_features(const ModelGraph& graph, std::span<const LabeledImage> samples,
                     const std::vector<std::string>& class_labels,
                     const std::filesystem::path& path) {
  Executor executor(graph);
  std::ostringstream os;
  bool header = false;
  char buf[32];
  for (const LabeledImage& s : samples) {
    const std::vector<float> f = executor.features(s.image);
    if (!header) {
      os << "label";
      for (std::size_t i = 0; i < f.size(); ++i) os << "\tf" << i;
      os << '\n';
      header = true;
    }
    if (s.label >= 0 && static_cast<std::size_t>(s.label) < class_labels.size()) {
      os << class_labels[s.label];
    } else {
      os << s.label;
    }
    for (float v : f) {
      std::snprintf(buf, sizeof buf, "\t%.9g", static_cast<double>(v));
      os << buf;
    }
    os << '\n';
  }
  if (!header) {
    // No samples: still emit a header with the feature width.
    const LoweredGraph lg = lower(graph);
    std::size_t width = 0;
    for (const Op& op : lg.ops) {
      if (op.kind == OpKind::kAvgPool) width = lg.tensors[op.output].shape.element_count();
    }
    os << "label";
    for (std::size_t i = 0; i < width; ++i) os << "\tf" << i;
    os << '\n';
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << os.str();
  if (!out) throw IoError("write failed: " + path.string());
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

double nearest_rank_percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw ContractError("percentile of an empty list");
  if (!(pct > 0.0 && pct <= 100.0)) throw ContractError("percentile must be in (0, 100]");
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

BenchReport benchmark(const ModelGraph& graph, const Tensor& input, int repetitions, int warmup) {
  if (repetitions < 1) throw ContractError("repetitions must be >= 1");
  if (warmup < 0) throw ContractError("warmup must be >= 0");
  Executor executor(graph);
  BenchReport report;
  report.mode = graph.mode;
  report.arena_bytes = executor.plan().total_bytes;
  report.model_file_bytes = model_file_size(graph);
  for (int i = 0; i < warmup; ++i) executor.run(input);
  using Clock = std::chrono::steady_clock;
  for (int i = 0; i < repetitions; ++i) {
    const auto t0 = Clock::now();
    const std::vector<float> p = executor.run(input);
    const auto t1 = Clock::now();
    report.latencies_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    report.labels.push_back(argmax(p));
  }
  report.median_ms = median(report.latencies_ms);
  report.p90_ms = nearest_rank_percentile(report.latencies_ms, 90.0);
  return report;
}

BudgetResult budget_check(const BenchReport& report, std::int64_t flash_budget,
                          std::int64_t ram_budget) {
  if (flash_budget <= 0 || ram_budget <= 0) throw ContractError("budgets must be positive");
  BudgetResult r;
  const auto flash = static_cast<double>(report.model_file_bytes);
  const auto ram = static_cast<double>(report.arena_bytes);
  r.flash_ok = flash <= static_cast<double>(flash_budget);
  r.ram_ok = ram <= static_cast<double>(ram_budget);
  r.flash_margin_pct = (static_cast<double>(flash_budget) - flash) / flash_budget * 100.0;
  r.ram_margin_pct = (static_cast<double>(ram_budget) - ram) / ram_budget * 100.0;
  return r;
}

std::string format_budget(const BenchReport& report, const BudgetResult& result,
                          std::int64_t flash_budget, std::int64_t ram_budget) {
  std::ostringstream os;
  os << "mode   " << numeric_mode_name(report.mode) << '\n';
  os << "flash  " << report.model_file_bytes << " / " << flash_budget << " bytes  margin "
     << fixed(result.flash_margin_pct, 2) << "%  " << (result.flash_ok ? "PASS" : "FAIL") << '\n';
  os << "ram    " << report.arena_bytes << " / " << ram_budget << " bytes  margin "
     << fixed(result.ram_margin_pct, 2) << "%  " << (result.ram_ok ? "PASS" : "FAIL") << '\n';
  os << "budget " << (result.pass() ? "PASS" : "FAIL") << '\n';
  return os.str();
}

std::string format_bench_table(std::span<const BenchColumn> columns) {
  constexpr std::size_t kLabel = 26, kCol = 16;
  std::ostringstream os;
  os << pad_right("Metric", kLabel);
  for (const auto& c : columns) os << pad_left(c.name, kCol);
  os << '\n' << std::string(kLabel + kCol * columns.size(), '-') << '\n';
  const auto row = [&](const std::string& label, auto cell) {
    os << pad_right(label, kLabel);
    for (const auto& c : columns) os << pad_left(cell(c), kCol);
    os << '\n';
  };
  row("Inferencing Time (median)", [](const BenchColumn& c) { return fixed(c.report.median_ms, 3) + " ms"; });
  row("Inferencing Time (p90)", [](const BenchColumn& c) { return fixed(c.report.p90_ms, 3) + " ms"; });
  row("Peak RAM usage", [](const BenchColumn& c) { return kilo(c.report.arena_bytes); });
  row("Flash Usage", [](const BenchColumn& c) { return kilo(c.report.model_file_bytes); });
  row("Accuracy", [](const BenchColumn& c) {
    return c.accuracy ? fixed(100.0 * *c.accuracy, 2) + "%" : std::string("n/a");
  });
  row("Timed runs", [](const BenchColumn& c) { return std::to_string(c.report.latencies_ms.size()); });
  return os.str();
}

std::string format_bench_tsv(std::span<const BenchColumn> columns) {
  std::ostringstream os;
  os << "model\tmode\truns\tmedian_ms\tp90_ms\tarena_bytes\tfile_bytes\taccuracy\n";
  char buf[64];
  for (const auto& c : columns) {
    os << c.name << '\t' << numeric_mode_name(c.report.mode) << '\t'
       << c.report.latencies_ms.size();
    std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f", c.report.median_ms, c.report.p90_ms);
    os << buf << '\t' << c.report.arena_bytes << '\t' << c.report.model_file_bytes << '\t';
    if (c.accuracy) {
      std::snprintf(buf, sizeof buf, "%.6f", *c.accuracy);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace cashew
