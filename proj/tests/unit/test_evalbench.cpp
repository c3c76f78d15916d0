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
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cashew/errors.hpp"
#include "cashew/arena.hpp"
#include "cashew/evalbench.hpp"
#include "cashew/model_io.hpp"
#include "cashew/random.hpp"
#include "fixtures.hpp"

using namespace cashew;

namespace {

ConfusionMatrix from_counts(std::vector<std::vector<std::int64_t>> counts) {
  std::vector<int> preds, truths;
  for (std::size_t t = 0; t < counts.size(); ++t)
    for (std::size_t p = 0; p < counts.size(); ++p)
      for (std::int64_t k = 0; k < counts[t][p]; ++k) {
        truths.push_back(static_cast<int>(t));
        preds.push_back(static_cast<int>(p));
      }
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < counts.size(); ++i) labels.push_back("c" + std::to_string(i));
  return confusion_matrix(preds, truths, labels);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("confusion matrix hand counts") {
  // A = 0, H = 1; preds (A, A, H), truths (A, H, H).
  const ConfusionMatrix cm = confusion_matrix(std::vector<int>{0, 0, 1}, std::vector<int>{0, 1, 1},
                                              {"A", "H"});
  CHECK(cm.counts == std::vector<std::vector<std::int64_t>>{{1, 0}, {1, 1}});
  CHECK(cm.total() == 3);
  CHECK(cm.trace() == 2);
  const ConfusionMatrix one = confusion_matrix(std::vector<int>{0}, std::vector<int>{0});
  CHECK(one.total() == 1);
  CHECK(one.counts[0][0] == 1);
}

TEST_CASE("confusion matrix contracts") {
  CHECK_THROWS_AS(confusion_matrix(std::vector<int>{0}, std::vector<int>{0, 1}), ContractError);
  CHECK_THROWS_AS(confusion_matrix(std::vector<int>{}, std::vector<int>{}), ContractError);
}

TEST_CASE("perfect two-class predictions give 100% rows and F1 1.00") {
  const ConfusionMatrix cm = from_counts({{20, 0}, {0, 20}});
  const auto rates = cm.row_rates();
  CHECK(rates[0][0] == 1.0);
  CHECK(rates[1][1] == 1.0);
  CHECK(rates[0][1] == 0.0);
  const ClassificationMetrics m = classification_metrics(cm);
  CHECK(m.per_class[0].f1 == 1.0);
  CHECK(m.per_class[1].f1 == 1.0);
  CHECK(m.accuracy == 1.0);
}

TEST_CASE("metrics on [[95, 5], [0, 100]]") {
  const ClassificationMetrics m = classification_metrics(from_counts({{95, 5}, {0, 100}}));
  CHECK(m.per_class[0].recall == doctest::Approx(0.95));
  CHECK(m.per_class[0].precision == doctest::Approx(1.0));
  CHECK(m.per_class[0].f1 == doctest::Approx(2 * 0.95 / 1.95));
  CHECK(m.per_class[0].f1 == doctest::Approx(0.9744).epsilon(1e-4));
  CHECK(m.per_class[1].precision == doctest::Approx(100.0 / 105.0));
  CHECK(m.accuracy == doctest::Approx(195.0 / 200.0));
}

TEST_CASE("class absent from the truths is flagged") {
  const ConfusionMatrix cm =
      confusion_matrix(std::vector<int>{0, 1, 0}, std::vector<int>{0, 0, 0}, {"A", "H"});
  const ClassificationMetrics m = classification_metrics(cm);
  CHECK_FALSE(m.per_class[1].recall_defined);
  CHECK(m.per_class[1].recall == 0.0);
  CHECK(m.per_class[1].support == 0);
  const std::string text = format_classification_report(cm, m);
  CHECK(text.find('*') != std::string::npos);
}

TEST_CASE("property: totals, accuracy and F1 on random matrices") {
  Rng rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(4));
    const int n = 1 + static_cast<int>(rng.below(200));
    std::vector<int> p(n), t(n);
    for (int i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng.below(k));
      t[i] = static_cast<int>(rng.below(k));
    }
    std::vector<std::string> labels(k);
    for (int i = 0; i < k; ++i) labels[i] = std::to_string(i);
    const ConfusionMatrix cm = confusion_matrix(p, t, labels);
    CHECK(cm.total() == n);
    const ClassificationMetrics m = classification_metrics(cm);
    CHECK(m.accuracy == doctest::Approx(static_cast<double>(cm.trace()) / n));
    for (const auto& c : m.per_class) {
      const double hm = c.precision + c.recall > 0
                            ? 2 * c.precision * c.recall / (c.precision + c.recall)
                            : 0.0;
      CHECK(c.f1 == doctest::Approx(hm));
      CHECK((c.f1 == 1.0) == (c.precision == 1.0 && c.recall == 1.0));
    }
  }
}

TEST_CASE("feature export rows, columns and byte determinism") {
  const auto& t = fixture::trained();
  const std::vector<LabeledImage> some(t.test.begin(), t.test.begin() + 6);
  const auto dir = std::filesystem::temp_directory_path();
  export_features(t.float_model, some, t.float_model.class_labels, dir / "cashew_f1.tsv");
  export_features(t.float_model, some, t.float_model.class_labels, dir / "cashew_f2.tsv");
  const std::string a = slurp(dir / "cashew_f1.tsv");
  CHECK(a == slurp(dir / "cashew_f2.tsv"));
  std::istringstream lines(a);
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) {
    CHECK(std::count(line.begin(), line.end(), '\t') == 1280);
    ++rows;
  }
  CHECK(rows == 7);
  CHECK_THROWS_AS(export_features(t.float_model, some, t.float_model.class_labels,
                                  "/nonexistent/dir/f.tsv"),
                  IoError);
  std::filesystem::remove(dir / "cashew_f1.tsv");
  std::filesystem::remove(dir / "cashew_f2.tsv");
}

TEST_CASE("benchmark report fields") {
  const auto& t = fixture::trained();
  CHECK_THROWS_AS(benchmark(t.int8_model, t.test[0].image, 0, 0), ContractError);
  const BenchReport r = benchmark(t.int8_model, t.test[0].image, 9, 1);
  CHECK(r.latencies_ms.size() == 9);
  CHECK(r.median_ms <= r.p90_ms);
  CHECK(r.mode == NumericMode::kInt8);
  CHECK(r.arena_bytes == plan_arena(t.int8_model).total_bytes);
  CHECK(r.model_file_bytes == model_file_size(t.int8_model));
  for (std::size_t l : r.labels) CHECK(l == r.labels.front());
  const BenchReport f = benchmark(t.float_model, t.test[0].image, 3, 0);
  CHECK(r.arena_bytes <= 0.45 * static_cast<double>(f.arena_bytes));
  const std::vector<BenchColumn> cols = {{"float32", f, 0.95}, {"int8", r, std::nullopt}};
  const std::string table = format_bench_table(cols);
  for (const char* row : {"Inferencing Time (median)", "Peak RAM usage", "Flash Usage", "Accuracy"})
    CHECK(table.find(row) != std::string::npos);
  CHECK(table.find("n/a") != std::string::npos);
  CHECK(format_bench_tsv(cols).find("int8\tint8\t9\t") != std::string::npos);
}

TEST_CASE("median and nearest-rank percentile") {
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK(nearest_rank_percentile({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 90) == 9);
  CHECK(nearest_rank_percentile({5}, 90) == 5);
}

TEST_CASE("budget checks are inclusive with signed margins") {
  BenchReport r;
  r.model_file_bytes = 317133;  // 309.7 K
  r.arena_bytes = 1000;
  const BudgetResult ok = budget_check(r, 597606, 1000);  // 583.6 K flash
  CHECK(ok.flash_ok);
  CHECK(ok.ram_ok);
  CHECK(ok.ram_margin_pct == 0.0);
  CHECK(ok.pass());
  const BudgetResult over = budget_check(r, 300000, 2000);
  CHECK_FALSE(over.flash_ok);
  CHECK(over.flash_margin_pct < 0.0);
  CHECK_FALSE(over.pass());
  CHECK(format_budget(r, over, 300000, 2000).find("budget FAIL") != std::string::npos);
}
