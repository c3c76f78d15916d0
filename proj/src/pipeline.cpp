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
#include "cashew/pipeline.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>

#include "cashew/arena.hpp"
#include "cashew/dataset.hpp"
#include "cashew/errors.hpp"
#include "cashew/evalbench.hpp"
#include "cashew/executor.hpp"
#include "cashew/graph.hpp"
#include "cashew/head_trainer.hpp"
#include "cashew/model_io.hpp"
#include "cashew/quantizer.hpp"
#include "cashew/random.hpp"
#include "cashew/spray_planner.hpp"

namespace cashew {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string workdir = ".";
  std::uint64_t seed = 0;

  // gen-synth
  int per_class = 100;
  int test_per_class = 100;
  int image_size = 96;
  double field_size_m = 142.0;  // about 5 acres, square

  // train-head
  double width_mult = 0.35;
  int classes = 2;
  int steps = 300;
  double lr_max = 0.05;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
  double dropout = 0.1;
  int batch_size = 32;

  // calibrate / eval / bench
  std::string split = "train";
  std::string eval_split = "test";
  int limit = 0;
  std::string model = "both";
  std::string infer_model = "float";
  std::string image;
  int reps = 30;
  int warmup = 3;

  // budget
  std::int64_t flash_budget = 597606;   // 583.6 KiB
  std::int64_t ram_budget = 1677722;    // 1.6 MiB
  std::string budget_model = "int8";

  // plan-spray
  std::string detections;
  double cell_size = 10.0;
  double threshold = 0.2;
  double base_rate = 2.0;
  double max_rate = 6.0;
  double uniform_rate = 0.0;  // 0: use max_rate
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

fs::path in_work(const Options& o, const char* name) { return fs::path(o.workdir) / name; }

ModelGraph load_required(const Options& o, const char* name, const char* hint) {
  const fs::path p = in_work(o, name);
  if (!fs::exists(p)) throw IoError(std::string("missing ") + name + " (run " + hint + " first)");
  return load_model(p);
}

Dataset load_split(const Options& o, const std::string& split,
                   const std::vector<std::string>& labels) {
  const char* manifest = nullptr;
  if (split == "train") manifest = files::kTrainManifest;
  else if (split == "test") manifest = files::kTestManifest;
  else throw ContractError("split must be 'train' or 'test', got '" + split + "'");
  const fs::path p = in_work(o, manifest);
  if (!fs::exists(p)) throw IoError("missing " + p.string() + " (run gen-synth first)");
  return load_dataset(p, labels);
}

std::vector<Tensor> images_of(const Dataset& d, int limit = 0) {
  std::vector<Tensor> v;
  for (const auto& s : d.samples) {
    if (limit > 0 && static_cast<int>(v.size()) >= limit) break;
    v.push_back(s.image);
  }
  return v;
}

GeoPoint field_ne(double size_m) {
  const double lat = kFieldOriginLat + size_m / kMetersPerDegreeLat;
  const double lon =
      kFieldOriginLon +
      size_m / (kMetersPerDegreeLonEquator * std::cos(kFieldOriginLat * std::numbers::pi / 180.0));
  return {lat, lon};
}

std::vector<std::string> model_modes(const std::string& which) {
  if (which == "both") return {"float", "int8"};
  if (which == "float" || which == "int8") return {which};
  throw ContractError("model must be float, int8 or both");
}

const char* model_file(const std::string& mode) {
  return mode == "int8" ? files::kInt8Model : files::kFloatModel;
}

ModelGraph load_mode(const Options& o, const std::string& mode) {
  return load_required(o, model_file(mode), mode == "int8" ? "quantize" : "train-head");
}

// ---------------------------------------------------------------------------

void cmd_gen_synth(const Options& o, std::ostream& out) {
  const fs::path root = fs::path(o.workdir) / "data";
  SynthSpec spec;
  spec.image_size = o.image_size;
  spec.per_class = o.per_class;
  spec.seed = Rng::mix(o.seed, 1);
  const auto train = gen_synth(spec, root / "train");

  // The test split doubles as the geotagged field survey.
  SynthSpec test = spec;
  test.per_class = o.test_per_class;
  test.seed = Rng::mix(o.seed, 2);
  test.field_sw = GeoTag{kFieldOriginLat, kFieldOriginLon};
  const GeoPoint ne = field_ne(o.field_size_m);
  test.field_ne = GeoTag{ne.latitude, ne.longitude};
  const auto survey = gen_synth(test, root / "test");

  out << "train  " << train.size() << " images -> " << (root / "train").string() << '\n'
      << "test   " << survey.size() << " images (geotagged) -> " << (root / "test").string()
      << '\n';
}

void cmd_train_head(const Options& o, std::ostream& out) {
  Dataset train = load_split(o, "train", {});
  if (static_cast<int>(train.class_labels.size()) != o.classes) {
    throw ContractError("--classes " + std::to_string(o.classes) + " but the training set has " +
                        std::to_string(train.class_labels.size()) + " classes");
  }
  CashewNetOptions net;
  net.width_multiplier = o.width_mult;
  net.num_classes = o.classes;
  net.dropout = o.dropout;
  net.seed = o.seed;
  net.input_size = train.samples.empty() ? 96 : train.samples.front().image.shape()[1];
  net.class_labels = train.class_labels;
  ModelGraph graph = build_cashew_net(net);

  std::vector<int> labels;
  for (const auto& s : train.samples) labels.push_back(s.label);
  const FeatureMatrix raw = extract_features(graph, images_of(train));
  const FeatureScaler scaler = fit_scaler(raw);
  const FeatureMatrix x = apply_scaler(raw, scaler);

  std::optional<FeatureMatrix> val;
  std::vector<int> val_labels;
  if (fs::exists(in_work(o, files::kTestManifest))) {
    const Dataset test = load_split(o, "test", train.class_labels);
    for (const auto& s : test.samples) val_labels.push_back(s.label);
    val = apply_scaler(extract_features(graph, images_of(test)), scaler);
  }

  TrainConfig cfg;
  cfg.total_steps = o.steps;
  cfg.lr_max = o.lr_max;
  cfg.weight_decay = o.weight_decay;
  cfg.clip_norm = o.clip_norm > 0 ? std::optional<double>(o.clip_norm) : std::nullopt;
  cfg.dropout_rate = o.dropout;
  cfg.seed = o.seed;
  cfg.batch_size = o.batch_size;
  const TrainReport report = train_head(x, labels, cfg, val ? &*val : nullptr, val_labels);

  install_head(graph, report.head, &scaler);
  graph.metadata["head_steps"] = std::to_string(o.steps);
  save_model(graph, in_work(o, files::kFloatModel));
  save_train_report(report, in_work(o, files::kTrainReport));

  out << "features        " << x.rows << " x " << x.cols << '\n'
      << "final loss      " << fmt("%.6f", report.loss.back()) << '\n'
      << "train accuracy  " << fmt("%.4f", report.train_accuracy) << '\n';
  if (report.validation_accuracy) {
    out << "val accuracy    " << fmt("%.4f", *report.validation_accuracy) << '\n';
  }
  out << "wrote " << files::kFloatModel << ", " << files::kTrainReport << '\n';
}

void cmd_calibrate(const Options& o, std::ostream& out) {
  const ModelGraph graph = load_required(o, files::kFloatModel, "train-head");
  const Dataset data = load_split(o, o.split, graph.class_labels);
  const CalibrationStats stats = calibrate(graph, images_of(data, o.limit));
  save_calibration_stats(stats, in_work(o, files::kCalibration));
  out << "calibrated " << stats.ranges.size() << " tensors over " << stats.image_count
      << " images (" << o.split << " split)\nwrote " << files::kCalibration << '\n';
}

void cmd_quantize(const Options& o, std::ostream& out) {
  const ModelGraph graph = load_required(o, files::kFloatModel, "train-head");
  const fs::path stats_path = in_work(o, files::kCalibration);
  if (!fs::exists(stats_path)) {
    throw CalibrationError("missing calibration stats (run calibrate first)");
  }
  const ModelGraph q = quantize_model(graph, load_calibration_stats(stats_path));
  save_model(q, in_work(o, files::kInt8Model));
  const double fsize = static_cast<double>(fs::file_size(in_work(o, files::kFloatModel)));
  const double qsize = static_cast<double>(fs::file_size(in_work(o, files::kInt8Model)));
  out << "float32 file  " << static_cast<std::uint64_t>(fsize) << " bytes\n"
      << "int8 file     " << static_cast<std::uint64_t>(qsize) << " bytes (ratio "
      << fmt("%.3f", qsize / fsize) << ")\nwrote " << files::kInt8Model << '\n';
}

void cmd_infer(const Options& o, std::ostream& out) {
  if (o.image.empty()) throw ContractError("--image is required");
  const ModelGraph graph = load_mode(o, o.infer_model);
  const std::vector<float> p = execute(graph, image_to_tensor(read_ppm(o.image)));
  const std::size_t best = argmax(p);
  out << "label " << graph.class_labels.at(best) << '\n';
  for (std::size_t i = 0; i < p.size(); ++i) {
    out << graph.class_labels.at(i) << '\t' << fmt("%.6f", p[i]) << '\n';
  }
}

void cmd_eval(const Options& o, std::ostream& out) {
  std::vector<ModelGraph> models;
  const auto modes = model_modes(o.model);
  for (const auto& m : modes) models.push_back(load_mode(o, m));
  const Dataset data = load_split(o, o.eval_split, models.front().class_labels);
  std::vector<int> truths;
  for (const auto& s : data.samples) truths.push_back(s.label);
  for (std::size_t k = 0; k < models.size(); ++k) {
    Executor exec(models[k]);
    std::vector<int> preds;
    for (const auto& s : data.samples) preds.push_back(static_cast<int>(argmax(exec.run(s.image))));
    const ConfusionMatrix cm = confusion_matrix(preds, truths, data.class_labels);
    const std::string text = "model " + modes[k] + ", " + o.eval_split + " split\n\n" +
                             format_classification_report(cm, classification_metrics(cm));
    write_text(in_work(o, ("eval_" + modes[k] + ".txt").c_str()), text);
    out << text << '\n';
  }
  if (models.size() == 2) {
    const AgreementReport r = compare_models(models[0], models[1], data.samples);
    std::ostringstream os;
    os << "float32 vs int8, " << o.eval_split << " split, " << r.samples << " images\n"
       << "top-1 agreement          " << fmt("%.4f", r.agreement) << '\n'
       << "float32 accuracy         " << fmt("%.4f", r.reference_accuracy) << '\n'
       << "int8 accuracy            " << fmt("%.4f", r.candidate_accuracy) << '\n'
       << "max probability change   " << fmt("%.6f", r.max_probability_deviation) << '\n';
    for (std::size_t c = 0; c < r.reference_class_accuracy.size(); ++c) {
      os << "class " << data.class_labels[c] << "  float32 " << fmt("%.4f", r.reference_class_accuracy[c])
         << "  int8 " << fmt("%.4f", r.candidate_class_accuracy[c]) << '\n';
    }
    write_text(in_work(o, files::kAgreement), os.str());
    out << os.str();
  }
}

void cmd_bench(const Options& o, std::ostream& out) {
  std::vector<BenchColumn> cols;
  std::optional<Dataset> test;
  if (fs::exists(in_work(o, files::kTestManifest))) {
    test = load_split(o, "test", load_mode(o, model_modes(o.model).front()).class_labels);
  }
  for (const auto& mode : model_modes(o.model)) {
    const ModelGraph g = load_mode(o, mode);
    const Tensor input =
        test && !test->samples.empty() ? test->samples.front().image : Tensor::zeros(g.input_shape);
    BenchColumn col;
    col.name = mode == "int8" ? "int8" : "float32";
    col.report = benchmark(g, input, o.reps, o.warmup);
    if (test && !test->samples.empty()) {
      Executor exec(g);
      int hits = 0;
      for (const auto& s : test->samples) hits += static_cast<int>(argmax(exec.run(s.image))) == s.label;
      col.accuracy = static_cast<double>(hits) / static_cast<double>(test->samples.size());
    }
    cols.push_back(std::move(col));
  }
  const std::string table = format_bench_table(cols);
  write_text(in_work(o, files::kBenchText), table);
  write_text(in_work(o, files::kBenchTsv), format_bench_tsv(cols));
  out << table;
}

bool cmd_budget(const Options& o, std::ostream& out) {
  const ModelGraph g = load_mode(o, o.budget_model);
  BenchReport r;
  r.mode = g.mode;
  r.arena_bytes = plan_arena(g).total_bytes;
  r.model_file_bytes = model_file_size(g);
  const BudgetResult res = budget_check(r, o.flash_budget, o.ram_budget);
  const std::string text = format_budget(r, res, o.flash_budget, o.ram_budget);
  write_text(in_work(o, files::kBudget), text);
  out << text;
  return res.pass();
}

// Classifies the geotagged survey images and writes them as detections.
std::vector<DetectionRecord> survey_detections(const Options& o, std::ostream& out) {
  const std::string mode = fs::exists(in_work(o, files::kInt8Model)) ? "int8" : "float";
  const ModelGraph g = load_mode(o, mode);
  const Dataset survey = load_split(o, "test", g.class_labels);
  Executor exec(g);
  std::vector<DetectionRecord> records;
  for (std::size_t i = 0; i < survey.samples.size(); ++i) {
    if (!survey.geotags[i]) continue;
    const std::vector<float> p = exec.run(survey.samples[i].image);
    const std::size_t best = argmax(p);
    DetectionRecord r;
    r.latitude = survey.geotags[i]->latitude;
    r.longitude = survey.geotags[i]->longitude;
    r.label = parse_detection_label(g.class_labels.at(best));
    r.confidence = p[best];
    records.push_back(r);
  }
  write_text(in_work(o, files::kDetections), format_detections(records));
  out << "classified " << records.size() << " geotagged images with the " << mode
      << " model\nwrote " << files::kDetections << '\n';
  return records;
}

void cmd_plan_spray(const Options& o, std::ostream& out) {
  const std::vector<DetectionRecord> records =
      o.detections.empty() ? survey_detections(o, out) : read_detections(o.detections);
  const FieldGrid grid =
      grid_from_bounds({kFieldOriginLat, kFieldOriginLon}, field_ne(o.field_size_m), o.cell_size);
  const SeverityMap map = aggregate(records, grid);
  const SprayPlan plan = plan_spray(map, {o.threshold, o.base_rate, o.max_rate});
  const SavingsReport savings =
      compare_uniform(plan, o.uniform_rate > 0 ? o.uniform_rate : o.max_rate);
  write_text(in_work(o, files::kSprayPlan), format_spray_plan(plan));
  const std::string summary = format_savings(savings, map);
  write_text(in_work(o, files::kSpraySummary), summary);
  out << "grid " << grid.rows << " x " << grid.cols << " cells of " << fmt("%.1f", o.cell_size)
      << " m\n"
      << summary << "wrote " << files::kSprayPlan << ", " << files::kSpraySummary << '\n';
}

void cmd_export_features(const Options& o, std::ostream& out) {
  const std::string mode = o.model == "both" ? "float" : o.model;
  const ModelGraph g = load_mode(o, mode);
  const Dataset data = load_split(o, o.eval_split, g.class_labels);
  export_features(g, data.samples, data.class_labels, in_work(o, files::kFeatures));
  out << "exported " << data.samples.size() << " feature rows (" << mode << " model)\nwrote "
      << files::kFeatures << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"cashew-edge: leaf disease classification at the edge"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--workdir", o.workdir, "Directory holding all artifacts")->capture_default_str();
    sub->add_option("--seed", o.seed, "Seed for every random choice")->capture_default_str();
  };

  auto* gen = app.add_subcommand("gen-synth", "Generate the synthetic leaf dataset");
  common(gen);
  gen->add_option("--per-class", o.per_class, "Training images per class")->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--test-per-class", o.test_per_class, "Test images per class")->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--image-size", o.image_size, "Image side in pixels")->check(CLI::Range(8, 1024))->capture_default_str();
  gen->add_option("--field-size-m", o.field_size_m, "Side of the square survey field")->check(CLI::PositiveNumber)->capture_default_str();

  auto* train = app.add_subcommand("train-head", "Build the network and train its classifier head");
  common(train);
  train->add_option("--width-mult", o.width_mult, "Backbone width multiplier")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--classes", o.classes, "Number of classes")->check(CLI::Range(2, 1000))->capture_default_str();
  train->add_option("--steps", o.steps, "Training steps")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--lr-max", o.lr_max, "Peak learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--weight-decay", o.weight_decay, "Decoupled weight decay")->capture_default_str();
  train->add_option("--clip-norm", o.clip_norm, "Gradient clipping norm (0 disables)")->capture_default_str();
  train->add_option("--dropout", o.dropout, "Head dropout rate")->capture_default_str();
  train->add_option("--batch-size", o.batch_size, "Mini-batch size")->check(CLI::PositiveNumber)->capture_default_str();

  auto* calib = app.add_subcommand("calibrate", "Record activation ranges of the float model");
  common(calib);
  calib->add_option("--split", o.split, "Calibration split")->check(CLI::IsMember({"train", "test"}))->capture_default_str();
  calib->add_option("--limit", o.limit, "Use at most this many images (0 = all)")->check(CLI::NonNegativeNumber)->capture_default_str();

  auto* quant = app.add_subcommand("quantize", "Convert the float model to int8");
  common(quant);

  auto* infer = app.add_subcommand("infer", "Classify one PPM image");
  common(infer);
  infer->add_option("--image", o.image, "P6 PPM image")->required();
  infer->add_option("--model", o.infer_model, "float or int8")->check(CLI::IsMember({"float", "int8"}))->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Confusion matrix and F1 on a split");
  common(eval);
  eval->add_option("--model", o.model, "float, int8 or both")->check(CLI::IsMember({"float", "int8", "both"}))->capture_default_str();
  eval->add_option("--split", o.eval_split, "Evaluation split")->check(CLI::IsMember({"train", "test"}))->capture_default_str();

  auto* bench = app.add_subcommand("bench", "Latency, peak RAM and flash report");
  common(bench);
  bench->add_option("--model", o.model, "float, int8 or both")->check(CLI::IsMember({"float", "int8", "both"}))->capture_default_str();
  bench->add_option("--reps", o.reps, "Timed runs")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--warmup", o.warmup, "Discarded warmup runs")->check(CLI::NonNegativeNumber)->capture_default_str();

  auto* budget = app.add_subcommand("budget", "Check flash and RAM against device budgets");
  common(budget);
  budget->add_option("--model", o.budget_model, "float or int8")->check(CLI::IsMember({"float", "int8"}))->capture_default_str();
  budget->add_option("--flash-budget", o.flash_budget, "Flash budget in bytes")->check(CLI::PositiveNumber)->capture_default_str();
  budget->add_option("--ram-budget", o.ram_budget, "RAM budget in bytes")->check(CLI::PositiveNumber)->capture_default_str();

  auto* spray = app.add_subcommand("plan-spray", "Turn geotagged detections into a spray plan");
  common(spray);
  spray->add_option("--detections", o.detections, "Detections TSV (default: classify the survey split)");
  spray->add_option("--cell-size", o.cell_size, "Grid cell side in meters")->check(CLI::PositiveNumber)->capture_default_str();
  spray->add_option("--threshold", o.threshold, "Severity below which nothing is sprayed")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  spray->add_option("--base-rate", o.base_rate, "Dosage at the threshold, L/ha")->check(CLI::NonNegativeNumber)->capture_default_str();
  spray->add_option("--max-rate", o.max_rate, "Dosage at severity 1, L/ha")->check(CLI::NonNegativeNumber)->capture_default_str();
  spray->add_option("--uniform-rate", o.uniform_rate, "Uniform comparison rate, L/ha (0 = max rate)")->check(CLI::NonNegativeNumber)->capture_default_str();
  spray->add_option("--field-size-m", o.field_size_m, "Side of the square survey field")->check(CLI::PositiveNumber)->capture_default_str();

  auto* feats = app.add_subcommand("export-features", "Write pooled features per image as TSV");
  common(feats);
  feats->add_option("--model", o.model, "float or int8")->check(CLI::IsMember({"float", "int8", "both"}))->capture_default_str();
  feats->add_option("--split", o.eval_split, "Split to export")->check(CLI::IsMember({"train", "test"}))->capture_default_str();

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    std::error_code ec;
    fs::create_directories(o.workdir, ec);
    if (gen->parsed()) cmd_gen_synth(o, out);
    else if (train->parsed()) cmd_train_head(o, out);
    else if (calib->parsed()) cmd_calibrate(o, out);
    else if (quant->parsed()) cmd_quantize(o, out);
    else if (infer->parsed()) cmd_infer(o, out);
    else if (eval->parsed()) cmd_eval(o, out);
    else if (bench->parsed()) cmd_bench(o, out);
    else if (budget->parsed()) return cmd_budget(o, out) ? 0 : 1;
    else if (spray->parsed()) cmd_plan_spray(o, out);
    else if (feats->parsed()) cmd_export_features(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace cashew
