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
#include "cashew/head_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "cashew/errors.hpp"
#include "cashew/executor.hpp"
#include "cashew/random.hpp"

namespace cashew {

namespace {

double cosine_ramp(double from, double to, double pct) {
  return std::lerp(from, to, (1.0 - std::cos(std::numbers::pi * pct)) / 2.0);
}

double relu6(double z) { return std::clamp(z, 0.0, 6.0); }

// Forward pass for one row. Returns logits; fills pre-activations and
// (post-dropout) hidden values.
void forward_row(const HeadParams& h, std::span<const float> x, const double* keep,
                 std::vector<double>& z1, std::vector<double>& hid, std::vector<double>& z2) {
  z1.assign(h.b1.begin(), h.b1.end());
  for (int i = 0; i < h.inputs; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* w = h.w1.data() + static_cast<std::size_t>(i) * h.hidden;
    for (int j = 0; j < h.hidden; ++j) z1[j] += xi * w[j];
  }
  hid.resize(h.hidden);
  for (int j = 0; j < h.hidden; ++j) hid[j] = relu6(z1[j]) * (keep ? keep[j] : 1.0);
  z2.assign(h.b2.begin(), h.b2.end());
  for (int j = 0; j < h.hidden; ++j) {
    const double* w = h.w2.data() + static_cast<std::size_t>(j) * h.classes;
    for (int k = 0; k < h.classes; ++k) z2[k] += hid[j] * w[k];
  }
}

// In-place stable softmax; returns log-sum-exp.
double softmax_inplace(std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) sum += (v = std::exp(v - m));
  for (double& v : z) v /= sum;
  return m + std::log(sum);
}

HeadParams zeros_like(const HeadParams& h) {
  HeadParams g;
  g.inputs = h.inputs;
  g.hidden = h.hidden;
  g.classes = h.classes;
  g.w1.assign(h.w1.size(), 0.0);
  g.b1.assign(h.b1.size(), 0.0);
  g.w2.assign(h.w2.size(), 0.0);
  g.b2.assign(h.b2.size(), 0.0);
  return g;
}

void check_labels(const FeatureMatrix& x, std::span<const int> labels, int classes) {
  if (static_cast<std::size_t>(x.rows) != labels.size()) {
    throw ContractError("feature rows and labels differ in length");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) throw ContractError("label " + std::to_string(y) + " out of range");
  }
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (cfg.total_steps < 1) throw ContractError("total_steps must be positive");
  if (!(cfg.lr_max > 0.0)) throw ContractError("lr_max must be positive");
  if (!(cfg.div_factor > 0.0) || !(cfg.final_div_factor > 0.0)) {
    throw ContractError("div factors must be positive");
  }
  if (!(cfg.pct_start > 0.0 && cfg.pct_start < 1.0)) {
    throw ContractError("pct_start must lie strictly inside (0, 1)");
  }
  const int peak = one_cycle_peak_step(cfg);
  if (peak < 1 || peak >= cfg.total_steps) {
    throw ContractError("pct_start * total_steps must round to a step strictly inside the run");
  }
  if (!(cfg.weight_decay >= 0.0)) throw ContractError("weight_decay must be nonnegative");
  if (cfg.clip_norm && !(*cfg.clip_norm > 0.0)) throw ContractError("clip_norm must be positive");
  if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) {
    throw ContractError("dropout_rate must be in [0, 1)");
  }
  if (cfg.batch_size < 1) throw ContractError("batch_size must be positive");
  if (cfg.hidden_units < 1) throw ContractError("hidden_units must be positive");
}

int one_cycle_peak_step(const TrainConfig& cfg) {
  return static_cast<int>(std::lround(cfg.pct_start * cfg.total_steps));
}

double one_cycle_lr(int step, const TrainConfig& cfg) {
  validate(cfg);
  if (step < 0 || step > cfg.total_steps) {
    throw ContractError("step " + std::to_string(step) + " outside [0, " +
                        std::to_string(cfg.total_steps) + "]");
  }
  const double lr_start = cfg.lr_max / cfg.div_factor;
  const double lr_end = cfg.lr_max / (cfg.div_factor * cfg.final_div_factor);
  const int peak = one_cycle_peak_step(cfg);
  if (step <= peak) {
    return cosine_ramp(lr_start, cfg.lr_max, static_cast<double>(step) / peak);
  }
  return cosine_ramp(cfg.lr_max, lr_end,
                     static_cast<double>(step - peak) / (cfg.total_steps - peak));
}

ClippedGradients clip_gradients(std::vector<double> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ContractError("max_norm must be positive");
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw TrainingError("non-finite gradient component at index " + std::to_string(i));
    }
    sq += grads[i] * grads[i];
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
    // Rounding can leave the result a hair above the bound.
    double post = 0.0;
    for (double g : grads) post += g * g;
    if (std::sqrt(post) > max_norm) {
      const double fix = std::nextafter(max_norm / std::sqrt(post), 0.0);
      for (double& g : grads) g *= fix;
    }
  }
  return {std::move(grads), norm};
}

FeatureMatrix extract_features(const ModelGraph& graph, std::span<const Tensor> images) {
  Executor executor(graph);
  FeatureMatrix m;
  m.rows = static_cast<int>(images.size());
  for (const Tensor& image : images) {
    const std::vector<float> f = executor.features(image);
    if (m.cols == 0) {
      m.cols = static_cast<int>(f.size());
      m.values.reserve(static_cast<std::size_t>(m.rows) * m.cols);
    }
    m.values.insert(m.values.end(), f.begin(), f.end());
  }
  return m;
}

FeatureScaler fit_scaler(const FeatureMatrix& x) {
  if (x.rows < 1) throw ContractError("cannot fit a scaler to zero rows");
  FeatureScaler s;
  s.mean.assign(x.cols, 0.0);
  s.inv_std.assign(x.cols, 1.0);
  for (int r = 0; r < x.rows; ++r) {
    const auto row = x.row(r);
    for (int c = 0; c < x.cols; ++c) s.mean[c] += row[c];
  }
  for (double& m : s.mean) m /= x.rows;
  std::vector<double> var(x.cols, 0.0);
  for (int r = 0; r < x.rows; ++r) {
    const auto row = x.row(r);
    for (int c = 0; c < x.cols; ++c) {
      const double d = row[c] - s.mean[c];
      var[c] += d * d;
    }
  }
  std::vector<double> sd(x.cols);
  double pooled = 0.0;
  for (int c = 0; c < x.cols; ++c) {
    sd[c] = std::sqrt(var[c] / x.rows);
    pooled += var[c] / x.rows;
  }
  pooled = std::sqrt(pooled / x.cols);
  // Floor each column at a quarter of the pooled spread so near-constant
  // features do not blow up the folded weights (and their int8 scale).
  for (int c = 0; c < x.cols; ++c) {
    const double d = std::max(sd[c], 0.25 * pooled);
    s.inv_std[c] = d > 1e-12 ? 1.0 / d : 1.0;
  }
  return s;
}

FeatureMatrix apply_scaler(const FeatureMatrix& x, const FeatureScaler& s) {
  if (s.mean.size() != static_cast<std::size_t>(x.cols)) {
    throw ContractError("scaler width does not match feature width");
  }
  FeatureMatrix out = x;
  for (int r = 0; r < x.rows; ++r) {
    float* row = out.values.data() + static_cast<std::size_t>(r) * x.cols;
    for (int c = 0; c < x.cols; ++c) {
      row[c] = static_cast<float>((row[c] - s.mean[c]) * s.inv_std[c]);
    }
  }
  return out;
}

std::vector<double> HeadParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(size());
  for (const auto* v : {&w1, &b1, &w2, &b2}) flat.insert(flat.end(), v->begin(), v->end());
  return flat;
}

void HeadParams::unflatten(std::span<const double> flat) {
  if (flat.size() != size()) throw ContractError("flat parameter vector has the wrong length");
  auto it = flat.begin();
  for (auto* v : {&w1, &b1, &w2, &b2}) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(v->size()), v->begin());
    it += static_cast<std::ptrdiff_t>(v->size());
  }
}

HeadParams init_head(int inputs, int hidden, int classes, std::uint64_t seed) {
  if (inputs < 1 || hidden < 1 || classes < 2) {
    throw ContractError("head needs inputs >= 1, hidden >= 1, classes >= 2");
  }
  HeadParams h;
  h.inputs = inputs;
  h.hidden = hidden;
  h.classes = classes;
  h.w1.resize(static_cast<std::size_t>(inputs) * hidden);
  h.b1.assign(hidden, 0.0);
  h.w2.resize(static_cast<std::size_t>(hidden) * classes);
  h.b2.assign(classes, 0.0);
  // Truncated normal at |z| <= 2 has std 0.8796 of the untruncated one.
  constexpr double kTruncStd = 0.87962566103423978;
  Rng r1(Rng::mix(seed, 1));
  const double s1 = std::sqrt(2.0 / inputs) / kTruncStd;
  for (double& w : h.w1) w = r1.truncated_normal(s1);
  Rng r2(Rng::mix(seed, 2));
  const double s2 = std::sqrt(1.0 / hidden) / kTruncStd;
  for (double& w : h.w2) w = r2.truncated_normal(s2);
  return h;
}

LossGradient head_loss_gradient(const HeadParams& head, const FeatureMatrix& x,
                                std::span<const int> labels, std::span<const double> keep_scale) {
  check_labels(x, labels, head.classes);
  if (x.cols != head.inputs) throw ContractError("feature width does not match head inputs");
  if (x.rows < 1) throw ContractError("empty batch");
  const bool dropout = !keep_scale.empty();
  if (dropout && keep_scale.size() != static_cast<std::size_t>(x.rows) * head.hidden) {
    throw ContractError("dropout mask must be rows x hidden");
  }
  LossGradient out;
  out.grad = zeros_like(head);
  HeadParams& g = out.grad;
  const double inv_n = 1.0 / x.rows;
  std::vector<double> z1, hid, z2, dh(head.hidden);
  for (int r = 0; r < x.rows; ++r) {
    const auto xr = x.row(r);
    const double* keep = dropout ? keep_scale.data() + static_cast<std::size_t>(r) * head.hidden
                                 : nullptr;
    forward_row(head, xr, keep, z1, hid, z2);
    const int y = labels[r];
    const double logit_y = z2[y];
    out.loss += (softmax_inplace(z2) - logit_y) * inv_n;
    z2[y] -= 1.0;
    for (double& v : z2) v *= inv_n;  // dL/dlogits
    std::fill(dh.begin(), dh.end(), 0.0);
    for (int j = 0; j < head.hidden; ++j) {
      double* gw = g.w2.data() + static_cast<std::size_t>(j) * head.classes;
      const double* w = head.w2.data() + static_cast<std::size_t>(j) * head.classes;
      for (int k = 0; k < head.classes; ++k) {
        gw[k] += hid[j] * z2[k];
        dh[j] += w[k] * z2[k];
      }
    }
    for (int k = 0; k < head.classes; ++k) g.b2[k] += z2[k];
    for (int j = 0; j < head.hidden; ++j) {
      const bool active = z1[j] > 0.0 && z1[j] < 6.0;
      dh[j] = active ? dh[j] * (keep ? keep[j] : 1.0) : 0.0;
      g.b1[j] += dh[j];
    }
    for (int i = 0; i < head.inputs; ++i) {
      const double xi = xr[i];
      if (xi == 0.0) continue;
      double* gw = g.w1.data() + static_cast<std::size_t>(i) * head.hidden;
      for (int j = 0; j < head.hidden; ++j) gw[j] += xi * dh[j];
    }
  }
  return out;
}

std::vector<double> head_probabilities(const HeadParams& head, std::span<const float> features) {
  if (features.size() != static_cast<std::size_t>(head.inputs)) {
    throw ContractError("feature width does not match head inputs");
  }
  std::vector<double> z1, hid, z2;
  forward_row(head, features, nullptr, z1, hid, z2);
  softmax_inplace(z2);
  return z2;
}

double head_accuracy(const HeadParams& head, const FeatureMatrix& x, std::span<const int> labels) {
  check_labels(x, labels, head.classes);
  if (x.rows == 0) return 0.0;
  int hits = 0;
  for (int r = 0; r < x.rows; ++r) {
    const auto p = head_probabilities(head, x.row(r));
    hits += static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()) == labels[r];
  }
  return static_cast<double>(hits) / x.rows;
}

void apply_update(HeadParams& head, const HeadParams& grad, double lr, double weight_decay) {
  if (grad.size() != head.size()) throw ContractError("gradient shape does not match head");
  const double shrink = 1.0 - lr * weight_decay;
  for (std::size_t i = 0; i < head.w1.size(); ++i) head.w1[i] = head.w1[i] * shrink - lr * grad.w1[i];
  for (std::size_t i = 0; i < head.w2.size(); ++i) head.w2[i] = head.w2[i] * shrink - lr * grad.w2[i];
  for (std::size_t i = 0; i < head.b1.size(); ++i) head.b1[i] -= lr * grad.b1[i];
  for (std::size_t i = 0; i < head.b2.size(); ++i) head.b2[i] -= lr * grad.b2[i];
}

TrainReport train_head(const FeatureMatrix& features, std::span<const int> labels,
                       const TrainConfig& cfg, const FeatureMatrix* val_features,
                       std::span<const int> val_labels) {
  validate(cfg);
  if (static_cast<std::size_t>(features.rows) != labels.size() || features.rows < 1) {
    throw ContractError("need one label per feature row and at least one row");
  }
  for (float v : features.values) {
    if (!std::isfinite(v)) throw ContractError("features must be finite");
  }
  const std::set<int> present(labels.begin(), labels.end());
  if (*present.begin() < 0) throw ContractError("labels must be nonnegative");
  if (present.size() < 2) throw TrainingError("training labels contain a single class");
  const int classes = *present.rbegin() + 1;

  TrainReport report;
  report.head = init_head(features.cols, cfg.hidden_units, classes, cfg.seed);
  HeadParams& head = report.head;

  Rng order_rng(Rng::mix(cfg.seed, 3));
  Rng dropout_rng(Rng::mix(cfg.dropout_seed.value_or(cfg.seed), 4));
  std::vector<int> order(features.rows);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const int batch = std::min(cfg.batch_size, features.rows);
  const double keep_prob = 1.0 - cfg.dropout_rate;

  FeatureMatrix xb;
  xb.cols = features.cols;
  std::vector<int> yb;
  std::vector<double> mask;
  for (int step = 0; step < cfg.total_steps; ++step) {
    xb.rows = batch;
    xb.values.clear();
    yb.clear();
    for (int b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        // Fisher-Yates with the portable generator.
        for (std::size_t i = order.size() - 1; i > 0; --i) {
          std::swap(order[i], order[order_rng.below(i + 1)]);
        }
        cursor = 0;
      }
      const int r = order[cursor++];
      const auto row = features.row(r);
      xb.values.insert(xb.values.end(), row.begin(), row.end());
      yb.push_back(labels[r]);
    }
    mask.clear();
    if (cfg.dropout_rate > 0.0) {
      mask.resize(static_cast<std::size_t>(batch) * cfg.hidden_units);
      for (double& m : mask) m = dropout_rng.uniform() < keep_prob ? 1.0 / keep_prob : 0.0;
    }
    LossGradient lg = head_loss_gradient(head, xb, yb, mask);
    if (!std::isfinite(lg.loss)) {
      throw TrainingError("non-finite loss at step " + std::to_string(step));
    }
    const double lr = one_cycle_lr(step, cfg);
    double norm;
    if (cfg.clip_norm) {
      ClippedGradients c = clip_gradients(lg.grad.flatten(), *cfg.clip_norm);
      lg.grad.unflatten(c.grads);
      norm = c.norm;
    } else {
      norm = clip_gradients(lg.grad.flatten(), std::numeric_limits<double>::max()).norm;
    }
    apply_update(head, lg.grad, lr, cfg.weight_decay);
    report.loss.push_back(lg.loss);
    report.lr.push_back(lr);
    report.grad_norm.push_back(norm);
  }
  report.train_accuracy = head_accuracy(head, features, labels);
  if (val_features && val_features->rows > 0) {
    report.validation_accuracy = head_accuracy(head, *val_features, val_labels);
  }
  return report;
}

std::string format_train_report(const TrainReport& report) {
  std::ostringstream os;
  os << "step\tlr\tloss\n";
  char buf[96];
  for (std::size_t i = 0; i < report.loss.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g\n", i, report.lr[i], report.loss[i]);
    os << buf;
  }
  return os.str();
}

void save_train_report(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_train_report(report);
  if (!out) throw IoError("write failed: " + path.string());
}

void install_head(ModelGraph& graph, const HeadParams& head, const FeatureScaler* scaler) {
  const LayerSpec* first = nullptr;
  const LayerSpec* last = nullptr;
  for (const LayerSpec& l : graph.layers) {
    if (l.kind != LayerKind::kDense) continue;
    if (!first) first = &l;
    last = &l;
  }
  if (!first || first == last) throw ContractError("graph needs two dense layers for a head");
  if (first->filters != head.hidden || last->filters != head.classes) {
    throw ContractError("head shape does not match the graph's dense layers");
  }
  if (graph.mode != NumericMode::kFloat32) throw ContractError("install_head needs a float graph");

  std::vector<double> w1 = head.w1;
  std::vector<double> b1 = head.b1;
  if (scaler) {
    // x' = (x - mean) * inv_std, so W' = diag(inv_std) W and b' = b - mean' W'.
    for (int i = 0; i < head.inputs; ++i) {
      for (int j = 0; j < head.hidden; ++j) {
        double& w = w1[static_cast<std::size_t>(i) * head.hidden + j];
        w *= scaler->inv_std[i];
        b1[j] -= scaler->mean[i] * w;
      }
    }
  }
  const auto to_tensor = [](Shape shape, const std::vector<double>& v) {
    return Tensor(std::move(shape), std::vector<float>(v.begin(), v.end()));
  };
  graph.weights[first->name + "/weights"] = to_tensor(Shape{head.inputs, head.hidden}, w1);
  graph.weights[first->name + "/bias"] = to_tensor(Shape{head.hidden}, b1);
  graph.weights[last->name + "/weights"] = to_tensor(Shape{head.hidden, head.classes}, head.w2);
  graph.weights[last->name + "/bias"] = to_tensor(Shape{head.classes}, head.b2);
  validate(graph);
}

}  // namespace cashew
