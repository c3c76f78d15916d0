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

#include <algorithm>
#include <filesystem>

#include "cashew/arena.hpp"
#include "cashew/errors.hpp"
#include "cashew/executor.hpp"
#include "cashew/graph.hpp"
#include "cashew/model_io.hpp"
#include "cashew/random.hpp"

using namespace cashew;

namespace {

ModelGraph tiny_graph(std::vector<LayerSpec> layers, Shape input, std::uint64_t seed = 1) {
  ModelGraph g;
  g.input_shape = std::move(input);
  g.layers = std::move(layers);
  initialize_parameters(g, seed);
  validate(g);
  return g;
}

Tensor random_input(const Shape& s, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(s.element_count());
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return Tensor(s, std::move(v));
}

// Every pair of buffers alive at a common step occupies disjoint bytes.
void check_no_overlap(const ArenaPlan& plan) {
  for (std::size_t i = 0; i < plan.buffers.size(); ++i)
    for (std::size_t j = i + 1; j < plan.buffers.size(); ++j) {
      const auto& a = plan.buffers[i];
      const auto& b = plan.buffers[j];
      if (!a.overlaps_in_time(b) || a.bytes == 0 || b.bytes == 0) continue;
      const bool disjoint = a.offset + a.bytes <= b.offset || b.offset + b.bytes <= a.offset;
      CHECK_MESSAGE(disjoint, a.name << " and " << b.name << " overlap");
    }
  for (const auto& b : plan.buffers) CHECK(b.offset + b.bytes <= plan.total_bytes);
}

std::size_t peak_live(const ArenaPlan& plan) {
  int last = 0;
  for (const auto& b : plan.buffers) last = std::max(last, b.last_step);
  std::size_t peak = 0;
  for (int s = 0; s <= last; ++s) {
    std::size_t live = 0;
    for (const auto& b : plan.buffers)
      if (b.first_step <= s && s <= b.last_step) live += b.bytes;
    peak = std::max(peak, live);
  }
  return peak;
}

}  // namespace

TEST_CASE("arena worked example: chain 100 -> 200 -> 50") {
  // step 0 reads in, writes a; step 1 reads a, writes b.
  const std::vector<BufferLifetime> bufs = {{"in", 100, 0, 0}, {"a", 200, 0, 1}, {"b", 50, 1, 1}};
  const ArenaPlan plan = plan_buffers(bufs, 1);
  CHECK(plan.total_bytes == 300);
  check_no_overlap(plan);
}

TEST_CASE("arena worked example: single layer 10 -> 10") {
  const std::vector<BufferLifetime> bufs = {{"in", 10, 0, 0}, {"out", 10, 0, 0}};
  CHECK(plan_buffers(bufs, 1).total_bytes == 20);
}

TEST_CASE("arena worked example: residual skip kept live") {
  // step 0 expands in (100) into mid (300); step 1 projects mid and adds the
  // skip, so in, mid and out (100) are all live at step 1. Hand plan:
  // mid at 0, in at 300, out at 400, total 500.
  const std::vector<BufferLifetime> bufs = {
      {"in", 100, 0, 1}, {"mid", 300, 0, 1}, {"out", 100, 1, 1}};
  const ArenaPlan plan = plan_buffers(bufs, 1);
  CHECK(plan.total_bytes == 500);
  CHECK(plan.at("mid").offset == 0);
  CHECK(plan.at("in").offset == 300);
  CHECK(plan.at("out").offset == 400);
  CHECK(plan.total_bytes >= 100 + 300);
}

TEST_CASE("arena alignment rounds offsets and total") {
  const std::vector<BufferLifetime> bufs = {{"a", 10, 0, 0}, {"b", 10, 0, 0}};
  const ArenaPlan plan = plan_buffers(bufs, 16);
  CHECK(plan.total_bytes == 32);
  for (const auto& b : plan.buffers) CHECK(b.offset % 16 == 0);
  CHECK_THROWS_AS(plan_buffers(bufs, 0), ContractError);
  CHECK_THROWS_AS(plan.at("zzz"), ContractError);
}

TEST_CASE("property: random lifetime sets never overlap and respect the live bound") {
  Rng rng(1234);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<BufferLifetime> bufs;
    const int n = 1 + static_cast<int>(rng.below(25));
    std::size_t total = 0;
    for (int i = 0; i < n; ++i) {
      const int a = static_cast<int>(rng.below(20));
      const int len = static_cast<int>(rng.below(6));
      const std::size_t bytes = rng.below(500);
      total += bytes;
      bufs.push_back({"b" + std::to_string(i), bytes, a, a + len});
    }
    const ArenaPlan plan = plan_buffers(bufs, 1);
    check_no_overlap(plan);
    CHECK(plan.total_bytes >= peak_live(plan));
    CHECK(plan.total_bytes <= total);
  }
}

TEST_CASE("fuzz: 100 random graphs plan valid arenas") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    CAPTURE(trial);
    const int size = 8 + static_cast<int>(rng.below(13));
    int channels = 3;
    std::vector<LayerSpec> layers;
    const int n = 1 + static_cast<int>(rng.below(6));
    for (int i = 0; i < n; ++i) {
      const std::string name = "l" + std::to_string(i);
      switch (rng.below(3)) {
        case 0: {
          const int f = 1 + static_cast<int>(rng.below(12));
          layers.push_back(conv_layer(name, f, rng.below(2) ? 3 : 1, 1 + static_cast<int>(rng.below(2))));
          channels = f;
          break;
        }
        case 1:
          layers.push_back(depthwise_layer(name, 3, 1 + static_cast<int>(rng.below(2))));
          break;
        default: {
          const int stride = 1 + static_cast<int>(rng.below(2));
          const bool keep = rng.below(2) != 0;
          const int f = keep ? channels : 1 + static_cast<int>(rng.below(12));
          layers.push_back(inverted_residual_layer(name, 1 + static_cast<int>(rng.below(6)),
                                                   stride, f, stride == 1 && f == channels));
          channels = f;
        }
      }
    }
    layers.push_back(pool_layer("pool"));
    layers.push_back(dense_layer("fc", 4, Activation::kRelu6));
    layers.push_back(dropout_layer("drop", 0.1));
    layers.push_back(dense_layer("logits", 2));
    layers.push_back(softmax_layer("softmax"));
    const ModelGraph g = tiny_graph(layers, Shape{1, size, size, 3}, trial);
    const ArenaPlan plan = plan_arena(g);
    check_no_overlap(plan);
    CHECK(plan.total_bytes >= peak_live(plan));

    // Per-step view: buffers read or written by an op are pairwise disjoint.
    const LoweredGraph lg = lower(g);
    for (std::size_t s = 0; s < lg.ops.size(); ++s) {
      std::vector<int> touched = lg.ops[s].inputs;
      touched.push_back(lg.ops[s].output);
      for (std::size_t i = 0; i < touched.size(); ++i)
        for (std::size_t j = i + 1; j < touched.size(); ++j) {
          if (touched[i] == touched[j]) continue;
          const auto& a = plan.buffers[touched[i]];
          const auto& b = plan.buffers[touched[j]];
          CHECK((a.offset + a.bytes <= b.offset || b.offset + b.bytes <= a.offset));
        }
    }
    // The executor runs inside that arena and matches a second run.
    const Tensor x = random_input(g.input_shape, trial);
    const auto p = execute(g, x);
    CHECK(p.size() == 2);
    CHECK(p == execute(g, x));
  }
}

TEST_CASE("count_params worked examples") {
  const ModelGraph dense = tiny_graph({dense_layer("d", 2)}, Shape{1, 1, 1, 4});
  CHECK(count_params(dense) == 10);
  const ModelGraph conv = tiny_graph({conv_layer("c", 8, 1, 1)}, Shape{1, 4, 4, 3});
  CHECK(count_params(conv) == 32);
  const ModelGraph stem = tiny_graph({conv_layer("stem", 16, 3, 2)}, Shape{1, 96, 96, 3});
  CHECK(count_params(stem) == 3 * 3 * 3 * 16 + 16);
}

TEST_CASE("width 0.35 parameter count matches a hand-summed layer table") {
  // Output channels per stage at width 0.35 after rounding to multiples of 8.
  struct Stage {
    int t, c, n;
  };
  const Stage stages[] = {{1, 8, 1}, {6, 8, 2}, {6, 16, 3}, {6, 24, 4},
                          {6, 32, 3}, {6, 56, 3}, {6, 112, 1}};
  std::int64_t expect = 3 * 3 * 3 * 16 + 16;  // stem
  int cin = 16;
  for (const Stage& s : stages) {
    for (int r = 0; r < s.n; ++r) {
      const int e = cin * s.t;
      if (s.t != 1) expect += cin * e + e;
      expect += 9 * e + e;
      expect += e * s.c + s.c;
      cin = s.c;
    }
  }
  expect += cin * 1280 + 1280;  // head conv
  expect += 1280 * 16 + 16;     // fc
  expect += 16 * 2 + 2;         // logits
  CashewNetOptions o;
  o.width_multiplier = 0.35;
  o.num_classes = 2;
  const ModelGraph g = build_cashew_net(o);
  CHECK(count_params(g) == expect);
  CHECK(g.layers.size() == 1 + 17 + 6);
}

TEST_CASE("builder contracts and determinism") {
  CashewNetOptions o;
  o.input_size = 32;
  o.seed = 9;
  const ModelGraph a = build_cashew_net(o);
  const ModelGraph b = build_cashew_net(o);
  CHECK(a == b);
  o.seed = 10;
  CHECK_FALSE(build_cashew_net(o).weights == a.weights);
  const auto p = execute(a, random_input(a.input_shape, 1));
  CHECK(p.size() == 2);
  CHECK(p[0] + p[1] == doctest::Approx(1.0));

  CashewNetOptions bad;
  bad.width_multiplier = 0.0;
  CHECK_THROWS_AS(build_cashew_net(bad), ContractError);
  bad = {};
  bad.width_multiplier = 1.5;
  CHECK_THROWS_AS(build_cashew_net(bad), ContractError);
  bad = {};
  bad.num_classes = 1;
  CHECK_THROWS_AS(build_cashew_net(bad), ContractError);
}

TEST_CASE("graph validation rejects malformed layer tables") {
  CHECK_THROWS_AS(tiny_graph({inverted_residual_layer("b", 6, 2, 3, true)}, Shape{1, 8, 8, 3}),
                  ContractError);
  CHECK_THROWS_AS(tiny_graph({conv_layer("c", 4, 3, 1), dropout_layer("d", 0.1),
                              pool_layer("p")},
                             Shape{1, 8, 8, 3}),
                  ContractError);
  ModelGraph g = tiny_graph({conv_layer("c", 4, 3, 1)}, Shape{1, 8, 8, 3});
  g.weights.erase("c/bias");
  CHECK_THROWS_AS(validate(g), ContractError);
}

TEST_CASE("executor: shape mismatch, tracing and determinism") {
  CashewNetOptions o;
  o.input_size = 32;
  const ModelGraph g = build_cashew_net(o);
  Executor exec(g);
  CHECK_THROWS_AS(exec.run(random_input(Shape{1, 16, 16, 3}, 1)), ContractError);
  const Tensor x = random_input(g.input_shape, 2);
  const ExecutionResult traced = exec.run_traced(x);
  CHECK(traced.layer_outputs.size() == g.layers.size());
  CHECK(traced.probabilities == exec.run(x));
  CHECK(exec.features(x).size() == 1280);
  CHECK(exec.plan().total_bytes == plan_arena(g).total_bytes);
}

TEST_CASE("model file round trip is bit exact") {
  CashewNetOptions o;
  o.input_size = 32;
  o.class_labels = {"anthracnose", "healthy"};
  const ModelGraph g = build_cashew_net(o);
  const auto bytes = serialize_model(g);
  REQUIRE(bytes.size() > 9);
  CHECK(std::equal(bytes.begin(), bytes.begin() + 4, "CSHW"));
  CHECK(bytes[4] == 0x01);
  const ModelGraph back = deserialize_model(bytes);
  CHECK(back == g);
  CHECK(count_params(back) == count_params(g));
  CHECK(serialize_model(back) == bytes);
  CHECK(model_file_size(g) == bytes.size());
  const Tensor x = random_input(g.input_shape, 3);
  CHECK(execute(back, x) == execute(g, x));

  const auto path = std::filesystem::temp_directory_path() / "cashew_roundtrip.cshw";
  save_model(g, path);
  CHECK(load_model(path) == g);
  CHECK(std::filesystem::file_size(path) == bytes.size());
  std::filesystem::remove(path);
}

TEST_CASE("model file load errors are distinct") {
  CashewNetOptions o;
  o.input_size = 16;
  const auto good = serialize_model(build_cashew_net(o));
  const auto kind_of = [](std::vector<std::uint8_t> b) {
    try {
      (void)deserialize_model(b);
    } catch (const LoadError& e) {
      return static_cast<int>(e.kind());
    }
    return -1;
  };
  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(kind_of(bad_magic) == static_cast<int>(LoadErrorKind::kBadMagic));
  auto bad_version = good;
  bad_version[4] = 0x02;
  CHECK(kind_of(bad_version) == static_cast<int>(LoadErrorKind::kVersionMismatch));
  auto truncated = good;
  truncated.resize(good.size() - 7);
  CHECK(kind_of(truncated) == static_cast<int>(LoadErrorKind::kTruncated));
  auto tiny = good;
  tiny.resize(6);
  CHECK(kind_of(tiny) == static_cast<int>(LoadErrorKind::kTruncated));
  auto longer = good;
  longer.resize(good.size() + 32, 0);
  CHECK(kind_of(longer) == static_cast<int>(LoadErrorKind::kLengthMismatch));
  CHECK_THROWS_AS(load_model("/nonexistent/model.cshw"), IoError);
}
