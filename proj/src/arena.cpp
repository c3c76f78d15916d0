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
#include "cashew/arena.hpp"

#include <algorithm>
#include <numeric>

#include "cashew/errors.hpp"

namespace cashew {

namespace {

std::size_t align_up(std::size_t value, std::size_t alignment) {
  return (value + alignment - 1) / alignment * alignment;
}

}  // namespace

const BufferPlacement& ArenaPlan::at(const std::string& name) const {
  for (const auto& b : buffers) {
    if (b.name == name) return b;
  }
  throw ContractError("arena plan has no buffer '" + name + "'");
}

ArenaPlan plan_buffers(std::span<const BufferLifetime> buffers, std::size_t alignment) {
  if (alignment == 0) throw ContractError("arena alignment must be >= 1");
  ArenaPlan plan;
  plan.alignment = alignment;
  plan.buffers.reserve(buffers.size());
  for (const auto& b : buffers) {
    if (b.first_step > b.last_step) {
      throw ContractError("buffer '" + b.name + "' ends before it starts");
    }
    plan.buffers.push_back({b.name, b.bytes, b.first_step, b.last_step, 0});
  }

  std::vector<std::size_t> order(plan.buffers.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = plan.buffers[a];
    const auto& y = plan.buffers[b];
    if (x.bytes != y.bytes) return x.bytes > y.bytes;
    return x.first_step < y.first_step;
  });

  std::vector<std::size_t> placed;
  std::vector<const BufferPlacement*> conflicts;
  for (std::size_t idx : order) {
    BufferPlacement& cur = plan.buffers[idx];
    conflicts.clear();
    for (std::size_t p : placed) {
      if (plan.buffers[p].overlaps_in_time(cur)) conflicts.push_back(&plan.buffers[p]);
    }
    std::sort(conflicts.begin(), conflicts.end(),
              [](const BufferPlacement* a, const BufferPlacement* b) {
                return a->offset < b->offset;
              });
    std::size_t candidate = 0;
    for (const BufferPlacement* c : conflicts) {
      if (c->bytes == 0) continue;
      if (candidate + cur.bytes <= c->offset) break;
      candidate = std::max(candidate, align_up(c->offset + c->bytes, alignment));
    }
    cur.offset = candidate;
    placed.push_back(idx);
    plan.total_bytes = std::max(plan.total_bytes, align_up(cur.offset + cur.bytes, alignment));
  }
  return plan;
}

std::vector<BufferLifetime> activation_lifetimes(const LoweredGraph& lowered) {
  std::vector<BufferLifetime> out;
  out.reserve(lowered.tensors.size());
  for (const auto& t : lowered.tensors) {
    const int first = std::max(t.producer, 0);
    const int last = std::max(t.last_use, first);
    out.push_back({t.name, t.shape.element_count() * dtype_size(t.dtype), first, last});
  }
  return out;
}

ArenaPlan plan_arena(const ModelGraph& graph) {
  const auto lifetimes = activation_lifetimes(lower(graph));
  return plan_buffers(lifetimes, kArenaAlignment);
}

}  // namespace cashew
