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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cashew/graph.hpp"

namespace cashew {

// A buffer that must exist from first_step through last_step inclusive.
struct BufferLifetime {
  std::string name;
  std::size_t bytes = 0;
  int first_step = 0;
  int last_step = 0;
};

struct BufferPlacement {
  std::string name;
  std::size_t bytes = 0;
  int first_step = 0;
  int last_step = 0;
  std::size_t offset = 0;

  bool overlaps_in_time(const BufferPlacement& o) const {
    return first_step <= o.last_step && o.first_step <= last_step;
  }
};

struct ArenaPlan {
  std::vector<BufferPlacement> buffers;  // in input order
  std::size_t total_bytes = 0;
  std::size_t alignment = 1;

  // Throws ContractError for an unknown name.
  const BufferPlacement& at(const std::string& name) const;
};

// Greedy offset assignment in the style of TFLite Micro: buffers are placed
// largest first (ties: earlier first_step, then input order), each at the
// lowest aligned offset that does not collide with an already placed
// buffer whose lifetime overlaps. Offsets are multiples of `alignment`.
ArenaPlan plan_buffers(std::span<const BufferLifetime> buffers, std::size_t alignment = 1);

// One lifetime per activation tensor of the lowered graph. The graph input
// is live from step 0; every other tensor from the op producing it through
// the last op that reads it, so a residual block's input spans the block.
std::vector<BufferLifetime> activation_lifetimes(const LoweredGraph& lowered);

inline constexpr std::size_t kArenaAlignment = 16;

// Peak RAM estimate for executing `graph`.
ArenaPlan plan_arena(const ModelGraph& graph);

}  // namespace cashew
