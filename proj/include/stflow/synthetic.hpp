/*
 * Copyright (c) 2026, The stflow Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <vector>

#include "stflow/tensor_io.hpp"

namespace stflow {

struct SyntheticStackSpec {
  TokenLayout layout;
  int text_tokens = 4;
  std::vector<LayerKind> kinds;
  int heads = 1;
  double logit_scale = 1.0;  // std-dev of the pre-softmax logits
};

/// Random valid stack: softmax over each query's support (frame, site or text keys).
AttentionStack random_stack(const SyntheticStackSpec& spec, std::uint64_t seed);

/// One cross layer followed by `self_layers` alternating spatial/temporal layers.
std::vector<LayerKind> cross_then_self(int self_layers);

}  // namespace stflow
