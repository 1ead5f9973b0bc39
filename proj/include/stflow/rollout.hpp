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

// Attention-based baselines sharing AttributionResult's shape contract.

#include <span>

#include "stflow/minmax_flow.hpp"
#include "stflow/tensor_io.hpp"

namespace stflow {

/// Attention Rollout: self layers become rownorm(0.5 * (A + I)), video
/// influence propagates by ordinary products, text enters at every cross
/// layer through the row-normalised cross attention and is summed.
/// Scores are the max over output tokens.
AttributionResult rollout(const AttentionStack& stack, std::span<const int> tokens);

/// Mean cross attention per token over all cross layers and video queries.
AttributionResult cross_attention_attr(const AttentionStack& stack, std::span<const int> tokens);

}  // namespace stflow
