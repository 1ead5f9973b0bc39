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
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "stflow/attention_graph.hpp"
#include "stflow/synthetic.hpp"
#include "stflow/tensor_io.hpp"

namespace fixture {

using stflow::AttentionLayer;
using stflow::AttentionStack;
using stflow::LayerKind;

// heads x rows x cols, given head by head
inline AttentionLayer layer(std::string name, LayerKind kind,
                            std::initializer_list<std::initializer_list<std::initializer_list<float>>> heads) {
  AttentionLayer l;
  l.name = std::move(name);
  l.kind = kind;
  l.heads = static_cast<int>(heads.size());
  for (const auto& h : heads) {
    l.query_tokens = static_cast<int>(h.size());
    for (const auto& row : h) {
      l.key_tokens = static_cast<int>(row.size());
      l.weights.insert(l.weights.end(), row.begin(), row.end());
    }
  }
  return l;
}

inline std::vector<std::string> text(int k) {
  std::vector<std::string> t;
  for (int i = 0; i < k; ++i) t.push_back("tok" + std::to_string(i));
  return t;
}

// cross [[0.6,0.4],[0.1,0.9]] followed by self [[0.7,0.3],[0.2,0.8]], two video tokens
inline AttentionStack running_example() {
  AttentionStack s;
  s.layout = {1, 1, 2};
  s.text_tokens = text(2);
  s.layers.push_back(layer("cross", LayerKind::cross, {{{0.6f, 0.4f}, {0.1f, 0.9f}}}));
  s.layers.push_back(layer("self", LayerKind::self_spatial, {{{0.7f, 0.3f}, {0.2f, 0.8f}}}));
  return s;
}

inline std::vector<int> all_tokens(int k) {
  std::vector<int> t(static_cast<std::size_t>(k));
  std::iota(t.begin(), t.end(), 0);
  return t;
}

// Random valid stack with at least one cross layer.
inline AttentionStack random_valid_stack(std::uint64_t seed, stflow::TokenLayout layout, int text_tokens,
                                         std::vector<LayerKind> kinds, int heads = 1, double scale = 1.5) {
  return stflow::random_stack({layout, text_tokens, std::move(kinds), heads, scale}, seed);
}

}  // namespace fixture
