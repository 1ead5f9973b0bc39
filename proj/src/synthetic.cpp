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

#include "stflow/synthetic.hpp"

#include <cmath>

#include "stflow/attention_graph.hpp"
#include "stflow/toy_model.hpp"

namespace stflow {

std::vector<LayerKind> cross_then_self(int self_layers) {
  std::vector<LayerKind> kinds{LayerKind::cross};
  for (int l = 0; l < self_layers; ++l)
    kinds.push_back(l % 2 == 0 ? LayerKind::self_spatial : LayerKind::self_temporal);
  return kinds;
}

AttentionStack random_stack(const SyntheticStackSpec& spec, std::uint64_t seed) {
  XorShift64Star rng(seed);
  AttentionStack stack;
  stack.layout = spec.layout;
  for (int k = 0; k < spec.text_tokens; ++k) stack.text_tokens.push_back("t" + std::to_string(k));
  const int n = spec.layout.video_tokens();

  std::vector<double> logits;
  auto softmax_into = [&](float* dst, std::size_t count, auto index_of) {
    logits.resize(count);
    double mx = -INFINITY;
    for (double& v : logits) mx = std::max(mx, v = spec.logit_scale * rng.normal());
    double z = 0.0;
    for (double& v : logits) z += v = std::exp(v - mx);
    for (std::size_t u = 0; u < count; ++u) dst[index_of(u)] = static_cast<float>(logits[u] / z);
  };

  for (std::size_t l = 0; l < spec.kinds.size(); ++l) {
    AttentionLayer layer;
    layer.kind = spec.kinds[l];
    layer.name = "l" + std::to_string(l) + "." + std::string(to_string(layer.kind));
    layer.heads = spec.heads;
    layer.query_tokens = n;
    layer.key_tokens = layer.kind == LayerKind::cross ? spec.text_tokens : n;
    layer.weights.assign(layer.expected_size(), 0.0f);
    for (int h = 0; h < spec.heads; ++h) {
      if (layer.kind == LayerKind::cross) {
        for (int q = 0; q < n; ++q)
          softmax_into(&layer.at(h, q, 0), static_cast<std::size_t>(spec.text_tokens), [](std::size_t u) { return u; });
        continue;
      }
      const BlockPartition groups = layer.kind == LayerKind::self_spatial ? BlockPartition::spatial(spec.layout)
                                                                          : BlockPartition::temporal(spec.layout);
      for (int g = 0; g < groups.count; ++g)
        for (int tq = 0; tq < groups.size; ++tq)
          softmax_into(&layer.at(h, groups.index(g, tq), 0), static_cast<std::size_t>(groups.size),
                       [&](std::size_t u) { return static_cast<std::size_t>(groups.index(g, static_cast<int>(u))); });
    }
    stack.layers.push_back(std::move(layer));
  }
  return stack;
}

}  // namespace stflow
