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

#include "stflow/attention_graph.hpp"

namespace stflow {

BlockPartition BlockPartition::spatial(const TokenLayout& layout) {
  const int hw = layout.spatial_tokens();
  return {layout.frames, hw, hw, 1};
}

BlockPartition BlockPartition::temporal(const TokenLayout& layout) {
  const int hw = layout.spatial_tokens();
  return {hw, layout.frames, 1, hw};
}

Matrix average_heads(const AttentionLayer& layer) {
  const auto q = static_cast<std::size_t>(layer.query_tokens);
  const auto k = static_cast<std::size_t>(layer.key_tokens);
  Matrix avg(q, k);
  double* out = avg.data();
  const float* w = layer.weights.data();
  for (int h = 0; h < layer.heads; ++h) {
    const float* head = w + static_cast<std::size_t>(h) * q * k;
    for (std::size_t i = 0; i < q * k; ++i) out[i] += static_cast<double>(head[i]);
  }
  if (layer.heads > 1) {
    const double scale = 1.0 / layer.heads;
    for (std::size_t i = 0; i < q * k; ++i) out[i] *= scale;
  }
  return avg;
}

std::optional<BlockPartition> verify_blocks(const Matrix& m, const BlockPartition& expected) {
  const int n = static_cast<int>(m.rows());
  if (expected.tokens() != n || m.cols() != m.rows()) return std::nullopt;
  std::vector<int> block_of(static_cast<std::size_t>(n));
  for (int g = 0; g < expected.count; ++g)
    for (int t = 0; t < expected.size; ++t) block_of[static_cast<std::size_t>(expected.index(g, t))] = g;
  for (int r = 0; r < n; ++r) {
    const auto row = m.row(static_cast<std::size_t>(r));
    const int br = block_of[static_cast<std::size_t>(r)];
    bool stray = false;
    for (int c = 0; c < n; ++c)
      stray |= (row[static_cast<std::size_t>(c)] != 0.0) & (block_of[static_cast<std::size_t>(c)] != br);
    if (stray) return std::nullopt;
  }
  return expected;
}

TransferMatrix transfer_from_average(LayerKind kind, const Matrix& averaged, const TokenLayout& layout) {
  const int n = layout.video_tokens();
  if (kind == LayerKind::cross) return {Matrix::identity(static_cast<std::size_t>(n)), BlockPartition::diagonal(n)};
  if (averaged.rows() != averaged.cols() || static_cast<int>(averaged.rows()) != n)
    throw GraphError("self-attention weights must be [video x video]");

  TransferMatrix t{averaged.transposed(), std::nullopt};
  for (std::size_t i = 0; i < t.entries.rows(); ++i) t.entries(i, i) += 1.0;
  const auto expected =
      kind == LayerKind::self_spatial ? BlockPartition::spatial(layout) : BlockPartition::temporal(layout);
  t.blocks = verify_blocks(t.entries, expected);
  return t;
}

TransferMatrix layer_transfer(const AttentionLayer& layer, const TokenLayout& layout) {
  if (layer.kind == LayerKind::cross) return transfer_from_average(layer.kind, Matrix(), layout);
  return transfer_from_average(layer.kind, average_heads(layer), layout);
}

Matrix text_injection(const AttentionLayer& layer) {
  if (layer.kind != LayerKind::cross) throw GraphError("text injection requested for a self-attention layer");
  return average_heads(layer).transposed();
}

CapacityGraph build_capacity_graph(const AttentionStack& stack) {
  const auto report = validate_stack(stack);
  if (!report.ok) {
    for (const auto& v : report.violations)
      if (v.rule == "cross.missing") throw GraphError("no text injection point");
    throw GraphError("invalid stack: " + report.violations.front().message);
  }
  std::vector<AveragedLayer> averaged;
  averaged.reserve(stack.layers.size());
  for (const auto& layer : stack.layers) averaged.push_back({layer.kind, average_heads(layer)});
  return build_capacity_graph(averaged, stack.layout, stack.text_count());
}

CapacityGraph build_capacity_graph(std::span<const AveragedLayer> layers, const TokenLayout& layout,
                                   int text_tokens) {
  CapacityGraph graph;
  graph.text_tokens = text_tokens;
  graph.layout = layout;
  const auto n = static_cast<std::size_t>(layout.video_tokens());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weights.rows() != n) throw GraphError("layer " + std::to_string(l) + " query count mismatch");
    graph.video_chain.push_back(transfer_from_average(layer.kind, layer.weights, layout));
    if (layer.kind == LayerKind::cross) {
      if (static_cast<int>(layer.weights.cols()) != text_tokens) throw GraphError("cross key count mismatch");
      graph.injections.push_back({static_cast<int>(l), layer.weights.transposed()});
    }
  }
  if (graph.injections.empty()) throw GraphError("no text injection point");
  return graph;
}

std::vector<GroupChain> group_chains(const CapacityGraph& graph) {
  std::vector<GroupChain> chains;
  const std::span<const TransferMatrix> chain(graph.video_chain);
  for (const auto& inj : graph.injections) {
    chains.push_back({inj.layer, &inj.entries, chain.subspan(static_cast<std::size_t>(inj.layer) + 1)});
  }
  return chains;
}

std::vector<Matrix> attention_sensitivities(const CapacityGraph& graph, std::span<const Matrix> chain_grad,
                                            std::span<const Matrix> injection_grad) {
  if (chain_grad.size() != graph.video_chain.size() || injection_grad.size() != graph.injections.size())
    throw DimensionError("gradient does not match graph structure");
  std::vector<Matrix> out(graph.video_chain.size());
  for (std::size_t g = 0; g < graph.injections.size(); ++g) {
    out[static_cast<std::size_t>(graph.injections[g].layer)] = injection_grad[g].transposed();
  }
  for (std::size_t l = 0; l < graph.video_chain.size(); ++l) {
    if (!out[l].empty()) continue;  // cross layer: its video transfer is constant
    out[l] = chain_grad[l].transposed();
  }
  return out;
}

std::size_t nonzero_count(const Matrix& m) {
  std::size_t count = 0;
  for (double v : m.values()) count += v != 0.0;
  return count;
}

}  // namespace stflow
