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

// Layered capacity graph built from an attention stack.
//
// Edges run key -> query: a transfer matrix T has T(k, q) = capacity from
// token k of the previous layer to token q of the next one, so a chain of
// transfers is evaluated as a left fold of row vectors.

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "stflow/matrix.hpp"
#include "stflow/tensor_io.hpp"

namespace stflow {

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Partition of [0, n) into `count` equally sized index sets:
/// index(g, t) = g * block_stride + t * elem_stride, t in [0, size).
/// Entries of a transfer matrix outside the diagonal blocks are exactly zero.
struct BlockPartition {
  int count = 1;
  int size = 1;
  int block_stride = 0;
  int elem_stride = 1;

  int index(int block, int t) const { return block * block_stride + t * elem_stride; }
  int tokens() const { return count * size; }

  /// Within-frame blocks under the frame-major layout.
  static BlockPartition spatial(const TokenLayout& layout);
  /// Across-frame blocks, one per spatial site.
  static BlockPartition temporal(const TokenLayout& layout);
  static BlockPartition dense(int n) { return {1, n, n, 1}; }
  static BlockPartition diagonal(int n) { return {n, 1, 1, 1}; }
};

struct TransferMatrix {
  Matrix entries;  // [source tokens x target tokens]
  std::optional<BlockPartition> blocks;
};

struct TextInjection {
  int layer = 0;   // 0-based index of the cross layer
  Matrix entries;  // [text tokens x video tokens]
};

struct CapacityGraph {
  std::vector<TransferMatrix> video_chain;  // one per layer
  std::vector<TextInjection> injections;    // one per cross layer, in layer order
  double sink_capacity = 1.0;
  int text_tokens = 0;
  TokenLayout layout;

  int layer_count() const { return static_cast<int>(video_chain.size()); }
  int video_tokens() const { return layout.video_tokens(); }
};

/// The sub-network hanging off one injection point: the injection matrix and
/// the video transfers of every later layer. Views into a CapacityGraph.
struct GroupChain {
  int layer = 0;
  const Matrix* injection = nullptr;
  std::span<const TransferMatrix> suffix;
};

/// Head-mean of a layer's weights, [Q x K] in f64.
Matrix average_heads(const AttentionLayer& layer);

/// Self kinds: transpose(mean) + I. Cross: identity (skip connection only).
TransferMatrix layer_transfer(const AttentionLayer& layer, const TokenLayout& layout);

/// Cross kinds: transpose(mean), text keys -> video queries.
Matrix text_injection(const AttentionLayer& layer);

/// Returns `expected` if every entry of `m` outside its blocks is zero.
std::optional<BlockPartition> verify_blocks(const Matrix& m, const BlockPartition& expected);

/// Throws GraphError if the stack does not validate or has no cross layer.
CapacityGraph build_capacity_graph(const AttentionStack& stack);

/// Head-averaged f64 weights of one layer, [Q x K].
struct AveragedLayer {
  LayerKind kind = LayerKind::self_spatial;
  Matrix weights;
};

TransferMatrix transfer_from_average(LayerKind kind, const Matrix& averaged, const TokenLayout& layout);

/// Same construction from already averaged weights (no row-sum validation).
CapacityGraph build_capacity_graph(std::span<const AveragedLayer> layers, const TokenLayout& layout,
                                   int text_tokens);

std::vector<GroupChain> group_chains(const CapacityGraph& graph);

/// Maps sensitivities w.r.t. transfer / injection entries back onto the
/// head-averaged attention weights of each layer ([Q x K] per layer).
/// `chain_grad[l]` matches video_chain[l]; `injection_grad[g]` matches injections[g].
std::vector<Matrix> attention_sensitivities(const CapacityGraph& graph, std::span<const Matrix> chain_grad,
                                            std::span<const Matrix> injection_grad);

/// Number of nonzero capacities in a transfer matrix.
std::size_t nonzero_count(const Matrix& m);

}  // namespace stflow
