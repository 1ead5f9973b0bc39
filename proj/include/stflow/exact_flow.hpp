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

#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "stflow/attention_graph.hpp"

namespace stflow {

/// Residual capacities at or below this are treated as saturated.
inline constexpr double kFlowEpsilon = 1e-12;

struct FlowEdge {
  int from = 0;
  int to = 0;
  double capacity = 0.0;
  int reverse = 0;  // index of the paired edge in adjacency[to]
};

/// Residual network; every forward edge is paired with a 0-capacity reverse edge.
class FlowNetwork {
 public:
  FlowNetwork() = default;
  explicit FlowNetwork(int nodes) : adjacency_(static_cast<std::size_t>(nodes)) {}

  int add_node();
  /// Returns the forward edge's position {from, index in adjacency[from]}.
  std::pair<int, int> add_edge(int from, int to, double capacity);

  int node_count() const { return static_cast<int>(adjacency_.size()); }
  std::size_t edge_count() const { return forward_edges_; }
  const std::vector<FlowEdge>& edges_from(int node) const { return adjacency_[static_cast<std::size_t>(node)]; }
  std::vector<FlowEdge>& edges_from(int node) { return adjacency_[static_cast<std::size_t>(node)]; }

  int source = 0;
  int sink = 0;

 private:
  std::vector<std::vector<FlowEdge>> adjacency_;
  std::size_t forward_edges_ = 0;
};

struct MaxFlowSolution {
  double value = 0.0;
  FlowNetwork residual;  // capacities after augmentation
};

/// Dinic's blocking-flow algorithm on real capacities.
MaxFlowSolution dinic_solve(FlowNetwork net);
double dinic_max_flow(const FlowNetwork& net);

/// Unrolled per-token network: source, one copy of the video tokens per layer
/// output, and a sink fed by unit edges from the final layer.
FlowNetwork unroll_network(const CapacityGraph& graph, int source_token);

struct ExactFlowResult {
  std::map<int, double> scores;
  std::size_t nodes = 0;  // per-token network size, for reporting
  std::size_t edges = 0;
};

/// Max flow per token; tokens are solved independently (optionally in parallel).
ExactFlowResult exact_st_flow(const CapacityGraph& graph, std::span<const int> tokens);

}  // namespace stflow
