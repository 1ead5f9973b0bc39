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

#include "stflow/exact_flow.hpp"

#include <algorithm>
#include <limits>
#include <queue>

#include "stflow/parallel.hpp"

namespace stflow {

int FlowNetwork::add_node() {
  adjacency_.emplace_back();
  return node_count() - 1;
}

std::pair<int, int> FlowNetwork::add_edge(int from, int to, double capacity) {
  if (capacity < 0.0) throw std::invalid_argument("negative capacity");
  auto& out = adjacency_[static_cast<std::size_t>(from)];
  auto& in = adjacency_[static_cast<std::size_t>(to)];
  const int fwd_index = static_cast<int>(out.size());
  const int rev_index = static_cast<int>(in.size()) + (from == to ? 1 : 0);
  out.push_back({from, to, capacity, rev_index});
  in.push_back({to, from, 0.0, fwd_index});
  ++forward_edges_;
  return {from, fwd_index};
}

namespace {

class Dinic {
 public:
  explicit Dinic(FlowNetwork& net)
      : net_(net), level_(static_cast<std::size_t>(net.node_count())), iter_(level_.size()) {}

  double run() {
    if (net_.source == net_.sink || net_.node_count() == 0) return 0.0;
    double total = 0.0;
    while (bfs()) {
      std::fill(iter_.begin(), iter_.end(), 0);
      for (;;) {
        const double pushed = dfs(net_.source, std::numeric_limits<double>::infinity());
        if (pushed <= kFlowEpsilon) break;
        total += pushed;
      }
    }
    return total;
  }

 private:
  bool bfs() {
    std::fill(level_.begin(), level_.end(), -1);
    std::queue<int> queue;
    level_[static_cast<std::size_t>(net_.source)] = 0;
    queue.push(net_.source);
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop();
      for (const auto& e : net_.edges_from(v)) {
        if (e.capacity > kFlowEpsilon && level_[static_cast<std::size_t>(e.to)] < 0) {
          level_[static_cast<std::size_t>(e.to)] = level_[static_cast<std::size_t>(v)] + 1;
          queue.push(e.to);
        }
      }
    }
    return level_[static_cast<std::size_t>(net_.sink)] >= 0;
  }

  // Depth is bounded by the BFS level of the sink (layer count + 2 here).
  double dfs(int v, double limit) {
    if (v == net_.sink) return limit;
    auto& edges = net_.edges_from(v);
    for (int& i = iter_[static_cast<std::size_t>(v)]; i < static_cast<int>(edges.size()); ++i) {
      FlowEdge& e = edges[static_cast<std::size_t>(i)];
      if (e.capacity <= kFlowEpsilon ||
          level_[static_cast<std::size_t>(e.to)] != level_[static_cast<std::size_t>(v)] + 1)
        continue;
      const double d = dfs(e.to, std::min(limit, e.capacity));
      if (d > kFlowEpsilon) {
        e.capacity -= d;
        net_.edges_from(e.to)[static_cast<std::size_t>(e.reverse)].capacity += d;
        return d;
      }
    }
    return 0.0;
  }

  FlowNetwork& net_;
  std::vector<int> level_;
  std::vector<int> iter_;
};

}  // namespace

MaxFlowSolution dinic_solve(FlowNetwork net) {
  MaxFlowSolution sol;
  sol.value = Dinic(net).run();
  sol.residual = std::move(net);
  return sol;
}

double dinic_max_flow(const FlowNetwork& net) { return dinic_solve(net).value; }

FlowNetwork unroll_network(const CapacityGraph& graph, int source_token) {
  if (source_token < 0 || source_token >= graph.text_tokens)
    throw std::out_of_range("source token " + std::to_string(source_token) + " outside [0, " +
                            std::to_string(graph.text_tokens) + ")");
  const int n = graph.video_tokens();
  const int layers = graph.layer_count();
  // node 0 = source, 1 + l*n + q = token q after layer l, last = sink
  FlowNetwork net(1 + layers * n + 1);
  net.source = 0;
  net.sink = 1 + layers * n;
  auto node = [n](int layer, int token) { return 1 + layer * n + token; };

  for (const auto& inj : graph.injections) {
    const auto row = inj.entries.row(static_cast<std::size_t>(source_token));
    for (int q = 0; q < n; ++q) {
      const double cap = row[static_cast<std::size_t>(q)];
      if (cap > 0.0) net.add_edge(net.source, node(inj.layer, q), cap);
    }
  }
  for (int l = 1; l < layers; ++l) {
    const Matrix& t = graph.video_chain[static_cast<std::size_t>(l)].entries;
    for (int k = 0; k < n; ++k) {
      const auto row = t.row(static_cast<std::size_t>(k));
      for (int q = 0; q < n; ++q) {
        const double cap = row[static_cast<std::size_t>(q)];
        if (cap > 0.0) net.add_edge(node(l - 1, k), node(l, q), cap);
      }
    }
  }
  for (int q = 0; q < n; ++q) net.add_edge(node(layers - 1, q), net.sink, graph.sink_capacity);
  return net;
}

ExactFlowResult exact_st_flow(const CapacityGraph& graph, std::span<const int> tokens) {
  ExactFlowResult result;
  if (tokens.empty()) return result;
  for (int t : tokens) {
    if (t < 0 || t >= graph.text_tokens) throw std::out_of_range("token index " + std::to_string(t) + " out of range");
  }
  std::vector<double> values(tokens.size());
  std::vector<std::size_t> edges(tokens.size());
  parallel_for(tokens.size(), [&](std::size_t i) {
    FlowNetwork net = unroll_network(graph, tokens[i]);
    edges[i] = net.edge_count();
    values[i] = dinic_solve(std::move(net)).value;
  });
  for (std::size_t i = 0; i < tokens.size(); ++i) result.scores[tokens[i]] = values[i];
  result.nodes = static_cast<std::size_t>(2 + graph.layer_count() * graph.video_tokens());
  result.edges = *std::max_element(edges.begin(), edges.end());
  return result;
}

}  // namespace stflow
