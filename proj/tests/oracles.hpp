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

// Independent reference implementations used only by tests. Nothing here
// calls into the library's algorithms; graphs are rebuilt from raw weights.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "stflow/attention_graph.hpp"
#include "stflow/exact_flow.hpp"
#include "stflow/tensor_io.hpp"

namespace oracle {

// Dense capacity matrix, cap[u * n + v].
struct DenseNet {
  int n = 0;
  int source = 0;
  int sink = 0;
  std::vector<double> cap;

  explicit DenseNet(int nodes = 0) : n(nodes), cap(static_cast<std::size_t>(nodes) * nodes, 0.0) {}
  double& at(int u, int v) { return cap[static_cast<std::size_t>(u) * n + v]; }
  double at(int u, int v) const { return cap[static_cast<std::size_t>(u) * n + v]; }
};

// Shortest augmenting paths on the dense residual matrix.
inline double edmonds_karp(const DenseNet& net) {
  if (net.source == net.sink) return 0.0;
  DenseNet res = net;
  double total = 0.0;
  for (;;) {
    std::vector<int> parent(static_cast<std::size_t>(net.n), -1);
    parent[static_cast<std::size_t>(net.source)] = net.source;
    std::deque<int> queue{net.source};
    while (!queue.empty() && parent[static_cast<std::size_t>(net.sink)] < 0) {
      const int u = queue.front();
      queue.pop_front();
      for (int v = 0; v < net.n; ++v) {
        if (parent[static_cast<std::size_t>(v)] < 0 && res.at(u, v) > 1e-12) {
          parent[static_cast<std::size_t>(v)] = u;
          queue.push_back(v);
        }
      }
    }
    if (parent[static_cast<std::size_t>(net.sink)] < 0) return total;
    double push = std::numeric_limits<double>::infinity();
    for (int v = net.sink; v != net.source; v = parent[static_cast<std::size_t>(v)])
      push = std::min(push, res.at(parent[static_cast<std::size_t>(v)], v));
    for (int v = net.sink; v != net.source; v = parent[static_cast<std::size_t>(v)]) {
      const int u = parent[static_cast<std::size_t>(v)];
      res.at(u, v) -= push;
      res.at(v, u) += push;
    }
    total += push;
  }
}

// Minimum over all s-t cuts, by enumerating every side assignment.
inline double min_cut_enumeration(const DenseNet& net) {
  std::vector<int> free;
  for (int v = 0; v < net.n; ++v)
    if (v != net.source && v != net.sink) free.push_back(v);
  double best = std::numeric_limits<double>::infinity();
  const std::uint32_t subsets = 1u << free.size();
  std::vector<char> side(static_cast<std::size_t>(net.n));
  for (std::uint32_t mask = 0; mask < subsets; ++mask) {
    std::fill(side.begin(), side.end(), 0);
    side[static_cast<std::size_t>(net.source)] = 1;
    for (std::size_t i = 0; i < free.size(); ++i)
      if (mask & (1u << i)) side[static_cast<std::size_t>(free[i])] = 1;
    double cut = 0.0;
    for (int u = 0; u < net.n; ++u)
      for (int v = 0; v < net.n; ++v)
        if (side[static_cast<std::size_t>(u)] && !side[static_cast<std::size_t>(v)]) cut += net.at(u, v);
    best = std::min(best, cut);
  }
  return best;
}

inline stflow::FlowNetwork to_flow_network(const DenseNet& net) {
  stflow::FlowNetwork out(net.n);
  for (int u = 0; u < net.n; ++u)
    for (int v = 0; v < net.n; ++v)
      if (net.at(u, v) > 0.0) out.add_edge(u, v, net.at(u, v));
  out.source = net.source;
  out.sink = net.sink;
  return out;
}

inline DenseNet random_net(std::mt19937_64& rng, int nodes, double density) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  DenseNet net(nodes);
  net.source = 0;
  net.sink = nodes - 1;
  for (int u = 0; u < nodes; ++u)
    for (int v = 0; v < nodes; ++v)
      if (u != v && unit(rng) < density) net.at(u, v) = std::round(unit(rng) * 1000.0) / 1000.0;
  return net;
}

// Head-averaged weight straight from the stack, accumulated in f64.
inline double mean_weight(const stflow::AttentionLayer& layer, int q, int k) {
  double s = 0.0;
  for (int h = 0; h < layer.heads; ++h) s += static_cast<double>(layer.at(h, q, k));
  return s / layer.heads;
}

// Unrolled per-token network rebuilt from raw attention. Node 0 is the
// source, layer l token q is 1 + l * n + q, the last node is the sink.
inline DenseNet unrolled_from_stack(const stflow::AttentionStack& stack, int token) {
  const int n = stack.video_count();
  const int layers = static_cast<int>(stack.layers.size());
  DenseNet net(2 + layers * n);
  net.source = 0;
  net.sink = net.n - 1;
  auto node = [&](int l, int q) { return 1 + l * n + q; };
  for (int l = 0; l < layers; ++l) {
    const auto& layer = stack.layers[static_cast<std::size_t>(l)];
    if (layer.kind == stflow::LayerKind::cross) {
      for (int q = 0; q < n; ++q) net.at(0, node(l, q)) += mean_weight(layer, q, token);
      if (l > 0)
        for (int q = 0; q < n; ++q) net.at(node(l - 1, q), node(l, q)) += 1.0;
    } else if (l > 0) {
      for (int q = 0; q < n; ++q)
        for (int k = 0; k < n; ++k) net.at(node(l - 1, k), node(l, q)) += mean_weight(layer, q, k) + (q == k);
    }
  }
  for (int q = 0; q < n; ++q) net.at(node(layers - 1, q), net.sink) = 1.0;
  return net;
}

// Layered chain: injection row x0 then transfers (entries [from x to]).
struct Chain {
  std::vector<double> x0;
  std::vector<stflow::Matrix> hops;
};

// Max over every explicit path of its bottleneck, per output node. Paths are
// walked one by one; no dynamic programming.
inline std::vector<double> path_enumeration(const Chain& c, double sink) {
  const std::size_t width = c.hops.empty() ? c.x0.size() : c.hops.back().cols();
  std::vector<double> best(width, 0.0);
  std::vector<std::size_t> path;
  std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t depth, std::size_t node) {
    path.push_back(node);
    if (depth == c.hops.size()) {
      double b = std::min(c.x0[path[0]], sink);
      for (std::size_t h = 0; h < c.hops.size(); ++h) b = std::min(b, c.hops[h](path[h], path[h + 1]));
      best[node] = std::max(best[node], b);
    } else {
      for (std::size_t next = 0; next < c.hops[depth].cols(); ++next) walk(depth + 1, next);
    }
    path.pop_back();
  };
  for (std::size_t start = 0; start < c.x0.size(); ++start) walk(0, start);
  return best;
}

// Central difference of f at x along coordinate i.
template <typename F>
double central_difference(F&& f, std::vector<double> x, std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = f(x);
  x[i] = x0 - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
